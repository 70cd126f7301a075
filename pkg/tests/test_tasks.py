import numpy as np

from bodybgk.tasks import resolve_jobs, run_parallel, spawn_generators


def _square(x):
    return x * x


def test_resolve_jobs():
    assert resolve_jobs(1) == 1
    assert resolve_jobs(3) == 3
    assert resolve_jobs(0) >= 1
    assert resolve_jobs(None) == resolve_jobs(0)


def test_run_parallel_keeps_order():
    assert run_parallel(_square, range(10), jobs=1) == [x * x for x in range(10)]
    assert run_parallel(_square, range(10), jobs=2) == [x * x for x in range(10)]
    assert run_parallel(_square, [], jobs=4) == []


def test_spawned_generators_are_reproducible_and_distinct():
    a = [g.random() for g in spawn_generators(5, 3)]
    b = [g.random() for g in spawn_generators(5, 3)]
    assert a == b
    assert len(set(a)) == 3
    assert not np.isclose(a[0], spawn_generators(6, 1)[0].random())
