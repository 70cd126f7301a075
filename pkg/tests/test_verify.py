import pytest

from bodybgk.errors import PreconditionError
from bodybgk.verify import SUITES, run_suites

FAST_SUITES = ["haar", "quaternion", "ssvd", "consistency"]


def test_registry_lists_all_suites():
    assert set(SUITES) == {
        "haar", "quaternion", "ssvd", "consistency", "critical", "stability",
        "gradient", "flow", "hydro", "gci", "particles",
    }


@pytest.mark.parametrize("name", FAST_SUITES)
def test_fast_suites_pass(name, cfg):
    results = run_suites([name], cfg)
    assert results
    assert all(r.suite == name for r in results)
    failed = [f"{r.name}: {r.detail}" for r in results if not r.passed]
    assert not failed


def test_suites_are_reproducible(cfg):
    first = run_suites(["haar"], cfg, seed=1)
    second = run_suites(["haar"], cfg, seed=1)
    assert first == second


def test_unknown_suite(cfg):
    with pytest.raises(PreconditionError):
        run_suites(["warp"], cfg)


@pytest.mark.slow
def test_all_suites_pass(cfg):
    results = run_suites(["all"], cfg)
    failed = [f"{r.suite}.{r.name}: {r.detail}" for r in results if not r.passed]
    assert not failed


def test_flow_suite_passes(cfg):
    results = run_suites(["flow"], cfg)
    failed = [f"{r.name}: {r.detail}" for r in results if not r.passed]
    assert not failed
