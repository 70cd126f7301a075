import itertools

import numpy as np
import pytest
from pydantic import ValidationError

from bodybgk.equilibria import (
    classify,
    distinct_levels,
    grid_scan_rho_star,
    hessian,
    hessian_fd,
    match_record,
    phase_diagram,
    phase_rows,
    signature,
    solve_c1_branches,
    solve_c2_branches,
)
from bodybgk.errors import CriticalDensityError, PreconditionError
from bodybgk.models import EquilibriumKind, EquilibriumRecord
from bodybgk.so3 import QUAT_DIAG_SIGNS
from bodybgk.vonmises import alpha_over_c1, c1, c2


# ======== 临界密度 ========

def test_rho_c_is_six(crit):
    assert crit.rho_c == pytest.approx(6.0, abs=1e-8)


def test_rho_star_is_minimum_of_alpha_over_c1(crit, cfg):
    assert 0.0 < crit.rho_star < crit.rho_c
    assert crit.alpha_star > 0.0
    assert alpha_over_c1(crit.alpha_star, cfg) == pytest.approx(crit.rho_star, abs=1e-12)
    for shift in (-1e-3, 1e-3):
        assert alpha_over_c1(crit.alpha_star + shift, cfg) > crit.rho_star


def test_rho_star_agrees_with_grid_scan(crit, cfg):
    alpha_grid, rho_grid = grid_scan_rho_star(cfg, step=1e-2)
    assert abs(alpha_grid - crit.alpha_star) <= 2e-2
    assert abs(rho_grid - crit.rho_star) <= 1e-3


# ======== 相容方程 ========

def test_only_uniform_below_rho_star(cfg):
    assert solve_c1_branches(1.0, cfg) == [0.0]
    assert solve_c2_branches(1.0, cfg) == [0.0]


def test_bistable_branches(rho_mid, crit, cfg):
    roots = solve_c1_branches(rho_mid, cfg)
    assert len(roots) == 3
    zero, alpha_minus, alpha_plus = roots
    assert zero == 0.0
    assert 0.0 < alpha_minus < crit.alpha_star < alpha_plus
    for alpha in (alpha_minus, alpha_plus):
        assert abs(alpha - rho_mid * c1(alpha, cfg)) <= 1e-10


def test_supercritical_branches(cfg):
    roots = solve_c1_branches(8.0, cfg)
    assert len(roots) == 3
    alpha_3, zero, alpha_1 = roots
    assert alpha_3 < 0.0 == zero < alpha_1
    assert abs(alpha_3 - 8.0 * c1(alpha_3, cfg)) <= 1e-10

    type_c = solve_c2_branches(8.0, cfg)
    assert len(type_c) == 3
    assert type_c[0] == pytest.approx(-type_c[2], abs=1e-10)
    assert abs(type_c[2] - 8.0 * c2(type_c[2], cfg)) <= 1e-10


def test_double_root_at_rho_star(crit, cfg):
    roots = solve_c1_branches(crit.rho_star, cfg)
    assert roots == [0.0, pytest.approx(crit.alpha_star)]


def test_branch_at_rho_c_keeps_alpha_plus(cfg):
    roots = solve_c1_branches(6.0, cfg)
    assert 0.0 in roots
    assert roots[-1] > 5.0
    assert all(a == 0.0 or abs(a) > 1.0 for a in roots)


def test_ordered_branches_approach_their_asymptotes(cfg):
    rhos = (20.0, 50.0, 100.0)
    r1 = [abs(solve_c1_branches(rho, cfg)[-1] - (rho - 1.0)) for rho in rhos]
    r2 = [abs(solve_c2_branches(rho, cfg)[-1] - (rho - 2.0)) for rho in rhos]
    for r in (r1, r2):
        assert r[0] > r[1] > r[2]


def test_negative_density_rejected(cfg):
    with pytest.raises(PreconditionError):
        solve_c1_branches(-1.0, cfg)
    with pytest.raises(PreconditionError):
        classify(-0.5, cfg)


# ======== Hessian 与稳定性 ========

def test_hessian_at_uniform_state(cfg):
    np.testing.assert_allclose(hessian(np.zeros(3), 3.0, cfg), 0.5 * np.eye(3), atol=1e-12)


@pytest.mark.parametrize("rho", [3.0, 5.0, 8.0])
def test_hessian_matches_finite_differences(rho, cfg):
    for record in classify(rho, cfg):
        np.testing.assert_allclose(hessian(record.d_ssvd, rho, cfg), hessian_fd(record.d_ssvd, rho, cfg),
                                   atol=1e-6)


def test_signature_counts():
    assert signature(np.diag([1.0, -2.0, 3.0])) == (2, 0, 1)
    assert signature(np.diag([1.0, 0.0, -1.0])) == (1, 1, 1)
    with pytest.raises(PreconditionError):
        signature(np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))


def test_stability_table_at_rho_8(records_rho8):
    signatures = {branch: r.signature for branch, r in records_rho8.items()}
    assert signatures == {
        "uniform": (0, 0, 3),
        "alpha_1": (3, 0, 0),
        "alpha_3": (1, 0, 2),
        "alpha_2": (2, 0, 1),
    }
    assert [b for b, r in records_rho8.items() if r.stable] == ["alpha_1"]
    assert records_rho8["alpha_2"].kind == EquilibriumKind.TYPE_C


def test_stability_in_bistable_region(rho_mid, cfg):
    records = {r.branch: r for r in classify(rho_mid, cfg)}
    assert set(records) == {"uniform", "alpha_minus", "alpha_plus"}
    assert records["uniform"].stable
    assert records["alpha_plus"].stable
    assert records["alpha_minus"].signature[2] == 1


def test_only_uniform_below_threshold(cfg):
    records = classify(1.0, cfg)
    assert len(records) == 1
    assert records[0].kind == EquilibriumKind.UNIFORM
    assert records[0].signature == (3, 0, 0)


@pytest.mark.parametrize("rho", ["rho_star", "rho_c"])
def test_critical_window_raises(rho, crit, cfg):
    with pytest.raises(CriticalDensityError):
        classify(getattr(crit, rho) + 5e-7, cfg)


def test_at_most_two_distinct_levels(records_rho8):
    for record in records_rho8.values():
        assert distinct_levels(record.d_ssvd) <= 2


@pytest.mark.parametrize("rho", [8.0, "rho_mid"])
def test_signature_is_constant_on_orbits(rho, rho_mid, cfg):
    rho = rho_mid if rho == "rho_mid" else rho
    for record in classify(rho, cfg):
        d = np.asarray(record.d_ssvd)
        for perm in itertools.permutations(range(3)):
            for signs in QUAT_DIAG_SIGNS:
                assert signature(hessian(signs * d[list(perm)], rho, cfg)) == record.signature


def test_record_rejects_inconsistent_representative(records_rho8):
    alpha_1 = records_rho8["alpha_1"].model_dump()
    with pytest.raises(ValidationError):
        EquilibriumRecord(**{**alpha_1, "d_ssvd": (alpha_1["alpha"], alpha_1["alpha"], 0.0)})
    with pytest.raises(ValidationError):
        EquilibriumRecord(**{**alpha_1, "alpha": -alpha_1["alpha"]})

    alpha_3 = records_rho8["alpha_3"]
    assert alpha_3.d_ssvd[2] < 0 < alpha_3.d_ssvd[0] == alpha_3.d_ssvd[1] == -alpha_3.alpha

    alpha_2 = records_rho8["alpha_2"].model_dump()
    with pytest.raises(ValidationError):
        EquilibriumRecord(**{**alpha_2, "d_ssvd": (alpha_2["alpha"], alpha_2["alpha"], 0.0)})
    with pytest.raises(ValidationError):
        EquilibriumRecord(**{**alpha_2, "alpha": -alpha_2["alpha"], "d_ssvd": (-alpha_2["alpha"], 0.0, 0.0)})


def test_match_record(records_rho8):
    target = records_rho8["alpha_1"]
    assert match_record(np.asarray(target.d_ssvd) + 1e-8, records_rho8.values()) is target
    assert match_record([10.0, 10.0, 10.0], records_rho8.values()) is None


# ======== 相图 ========

def test_phase_rows_supercritical(cfg):
    rows = phase_rows((8.0, cfg))
    branches = [row.branch for row in rows]
    assert branches == ["uniform", "alpha_3", "alpha_1", "alpha_2", "minus_alpha_2"]
    minus = rows[-1]
    assert minus.alpha < 0 and minus.d1 > 0


def test_phase_rows_marks_critical(crit, cfg):
    rows = phase_rows((crit.rho_c, cfg))
    assert rows and all(row.note == "critical" for row in rows)
    assert all(row.sig_plus is None for row in rows)


def test_phase_diagram_grid(cfg):
    rows = phase_diagram(0.0, 12.0, 7, cfg, jobs=1)
    rhos = sorted({row.rho for row in rows})
    assert rhos == pytest.approx(list(np.linspace(0.0, 12.0, 7)))
    assert all(row.branch == "uniform" for row in rows if row.rho < 4.0)


def test_phase_diagram_rejects_empty_range(cfg):
    with pytest.raises(PreconditionError):
        phase_diagram(5.0, 5.0, 10, cfg)
    with pytest.raises(PreconditionError):
        phase_diagram(0.0, 5.0, 0, cfg)
