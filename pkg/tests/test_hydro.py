import numpy as np
import pytest

from bodybgk.errors import PreconditionError
from bodybgk.hydro import (
    TestDensity,
    alpha_of_rho,
    alpha_prime,
    brace_coefficients,
    coefficient_table,
    diffusion_coefficient,
    gci_residual,
    mu_from_haar,
    sohb_coefficients,
)
from bodybgk.so3 import haar_sample, skew
from bodybgk.vonmises import c1


# ======== 最大分支 ========

def test_alpha_of_rho_examples(cfg):
    assert alpha_of_rho(1.0, cfg) == 0.0
    assert alpha_of_rho(6.0, cfg) > 0.0
    assert alpha_of_rho(100.0, cfg) == pytest.approx(99.0, abs=0.2)
    with pytest.raises(PreconditionError):
        alpha_of_rho(-1.0, cfg)


def test_alpha_satisfies_consistency(cfg):
    alpha = alpha_of_rho(8.0, cfg)
    assert alpha == pytest.approx(8.0 * c1(alpha, cfg), abs=1e-10)


def test_alpha_prime_matches_finite_differences(cfg):
    h = 1e-4
    fd = (alpha_of_rho(8.0 + h, cfg) - alpha_of_rho(8.0 - h, cfg)) / (2 * h)
    value = alpha_prime(8.0, cfg)
    assert value > 0.0
    assert value == pytest.approx(fd, rel=1e-5)


def test_alpha_prime_tends_to_one(cfg):
    assert alpha_prime(100.0, cfg) == pytest.approx(1.0, abs=0.01)


def test_alpha_prime_rejects_branch_birth(crit, cfg):
    with pytest.raises(PreconditionError):
        alpha_prime(crit.rho_star + 1e-8, cfg)
    with pytest.raises(PreconditionError):
        alpha_prime(1.0, cfg)


# ======== 扩散系数 ========

def test_diffusion_coefficient():
    assert diffusion_coefficient(0.0) == pytest.approx(1.0 / 3.0)
    assert diffusion_coefficient(3.0) == pytest.approx(2.0 / 3.0)
    assert diffusion_coefficient(5.9999) > 1e3
    assert diffusion_coefficient(2.0) < diffusion_coefficient(4.0)
    for rho in (6.0, 7.0, -0.1):
        with pytest.raises(PreconditionError):
            diffusion_coefficient(rho)


# ======== SOHB 系数 ========

def test_brace_coefficients_near_zero(cfg):
    b = brace_coefficients(1e-6, cfg)
    assert b.c2_tilde == pytest.approx(0.25, abs=1e-6)
    assert b.c4 == pytest.approx(0.25, abs=1e-6)
    assert b.mu2 == pytest.approx(1.0 / 12.0, abs=1e-6)
    assert b.C2 == pytest.approx(1.0 / 3.0, abs=1e-6)


def test_brace_coefficients_concentrated(cfg):
    b = brace_coefficients(50.0, cfg)
    assert b.c2_tilde == pytest.approx(1.0, abs=0.05)
    assert b.c4 == pytest.approx(0.0, abs=0.02)
    assert all(np.isfinite(b))


@pytest.mark.parametrize("alpha", [0.01, 1.0, 7.0, 50.0])
def test_brace_identities(alpha, cfg):
    b = brace_coefficients(alpha, cfg)
    assert b.C2 > 0.0
    assert abs((b.C4 + b.C5) / b.C2 - b.c2_tilde) <= 1e-12
    assert abs(b.C5 / b.C2 - b.c4) <= 1e-12


@pytest.mark.parametrize("alpha", [0.01, 5.0, 50.0])
def test_brace_coefficients_converge_under_node_doubling(alpha, cfg):
    coarse = brace_coefficients(alpha, cfg)
    fine = brace_coefficients(alpha, cfg.doubled())
    np.testing.assert_allclose(coarse, fine, atol=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 4.0])
def test_mu_from_haar_quadrature(alpha, cfg):
    assert mu_from_haar(alpha, cfg) == pytest.approx(brace_coefficients(alpha, cfg).mu2 / 2.0, abs=1e-9)


@pytest.mark.parametrize("rho", [7.0, 8.0, 10.0])
def test_sohb_rows(rho, cfg):
    row = sohb_coefficients(rho, cfg)
    assert row.alpha == pytest.approx(alpha_of_rho(rho, cfg))
    assert not row.flagged
    assert row.C2 > 0.0
    assert abs((row.C4 + row.C5) / row.C2 - row.c2_tilde) <= 1e-10
    assert abs(row.C5 / row.C2 - row.c4) <= 1e-10
    assert np.isfinite(row.c3_tilde) and row.c3_tilde > 0.0


def test_sohb_requires_ordered_branch(crit, cfg):
    with pytest.raises(PreconditionError):
        sohb_coefficients(crit.rho_star - 0.1, cfg)


def test_rows_near_branch_birth_are_flagged(crit, cfg):
    assert sohb_coefficients(crit.rho_star + 0.01, cfg).flagged


def test_c3_tilde_is_continuous(crit, cfg):
    rhos = np.linspace(crit.rho_star + 0.1, 20.0, 25)
    values = np.array([row.c3_tilde for row in coefficient_table(rhos, cfg, jobs=1)])
    assert np.all(np.isfinite(values))
    assert np.all(values > 0.0)


# ======== GCI 残差 ========

def test_gci_residual_of_maxwellian_is_zero(rng, cfg):
    Lam = haar_sample(rng)
    J = Lam @ np.diag([3.0, 2.0, 1.0])
    estimate = gci_residual(J, skew(rng.standard_normal(3)), TestDensity(8.0, J, cfg), 1000, rng, cfg)
    assert estimate.value == pytest.approx(0.0, abs=1e-12)


def test_gci_residual_constrained_densities(rng, cfg):
    passed = 0
    for _ in range(20):
        Lam = haar_sample(rng)
        J = Lam @ np.diag([3.0, 2.0, 1.0])
        S = rng.standard_normal((3, 3))
        S = 0.5 * (S + S.T)
        estimate = gci_residual(J, skew(rng.standard_normal(3)), TestDensity(8.0, Lam @ S, cfg), 20000, rng, cfg)
        passed += estimate.within(0.0, 4.0)
    # 4σ 带的单次失败概率约 6e−5
    assert passed >= 19


def test_gci_residual_detects_violation(rng, cfg):
    Lam = haar_sample(rng)
    J = Lam @ np.diag([3.0, 2.0, 1.0])
    P_prime = skew(np.array([1.5, -1.0, 0.5]))
    f = TestDensity(8.0, Lam @ (np.diag([2.0, 1.5, 1.0]) + P_prime), cfg)
    estimate = gci_residual(J, P_prime, f, 100000, rng, cfg)
    assert abs(estimate.value) > 6.0 * estimate.stderr


def test_gci_residual_preconditions(rng, cfg):
    f = TestDensity(1.0, np.eye(3), cfg)
    with pytest.raises(PreconditionError):
        gci_residual(np.diag([1.0, 1.0, -1.0]), skew(np.ones(3)), f, 10, rng, cfg)
    with pytest.raises(PreconditionError):
        gci_residual(np.eye(3), np.eye(3), f, 10, rng, cfg)
