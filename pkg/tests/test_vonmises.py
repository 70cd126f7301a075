import itertools

import numpy as np
import pytest

from bodybgk.errors import PreconditionError, SamplingError
from bodybgk.so3 import QUAT_DIAG_SIGNS, haar_batch, is_rotation, mat_dot, rodrigues
from bodybgk.vonmises import (
    VonMisesParams,
    alpha_over_c1,
    alpha_over_c2,
    brace_mean,
    bracket_mean,
    c1,
    c1_prime,
    c2,
    c2_closed_form,
    c2_prime,
    conjugation_moment_constants,
    density,
    haar_expectation,
    haar_expectation_axis_angle,
    log_partition,
    log_partition_isotropic,
    moment1_diag,
    moment2_diag,
    moment_matrix,
    sample,
    sample_batch,
    stability_sign_function,
)


# ======== 配分函数与矩 ========

def test_log_partition_at_zero(cfg):
    assert log_partition([0.0, 0.0, 0.0], cfg) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 8.0, 20.0])
def test_sphere_quadrature_matches_rodrigues_form(alpha, cfg):
    assert log_partition(alpha * np.ones(3), cfg) == pytest.approx(log_partition_isotropic(alpha, cfg), abs=1e-9)
    np.testing.assert_allclose(moment1_diag(alpha * np.ones(3), cfg), c1(alpha, cfg) * np.ones(3), atol=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 8.0])
def test_single_axis_line_matches_closed_forms(alpha, cfg):
    # a₁₁ 在 Haar 测度下服从 [−1, 1] 上的均匀分布
    d = np.array([alpha, 0.0, 0.0])
    assert log_partition(d, cfg) == pytest.approx(np.log(np.sinh(alpha / 2) / (alpha / 2)), abs=1e-9)
    np.testing.assert_allclose(moment1_diag(d, cfg), [c2(alpha, cfg), 0.0, 0.0], atol=1e-9)


def test_moment_matrix_is_equivariant(rng, cfg):
    J = rng.standard_normal((3, 3))
    P = rodrigues(0.4, np.array([0.0, 0.6, 0.8]))
    Q = rodrigues(1.1, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(moment_matrix(P @ J @ Q, cfg), P @ moment_matrix(J, cfg) @ Q, atol=1e-10)


def test_second_moment_at_zero(cfg):
    m2 = moment2_diag(np.zeros(3), cfg)
    np.testing.assert_allclose(np.diag(m2), np.full(3, 1.0 / 3.0), atol=1e-12)


def test_quadrature_converges_under_node_doubling(cfg):
    d = np.array([4.0, 2.5, -1.0])
    fine = cfg.doubled()
    assert log_partition(d, cfg) == pytest.approx(log_partition(d, fine), abs=1e-10)
    np.testing.assert_allclose(moment1_diag(d, cfg), moment1_diag(d, fine), atol=1e-10)


def _orbit_representatives(d):
    """同一轨道中的对角代表元：任意置换加偶数个符号翻转"""
    for perm in itertools.permutations(range(3)):
        for signs in QUAT_DIAG_SIGNS:
            yield signs * d[list(perm)]


def test_log_partition_is_orbit_invariant(cfg):
    d = np.array([2.5, 1.0, -0.7])
    reference = log_partition(d, cfg)
    for other in _orbit_representatives(d):
        assert log_partition(other, cfg) == pytest.approx(reference, abs=1e-10)


def test_second_moment_on_diagonal_line(cfg):
    m2 = moment2_diag(3.0 * np.ones(3), cfg)
    np.testing.assert_allclose(m2, m2.T, atol=1e-14)
    np.testing.assert_allclose(np.diag(m2), np.full(3, m2[0, 0]), atol=1e-12)
    np.testing.assert_allclose(m2[~np.eye(3, dtype=bool)], np.full(6, m2[0, 1]), atol=1e-12)


@pytest.mark.parametrize("alpha", [1.0, 6.0])
def test_second_moment_on_single_axis(alpha, cfg):
    m2 = moment2_diag(np.array([alpha, 0.0, 0.0]), cfg)
    # a₁₁ 服从 [−1, 1] 上 ∝ e^{αx/2} 的分布
    assert m2[0, 0] == pytest.approx(1.0 - 4.0 * c2_closed_form(alpha) / alpha, abs=1e-9)
    assert m2[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert m2[0, 2] == pytest.approx(0.0, abs=1e-12)
    assert m2[1, 1] == pytest.approx(m2[2, 2], abs=1e-12)


def test_diagonal_moments_match_weighted_haar_sampling(rng, cfg):
    A = haar_batch(10**6, rng)
    diag = np.stack([A[:, 0, 0], A[:, 1, 1], A[:, 2, 2]], axis=1)
    pairs = (diag[:, :, None] * diag[:, None, :]).reshape(-1, 9)
    for d in rng.uniform(-5.0, 5.0, size=(10, 3)):
        log_w = 0.5 * (diag @ d)
        w = np.exp(log_w - log_w.max())
        w /= w.sum()
        for values, exact in ((diag, moment1_diag(d, cfg)), (pairs, moment2_diag(d, cfg).ravel())):
            mean = w @ values
            stderr = np.sqrt((w ** 2) @ (values - mean) ** 2)
            assert np.all(np.abs(mean - exact) <= 4.0 * stderr)


# ======== 相容函数 ========

def test_consistency_functions_at_zero(cfg):
    assert c1(0.0, cfg) == pytest.approx(0.0, abs=1e-14)
    assert c2(0.0, cfg) == pytest.approx(0.0, abs=1e-14)
    assert c1_prime(0.0, cfg) == pytest.approx(1.0 / 6.0, abs=1e-8)
    assert c2_prime(0.0, cfg) == pytest.approx(1.0 / 6.0, abs=1e-8)
    assert alpha_over_c1(0.0, cfg) == pytest.approx(6.0, abs=1e-8)
    assert alpha_over_c2(0.0, cfg) == pytest.approx(6.0, abs=1e-8)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 10.0])
def test_c2_closed_form(alpha, cfg):
    assert c2(alpha, cfg) == pytest.approx(c2_closed_form(alpha), abs=1e-9)


def test_c2_closed_form_series_branch():
    assert c2_closed_form(1e-5) == pytest.approx(1e-5 / 6.0, rel=1e-9)
    assert c2_closed_form(-2.0) == pytest.approx(-c2_closed_form(2.0))


def test_consistency_functions_are_odd(cfg):
    assert c1(-3.0, cfg) < 0 < c1(3.0, cfg)
    assert c2(-3.0, cfg) == pytest.approx(-c2(3.0, cfg), abs=1e-12)


def test_alpha_over_c_matches_ratio(cfg):
    for alpha in (0.7, 3.0, 12.0):
        assert alpha_over_c1(alpha, cfg) == pytest.approx(alpha / c1(alpha, cfg), rel=1e-10)
        assert alpha_over_c2(alpha, cfg) == pytest.approx(alpha / c2(alpha, cfg), rel=1e-10)


def test_derivatives_match_finite_differences(cfg):
    h = 1e-5
    for alpha in (0.5, 4.0):
        fd1 = (c1(alpha + h, cfg) - c1(alpha - h, cfg)) / (2 * h)
        fd2 = (c2(alpha + h, cfg) - c2(alpha - h, cfg)) / (2 * h)
        assert c1_prime(alpha, cfg) == pytest.approx(fd1, abs=1e-8)
        assert c2_prime(alpha, cfg) == pytest.approx(fd2, abs=1e-8)


def test_asymptotic_remainders(cfg):
    def r1(a):
        return alpha_over_c1(a, cfg) - a - 1.0

    def r2(a):
        return alpha_over_c2(a, cfg) - a - 2.0

    for r in (r1, r2):
        assert abs(r(100.0)) < abs(r(50.0)) < abs(r(25.0))
        assert abs(r(100.0)) <= 0.1
    assert r2(100.0) * 100.0 == pytest.approx(4.0, rel=0.1)


def test_consistency_functions_approach_one(cfg):
    for c in (c1, c2):
        values = [c(alpha, cfg) for alpha in (10.0, 20.0, 50.0)]
        assert values[0] < values[1] < values[2] < 1.0
        assert 1.0 - values[2] < 0.05


def test_brace_and_bracket_means_are_normalised(cfg):
    assert brace_mean(np.ones_like, 3.0, cfg) == pytest.approx(1.0, abs=1e-14)
    assert bracket_mean(np.ones_like, -3.0, cfg) == pytest.approx(1.0, abs=1e-14)
    # α = 0：{sin²θ}₀ = 1/2
    assert brace_mean(lambda t: np.sin(t) ** 2, 0.0, cfg) == pytest.approx(0.5, abs=1e-12)


def test_stability_sign_function(cfg):
    assert stability_sign_function(0.0, cfg) == pytest.approx(0.0, abs=1e-12)
    assert stability_sign_function(2.0, cfg) > 0
    assert stability_sign_function(-2.0, cfg) < 0


# ======== Haar 积分 ========

def test_second_moment_identity_by_quadrature(rng, cfg):
    for _ in range(5):
        J = rng.standard_normal((3, 3))
        result = haar_expectation(lambda A: mat_dot(J, A)[:, None, None] * A, cfg)
        np.testing.assert_allclose(result, J / 6.0, atol=1e-12)


def test_conjugation_constants_for_uniform_weight(cfg):
    a, b, c = conjugation_moment_constants(lambda A: np.ones(A.shape[0]), cfg)
    assert a == pytest.approx(0.0, abs=1e-12)
    assert b == pytest.approx(1.0 / 6.0, abs=1e-12)
    assert c == pytest.approx(0.0, abs=1e-12)


def test_conjugation_constants_for_trace_squared_weight(rng, cfg):
    def g(A):
        return np.trace(A, axis1=1, axis2=2) ** 2

    a, b, c = conjugation_moment_constants(g, cfg)
    J = np.array([[0.7, -1.1, 0.4], [0.3, 1.5, -0.6], [0.9, 0.2, -0.8]])
    expected = a * np.trace(J) * np.eye(3) + b * J + c * J.T

    def integrand(A):
        return (mat_dot(J, A) * g(A))[:, None, None] * A

    np.testing.assert_allclose(haar_expectation(integrand, cfg), expected, atol=1e-11)

    samples = integrand(haar_batch(400000, rng))
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    assert np.all(np.abs(mean - expected) <= 4.0 * stderr)


def test_two_volume_forms_agree(cfg):
    def f(A):
        return (A[:, 0, 0] * A[:, 1, 1] + A[:, 0, 1]) ** 2 + np.exp(np.trace(A, axis1=1, axis2=2))

    assert haar_expectation(f, cfg) == pytest.approx(haar_expectation_axis_angle(f, cfg), abs=1e-9)


# ======== 分布与采样 ========

def test_params_reject_bad_input():
    with pytest.raises(PreconditionError):
        VonMisesParams(np.ones((2, 2)))
    with pytest.raises(PreconditionError):
        VonMisesParams(np.full((3, 3), np.inf))


def test_params_are_immutable():
    params = VonMisesParams(np.eye(3))
    with pytest.raises(ValueError):
        params.J[0, 0] = 5.0


def test_density_integrates_to_one(cfg):
    params = VonMisesParams(np.diag([3.0, 1.0, -0.5]), cfg)
    assert float(haar_expectation(lambda A: density(params, A), cfg)) == pytest.approx(1.0, abs=1e-10)


def test_uniform_params():
    params = VonMisesParams.uniform()
    assert params.log_z == pytest.approx(0.0, abs=1e-14)
    assert params.acceptance_rate() == pytest.approx(1.0)


def test_acceptance_rate_decreases_with_concentration(cfg):
    rates = [VonMisesParams(a * np.eye(3), cfg).acceptance_rate() for a in (0.5, 2.0, 8.0)]
    assert 1.0 >= rates[0] > rates[1] > rates[2] > 0.0


def test_sample_is_rotation(rng):
    A = sample(VonMisesParams(2.0 * np.eye(3)), rng)
    assert is_rotation(A, 1e-12)


def test_sample_batch_mean_matches_c1(rng, cfg):
    n = 4000
    A = sample_batch(VonMisesParams(2.0 * np.eye(3), cfg), n, rng)
    assert A.shape == (n, 3, 3)
    err = A.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(A.mean(axis=0) - c1(2.0, cfg) * np.eye(3)) <= 4.0 * err)


def test_sampling_error_when_too_concentrated(rng):
    with pytest.raises(SamplingError):
        sample(VonMisesParams(1000.0 * np.eye(3)), rng, max_proposals=64)


def test_density_matches_haar_reweighting(rng, cfg):
    # 重要性权重 M_J(A) 的 Haar 平均等于 1
    params = VonMisesParams(np.diag([1.0, 0.5, 0.2]), cfg)
    w = density(params, haar_batch(50000, rng))
    assert abs(w.mean() - 1.0) <= 4.0 * w.std(ddof=1) / np.sqrt(w.size)
