"""
性质检查套件

每个套件是一组快速的数值性质检查，返回 CheckResult 行；CLI 的 verify 命令
打印通过/失败表，全部通过时退出码为 0。完整规模的统计检查在 tests/ 中标记为 slow。
"""
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from .equilibria import classify, critical_densities, grid_scan_rho_star, hessian, hessian_fd
from .errors import PreconditionError
from .flow import TieStructure, integrate, potential, rhs
from .hydro import (
    TestDensity,
    brace_coefficients,
    diffusion_coefficient,
    gci_residual,
    mu_from_haar,
)
from .logger import get_logger
from .models import CheckResult, QuadratureConfig
from .particles import init_ensemble, run
from .so3 import (
    haar_batch,
    horn_check,
    is_rotation,
    mat_dot,
    phi_map,
    polar_rotation,
    quat_to_rot,
    rot_to_quat,
    skew,
    ssvd,
)
from .vonmises import (
    DEFAULT_QUADRATURE,
    c1_prime,
    c2,
    c2_closed_form,
    c2_prime,
    log_partition,
    log_partition_isotropic,
)

logger = get_logger("Verify")

SuiteFn = Callable[[QuadratureConfig, np.random.Generator], List[CheckResult]]

SUITES: Dict[str, SuiteFn] = {}


def suite(name: str):
    """注册一个检查套件"""
    def decorator(func: SuiteFn) -> SuiteFn:
        SUITES[name] = func
        return func
    return decorator


def _check(suite_name: str, name: str, passed, detail: str = "") -> CheckResult:
    return CheckResult(suite=suite_name, name=name, passed=bool(passed), detail=detail)


# ============================================================================
# 第一部分：旋转群
# ============================================================================

@suite("haar")
def _haar(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    n = 20000
    A = haar_batch(n, rng)
    rotations_ok = all(is_rotation(a, 1e-12) for a in A[:2000])
    horn_ok = all(horn_check(a) for a in A)

    J = rng.standard_normal((3, 3))
    samples = mat_dot(J, A)[:, None, None] * A
    mean = samples.mean(axis=0)
    err = samples.std(axis=0, ddof=1) / np.sqrt(n)
    moment_ok = np.all(np.abs(mean - J / 6.0) <= 4.0 * err + 1e-15)
    return [
        _check("haar", "samples_are_rotations", rotations_ok),
        _check("haar", "horn_tetrahedron", horn_ok),
        _check("haar", "second_moment_identity", moment_ok,
               f"max |∫(J·A)A − J/6| = {np.max(np.abs(mean - J / 6.0)):.2e}"),
    ]


@suite("quaternion")
def _quaternion(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    bridge, square, roundtrip = 0.0, 0.0, 0.0
    for _ in range(200):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        J = rng.standard_normal((3, 3))
        A = quat_to_rot(q)
        bridge = max(bridge, abs(0.5 * mat_dot(J, A) - q @ phi_map(J) @ q))
        square = max(square, np.max(np.abs(phi_map(A) - (np.outer(q, q) - 0.25 * np.eye(4)))))
        r = rot_to_quat(A)
        roundtrip = max(roundtrip, min(np.max(np.abs(r - q)), np.max(np.abs(r + q))))
    return [
        _check("quaternion", "bridge_identity", bridge <= 1e-12, f"{bridge:.2e}"),
        _check("quaternion", "phi_of_rotation", square <= 1e-12, f"{square:.2e}"),
        _check("quaternion", "rotation_roundtrip", roundtrip <= 1e-12, f"{roundtrip:.2e}"),
    ]


@suite("ssvd")
def _ssvd(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    recon, cone, polar = 0.0, True, 0.0
    for _ in range(100):
        M = rng.standard_normal((3, 3))
        P, D, Q = ssvd(M)
        recon = max(recon, np.max(np.abs(P @ np.diag(D) @ Q - M)))
        cone = cone and is_rotation(P) and is_rotation(Q) and D[0] >= D[1] >= abs(D[2]) - 1e-14
        if np.linalg.det(M) > 1e-6:
            polar = max(polar, np.max(np.abs(polar_rotation(M) - P @ Q)))
    return [
        _check("ssvd", "reconstruction", recon <= 1e-12, f"{recon:.2e}"),
        _check("ssvd", "rotations_and_cone", cone),
        _check("ssvd", "polar_equals_pq", polar <= 1e-10, f"{polar:.2e}"),
    ]


# ============================================================================
# 第二部分：相容函数与平衡态
# ============================================================================

@suite("consistency")
def _consistency(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    closed = max(abs(c2(a, cfg) - c2_closed_form(a)) for a in (0.5, 2.0, 10.0))
    bridge = max(abs(log_partition(a * np.ones(3), cfg) - log_partition_isotropic(a, cfg))
                 for a in (0.5, 2.0, 8.0))
    return [
        _check("consistency", "c1_prime_at_zero", abs(c1_prime(0.0, cfg) - 1 / 6) <= 1e-8),
        _check("consistency", "c2_prime_at_zero", abs(c2_prime(0.0, cfg) - 1 / 6) <= 1e-8),
        _check("consistency", "c2_closed_form", closed <= 1e-9, f"{closed:.2e}"),
        _check("consistency", "sphere_vs_rodrigues", bridge <= 1e-9, f"{bridge:.2e}"),
    ]


@suite("critical")
def _critical(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    crit = critical_densities(cfg)
    alpha_grid, rho_grid = grid_scan_rho_star(cfg, step=1e-2)
    return [
        _check("critical", "rho_c_is_six", abs(crit.rho_c - 6.0) <= 1e-8, f"ρ_c = {crit.rho_c!r}"),
        _check("critical", "rho_star_below_rho_c", crit.rho_star < crit.rho_c, f"ρ* = {crit.rho_star:.10f}"),
        _check("critical", "grid_scan_agrees", abs(rho_grid - crit.rho_star) <= 1e-3,
               f"网格 ρ* = {rho_grid:.6f}, α* = {alpha_grid:.3f}"),
    ]


@suite("stability")
def _stability(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    expected = {"uniform": (0, 0, 3), "alpha_1": (3, 0, 0), "alpha_3": (1, 0, 2), "alpha_2": (2, 0, 1)}
    found = {r.branch: r.signature for r in classify(8.0, cfg)}
    crit = critical_densities(cfg)
    mid = {r.branch: r.signature for r in classify(0.5 * (crit.rho_star + crit.rho_c), cfg)}
    return [
        _check("stability", "signatures_at_rho_8", found == expected, str(found)),
        _check("stability", "alpha_minus_saddle", mid.get("alpha_minus") == (2, 0, 1), str(mid)),
    ]


@suite("gradient")
def _gradient(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    rho, h = 8.0, 1e-5
    worst = 0.0
    for _ in range(5):
        d = rng.uniform(-3.0, 3.0, size=3)
        fd = np.array([(potential(d + h * e, rho, cfg) - potential(d - h * e, rho, cfg)) / (2 * h)
                       for e in np.eye(3)])
        worst = max(worst, np.max(np.abs(rhs(d, rho, cfg) + fd)))
    hess = max(np.max(np.abs(hessian(r.d_ssvd, rho, cfg) - hessian_fd(r.d_ssvd, rho, cfg)))
               for r in classify(rho, cfg))
    return [
        _check("gradient", "rhs_is_minus_gradient", worst <= 1e-6, f"{worst:.2e}"),
        _check("gradient", "hessian_matches_fd", hess <= 1e-6, f"{hess:.2e}"),
    ]


# ============================================================================
# 第三部分：梯度流
# ============================================================================

def _tangency_defect(rho: float, cfg: QuadratureConfig) -> float:
    """未投影的右端项在 6 个不变平面与 3 条不变直线上的最大法向分量"""
    worst = 0.0
    for i, j in ((0, 1), (0, 2), (1, 2)):
        for sign in (1.0, -1.0):
            d = np.array([2.3, -1.1, 0.7])
            d[i] = sign * d[j]
            r = rhs(d, rho, cfg)
            worst = max(worst, abs(r[i] - sign * r[j]))
    for u in ([1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [1.0, 0.0, 0.0]):
        u = np.asarray(u)
        worst = max(worst, float(np.max(np.abs(np.cross(rhs(2.5 * u, rho, cfg), u)))))
    return worst


@suite("flow")
def _flow(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    sub = integrate([0.5, 0.3, 0.1], 1.0, cfg=cfg)
    records = {r.branch: np.asarray(r.d_ssvd) for r in classify(8.0, cfg)}
    line = integrate([2.0, 2.0, -2.0], 8.0, cfg=cfg)
    drift = float(np.max(np.abs(line.states[:, 0] - line.states[:, 1]) + np.abs(line.states[:, 1] + line.states[:, 2])))
    descent = bool(np.all(np.diff(sub.potentials) <= 1e-9))
    tangency = _tangency_defect(8.0, cfg)
    generic = integrate([1.0, 0.5, 0.2], 8.0, cfg=cfg)
    return [
        _check("flow", "subcritical_decay", sub.converged and np.linalg.norm(sub.limit) < 1e-6),
        _check("flow", "half_line_limit", line.converged and np.max(np.abs(line.limit - records["alpha_3"])) < 1e-5),
        _check("flow", "half_line_invariant", drift <= 1e-9, f"{drift:.2e}"),
        _check("flow", "planes_tangent", tangency <= 1e-12, f"{tangency:.2e}"),
        _check("flow", "generic_start_to_alpha_1",
               generic.converged and np.max(np.abs(generic.limit - records["alpha_1"])) < 1e-5),
        _check("flow", "monotone_descent", descent),
        _check("flow", "tie_structure", TieStructure([2.0, 2.0, -2.0]).groups[0][0] == [(0, 1.0), (1, 1.0), (2, -1.0)]),
    ]


# ============================================================================
# 第四部分：宏观系数、GCI 与粒子
# ============================================================================

@suite("hydro")
def _hydro(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    small = brace_coefficients(1e-6, cfg)
    b = brace_coefficients(3.0, cfg)
    identity = abs((b.C4 + b.C5) / b.C2 - b.c2_tilde)
    mu = abs(mu_from_haar(3.0, cfg) - 0.5 * b.mu2)
    return [
        _check("hydro", "small_alpha_limits",
               abs(small.c2_tilde - 0.25) <= 1e-5 and abs(small.c4 - 0.25) <= 1e-5),
        _check("hydro", "c2_tilde_identity", identity <= 1e-12, f"{identity:.2e}"),
        _check("hydro", "diffusion_values",
               diffusion_coefficient(0.0) == 1 / 3 and diffusion_coefficient(3.0) == 2 / 3),
        _check("hydro", "mu_from_haar", mu <= 1e-8, f"{mu:.2e}"),
    ]


def _unit(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


@suite("gci")
def _gci(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    rho = 8.0
    Lam = quat_to_rot(_unit(rng))
    J = Lam @ np.diag([3.0, 2.0, 1.0])
    P = skew(rng.standard_normal(3))
    S = rng.standard_normal((3, 3))
    S = 0.5 * (S + S.T)
    ok = gci_residual(J, P, TestDensity(rho, Lam @ S, cfg), 100000, rng, cfg)
    P_prime = skew(np.array([1.5, -1.0, 0.5]))
    bad = gci_residual(J, P_prime, TestDensity(rho, Lam @ (np.diag([2.0, 1.5, 1.0]) + P_prime), cfg),
                       100000, rng, cfg)
    return [
        _check("gci", "constrained_density", ok.within(0.0, 4.0), f"{ok.value:.3e} ± {ok.stderr:.1e}"),
        _check("gci", "violating_density", abs(bad.value) > 6.0 * bad.stderr, f"{bad.value:.3e} ± {bad.stderr:.1e}"),
    ]


@suite("particles")
def _particles(cfg: QuadratureConfig, rng: np.random.Generator) -> List[CheckResult]:
    seed = int(rng.integers(2**32))

    def simulate():
        local = np.random.default_rng(seed)
        ens = init_ensemble(200, 2.0, local, cfg=cfg)
        return ens, run(ens, 2.0, 0.5, local)

    ens, first = simulate()
    _, second = simulate()
    valid = all(is_rotation(a, 1e-10) and horn_check(a) for a in ens.orientations)
    return [
        _check("particles", "deterministic_replay",
               np.array_equal(first.fluxes, second.fluxes) and np.array_equal(first.times, second.times)),
        _check("particles", "orientations_valid", valid),
        _check("particles", "checkpoint_times", np.allclose(first.times, 0.5 * np.arange(len(first)), atol=0)),
    ]


# ============================================================================
# 第五部分：入口
# ============================================================================

def run_suites(names: Optional[Iterable[str]] = None, cfg: QuadratureConfig = DEFAULT_QUADRATURE,
               seed: int = 20240601) -> List[CheckResult]:
    """
    运行指定套件（None 或包含 "all" 时运行全部）

    Raises:
        PreconditionError: 未知的套件名
    """
    selected = list(SUITES) if names is None else list(names)
    if "all" in selected:
        selected = list(SUITES)
    unknown = [n for n in selected if n not in SUITES]
    if unknown:
        raise PreconditionError(f"未知的检查套件 {unknown}，可用: {', '.join(SUITES)}")

    results: List[CheckResult] = []
    for name, rng in zip(selected, np.random.SeedSequence(seed).spawn(len(selected))):
        logger.info(f"🚀 运行检查套件 {name}")
        rows = SUITES[name](cfg, np.random.default_rng(rng))
        failed = [r.name for r in rows if not r.passed]
        if failed:
            logger.warning(f"❌ {name}: {len(failed)} 项未通过 {failed}")
        else:
            logger.info(f"✅ {name}: {len(rows)} 项全部通过")
        results.extend(rows)
    return results


__all__ = ["SUITES", "suite", "run_suites"]
