"""
宏观极限系数

无序区（ρ < ρ_c）的扩散系数，有序区（ρ > ρ*）SOHB 方程的全部系数函数
C₂=C₃、C₄、C₅、c̃₂、c̃₃、c₄、2μ 与 α′(ρ)，以及广义碰撞不变量（GCI）残差的 Monte-Carlo 检验。

系数只沿最大分支 α(ρ)（α₊ / α₁）参数化；α₋ 分支不稳定，不计算其宏观系数。
"""
from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .equilibria import CRITICAL_WINDOW, critical_densities, solve_c1_branches
from .errors import PreconditionError
from .logger import get_logger
from .models import CoefficientRow, Estimate, QuadratureConfig
from .so3 import Matrix, haar_batch, mat_dot, polar_rotation
from .tasks import run_parallel
from .vonmises import DEFAULT_QUADRATURE, VonMisesParams, brace_mean, c1, c1_prime, density, haar_expectation

logger = get_logger("Hydro")

# 无序区扩散方程的临界密度（解析值）
RHO_C = 6.0
# ρ* 之上这一范围内的 c̃₃ 受 1/α 与 α′ 奇异性影响，表中标注
FLAG_MARGIN = 0.05


# ============================================================================
# 第一部分：最大分支 α(ρ) 及其导数
# ============================================================================

def alpha_of_rho(rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """
    α = ρc₁(α) 的最大非负根：ρ < ρ* 时为 0

    Raises:
        PreconditionError: rho < 0
    """
    if rho < 0:
        raise PreconditionError(f"密度必须非负，得到 rho = {rho}")
    return max(0.0, max(solve_c1_branches(rho, cfg)))


def alpha_prime(rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """
    隐函数求导：α′ = c₁(α)/(1 − ρc₁′(α))

    Raises:
        PreconditionError: rho ≤ ρ* + 1e−6（分支诞生处导数发散）
    """
    crit = critical_densities(cfg)
    if rho <= crit.rho_star + CRITICAL_WINDOW:
        raise PreconditionError(f"rho = {rho} 不在有序分支上（需要 rho > ρ* + {CRITICAL_WINDOW}）")
    alpha = alpha_of_rho(rho, cfg)
    return c1(alpha, cfg) / (1.0 - rho * c1_prime(alpha, cfg))


def diffusion_coefficient(rho: float) -> float:
    """
    无序区扩散系数 (1/3)/(1 − ρ/6)

    Raises:
        PreconditionError: rho ∉ [0, 6)
    """
    if not (0.0 <= rho < RHO_C):
        raise PreconditionError(f"扩散描述只在 0 ≤ rho < {RHO_C} 成立，得到 rho = {rho}")
    return (1.0 / 3.0) / (1.0 - rho / RHO_C)


# ============================================================================
# 第二部分：SOHB 系数
# ============================================================================

class BraceCoefficients(NamedTuple):
    """只依赖 α 的系数；trace_ratio = {(1+2cosθ)sin²θ}_α / {sin²θ}_α"""
    alpha: float
    C2: float
    C4: float
    C5: float
    c2_tilde: float
    c4: float
    mu2: float
    trace_ratio: float


def brace_coefficients(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> BraceCoefficients:
    """
    所有 {·}_α 加权平均构成的系数

    Examples:
        >>> round(brace_coefficients(1e-6).c2_tilde, 6)
        0.25
    """
    def mean(h) -> float:
        return brace_mean(h, alpha, cfg)

    sin2 = mean(lambda t: np.sin(t) ** 2)
    trace_weighted = mean(lambda t: (1.0 + 2.0 * np.cos(t)) * np.sin(t) ** 2)
    return BraceCoefficients(
        alpha=float(alpha),
        C2=2.0 / 3.0 * sin2,
        C4=2.0 / 15.0 * mean(lambda t: np.sin(t) ** 2 * (1.0 + 4.0 * np.cos(t))),
        C5=2.0 / 15.0 * mean(lambda t: np.sin(t) ** 2 * (1.0 - np.cos(t))),
        c2_tilde=0.2 * mean(lambda t: np.sin(t) ** 2 * (2.0 + 3.0 * np.cos(t))) / sin2,
        c4=0.2 * mean(lambda t: np.sin(t) ** 2 * (1.0 - np.cos(t))) / sin2,
        mu2=trace_weighted / 3.0,
        trace_ratio=trace_weighted / sin2,
    )


def sohb_coefficients(rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> CoefficientRow:
    """
    密度 ρ 处的 SOHB 系数行

    c̃₃ = 1/α + (ρα′/α)·(3/2·c₁(α) + ½·trace_ratio)；ρ < ρ* + 0.05 的行被标注

    Raises:
        PreconditionError: rho ≤ ρ*（没有有序分支）
    """
    crit = critical_densities(cfg)
    if rho <= crit.rho_star:
        raise PreconditionError(f"rho = {rho} ≤ ρ* = {crit.rho_star}，没有有序分支")
    a_prime = alpha_prime(rho, cfg)
    alpha = alpha_of_rho(rho, cfg)
    b = brace_coefficients(alpha, cfg)
    c1_value = c1(alpha, cfg)
    c3_tilde = 1.0 / alpha + (rho * a_prime / alpha) * (1.5 * c1_value + 0.5 * b.trace_ratio)

    flagged = rho < crit.rho_star + FLAG_MARGIN
    if flagged:
        logger.warning(f"⚠️ rho = {rho} 靠近 ρ* = {crit.rho_star:.6f}，c̃₃ 接近奇异")

    return CoefficientRow(
        rho=rho, alpha=alpha, alpha_prime=a_prime, c1=c1_value,
        c2_tilde=b.c2_tilde, c3_tilde=c3_tilde, c4=b.c4,
        C2=b.C2, C4=b.C4, C5=b.C5, mu2=b.mu2,
        flagged=flagged,
    )


def _coefficient_task(args) -> CoefficientRow:
    rho, cfg = args
    return sohb_coefficients(rho, cfg)


def coefficient_table(rhos: Sequence[float], cfg: QuadratureConfig = DEFAULT_QUADRATURE,
                      jobs: Optional[int] = 1) -> List[CoefficientRow]:
    """多个 ρ 的系数表，按 ρ 并行"""
    return run_parallel(_coefficient_task, [(float(r), cfg) for r in rhos], jobs, label="SOHB 系数表")


def mu_from_haar(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """μ = ⅛∫(a₂₁ − a₁₂)²Tr(A)M_{αI}(A)dA，用 S³ 求积独立计算，应等于 mu2/2"""
    params = VonMisesParams(alpha * np.eye(3), cfg)

    def integrand(A: Matrix) -> np.ndarray:
        skew = A[:, 1, 0] - A[:, 0, 1]
        return skew ** 2 * np.trace(A, axis1=1, axis2=2) * density(params, A)

    return float(haar_expectation(integrand, cfg)) / 8.0


# ============================================================================
# 第三部分：GCI 残差
# ============================================================================

@dataclass(frozen=True, eq=False)
class TestDensity:
    """
    检验密度 f = ρ·M_K

    K = ΛS（S 对称）时 Λᵀ J_f 对称，满足 GCI 的约束
    """
    __test__ = False

    rho: float
    K: Matrix
    cfg: QuadratureConfig = DEFAULT_QUADRATURE

    @cached_property
    def params(self) -> VonMisesParams:
        return VonMisesParams(self.K, self.cfg)

    def __call__(self, A: Matrix) -> np.ndarray:
        return self.rho * density(self.params, A)


def gci_residual(J: Matrix, P_skew: Matrix, f: TestDensity, n_mc: int, rng: np.random.Generator,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Estimate:
    """
    ∫ L_J(f)·ψ dA 的 Monte-Carlo 估计，L_J(f) = ρM_J − f，ψ(A) = −P·ΛᵀA，Λ 为 J 的极分解旋转

    Raises:
        PreconditionError: det J ≤ 0，或 P_skew 不是反对称矩阵
    """
    J = np.asarray(J, dtype=float)
    P_skew = np.asarray(P_skew, dtype=float)
    if np.linalg.det(J) <= 0.0:
        raise PreconditionError("需要 det J > 0，否则 Λ 无定义")
    if np.max(np.abs(P_skew + P_skew.T)) > 1e-12:
        raise PreconditionError("P 必须是反对称矩阵")

    Lam = polar_rotation(J)
    A = haar_batch(n_mc, rng)
    maxwellian = VonMisesParams(J, cfg)
    collision = f.rho * density(maxwellian, A) - f(A)
    psi = -mat_dot(P_skew, np.einsum("ji,njk->nik", Lam, A))
    values = collision * psi
    return Estimate(value=float(values.mean()), stderr=float(values.std(ddof=1) / np.sqrt(n_mc)))


__all__ = [
    "RHO_C",
    "FLAG_MARGIN",
    "alpha_of_rho",
    "alpha_prime",
    "diffusion_coefficient",
    "BraceCoefficients",
    "brace_coefficients",
    "sohb_coefficients",
    "coefficient_table",
    "mu_from_haar",
    "TestDensity",
    "gci_residual",
]
