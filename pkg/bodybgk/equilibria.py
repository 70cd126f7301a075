"""
平衡态分类

求解标量相容方程 α = ρc₁(α)、α = ρc₂(α)，计算临界密度 ρ*、ρ_c，
在 SSVD 代表元处计算势函数 Hessian 的符号并给出相图。
"""
from functools import lru_cache
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import CriticalDensityError, NumericalError, PreconditionError
from .logger import get_logger
from .models import CriticalDensities, EquilibriumKind, EquilibriumRecord, PhaseRow, QuadratureConfig
from .so3 import Matrix, Vector, phi_map
from .tasks import run_parallel
from .vonmises import (
    DEFAULT_QUADRATURE,
    alpha_over_c1,
    alpha_over_c2,
    c1,
    c1_prime,
    c2,
    moment1_diag,
    moment_stats,
)

logger = get_logger("Equilibria")

# 临界密度排除窗口
CRITICAL_WINDOW = 1e-6
# 根的残差上限 |α − ρcᵢ(α)|
ROOT_RESIDUAL = 1e-10
# 正分支搜索区间的下端
ALPHA_EPS = 1e-12


# ============================================================================
# 第一部分：临界密度
# ============================================================================

@lru_cache(maxsize=8)
def critical_densities(cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> CriticalDensities:
    """
    临界密度

    - ρ_c = 1/c₁′(0)，必须等于 6（容差 1e−8）
    - α* 为 α/c₁(α) 在 (0, 20] 上的极小点：粗网格定位后黄金分割，
      再对导数分子 c₁ − αc₁′ 求根精化；ρ* = α*/c₁(α*)

    Raises:
        NumericalError: ρ_c 偏离 6 超过 1e−8，或极小点落在扫描区间端点
    """
    rho_c = 1.0 / c1_prime(0.0, cfg)
    if abs(rho_c - 6.0) > 1e-8:
        raise NumericalError(f"ρ_c = {rho_c!r} 偏离 6，求积节点不足")

    grid = np.linspace(0.05, 20.0, 400)
    values = np.array([alpha_over_c1(a, cfg) for a in grid])
    k = int(np.argmin(values))
    if k == 0 or k == grid.size - 1:
        raise NumericalError("α/c₁ 的极小点落在扫描区间端点")

    bracket = (grid[k - 1], grid[k], grid[k + 1])
    golden = minimize_scalar(lambda a: alpha_over_c1(a, cfg), bracket=bracket,
                             method="golden", tol=1e-10)
    alpha_star = float(golden.x)

    def slope_numerator(a: float) -> float:
        return c1(a, cfg) - a * c1_prime(a, cfg)

    lo, hi = bracket[0], bracket[2]
    if slope_numerator(lo) < 0.0 < slope_numerator(hi):
        alpha_star = brentq(slope_numerator, lo, hi, xtol=1e-14)

    result = CriticalDensities(
        rho_star=alpha_over_c1(alpha_star, cfg),
        alpha_star=alpha_star,
        rho_c=rho_c,
    )
    logger.debug(f"临界密度: ρ* = {result.rho_star:.12f}, α* = {result.alpha_star:.12f}, ρ_c = {rho_c:.12f}")
    return result


def grid_scan_rho_star(cfg: QuadratureConfig = DEFAULT_QUADRATURE, step: float = 1e-3,
                       alpha_max: float = 20.0) -> Tuple[float, float]:
    """独立的稠密网格扫描：返回 (α*, ρ*) 的网格估计"""
    grid = np.arange(step, alpha_max + 0.5 * step, step)
    values = np.array([alpha_over_c1(a, cfg) for a in grid])
    k = int(np.argmin(values))
    return float(grid[k]), float(values[k])


# ============================================================================
# 第二部分：相容方程的分支
# ============================================================================

def _refine(h, lo: float, hi: float, rho: float, cfun, cfg: QuadratureConfig) -> float:
    """brentq 求根并检查残差 |α − ρc(α)|"""
    root = brentq(h, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    residual = abs(root - rho * cfun(root, cfg))
    if residual > ROOT_RESIDUAL:
        raise NumericalError(f"根 α = {root!r} 的残差 {residual:.3e} 超过 {ROOT_RESIDUAL}")
    return float(root)


def solve_c1_branches(rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> List[float]:
    """
    α = ρc₁(α) 的全部实根（升序）

    总包含 0；ρ* < ρ < ρ_c 时另有 0 < α₋ < α₊；ρ > ρ_c 时另有 α₃ < 0 < α₁。
    在 α/c₁ 的单调段上求根：(0, α*] 递减，[α*, ρ+2] 递增，负半轴 [−ρ−2, 0) 递减。

    Raises:
        PreconditionError: rho < 0
    """
    if rho < 0:
        raise PreconditionError(f"密度必须非负，得到 rho = {rho}")
    crit = critical_densities(cfg)

    def h(a: float) -> float:
        return alpha_over_c1(a, cfg) - rho

    roots = [0.0]
    if rho >= crit.rho_star:
        if h(crit.alpha_star) >= 0.0:
            # ρ = ρ*：α₋ 与 α₊ 在 α* 处合并为重根
            roots.append(crit.alpha_star)
        else:
            if rho < crit.rho_c - 1e-12 and h(ALPHA_EPS) > 0.0:
                roots.append(_refine(h, ALPHA_EPS, crit.alpha_star, rho, c1, cfg))
            roots.append(_refine(h, crit.alpha_star, rho + 2.0, rho, c1, cfg))
    if rho > crit.rho_c + 1e-12 and h(-ALPHA_EPS) < 0.0:
        roots.append(_refine(h, -rho - 2.0, -ALPHA_EPS, rho, c1, cfg))

    return sorted(set(roots))


def solve_c2_branches(rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> List[float]:
    """
    α = ρc₂(α) 的全部实根（升序）：ρ ≤ ρ_c 时只有 0，ρ > ρ_c 时为 {−α₂, 0, α₂}

    Raises:
        PreconditionError: rho < 0
    """
    if rho < 0:
        raise PreconditionError(f"密度必须非负，得到 rho = {rho}")
    crit = critical_densities(cfg)

    def h(a: float) -> float:
        return alpha_over_c2(a, cfg) - rho

    if rho <= crit.rho_c or h(ALPHA_EPS) >= 0.0:
        return [0.0]
    alpha2 = _refine(h, ALPHA_EPS, rho + 2.0, rho, c2, cfg)
    return [-alpha2, 0.0, alpha2]


# ============================================================================
# 第三部分：Hessian 与符号
# ============================================================================

def hessian(dhat, rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Matrix:
    """
    势函数 V̂ 的 Hessian：I₃ − (ρ/2)Γ，Γᵢⱼ = ⟨aᵢᵢaⱼⱼ⟩ − ⟨aᵢᵢ⟩⟨aⱼⱼ⟩

    Examples:
        >>> H = hessian([0.0, 0.0, 0.0], 3.0)
        >>> bool(np.allclose(H, 0.5 * np.eye(3)))
        True
    """
    stats = moment_stats(dhat, cfg, second=True)
    gamma = stats.m2 - np.outer(stats.m1, stats.m1)
    H = np.eye(3) - 0.5 * rho * gamma
    return 0.5 * (H + H.T)


def hessian_fd(dhat, rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE, h: float = 1e-4) -> Matrix:
    """中心差分 Hessian，差分对象是解析梯度 ∇V̂ = D̂ − ρ⟨a_ii⟩"""
    d = np.asarray(dhat, dtype=float)
    H = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        grad_plus = (d + e) - rho * moment1_diag(d + e, cfg)
        grad_minus = (d - e) - rho * moment1_diag(d - e, cfg)
        H[:, j] = (grad_plus - grad_minus) / (2.0 * h)
    return 0.5 * (H + H.T)


def signature(H: Matrix, zero_tol: float = 1e-9) -> Tuple[int, int, int]:
    """
    对称矩阵特征值的符号计数 (n₊, n₀, n₋)

    |λ| ≤ zero_tol·max|λ| 计为零

    Raises:
        PreconditionError: H 不对称（容差 1e−12）
    """
    H = np.asarray(H, dtype=float)
    if np.max(np.abs(H - H.T)) > 1e-12:
        raise PreconditionError("Hessian 必须对称")
    eig = np.linalg.eigvalsh(H)
    scale = float(np.max(np.abs(eig)))
    threshold = zero_tol * scale if scale > 0 else 0.0
    n_plus = int(np.sum(eig > threshold))
    n_minus = int(np.sum(eig < -threshold))
    return n_plus, 3 - n_plus - n_minus, n_minus


# ============================================================================
# 第四部分：分类与相图
# ============================================================================

def _c1_branch_name(alpha: float, rho: float, crit: CriticalDensities) -> str:
    if rho <= crit.rho_c:
        return "alpha_minus" if alpha < crit.alpha_star else "alpha_plus"
    return "alpha_1" if alpha > 0 else "alpha_3"


def _c1_representative(alpha: float) -> Vector:
    """α > 0 取 α(1,1,1)，α < 0 取 |α|(1,1,−1)"""
    if alpha > 0:
        return alpha * np.ones(3)
    return abs(alpha) * np.array([1.0, 1.0, -1.0])


def _record(rho: float, kind: EquilibriumKind, branch: str, alpha: float, d: Vector,
            cfg: QuadratureConfig) -> EquilibriumRecord:
    sig = signature(hessian(d, rho, cfg))
    return EquilibriumRecord(
        rho=rho,
        kind=kind,
        branch=branch,
        alpha=float(alpha),
        d_ssvd=tuple(float(x) for x in d),
        signature=sig,
        stable=sig == (3, 0, 0),
    )


def classify(rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> List[EquilibriumRecord]:
    """
    列出密度 ρ 下的全部平衡态并给出稳定性

    ρ < ρ*：只有均匀态（稳定）；ρ* < ρ < ρ_c：均匀态与 α₊ 稳定，α₋ 的符号为 (−++)；
    ρ > ρ_c：只有 α₁ 稳定，均匀态 (−−−)，α₃ (+−−)，α₂ (++−)。

    Raises:
        PreconditionError: rho < 0
        CriticalDensityError: rho 距 ρ* 或 ρ_c 不超过 1e−6
    """
    if rho < 0:
        raise PreconditionError(f"密度必须非负，得到 rho = {rho}")
    crit = critical_densities(cfg)
    if crit.near_critical(rho, CRITICAL_WINDOW):
        raise CriticalDensityError(f"rho = {rho} 处于临界密度窗口内，Hessian 非双曲")

    records = [_record(rho, EquilibriumKind.UNIFORM, "uniform", 0.0, np.zeros(3), cfg)]
    for alpha in solve_c1_branches(rho, cfg):
        if alpha != 0.0:
            records.append(_record(rho, EquilibriumKind.TYPE_B, _c1_branch_name(alpha, rho, crit),
                                   alpha, _c1_representative(alpha), cfg))
    for alpha in solve_c2_branches(rho, cfg):
        if alpha > 0.0:
            records.append(_record(rho, EquilibriumKind.TYPE_C, "alpha_2", alpha,
                                   np.array([alpha, 0.0, 0.0]), cfg))

    logger.debug(f"ρ = {rho}: {len(records)} 个平衡态，"
                 f"稳定 {[r.branch for r in records if r.stable]}")
    return records


def match_record(dhat, records: Iterable[EquilibriumRecord], tol: float = 1e-6) -> Optional[EquilibriumRecord]:
    """在 D̂ 的 tol 邻域（最大模）内的第一个平衡态记录"""
    d = np.asarray(dhat, dtype=float)
    for record in records:
        if np.max(np.abs(d - np.asarray(record.d_ssvd))) <= tol:
            return record
    return None


def distinct_levels(dhat, tol: float = 1e-9) -> int:
    """φ(diag D̂) 的不同对角值个数；每个平衡态至多两个"""
    s = np.sort(np.diag(phi_map(np.diag(np.asarray(dhat, dtype=float)))))
    scale = max(1.0, float(np.max(np.abs(s))))
    return 1 + int(np.sum(np.diff(s) > tol * scale))


def _row(rho: float, branch: str, alpha: float, d: Vector, sig=None, stable=None, note: str = "") -> PhaseRow:
    return PhaseRow(
        rho=rho, branch=branch, alpha=alpha,
        d1=float(d[0]), d2=float(d[1]), d3=float(d[2]),
        sig_plus=None if sig is None else sig[0],
        sig_zero=None if sig is None else sig[1],
        sig_minus=None if sig is None else sig[2],
        stable=stable,
        note=note,
    )


def phase_rows(args: Tuple[float, QuadratureConfig]) -> List[PhaseRow]:
    """单个 ρ 的相图行（进程池任务）；临界窗口内只给出分支值并标注 critical"""
    rho, cfg = args
    crit = critical_densities(cfg)

    if crit.near_critical(rho, CRITICAL_WINDOW):
        rows = [_row(rho, "uniform", 0.0, np.zeros(3), note="critical")]
        for alpha in solve_c1_branches(rho, cfg):
            if alpha != 0.0:
                rows.append(_row(rho, _c1_branch_name(alpha, rho, crit), alpha,
                                 _c1_representative(alpha), note="critical"))
        for alpha in solve_c2_branches(rho, cfg):
            if alpha != 0.0:
                branch = "alpha_2" if alpha > 0 else "minus_alpha_2"
                rows.append(_row(rho, branch, alpha, np.array([abs(alpha), 0.0, 0.0]), note="critical"))
        return rows

    rows = []
    for record in classify(rho, cfg):
        d = np.asarray(record.d_ssvd)
        rows.append(_row(rho, record.branch, record.alpha, d, record.signature, record.stable))
        if record.kind == EquilibriumKind.TYPE_C:
            # −α₂ 与 α₂ 属于同一轨道，SSVD 代表元与符号相同
            rows.append(_row(rho, "minus_alpha_2", -record.alpha, d, record.signature, record.stable))
    return rows


def phase_diagram(rho_min: float, rho_max: float, n_points: int,
                  cfg: QuadratureConfig = DEFAULT_QUADRATURE, jobs: Optional[int] = 1) -> List[PhaseRow]:
    """
    等距 ρ 网格上的相图表，每个 ρ 给出两组相容方程的全部分支

    Raises:
        PreconditionError: 区间无效或 n_points < 1
    """
    if not (0.0 <= rho_min < rho_max):
        raise PreconditionError(f"需要 0 ≤ rho_min < rho_max，得到 [{rho_min}, {rho_max}]")
    if n_points < 1:
        raise PreconditionError(f"n_points 必须为正，得到 {n_points}")

    # 先在主进程算好临界密度，避免每个子进程重复
    critical_densities(cfg)
    grid = np.linspace(rho_min, rho_max, n_points)
    per_rho = run_parallel(phase_rows, [(float(rho), cfg) for rho in grid], jobs, label="相图扫描")
    return [row for rows in per_rho for row in rows]


__all__ = [
    "CRITICAL_WINDOW",
    "critical_densities",
    "grid_scan_rho_star",
    "solve_c1_branches",
    "solve_c2_branches",
    "hessian",
    "hessian_fd",
    "signature",
    "classify",
    "match_record",
    "distinct_levels",
    "phase_rows",
    "phase_diagram",
]
