"""
梯度流弛豫

通量 ODE dJ/dt = ρ⟨A⟩_{M_J} − J 沿 SSVD 约化为 ℝ³ 上的梯度流
dD̂/dt = ρ⟨a_ii⟩_{M_D̂} − D̂ = −∇V̂(D̂)，V̂(D̂) = ½|D̂|² − 2ρ log Z(diag D̂)。

本模块提供：
- 右端项、势函数与自适应 RK45 积分（轨迹记录势函数与梯度范数）
- 通量形式的弛豫（J = P·diag(D(t))·Q）
- 按稳定流形几何预测极限（盆地标签）
- Duhamel 公式重建完整分布、自由能监测与指数收敛速率拟合
- 多起点的并行普查与临界密度处的探索性运行
"""
import weakref
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import RK45, quad_vec
from scipy.interpolate import PchipInterpolator

from .equilibria import CRITICAL_WINDOW, classify, critical_densities, match_record, solve_c1_branches
from .errors import CriticalDensityError, IntegrationError, NumericalError, PreconditionError
from .logger import get_logger
from .models import BasinLabel, CriticalDensities, Estimate, FlowOptions, QuadratureConfig
from .so3 import Matrix, Vector, haar_batch, mat_dot, ssvd
from .tasks import run_parallel
from .vonmises import DEFAULT_QUADRATURE, haar_expectation, log_partition, moment_stats

logger = get_logger("GradientFlow")

DEFAULT_OPTIONS = FlowOptions()

# 势函数单步允许的上升量
DESCENT_SLACK = 1e-9
# 超过该量的出锥视为数值问题
CONE_DRIFT = 1e-7


# ============================================================================
# 第一部分：右端项与势函数
# ============================================================================

def rhs(dhat, rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Vector:
    """ρ·⟨a_ii⟩_{M_D̂} − D̂ = −∇V̂(D̂)"""
    d = np.asarray(dhat, dtype=float)
    return rho * moment_stats(d, cfg).m1 - d


def potential(dhat, rho: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """V̂(D̂) = ½|D̂|² − 2ρ log Z(diag D̂)"""
    d = np.asarray(dhat, dtype=float)
    return 0.5 * float(d @ d) - 2.0 * rho * log_partition(d, cfg)


def cone_gap(dhat) -> float:
    """min(d₁−d₂, d₂−|d₃|)；非负当且仅当 D̂ 在 SSVD 锥内"""
    d1, d2, d3 = np.asarray(dhat, dtype=float)
    return float(min(d1 - d2, d2 - abs(d3)))


class TieStructure:
    """
    D̂ 所在的不变流形：分量之间的 dᵢ = ±dⱼ 关系

    平面 {dᵢ ± dⱼ = 0} 及其交线在流下不变。被绑定的分量作为一个整体推进
    （右端项在绑定组内取带符号平均），流形泛函在浮点意义下恒为零。
    同时满足 dᵢ = dⱼ 与 dᵢ = −dⱼ 的组被固定为零。
    """

    def __init__(self, dhat, tol: float = 1e-12):
        d = np.asarray(dhat, dtype=float)
        eps = tol * max(1.0, float(np.max(np.abs(d))))
        self._parent = [0, 1, 2]
        self._sign = [1.0, 1.0, 1.0]
        self._zero = [False, False, False]

        for i in range(3):
            for j in range(i + 1, 3):
                if abs(d[i] - d[j]) <= eps:
                    self._tie(i, j, 1.0)
                if abs(d[i] + d[j]) <= eps:
                    self._tie(i, j, -1.0)

        groups: Dict[int, List[Tuple[int, float]]] = {}
        for i in range(3):
            root, sign = self._find(i)
            groups.setdefault(root, []).append((i, sign))
        self.groups = [(members, self._zero[root]) for root, members in groups.items()]

    def _find(self, i: int) -> Tuple[int, float]:
        sign = 1.0
        while self._parent[i] != i:
            sign *= self._sign[i]
            i = self._parent[i]
        return i, sign

    def _tie(self, i: int, j: int, s: float):
        """登记 dᵢ = s·dⱼ"""
        ri, si = self._find(i)
        rj, sj = self._find(j)
        if ri == rj:
            if si != s * sj:
                self._zero[ri] = True
            return
        self._parent[rj] = ri
        self._sign[rj] = si * s * sj
        self._zero[ri] = self._zero[ri] or self._zero[rj]

    @property
    def trivial(self) -> bool:
        return all(len(members) == 1 and not zero for members, zero in self.groups)

    def project(self, v: Vector) -> Vector:
        """把向量投到绑定关系上（组内带符号平均）"""
        out = np.array(v, dtype=float)
        for members, zero in self.groups:
            if len(members) == 1 and not zero:
                continue
            if zero:
                for i, _ in members:
                    out[i] = 0.0
                continue
            avg = sum(sign * v[i] for i, sign in members) / len(members)
            for i, sign in members:
                out[i] = sign * avg
        return out


class _ReducedRhs:
    """积分器使用的右端项；记住最近几个点的 log Z，供势函数复用"""

    def __init__(self, rho: float, cfg: QuadratureConfig, ties: TieStructure):
        self.rho = rho
        self.cfg = cfg
        self.ties = ties
        self._log_z: Dict[bytes, float] = {}

    def __call__(self, t: float, y: Vector) -> Vector:
        stats = moment_stats(y, self.cfg)
        if len(self._log_z) > 16:
            self._log_z.clear()
        self._log_z[np.asarray(y, dtype=float).tobytes()] = stats.log_z
        r = self.rho * stats.m1 - y
        return r if self.ties.trivial else self.ties.project(r)

    def potential(self, y: Vector) -> float:
        log_z = self._log_z.get(np.asarray(y, dtype=float).tobytes())
        if log_z is None:
            log_z = log_partition(y, self.cfg)
        return 0.5 * float(y @ y) - 2.0 * self.rho * log_z


# ============================================================================
# 第二部分：轨迹与积分
# ============================================================================

@dataclass
class Trajectory:
    """
    约化梯度流的轨迹

    Attributes:
        rho: 密度
        times: 递增的时间点
        states: 各时间点的 D̂(t)，形状 (K, 3)
        potentials: V̂(D̂(t))
        grad_norms: |rhs(D̂(t))|
        converged: 是否满足收敛阈值
        limit: 收敛时的极限
        cone_violation: 从锥内出发时观测到的最大出锥量
    """
    rho: float
    times: Vector
    states: Matrix
    potentials: Vector
    grad_norms: Vector
    converged: bool = False
    limit: Optional[Vector] = None
    cone_violation: float = 0.0

    def __len__(self) -> int:
        return len(self.times)

    @property
    def horizon(self) -> float:
        """可查询的最大时间；收敛轨迹在停止时刻之后取极限值"""
        return float("inf") if self.converged else float(self.times[-1])

    @cached_property
    def _interpolant(self) -> Optional[PchipInterpolator]:
        if len(self.times) < 2:
            return None
        return PchipInterpolator(self.times, self.states, axis=0)

    def state_at(self, t: float) -> Vector:
        """单调三次插值得到的 D̂(t)"""
        if t < 0 or t > self.horizon:
            raise PreconditionError(f"t = {t} 超出轨迹范围 [0, {self.horizon}]")
        if t >= self.times[-1]:
            return self.states[-1] if self.limit is None else self.limit
        if self._interpolant is None:
            return self.states[0]
        return self._interpolant(t)

    def rows(self) -> List[Tuple[float, float, float, float, float, float]]:
        """CSV 行：(t, d1, d2, d3, V, |rhs|)"""
        return [
            (float(t), float(s[0]), float(s[1]), float(s[2]), float(v), float(g))
            for t, s, v, g in zip(self.times, self.states, self.potentials, self.grad_norms)
        ]


@dataclass
class FluxPath:
    """通量形式的轨迹 J(t) = P·diag(D̂(t))·Q"""
    P: Matrix
    Q: Matrix
    trajectory: Trajectory

    @property
    def horizon(self) -> float:
        return self.trajectory.horizon

    def flux_at(self, t: float) -> Matrix:
        return self.P @ np.diag(self.trajectory.state_at(t)) @ self.Q


def integrate(d0, rho: float, opts: FlowOptions = DEFAULT_OPTIONS,
              cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Trajectory:
    """
    用嵌入式 RK45 积分约化梯度流

    |rhs| ≤ stop_grad_norm 时停止并记录极限，否则积分到 t_max。
    起点精确落在不变平面/直线上时按 TieStructure 约化推进。

    Raises:
        PreconditionError: D0 不是有限 3 维向量
        IntegrationError: 步长下溢，附带已得到的部分轨迹
    """
    d0 = np.asarray(d0, dtype=float)
    if d0.shape != (3,) or not np.all(np.isfinite(d0)):
        raise PreconditionError(f"D0 必须是有限的 3 维向量，得到 {d0!r}")

    ties = TieStructure(d0)
    y0 = ties.project(d0)
    in_cone = cone_gap(y0) >= -1e-12
    fun = _ReducedRhs(rho, cfg, ties)

    g0 = fun(0.0, y0)
    times, states = [0.0], [y0.copy()]
    potentials, grad_norms = [fun.potential(y0)], [float(np.linalg.norm(g0))]
    max_violation = 0.0

    def build(converged: bool) -> Trajectory:
        return Trajectory(
            rho=rho,
            times=np.array(times),
            states=np.array(states),
            potentials=np.array(potentials),
            grad_norms=np.array(grad_norms),
            converged=converged,
            limit=states[-1].copy() if converged else None,
            cone_violation=max_violation,
        )

    if grad_norms[0] <= opts.stop_grad_norm:
        return build(True)

    solver = RK45(fun, 0.0, y0, t_bound=opts.t_max, rtol=opts.rtol, atol=opts.atol,
                  max_step=opts.max_step)
    converged = False
    while True:
        message = solver.step()
        if solver.status == "failed":
            logger.error(f"❌ 积分失败 (ρ = {rho}, t = {solver.t}): {message}")
            raise IntegrationError(f"积分在 t = {solver.t} 处失败: {message}", trajectory=build(False))

        y = solver.y.copy()
        V = fun.potential(y)
        g = float(np.linalg.norm(solver.f))

        if V > potentials[-1] + DESCENT_SLACK:
            logger.warning(f"势函数上升 {V - potentials[-1]:.3e}（t = {solver.t}）")
        if in_cone:
            violation = max(0.0, -cone_gap(y))
            if violation > CONE_DRIFT and violation > max_violation:
                logger.warning(f"⚠️ 轨迹离开 SSVD 锥 {violation:.3e}（t = {solver.t}），求积或积分误差")
            max_violation = max(max_violation, violation)

        times.append(float(solver.t))
        states.append(y)
        potentials.append(V)
        grad_norms.append(g)

        if g <= opts.stop_grad_norm:
            converged = True
            break
        if solver.status == "finished":
            break

    traj = build(converged)
    logger.debug(f"ρ = {rho}: {len(traj)} 步，t = {times[-1]:.3f}，收敛 = {converged}，终点 {states[-1]}")
    return traj


def relax_flux(J0: Matrix, rho: float, opts: FlowOptions = DEFAULT_OPTIONS,
               cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Tuple[Matrix, FluxPath]:
    """
    通量 ODE 的弛豫：J0 = P·diag(D0)·Q，积分 D̂ 后返回 J_eq = P·diag(极限)·Q

    未收敛时 J_eq 取最后一个状态
    """
    P, D0, Q = ssvd(J0)
    traj = integrate(D0, rho, opts, cfg)
    final = traj.limit if traj.converged else traj.states[-1]
    if not traj.converged:
        logger.warning(f"ρ = {rho}: 在 t_max = {opts.t_max} 内未收敛，返回最后状态")
    return P @ np.diag(final) @ Q, FluxPath(P, Q, traj)


# ============================================================================
# 第三部分：盆地预测与普查
# ============================================================================

def basin_label(d0, rho: float, crit: Optional[CriticalDensities] = None,
                cfg: QuadratureConfig = DEFAULT_QUADRATURE, tol: float = 1e-12) -> BasinLabel:
    """
    按稳定流形几何预测锥内起点 D0 的极限

    - ρ < ρ*：均匀态
    - ρ > ρ_c：D0 = 0 → 均匀态；半直线 ℝ₊*(1,1,−1) → α₃；
      扇形 {(d₁,d₂,−d₂): d₁ > d₂ ≥ 0} → α₂；其余 → α₁
    - ρ* < ρ < ρ_c：除 D0 = 0 与对称直线外返回 UNKNOWN_BISTABLE

    Raises:
        PreconditionError: D0 不在 SSVD 锥内
        CriticalDensityError: rho 处于临界窗口
    """
    d = np.asarray(d0, dtype=float)
    crit = crit or critical_densities(cfg)
    scale = max(1.0, float(np.max(np.abs(d))))
    eps = tol * scale
    if cone_gap(d) < -eps:
        raise PreconditionError(f"D0 = {d} 不在 SSVD 锥 d₁ ≥ d₂ ≥ |d₃| 内")
    if crit.near_critical(rho, CRITICAL_WINDOW):
        raise CriticalDensityError(f"rho = {rho} 处于临界密度窗口内")

    d1, d2, d3 = d
    if np.max(np.abs(d)) <= eps or rho < crit.rho_star:
        return BasinLabel.UNIFORM

    on_diagonal = abs(d1 - d2) <= eps and abs(d2 - d3) <= eps
    on_half_line = abs(d1 - d2) <= eps and abs(d2 + d3) <= eps
    on_quarter_plane = abs(d2 + d3) <= eps and d1 - d2 > eps
    on_axis = abs(d2) <= eps and abs(d3) <= eps

    if rho > crit.rho_c:
        if on_half_line:
            return BasinLabel.TYPE_B_MINUS
        if on_quarter_plane:
            return BasinLabel.TYPE_C
        return BasinLabel.TYPE_B_PLUS

    # ρ* < ρ < ρ_c
    if on_axis or on_half_line:
        return BasinLabel.UNIFORM
    if on_diagonal:
        alpha_minus = min(a for a in solve_c1_branches(rho, cfg) if a > 0)
        if abs(d1 - alpha_minus) <= 1e-10 * max(1.0, alpha_minus):
            return BasinLabel.TYPE_B_MINUS
        return BasinLabel.UNIFORM if d1 < alpha_minus else BasinLabel.TYPE_B_PLUS
    return BasinLabel.UNKNOWN_BISTABLE


class CensusEntry(NamedTuple):
    """普查中单个起点的结果；branch 为匹配到的平衡态分支名（未匹配为 None）"""
    start: Vector
    limit: Optional[Vector]
    converged: bool
    branch: Optional[str]


def random_cone_starts(n: int, rng: np.random.Generator, scale: float = 3.0) -> Matrix:
    """n 个一般位置的锥内起点：随机高斯矩阵 SSVD 的对角部分"""
    return np.array([ssvd(scale * rng.standard_normal((3, 3))).D for _ in range(n)])


def _census_task(args) -> Tuple[Optional[Vector], bool]:
    d0, rho, opts, cfg = args
    traj = integrate(d0, rho, opts, cfg)
    return (traj.limit if traj.converged else traj.states[-1]), traj.converged


def census(rho: float, starts: Sequence[Vector], opts: FlowOptions = DEFAULT_OPTIONS,
           cfg: QuadratureConfig = DEFAULT_QUADRATURE, jobs: Optional[int] = 1,
           tol: float = 1e-5) -> List[CensusEntry]:
    """从多个起点并行积分，把每个极限与 classify(rho) 的记录匹配"""
    records = classify(rho, cfg)
    results = run_parallel(_census_task, [(np.asarray(d0, dtype=float), rho, opts, cfg) for d0 in starts],
                           jobs, label=f"ρ = {rho} 的平衡态普查")
    entries = []
    for d0, (limit, converged) in zip(starts, results):
        record = match_record(limit, records, tol) if converged else None
        entries.append(CensusEntry(np.asarray(d0, dtype=float), limit, converged,
                                   record.branch if record else None))
    unmatched = sum(1 for e in entries if e.branch is None)
    if unmatched:
        logger.warning(f"⚠️ ρ = {rho}: {unmatched}/{len(entries)} 个极限未匹配到已分类的平衡态")
    return entries


# ============================================================================
# 第四部分：收敛速率
# ============================================================================

def convergence_rate(traj: Trajectory, lower: float = 1e-7, upper_ratio: float = 1e-3,
                     min_samples: int = 8) -> float:
    """
    尾部 log|D̂(t) − 极限| 对 t 的最小二乘斜率的相反数

    尾部取距离在 (lower, upper_ratio·最大距离) 内的样本；不足 min_samples 时退回到
    距离大于 lower 的最后 min_samples 个样本。

    Raises:
        PreconditionError: 轨迹未收敛，或尾部样本不足
    """
    if not traj.converged or traj.limit is None:
        raise PreconditionError("轨迹未收敛，无法拟合收敛速率")
    dist = np.linalg.norm(traj.states - traj.limit, axis=1)
    mask = (dist > lower) & (dist < upper_ratio * float(dist.max()))
    if mask.sum() < min_samples:
        candidates = np.flatnonzero(dist > lower)
        if candidates.size < min_samples:
            raise PreconditionError(f"尾部样本只有 {candidates.size} 个，至少需要 {min_samples} 个")
        mask = np.zeros_like(mask)
        mask[candidates[-min_samples:]] = True
    slope = np.polyfit(traj.times[mask], np.log(dist[mask]), 1)[0]
    return float(-slope)


def critical_run(rho: float, d0, opts: FlowOptions = DEFAULT_OPTIONS,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE, reference=None) -> Tuple[Trajectory, float]:
    """
    临界密度处的探索性运行：返回轨迹及 |D̂(t) − reference| ~ t^{−p} 的拟合指数 p

    只用于观察，不作为任何性质断言
    """
    traj = integrate(d0, rho, opts, cfg)
    ref = np.zeros(3) if reference is None else np.asarray(reference, dtype=float)
    dist = np.linalg.norm(traj.states - ref, axis=1)
    mask = (traj.times > 1.0) & (dist > 0)
    if mask.sum() < 2:
        return traj, float("nan")
    slope = np.polyfit(np.log(traj.times[mask]), np.log(dist[mask]), 1)[0]
    logger.info(f"临界运行 ρ = {rho}: 代数衰减指数 ≈ {-slope:.3f}")
    return traj, float(-slope)


# ============================================================================
# 第五部分：Duhamel 重建与自由能
# ============================================================================

DensityFn = Callable[[Matrix], np.ndarray]

# f0 的质量与 ρ 的允许相对偏差
MASS_TOLERANCE = 0.01

_mass_checked: "weakref.WeakKeyDictionary[DensityFn, float]" = weakref.WeakKeyDictionary()


def _check_initial_mass(f0: DensityFn, rho: float, cfg: QuadratureConfig) -> None:
    """f0 的质量偏离 ρ 超过 1% 时告警；同一个 f0 只检查一次"""
    try:
        if _mass_checked.get(f0) == rho:
            return
    except TypeError:
        return
    mass = float(haar_expectation(lambda A: np.asarray(f0(A), dtype=float), cfg))
    _mass_checked[f0] = rho
    if abs(mass - rho) > MASS_TOLERANCE * rho:
        logger.warning(f"⚠️ f0 的质量 {mass:.6g} 与 ρ = {rho} 不一致，Duhamel 重建不再守恒")


def duhamel_density(f0: DensityFn, path: FluxPath, rho: float, t: float, A: Matrix,
                    cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """
    f(t, A) = e^{−t}f0(A) + ρ∫₀ᵗ e^{−(t−s)} M_{J(s)}(A) ds

    时间积分用自适应向量求积（scipy quad_vec），J(s) 取自通量轨迹的单调三次插值；
    A 可以是 (N, 3, 3) 的堆栈。f0 的质量应为 ρ，偏差超过 1% 时记录警告。

    Raises:
        PreconditionError: t 超出轨迹范围
    """
    if t < 0 or t > path.horizon:
        raise PreconditionError(f"t = {t} 超出轨迹范围 [0, {path.horizon}]")
    _check_initial_mass(f0, rho, cfg)
    A = np.asarray(A, dtype=float)
    head = np.exp(-t) * np.asarray(f0(A), dtype=float)
    if t == 0:
        return head

    def integrand(s: float) -> np.ndarray:
        J = path.flux_at(s)
        log_z = log_partition(path.trajectory.state_at(s), cfg)
        return rho * np.exp(mat_dot(J, A) - log_z - (t - s))

    integral, _ = quad_vec(integrand, 0.0, t, epsabs=1e-11, epsrel=1e-10, limit=200)
    return head + integral


def mass_estimate(f: DensityFn, n_mc: int, rng: np.random.Generator) -> Estimate:
    """∫ f dA 的 Monte-Carlo 估计"""
    values = np.asarray(f(haar_batch(n_mc, rng)), dtype=float)
    return Estimate(value=float(values.mean()), stderr=float(values.std(ddof=1) / np.sqrt(n_mc)))


def free_energy(J: Matrix, f_eval: DensityFn, n_mc: int, rng: np.random.Generator,
                samples: Optional[Matrix] = None) -> Estimate:
    """
    F[f] = ∫ f log f dA − ½|J|²，J 为 f 的通量

    samples 给定时使用这些 Haar 样本（多个时间点共用一组样本可以减小差分噪声）

    Raises:
        NumericalError: 样本处密度非正
    """
    A = haar_batch(n_mc, rng) if samples is None else np.asarray(samples, dtype=float)
    values = np.asarray(f_eval(A), dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values <= 0.0):
        raise NumericalError("密度在样本处非正或非有限，f 无效")
    terms = values * np.log(values)
    n = terms.shape[0]
    return Estimate(
        value=float(terms.mean() - 0.5 * mat_dot(J, J)),
        stderr=float(terms.std(ddof=1) / np.sqrt(n)),
    )


__all__ = [
    "DEFAULT_OPTIONS",
    "rhs",
    "potential",
    "cone_gap",
    "TieStructure",
    "Trajectory",
    "FluxPath",
    "integrate",
    "relax_flux",
    "basin_label",
    "CensusEntry",
    "random_cone_starts",
    "census",
    "convergence_rate",
    "critical_run",
    "duhamel_density",
    "mass_estimate",
    "free_energy",
]
