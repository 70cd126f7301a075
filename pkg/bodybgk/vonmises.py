"""
SO(3) 上的 von Mises 分布

M_J(A) = exp(J·A) / Z(J)，Z(J) = ∫ exp(J·A) dA（归一化 Haar 测度）。

本模块提供：
- 配分函数与一、二阶对角矩（S³ 上的超球坐标乘积求积，Bingham 形式 exp(2q·φ(D)q)）
- 相容函数 c₁、c₂ 及其导数（[0,π] / [−1,1] 上的 Gauss–Legendre 求积）
- 加权平均 {h}_α、[h]_α，供宏观系数使用
- 精确拒绝采样
- 任意 A 的函数在 Haar 测度下的积分（两种体积形式，互为交叉验证）

所有指数在求和前都减去最大指数，α 到 10³ 不会溢出。
求积节点表按节点数缓存，构造后只读，可在线程间共享。
"""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import PreconditionError, SamplingError
from .logger import get_logger
from .models import QuadratureConfig
from .so3 import QUAT_DIAG_SIGNS, Matrix, SsvdResult, Vector, haar_batch, mat_dot, quat_to_rot, ssvd

logger = get_logger("VonMises")

DEFAULT_QUADRATURE = QuadratureConfig()

# 拒绝采样的提议次数上限
MAX_PROPOSALS = 10**7


# ============================================================================
# 第一部分：求积节点表
# ============================================================================

@lru_cache(maxsize=16)
def _gauss_legendre(n: int, a: float, b: float) -> Tuple[Vector, Vector]:
    """[a, b] 上的 n 点 Gauss–Legendre 节点与权重"""
    x, w = leggauss(n)
    half = 0.5 * (b - a)
    nodes = half * x + 0.5 * (a + b)
    weights = half * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=4)
def _bingham_rule(n: int) -> Tuple[Matrix, Vector]:
    """
    只依赖 (x², y², z², t²) 的被积函数在 S³ 上的求积规则

    三个超球角都取 [0, π/2]（第一卦限），被积函数关于 cos²、sin² 光滑，
    限制到卦限是精确的。

    Returns:
        (a_diag, weights): 每个节点处 (a₁₁, a₂₂, a₃₃)，形状 (N, 3)；归一化权重，形状 (N,)
    """
    psi, w = _gauss_legendre(n, 0.0, 0.5 * np.pi)
    p1, p2, p3 = np.meshgrid(psi, psi, psi, indexing="ij")
    w1, w2, w3 = np.meshgrid(w, w, w, indexing="ij")

    s1, s2 = np.sin(p1) ** 2, np.sin(p2) ** 2
    squares = np.stack([
        np.cos(p1) ** 2,
        s1 * np.cos(p2) ** 2,
        s1 * s2 * np.cos(p3) ** 2,
        s1 * s2 * np.sin(p3) ** 2,
    ], axis=-1).reshape(-1, 4)
    weights = (w1 * w2 * w3 * s1 * np.sin(p2)).ravel()
    weights /= weights.sum()

    a_diag = squares @ QUAT_DIAG_SIGNS
    a_diag.setflags(write=False)
    weights.setflags(write=False)
    return a_diag, weights


@lru_cache(maxsize=2)
def _sphere_rule(n: int) -> Tuple[Matrix, Vector]:
    """
    整个 S³ 上的乘积求积规则：ψ₁, ψ₂ ∈ [0,π] 用 Gauss–Legendre，ψ₃ ∈ [0,2π) 用 2n 点梯形

    Returns:
        (rotations, weights): 节点对应的旋转，形状 (N, 3, 3)；归一化权重
    """
    psi, w = _gauss_legendre(n, 0.0, np.pi)
    azimuth = np.arange(2 * n) * (np.pi / n)
    p1, p2, p3 = np.meshgrid(psi, psi, azimuth, indexing="ij")
    w1, w2, _ = np.meshgrid(w, w, azimuth, indexing="ij")

    q = np.stack([
        np.cos(p1),
        np.sin(p1) * np.cos(p2),
        np.sin(p1) * np.sin(p2) * np.cos(p3),
        np.sin(p1) * np.sin(p2) * np.sin(p3),
    ], axis=-1).reshape(-1, 4)
    weights = (w1 * w2 * np.sin(p1) ** 2 * np.sin(p2)).ravel()
    weights /= weights.sum()

    rotations = quat_to_rot(q)
    rotations.setflags(write=False)
    weights.setflags(write=False)
    return rotations, weights


@lru_cache(maxsize=2)
def _axis_angle_rule(n: int) -> Tuple[Matrix, Vector]:
    """
    轴角体积形式 (2/π)sin²(θ/2)dθ × 均匀轴 的乘积求积规则

    θ ∈ [0,π] 与 cos(极角) ∈ [−1,1] 用 Gauss–Legendre，方位角用 2n 点梯形
    """
    theta, wt = _gauss_legendre(n, 0.0, np.pi)
    u, wu = _gauss_legendre(n, -1.0, 1.0)
    azimuth = np.arange(2 * n) * (np.pi / n)
    T, U, P = np.meshgrid(theta, u, azimuth, indexing="ij")
    WT, WU, _ = np.meshgrid(wt, wu, azimuth, indexing="ij")

    weights = (WT * WU * np.sin(0.5 * T) ** 2).ravel()
    weights /= weights.sum()

    r = np.sqrt(1.0 - U ** 2)
    axes = np.stack([r * np.cos(P), r * np.sin(P), U], axis=-1).reshape(-1, 3)
    T = T.ravel()

    K = np.zeros((axes.shape[0], 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -axes[:, 2], axes[:, 1]
    K[:, 1, 0], K[:, 1, 2] = axes[:, 2], -axes[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -axes[:, 1], axes[:, 0]
    outer = axes[:, :, None] * axes[:, None, :]
    cos_t, sin_t = np.cos(T)[:, None, None], np.sin(T)[:, None, None]
    rotations = cos_t * np.eye(3) + sin_t * K + (1.0 - cos_t) * outer

    rotations.setflags(write=False)
    weights.setflags(write=False)
    return rotations, weights


# ============================================================================
# 第二部分：配分函数与对角矩
# ============================================================================

class MomentStats(NamedTuple):
    """一次求积得到的 log Z、⟨a_ii⟩ 与（可选）⟨a_ii a_jj⟩"""
    log_z: float
    m1: Vector
    m2: Optional[Matrix]


def _as_triple(dhat) -> Vector:
    d = np.asarray(dhat, dtype=float)
    if d.shape != (3,) or not np.all(np.isfinite(d)):
        raise PreconditionError(f"对角三元组必须是有限的 3 维向量，得到 {dhat!r}")
    return d


def moment_stats(dhat, cfg: QuadratureConfig = DEFAULT_QUADRATURE, second: bool = False) -> MomentStats:
    """
    对角参数 D̂ 下 von Mises 分布的 log Z 与对角矩

    D·A = ½Σ dᵢ aᵢᵢ，而每个 aᵢᵢ 是 q 的二次式，因此只需 (x², y², z², t²) 上的求积。
    """
    d = _as_triple(dhat)
    a_diag, weights = _bingham_rule(cfg.nodes_s3)
    exponent = 0.5 * (a_diag @ d)
    shift = float(exponent.max())
    e = weights * np.exp(exponent - shift)
    z = float(e.sum())
    p = e / z
    m1 = p @ a_diag
    m2 = (a_diag.T * p) @ a_diag if second else None
    return MomentStats(shift + np.log(z), m1, m2)


def log_partition(dhat, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """log Z(diag(D̂))"""
    return moment_stats(dhat, cfg).log_z


def moment1_diag(dhat, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Vector:
    """⟨A⟩_{M_D} 的对角线（非对角元为零，不计算）"""
    return moment_stats(dhat, cfg).m1


def moment2_diag(dhat, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Matrix:
    """3×3 对称矩阵 ⟨aᵢᵢ aⱼⱼ⟩_{M_D}"""
    m2 = moment_stats(dhat, cfg, second=True).m2
    return 0.5 * (m2 + m2.T)


def moment_matrix(J: Matrix, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Matrix:
    """一般 J 的一阶矩 ⟨A⟩_{M_J} = P·diag(⟨A⟩_{M_D})·Q，其中 J = P·diag(D)·Q"""
    P, D, Q = ssvd(J)
    return P @ np.diag(moment1_diag(D, cfg)) @ Q


def log_partition_isotropic(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """
    log Z(αI₃) 的 Rodrigues 一维形式：(2/π)∫₀^π sin²(θ/2) e^{α(2cosθ+1)/2} dθ

    与 S³ 求积互为独立的交叉验证
    """
    theta, w = _gauss_legendre(cfg.nodes_1d, 0.0, np.pi)
    exponent = 0.5 * alpha * (2.0 * np.cos(theta) + 1.0)
    shift = float(exponent.max())
    integral = (2.0 / np.pi) * float(np.sum(w * np.sin(0.5 * theta) ** 2 * np.exp(exponent - shift)))
    return shift + np.log(integral)


# ============================================================================
# 第三部分：一维加权平均与相容函数
# ============================================================================

def _brace_weights(alpha: float, n: int) -> Tuple[Vector, Vector]:
    """密度 ∝ sin²(θ/2)e^{α cosθ} 在 [0,π] 上的归一化离散权重"""
    theta, w = _gauss_legendre(n, 0.0, np.pi)
    p = w * np.sin(0.5 * theta) ** 2 * np.exp(alpha * np.cos(theta) - abs(alpha))
    return theta, p / p.sum()


def _bracket_weights(alpha: float, n: int) -> Tuple[Vector, Vector]:
    """密度 ∝ sinφ e^{(α/2)cosφ}，换元 u = cosφ 后在 [−1,1] 上的归一化离散权重"""
    u, w = _gauss_legendre(n, -1.0, 1.0)
    p = w * np.exp(0.5 * alpha * u - 0.5 * abs(alpha))
    return u, p / p.sum()


def brace_mean(h: Callable[[Vector], Vector], alpha: float,
               cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """
    {h}_α：θ 的函数 h 在密度 ∝ sin²(θ/2)e^{α cosθ} 下的平均

    Examples:
        >>> round(brace_mean(lambda t: np.ones_like(t), 3.0), 12)
        1.0
    """
    theta, p = _brace_weights(float(alpha), cfg.nodes_1d)
    return float(p @ h(theta))


def bracket_mean(h: Callable[[Vector], Vector], alpha: float,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """[h]_α：φ 的函数 h 在密度 ∝ sinφ e^{(α/2)cosφ} 下的平均"""
    u, p = _bracket_weights(float(alpha), cfg.nodes_1d)
    return float(p @ h(np.arccos(u)))


def _cos_mean_var(u: Vector, p: Vector) -> Tuple[float, float]:
    mean = float(p @ u)
    var = float(p @ (u - mean) ** 2)
    return mean, var


def c1(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """c₁(α) = ⅓{2cosθ+1}_α，满足 ⟨A⟩_{M_{αΛ}} = c₁(α)Λ"""
    theta, p = _brace_weights(float(alpha), cfg.nodes_1d)
    mean, _ = _cos_mean_var(np.cos(theta), p)
    return (2.0 * mean + 1.0) / 3.0


def c2(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """c₂(α) = [cosφ]_α，满足 ⟨A⟩_{M_{αB}} = c₂(α)B，B = p⊗q"""
    u, p = _bracket_weights(float(alpha), cfg.nodes_1d)
    return float(p @ u)


def c1_prime(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """c₁′(α) = ⅔Var_α(cosθ)"""
    theta, p = _brace_weights(float(alpha), cfg.nodes_1d)
    _, var = _cos_mean_var(np.cos(theta), p)
    return 2.0 * var / 3.0


def c2_prime(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """c₂′(α) = ½Var(cosφ)"""
    u, p = _bracket_weights(float(alpha), cfg.nodes_1d)
    _, var = _cos_mean_var(u, p)
    return 0.5 * var


def c2_closed_form(alpha: float) -> float:
    """c₂(α) = coth(α/2) − 2/α，只作交叉验证；|α| 很小时用级数 α/6 − α³/360"""
    if abs(alpha) < 1e-4:
        return alpha / 6.0 - alpha ** 3 / 360.0
    return 1.0 / np.tanh(0.5 * alpha) - 2.0 / alpha


def alpha_over_c1(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """α/c₁(α) = 3/{sin²θ}_α，在 α=0 处连续取值 6"""
    return 3.0 / brace_mean(lambda t: np.sin(t) ** 2, alpha, cfg)


def alpha_over_c2(alpha: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """α/c₂(α) = 4/[sin²φ]_α，偶函数，在 0 处取最小值 6"""
    u, p = _bracket_weights(float(alpha), cfg.nodes_1d)
    return 4.0 / float(p @ (1.0 - u * u))


def stability_sign_function(x: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """
    f(x) = 1 − {(1−cosθ)²}_x / (5{sin²θ}_x)

    f(0) = 0，x ≥ 0 时 f ≥ 0，x ≤ 0 时 f ≤ 0；c 型平衡态稳定性论证中使用的符号函数
    """
    theta, p = _brace_weights(float(x), cfg.nodes_1d)
    num = float(p @ (1.0 - np.cos(theta)) ** 2)
    den = float(p @ np.sin(theta) ** 2)
    return 1.0 - num / (5.0 * den)


# ============================================================================
# 第四部分：Haar 积分（任意函数）
# ============================================================================

def haar_expectation(func: Callable[[Matrix], np.ndarray],
                     cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """
    ∫ func(A) dA，S³ 全球面乘积求积

    Args:
        func: 接受 (N, 3, 3) 旋转堆栈，返回 (N, ...) 数组
    """
    rotations, weights = _sphere_rule(cfg.nodes_s3)
    return np.tensordot(weights, func(rotations), axes=1)


def haar_expectation_axis_angle(func: Callable[[Matrix], np.ndarray],
                                cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """∫ func(A) dA，用轴角体积形式计算（与 haar_expectation 独立）"""
    rotations, weights = _axis_angle_rule(cfg.nodes_s3)
    return np.tensordot(weights, func(rotations), axes=1)


def conjugation_moment_constants(g: Callable[[Matrix], np.ndarray],
                      cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Tuple[float, float, float]:
    """
    对共轭不变且转置不变的权重 g，∫(J·A)A g(A) dA = a·Tr(J)I₃ + bJ + cJᵀ 中的常数 (a, b, c)

    α_g = (1/6)∫Tr(A)²g，b = ⅛∫((a₁₁−a₂₂)² + (a₁₂−a₂₁)²)g，
    c = ⅛∫((a₁₁−a₂₂)² − (a₁₂−a₂₁)²)g，a = (α_g − b − c)/3；g ≡ 1 时 (0, 1/6, 0)
    """
    def integrand(A: Matrix) -> np.ndarray:
        gv = g(A)
        tr = np.trace(A, axis1=1, axis2=2)
        diff_diag = (A[:, 0, 0] - A[:, 1, 1]) ** 2
        diff_skew = (A[:, 0, 1] - A[:, 1, 0]) ** 2
        return np.stack([tr ** 2 * gv, diff_diag * gv, diff_skew * gv], axis=-1)

    tr2, dd, ds = haar_expectation(integrand, cfg)
    alpha_g = tr2 / 6.0
    b = (dd + ds) / 8.0
    c = (dd - ds) / 8.0
    a = (alpha_g - b - c) / 3.0
    return float(a), float(b), float(c)


# ============================================================================
# 第五部分：分布参数、密度与采样
# ============================================================================

@dataclass(frozen=True, eq=False)
class VonMisesParams:
    """
    von Mises 分布 M_J 的参数，缓存 J 的 SSVD 与 log Z

    Attributes:
        J: 通量矩阵
        cfg: 计算 log Z 使用的求积配置
    """
    J: Matrix
    cfg: QuadratureConfig = field(default=DEFAULT_QUADRATURE)

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.shape != (3, 3) or not np.all(np.isfinite(J)):
            raise PreconditionError("J 必须是有限的 3×3 矩阵")
        J.setflags(write=False)
        object.__setattr__(self, "J", J)

    @classmethod
    def uniform(cls, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> "VonMisesParams":
        return cls(np.zeros((3, 3)), cfg)

    @cached_property
    def decomposition(self) -> SsvdResult:
        return ssvd(self.J)

    @cached_property
    def log_z(self) -> float:
        return log_partition(self.decomposition.D, self.cfg)

    @property
    def max_exponent(self) -> float:
        """max_A J·A = (d₁+d₂+d₃)/2，在 A = P·Q 处取到"""
        return 0.5 * float(np.sum(self.decomposition.D))

    def acceptance_rate(self) -> float:
        """Haar 提议的拒绝采样接受率 Z·e^{−m}"""
        return float(np.exp(self.log_z - self.max_exponent))


def density(params: VonMisesParams, A: Matrix) -> np.ndarray:
    """M_J(A) = exp(J·A − log Z)，支持 (..., 3, 3) 批量输入"""
    return np.exp(mat_dot(params.J, A) - params.log_z)


def sample(params: VonMisesParams, rng: np.random.Generator,
           max_proposals: int = MAX_PROPOSALS) -> Matrix:
    """
    精确拒绝采样：Haar 提议，接受概率 exp(J·A − m)

    提议按批生成（16 起，每轮加倍，至多 4096），返回第一个被接受的提议，
    输出严格服从 M_J。

    Raises:
        SamplingError: 提议总数达到 max_proposals
    """
    J, m = params.J, params.max_exponent
    batch, proposed = 16, 0
    while proposed < max_proposals:
        A = haar_batch(batch, rng)
        u = rng.random(batch)
        hits = np.flatnonzero(u < np.exp(mat_dot(J, A) - m))
        if hits.size:
            return A[hits[0]]
        proposed += batch
        batch = min(2 * batch, 4096)

    logger.error(f"❌ 拒绝采样在 {proposed} 次提议后仍未接受，D = {params.decomposition.D}")
    raise SamplingError(f"集中度过高，拒绝采样在 {proposed} 次提议内未接受任何样本")


def sample_batch(params: VonMisesParams, n: int, rng: np.random.Generator,
                 max_proposals: int = MAX_PROPOSALS) -> Matrix:
    """n 个独立的 M_J 样本，形状 (n, 3, 3)"""
    J, m = params.J, params.max_exponent
    accepted, count, proposed = [], 0, 0
    batch = max(64, min(4 * n, 1 << 16))
    while count < n:
        if proposed >= max_proposals:
            raise SamplingError(f"集中度过高，{proposed} 次提议只接受了 {count}/{n} 个样本")
        A = haar_batch(batch, rng)
        u = rng.random(batch)
        keep = A[u < np.exp(mat_dot(J, A) - m)]
        accepted.append(keep)
        count += keep.shape[0]
        proposed += batch
    return np.concatenate(accepted, axis=0)[:n]


__all__ = [
    "DEFAULT_QUADRATURE",
    "MAX_PROPOSALS",
    "MomentStats",
    "VonMisesParams",
    "moment_stats",
    "log_partition",
    "log_partition_isotropic",
    "moment1_diag",
    "moment2_diag",
    "moment_matrix",
    "brace_mean",
    "bracket_mean",
    "c1",
    "c2",
    "c1_prime",
    "c2_prime",
    "c2_closed_form",
    "alpha_over_c1",
    "alpha_over_c2",
    "stability_sign_function",
    "haar_expectation",
    "haar_expectation_axis_angle",
    "conjugation_moment_constants",
    "density",
    "sample",
    "sample_batch",
]
