"""
SO(3) 上的几何、测度与代数

提供：
- 内积 A·B = ½Tr(AᵀB)
- Rodrigues 参数化与轴角反解
- 单位四元数 ↔ 旋转矩阵（Φ 映射）及 4×4 无迹对称矩阵的线性同构 φ
- 特殊奇异值分解 SSVD（P、Q 为旋转，d₁ ≥ d₂ ≥ |d₃|）与极分解
- Haar 均匀采样与 Horn 四面体检查

所有函数都是输入的纯函数（随机数生成器显式传入），支持 (..., 3, 3) 形式的批量输入的函数在文档中注明。
"""
from typing import NamedTuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .errors import PreconditionError

Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]

# Horn 四面体的顶点；正好是旋转矩阵对角线构成的集合
HORN_VERTICES = np.array([
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
])

# a_ii 关于 (x², y², z², t²) 的系数：diag(Φ(q)) = (q∘q) @ QUAT_DIAG_SIGNS
QUAT_DIAG_SIGNS = np.array([
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
])

_D_TILDE = np.diag([1.0, 1.0, -1.0])


class SsvdResult(NamedTuple):
    """M = P·diag(D)·Q，P、Q 为旋转，d₁ ≥ d₂ ≥ |d₃|，sign(d₃) = sign(det M)"""
    P: Matrix
    D: Vector
    Q: Matrix

    def reconstruct(self) -> Matrix:
        return self.P @ np.diag(self.D) @ self.Q


class AxisAngle(NamedTuple):
    """轴角表示；degenerate 为 True 表示 θ=0，轴是约定值 e₁"""
    theta: float
    axis: Vector
    degenerate: bool


# ============================================================================
# 第一部分：内积与基本矩阵
# ============================================================================

def mat_dot(A: Matrix, B: Matrix) -> NDArray[np.float64]:
    """
    矩阵内积 A·B = ½Tr(AᵀB)，支持 (..., 3, 3) 批量输入

    Examples:
        >>> float(mat_dot(np.eye(3), np.eye(3)))
        1.5
    """
    return 0.5 * np.einsum("...ij,...ij->...", A, B)


def skew(v: Vector) -> Matrix:
    """[v]ₓ：满足 [v]ₓ u = v × u 的反对称矩阵"""
    x, y, z = v
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def unskew(S: Matrix) -> Vector:
    """skew 的逆，只读取反对称部分"""
    return 0.5 * np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]])


def sign_flip(i: int, j: int) -> Matrix:
    """D^{ij}：第 i、j 个对角元为 −1 的对角矩阵（Haar 测度的变量替换）"""
    D = np.eye(3)
    D[i, i] = -1.0
    D[j, j] = -1.0
    return D


def transposition(i: int, j: int) -> Matrix:
    """P^{ij}：P_ii = P_jj = 0，P_ij = 1，P_ji = −1，其余对角元为 1 的旋转"""
    P = np.eye(3)
    P[i, i] = 0.0
    P[j, j] = 0.0
    P[i, j] = 1.0
    P[j, i] = -1.0
    return P


def is_rotation(A: Matrix, tol: float = 1e-12) -> bool:
    """AᵀA = I（逐元素）且 det A = 1，容差 tol"""
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3) or not np.all(np.isfinite(A)):
        return False
    if np.max(np.abs(A.T @ A - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(A) - 1.0) <= tol


def horn_check(A: Matrix, tol: float = 1e-10) -> bool:
    """
    A 的对角线是否落在 Horn 四面体内

    使用四个面的不等式 x+y+z ≥ −1, x−y−z ≥ −1, −x+y−z ≥ −1, −x−y+z ≥ −1
    """
    diag = np.diagonal(np.asarray(A, dtype=float), axis1=-2, axis2=-1)
    # 每个面的法向恰好是对应的顶点
    return bool(np.all(diag @ HORN_VERTICES.T >= -1.0 - tol))


# ============================================================================
# 第二部分：Rodrigues 公式与轴角
# ============================================================================

def rodrigues(theta: float, axis: Vector) -> Matrix:
    """
    Rodrigues 公式 I + sinθ[n]ₓ + (1−cosθ)[n]ₓ²

    Args:
        theta: 旋转角（弧度，[0, π]）
        axis: 单位旋转轴

    Raises:
        PreconditionError: 轴不是单位向量（容差 1e−10）
    """
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-10:
        raise PreconditionError(f"旋转轴必须是单位向量，|axis| = {np.linalg.norm(axis)}")
    K = skew(axis)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def _canonical_sign(v: Vector, tol: float = 1e-12) -> Vector:
    """把第一个 |·| > tol 的坐标变为正"""
    for component in v:
        if abs(component) > tol:
            return v if component > 0 else -v
    return v


def axis_angle(A: Matrix) -> AxisAngle:
    """
    旋转矩阵的轴角表示

    θ 由 Tr(A) = 1+2cosθ 与反对称部分共同确定（atan2 形式）：
    - θ < 1e−8 视为单位矩阵，返回约定轴 e₁ 并标记 degenerate
    - π−θ < 1e−8 时由对称部分 (A+I)/2 ≈ n⊗n 提取轴；反对称部分不可分辨时取规范符号
    """
    A = np.asarray(A, dtype=float)
    v = unskew(A)  # sinθ·n
    sin_theta = np.linalg.norm(v)
    cos_theta = 0.5 * (np.trace(A) - 1.0)
    theta = float(np.arctan2(sin_theta, cos_theta))

    if theta < 1e-8:
        return AxisAngle(theta, np.array([1.0, 0.0, 0.0]), True)

    if np.pi - theta < 1e-8:
        # 对称部分 = cosθ·I + (1−cosθ)·n⊗n
        nn = (0.5 * (A + A.T) - cos_theta * np.eye(3)) / (1.0 - cos_theta)
        k = int(np.argmax(np.diag(nn)))
        axis = nn[:, k] / np.sqrt(nn[k, k])
        axis /= np.linalg.norm(axis)
        if sin_theta > 1e-12 and float(axis @ v) < 0:
            axis = -axis
        elif sin_theta <= 1e-12:
            axis = _canonical_sign(axis)
        return AxisAngle(theta, axis, False)

    return AxisAngle(theta, v / sin_theta, False)


# ============================================================================
# 第三部分：四元数桥（Φ 与 φ）
# ============================================================================

def canonical_quat(q: Vector) -> Vector:
    """S³/±1 的规范代表元：单位化后第一个 |·| > 1e−12 的坐标为正"""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return _canonical_sign(q)


def quat_to_rot(q: NDArray[np.float64]) -> Matrix:
    """
    Φ 映射：单位四元数 (x, y, z, t) → 旋转矩阵，支持 (..., 4) 批量输入

    Φ(q) = Φ(−q)；q = (cos(θ/2), sin(θ/2)n) 对应 rodrigues(θ, n)
    """
    q = np.asarray(q, dtype=float)
    x, y, z, t = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz, tt = x * x, y * y, z * z, t * t
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = xx + yy - zz - tt
    out[..., 0, 1] = 2.0 * (y * z - x * t)
    out[..., 0, 2] = 2.0 * (x * z + y * t)
    out[..., 1, 0] = 2.0 * (x * t + y * z)
    out[..., 1, 1] = xx - yy + zz - tt
    out[..., 1, 2] = 2.0 * (z * t - x * y)
    out[..., 2, 0] = 2.0 * (y * t - x * z)
    out[..., 2, 1] = 2.0 * (x * y + z * t)
    out[..., 2, 2] = xx - yy - zz + tt
    return out


def rot_to_quat(A: Matrix) -> Vector:
    """
    Φ⁻¹：旋转矩阵 → 规范四元数

    取四个平方分量中最大者所在的分支，保证数值稳定
    """
    A = np.asarray(A, dtype=float)
    a11, a22, a33 = A[0, 0], A[1, 1], A[2, 2]
    squares = 0.25 * np.array([
        1.0 + a11 + a22 + a33,
        1.0 + a11 - a22 - a33,
        1.0 - a11 + a22 - a33,
        1.0 - a11 - a22 + a33,
    ])
    k = int(np.argmax(squares))
    lead = np.sqrt(max(squares[k], 0.0))
    scale = 0.25 / lead

    # 4xy, 4xz, 4xt, 4yz, 4yt, 4zt
    xy = A[2, 1] - A[1, 2]
    xz = A[0, 2] - A[2, 0]
    xt = A[1, 0] - A[0, 1]
    yz = A[1, 0] + A[0, 1]
    yt = A[0, 2] + A[2, 0]
    zt = A[1, 2] + A[2, 1]

    if k == 0:
        q = np.array([lead, xy * scale, xz * scale, xt * scale])
    elif k == 1:
        q = np.array([xy * scale, lead, yz * scale, yt * scale])
    elif k == 2:
        q = np.array([xz * scale, yz * scale, lead, zt * scale])
    else:
        q = np.array([xt * scale, yt * scale, zt * scale, lead])
    return canonical_quat(q)


def phi_map(J: Matrix) -> Matrix:
    """
    φ 映射：3×3 矩阵 → 4×4 无迹对称矩阵

    对任意单位四元数 q 满足 ½ J·Φ(q) = q·φ(J)q；对角 J 映为对角矩阵
    """
    J = np.asarray(J, dtype=float)
    j11, j12, j13 = J[0]
    j21, j22, j23 = J[1]
    j31, j32, j33 = J[2]
    S = np.array([
        [j11 + j22 + j33, j32 - j23, j13 - j31, j21 - j12],
        [j32 - j23, j11 - j22 - j33, j12 + j21, j13 + j31],
        [j13 - j31, j12 + j21, -j11 + j22 - j33, j23 + j32],
        [j21 - j12, j13 + j31, j23 + j32, -j11 - j22 + j33],
    ])
    return 0.25 * S


def phi_inverse(S: Matrix, require_diagonal: bool = False) -> Matrix:
    """
    φ 的逆映射

    Args:
        S: 4×4 无迹对称矩阵
        require_diagonal: 为 True 时要求 S 为对角且无迹，返回 2·diag(s₁+s₂, s₁+s₃, s₁+s₄)

    Raises:
        PreconditionError: require_diagonal 时 S 不是无迹对角矩阵
    """
    S = np.asarray(S, dtype=float)
    if require_diagonal:
        off = S - np.diag(np.diag(S))
        if np.max(np.abs(off)) > 1e-12 or abs(np.trace(S)) > 1e-12:
            raise PreconditionError("S 必须是无迹对角矩阵")
        s1, s2, s3, s4 = np.diag(S)
        return 2.0 * np.diag([s1 + s2, s1 + s3, s1 + s4])

    J = np.empty((3, 3))
    J[0, 0] = 2.0 * (S[0, 0] + S[1, 1])
    J[1, 1] = 2.0 * (S[0, 0] + S[2, 2])
    J[2, 2] = 2.0 * (S[0, 0] + S[3, 3])
    J[2, 1] = 2.0 * (S[0, 1] + S[2, 3])
    J[1, 2] = 2.0 * (S[2, 3] - S[0, 1])
    J[0, 2] = 2.0 * (S[0, 2] + S[1, 3])
    J[2, 0] = 2.0 * (S[1, 3] - S[0, 2])
    J[1, 0] = 2.0 * (S[0, 3] + S[1, 2])
    J[0, 1] = 2.0 * (S[1, 2] - S[0, 3])
    return J


# ============================================================================
# 第四部分：SSVD 与极分解
# ============================================================================

def ssvd(M: Matrix) -> SsvdResult:
    """
    特殊奇异值分解 M = P·diag(D)·Q

    从普通 SVD M = P′D′Q′ 出发修正符号（D̃ = diag(1,1,−1)）：
    - det P′·det Q′ = 1：若两者均为 −1，取 P = P′D̃，Q = D̃Q′
    - det P′·det Q′ = −1：把行列式为 −1 的因子乘以 D̃，d₃ 变号
    d₃ = 0 时两种修正得到同一个 D，对应退化分支。

    Examples:
        >>> ssvd(np.diag([0.0, -2.0, 0.0])).D
        array([2., 0., 0.])
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    det_u = np.linalg.det(U)
    det_v = np.linalg.det(Vt)
    D = s.copy()

    if det_u * det_v > 0:
        if det_u < 0:
            U = U @ _D_TILDE
            Vt = _D_TILDE @ Vt
    else:
        if det_u < 0:
            U = U @ _D_TILDE
        else:
            Vt = _D_TILDE @ Vt
        D[2] = -D[2]

    return SsvdResult(U, D, Vt)


def polar_rotation(M: Matrix) -> Matrix:
    """
    极分解的正交部分 M(√(MᵀM))⁻¹

    det M > 0 时等于任一 SSVD 的 P·Q

    Raises:
        PreconditionError: |det M| ≤ 1e−12（极分解的正交部分无定义）
    """
    M = np.asarray(M, dtype=float)
    if abs(np.linalg.det(M)) <= 1e-12:
        raise PreconditionError("矩阵奇异，极分解的旋转部分无定义")
    U, _ = scipy.linalg.polar(M, side="right")
    return U


# ============================================================================
# 第五部分：Haar 采样
# ============================================================================

def haar_batch(n: int, rng: np.random.Generator) -> Matrix:
    """n 个独立 Haar 均匀旋转，形状 (n, 3, 3)：S³ 上的均匀点经 Φ 映射"""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return quat_to_rot(q)


def haar_sample(rng: np.random.Generator) -> Matrix:
    """单个 Haar 均匀旋转"""
    return haar_batch(1, rng)[0]


__all__ = [
    "Matrix",
    "Vector",
    "SsvdResult",
    "AxisAngle",
    "HORN_VERTICES",
    "QUAT_DIAG_SIGNS",
    "mat_dot",
    "skew",
    "unskew",
    "sign_flip",
    "transposition",
    "is_rotation",
    "horn_check",
    "rodrigues",
    "axis_angle",
    "canonical_quat",
    "quat_to_rot",
    "rot_to_quat",
    "phi_map",
    "phi_inverse",
    "ssvd",
    "polar_rotation",
    "haar_batch",
    "haar_sample",
]
