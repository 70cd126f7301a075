"""
数据模型

纯数据类，用于配置、结果记录与输出表格的数据验证。
携带 numpy 数组的数值状态（轨迹、粒子系综等）放在各自的计算模块中，用 dataclass 表示。
"""
from enum import Enum
from math import isclose
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


# ======== 配置相关模型 ========

class QuadratureConfig(BaseModel):
    """
    求积配置

    Attributes:
        nodes_1d: 一维 Gauss–Legendre 节点数（[0,π] 或 [−1,1]）
        nodes_s3: S³ 超球坐标每个角度方向的节点数
    """
    model_config = ConfigDict(frozen=True)

    nodes_1d: int = Field(default=128, ge=32)
    nodes_s3: int = Field(default=48, ge=24)

    def doubled(self) -> "QuadratureConfig":
        """节点数加倍的配置，用于收敛性检查"""
        return QuadratureConfig(nodes_1d=2 * self.nodes_1d, nodes_s3=2 * self.nodes_s3)


class FlowOptions(BaseModel):
    """梯度流积分选项"""
    model_config = ConfigDict(frozen=True)

    rtol: float = Field(default=1e-8, gt=0)
    atol: float = Field(default=1e-10, gt=0)
    t_max: float = Field(default=200.0, gt=0)
    stop_grad_norm: float = Field(default=1e-9, gt=0)
    # log Z 凸，故 V̂ 的 Hessian 特征值 ≤ 1；步长上限 1 使 h·λ ≤ 1
    max_step: float = Field(default=1.0, gt=0)


class OutputFormat(str, Enum):
    """输出表格格式"""
    CSV = "csv"
    JSON = "json"


class RunConfig(BaseModel):
    """
    一次 CLI 运行的可复现配置

    固定 seed 时，同一平台同一构建下输出逐字节一致
    """
    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=20240601, ge=0, lt=2**64)
    quadrature: QuadratureConfig = QuadratureConfig()
    output_dir: Path = Path("results")
    format: OutputFormat = OutputFormat.CSV


# ======== 平衡态相关模型 ========

class EquilibriumKind(str, Enum):
    """平衡态类型"""
    UNIFORM = "uniform"
    TYPE_B = "type_b"
    TYPE_C = "type_c"


class BasinLabel(str, Enum):
    """梯度流极限的预测标签"""
    UNIFORM = "uniform"
    TYPE_B_PLUS = "type_b_plus"        # α₊ / α₁，稳定分支
    TYPE_B_MINUS = "type_b_minus"      # α₃（ρ>ρ_c 时的负根）
    TYPE_C = "type_c"
    UNKNOWN_BISTABLE = "unknown_bistable"


class EquilibriumRecord(BaseModel):
    """
    已分类的平衡态

    Attributes:
        rho: 密度
        kind: 平衡态类型
        branch: 分支名（uniform / alpha_minus / alpha_plus / alpha_1 / alpha_3 / alpha_2）
        alpha: 相容方程的根（均匀态为 0）
        d_ssvd: 代表元 J 的 SSVD 对角部分
        signature: Hessian 特征值符号计数 (n₊, n₀, n₋)
        stable: 是否稳定（当且仅当 signature == (3,0,0)）
    """
    model_config = ConfigDict(frozen=True)

    rho: float = Field(ge=0)
    kind: EquilibriumKind
    branch: str
    alpha: float
    d_ssvd: Tuple[float, float, float]
    signature: Tuple[int, int, int]
    stable: bool

    @model_validator(mode="after")
    def _check_invariants(self) -> "EquilibriumRecord":
        d1, d2, d3 = self.d_ssvd
        if self.kind == EquilibriumKind.UNIFORM:
            if self.alpha != 0.0 or any(d != 0.0 for d in self.d_ssvd):
                raise ValueError("均匀平衡态必须满足 alpha=0 且 D=(0,0,0)")
        elif self.kind == EquilibriumKind.TYPE_B:
            a = abs(self.alpha)
            expected = (a, a, a if self.alpha > 0 else -a)
            if self.alpha == 0.0 or not all(isclose(d, e, rel_tol=1e-12) for d, e in zip(self.d_ssvd, expected)):
                raise ValueError(f"TypeB 平衡态的 D 必须为 |α|(1,1,sign α)，得到 {self.d_ssvd}")
        elif self.kind == EquilibriumKind.TYPE_C:
            if self.alpha <= 0.0 or not isclose(d1, self.alpha, rel_tol=1e-12) or d2 != 0.0 or d3 != 0.0:
                raise ValueError(f"TypeC 平衡态的 D 必须为 (α,0,0) 且 α>0，得到 {self.d_ssvd}")
        if self.stable != (tuple(self.signature) == (3, 0, 0)):
            raise ValueError("stable 标志必须与 signature == (3,0,0) 一致")
        if sum(self.signature) != 3:
            raise ValueError("signature 三个计数之和必须为 3")
        return self


class CriticalDensities(BaseModel):
    """临界密度 ρ*、ρ_c 与 α/c₁ 的极小点 α*"""
    model_config = ConfigDict(frozen=True)

    rho_star: float = Field(gt=0)
    alpha_star: float = Field(gt=0)
    rho_c: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_order(self) -> "CriticalDensities":
        if not self.rho_star < self.rho_c:
            raise ValueError(f"要求 rho_star < rho_c，实际 {self.rho_star} >= {self.rho_c}")
        return self

    def near_critical(self, rho: float, window: float = 1e-6) -> bool:
        """rho 是否落在任一临界密度的排除窗口内"""
        return abs(rho - self.rho_star) <= window or abs(rho - self.rho_c) <= window


class PhaseRow(BaseModel):
    """相图表的一行；临界窗口内的行只标注，不计算符号"""
    rho: float
    branch: str
    alpha: float
    d1: float
    d2: float
    d3: float
    sig_plus: Optional[int] = None
    sig_zero: Optional[int] = None
    sig_minus: Optional[int] = None
    stable: Optional[bool] = None
    note: str = ""


# ======== 宏观系数 ========

class CoefficientRow(BaseModel):
    """
    SOHB 宏观系数表的一行

    C₂=C₃ 只存一份；mu2 表示 2μ
    """
    rho: float
    alpha: float
    alpha_prime: float
    c1: float
    c2_tilde: float
    c3_tilde: float
    c4: float
    C2: float
    C4: float
    C5: float
    mu2: float
    flagged: bool = False


# ======== 统计估计与报告 ========

class Estimate(BaseModel):
    """Monte-Carlo 估计值及其标准误差"""
    value: float
    stderr: float

    def within(self, target: float, k: float = 4.0) -> bool:
        """|value − target| ≤ k·stderr"""
        return abs(self.value - target) <= k * self.stderr


class MeanFieldReport(BaseModel):
    """粒子系统与平均场通量 ODE 的对比报告"""
    n_particles: int = 0
    rho_eff: float = 0.0
    times: List[float] = []
    deviations: List[float] = []
    band: Optional[float] = None
    coverage: Optional[float] = None

    @property
    def max_deviation(self) -> float:
        return max(self.deviations) if self.deviations else 0.0


class CheckResult(BaseModel):
    """verify 命令中单项性质检查的结果"""
    suite: str
    name: str
    passed: bool
    detail: str = ""


class RunManifest(BaseModel):
    """每次输出附带的清单：命令、配置、种子与版本信息"""
    command: str
    argv: List[str]
    seed: int
    config: Dict[str, Any]
    versions: Dict[str, str]


__all__ = [
    "QuadratureConfig",
    "FlowOptions",
    "OutputFormat",
    "RunConfig",
    "EquilibriumKind",
    "BasinLabel",
    "EquilibriumRecord",
    "CriticalDensities",
    "PhaseRow",
    "CoefficientRow",
    "Estimate",
    "MeanFieldReport",
    "CheckResult",
    "RunManifest",
]
