"""
异常定义

库内所有自定义异常集中于此，CLI 根据异常类型映射退出码：
- PreconditionError / MatrixParseError → 1（用法错误）
- NumericalError 及其子类 → 2（数值失败）
"""
from typing import Any, Optional


class PreconditionError(ValueError):
    """输入违反操作的前置条件"""


class CriticalDensityError(PreconditionError):
    """密度落在临界密度 ρ*、ρ_c 的排除窗口内（非双曲区域）"""


class NumericalError(RuntimeError):
    """数值计算失败（求根、积分、采样等）"""


class IntegrationError(NumericalError):
    """
    时间积分失败（例如步长下溢）

    Attributes:
        trajectory: 失败前已经积分得到的部分轨迹
    """

    def __init__(self, message: str, trajectory: Optional[Any] = None):
        super().__init__(message)
        self.trajectory = trajectory


class SamplingError(NumericalError):
    """拒绝采样达到迭代上限（集中度过高）"""


class MatrixParseError(ValueError):
    """
    3×3 矩阵文件解析失败

    Attributes:
        row: 出错的行号（从 1 开始），未知时为 None
        column: 出错的列号（从 1 开始），未知时为 None
    """

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        location = ""
        if row is not None:
            location = f"第 {row} 行"
            if column is not None:
                location += f"第 {column} 列"
            location += ": "
        super().__init__(f"{location}{message}")
        self.row = row
        self.column = column


__all__ = [
    "PreconditionError",
    "CriticalDensityError",
    "NumericalError",
    "IntegrationError",
    "SamplingError",
    "MatrixParseError",
]
