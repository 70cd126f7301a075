"""
结果存储模块

职责：
1. CSV / JSON 输出（固定格式，无时间戳，重复运行逐字节一致）
2. 运行清单 manifest.json（命令、配置、种子、版本）
3. 读取 3×3 矩阵输入文件，错误定位到行列
"""
import csv
import json
import sys
from enum import Enum
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .errors import MatrixParseError
from .logger import get_logger
from .models import OutputFormat, RunManifest
from .so3 import Matrix

logger = get_logger("ResultStore")


# ============================================================================
# 第一部分：底层读写
# ============================================================================

def format_cell(value: Any) -> str:
    """CSV 单元格：浮点数用 17 位有效数字，布尔值小写，None 为空"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def _to_builtin(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (Path, Enum)):
        return str(obj.value if isinstance(obj, Enum) else obj)
    raise TypeError(f"无法序列化类型 {type(obj).__name__}")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """写出带表头的 CSV（'.' 小数点，'\\n' 换行）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    logger.debug(f"写出 {path}")
    return path


def dumps_json(payload: Any) -> str:
    """排序键、两空格缩进、末尾换行的 JSON 文本"""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, default=_to_builtin) + "\n"


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(payload), encoding="utf-8")
    logger.debug(f"写出 {path}")
    return path


def read_matrix(path: Path) -> Matrix:
    """
    读取 3×3 矩阵：三行三列，空白或逗号分隔，'#' 之后为注释

    Raises:
        MatrixParseError: 文件不存在、数值无法解析或形状不是 3×3
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise MatrixParseError(f"无法读取矩阵文件 {path}: {e}") from e

    rows: List[List[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        values = []
        for col, token in enumerate(line.split(), start=1):
            try:
                value = float(token)
            except ValueError:
                raise MatrixParseError(f"无法解析数值 {token!r}", row=lineno, column=col) from None
            if not np.isfinite(value):
                raise MatrixParseError(f"数值 {token!r} 不是有限数", row=lineno, column=col)
            values.append(value)
        if len(values) != 3:
            column = 4 if len(values) > 3 else len(values) + 1
            raise MatrixParseError(f"每行需要 3 个数，得到 {len(values)} 个", row=lineno, column=column)
        rows.append(values)
        if len(rows) > 3:
            raise MatrixParseError("矩阵多于 3 行", row=lineno, column=1)

    if len(rows) != 3:
        raise MatrixParseError(f"需要 3 行数值，得到 {len(rows)} 行", row=len(text.splitlines()) + 1)
    return np.array(rows)


# ============================================================================
# 第二部分：运行清单
# ============================================================================

def versions() -> Dict[str, str]:
    """本包与数值栈的版本"""
    found = {"python": ".".join(str(v) for v in sys.version_info[:3])}
    for dist in ("bodybgk", "numpy", "scipy", "pydantic"):
        try:
            found[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            found[dist] = "unknown"
    return found


def build_manifest(command: str, argv: Sequence[str], seed: int, config: Dict[str, Any]) -> RunManifest:
    return RunManifest(command=command, argv=list(argv), seed=seed, config=config, versions=versions())


# ============================================================================
# 第三部分：结果目录
# ============================================================================

class ResultStore:
    """
    一次运行的输出目录

    表格按配置的格式写出（CSV 或 JSON 行列表），摘要总是 JSON
    """

    def __init__(self, out_dir: Path, fmt: OutputFormat = OutputFormat.CSV):
        self.out_dir = Path(out_dir)
        self.fmt = OutputFormat(fmt)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def write_table(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        rows = list(rows)
        if self.fmt == OutputFormat.CSV:
            return write_csv(self.out_dir / f"{name}.csv", header, rows)
        records = [dict(zip(header, row)) for row in rows]
        return write_json(self.out_dir / f"{name}.json", records)

    def write_models(self, name: str, models: Sequence[BaseModel], model_type: type) -> Path:
        """pydantic 记录表；列顺序为模型字段的声明顺序"""
        header = list(model_type.model_fields)
        return self.write_table(name, header, [[getattr(m, key) for key in header] for m in models])

    def write_summary(self, name: str, payload: Any) -> Path:
        return write_json(self.out_dir / f"{name}.json", payload)

    def write_manifest(self, manifest: RunManifest) -> Path:
        return write_json(self.out_dir / "manifest.json", manifest)

    def read_manifest(self) -> Optional[RunManifest]:
        path = self.out_dir / "manifest.json"
        if not path.exists():
            return None
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))


__all__ = [
    "format_cell",
    "write_csv",
    "dumps_json",
    "write_json",
    "read_matrix",
    "versions",
    "build_manifest",
    "ResultStore",
]
