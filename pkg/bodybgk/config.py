import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import dotenv_values
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import PreconditionError
from .models import FlowOptions, OutputFormat, QuadratureConfig, RunConfig

ENV_PREFIX = "BODYBGK_"


def find_env_file(start: Optional[Path] = None) -> Optional[Path]:
    """
    定位 .env 文件

    BODYBGK_ENV_FILE 指定的文件优先；否则从 start（默认工作目录）向上查找 .env，
    到含 pyproject.toml 的项目根目录为止。找不到时只用环境变量。
    """
    explicit = os.getenv(f"{ENV_PREFIX}ENV_FILE")
    if explicit:
        return Path(explicit) if Path(explicit).is_file() else None

    current = (start or Path.cwd()).resolve()
    for directory in (current, *current.parents):
        if (directory / ".env").is_file():
            return directory / ".env"
        if (directory / "pyproject.toml").is_file():
            break
    return None


class Settings(BaseSettings):
    """数值实验配置管理"""

    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_file=find_env_file(),
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",  # 忽略额外的环境变量
    )

    # 随机数
    seed: int = Field(default=20240601)

    # 求积配置
    nodes_1d: int = Field(default=128)
    nodes_s3: int = Field(default=48)

    # 输出配置
    output_dir: Path = Field(default=Path("results"))
    output_format: OutputFormat = Field(default=OutputFormat.CSV)

    # 并行度（0 表示逻辑核数）
    jobs: int = Field(default=0)

    # 梯度流积分
    t_max: float = Field(default=200.0)
    rtol: float = Field(default=1e-8)
    atol: float = Field(default=1e-10)
    stop_grad_norm: float = Field(default=1e-9)
    max_step: float = Field(default=1.0)

    # 日志
    log_level: str = Field(default="INFO")

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        # 验证关键配置
        self._validate_settings()

    def _validate_settings(self):
        """验证配置的有效性"""
        if not 0 <= self.seed < 2**64:
            raise ValueError("SEED must be a 64-bit unsigned integer")

        if self.nodes_1d < 32:
            raise ValueError("NODES_1D must be at least 32")

        if self.nodes_s3 < 24:
            raise ValueError("NODES_S3 must be at least 24")

        if self.jobs < 0:
            raise ValueError("JOBS must be non-negative (0 = logical cores)")

        for key in ("t_max", "rtol", "atol", "stop_grad_norm", "max_step"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key.upper()} must be positive")

    def quadrature(self) -> QuadratureConfig:
        """求积配置"""
        return QuadratureConfig(nodes_1d=self.nodes_1d, nodes_s3=self.nodes_s3)

    def flow_options(self) -> FlowOptions:
        """梯度流积分选项"""
        return FlowOptions(
            rtol=self.rtol,
            atol=self.atol,
            t_max=self.t_max,
            stop_grad_norm=self.stop_grad_norm,
            max_step=self.max_step,
        )

    def run_config(self) -> RunConfig:
        """CLI 运行配置"""
        return RunConfig(
            seed=self.seed,
            quadrature=self.quadrature(),
            output_dir=self.output_dir,
            format=self.output_format,
        )

    def effective_jobs(self) -> int:
        """实际并行度"""
        return self.jobs or (os.cpu_count() or 1)


def _read_config_file(config_file: str) -> Dict[str, Any]:
    """
    读取 key=value 配置文件

    键名不区分大小写，可带 BODYBGK_ 前缀，'-' 与 '_' 等价

    Raises:
        PreconditionError: 文件不存在或包含未知配置项
    """
    path = Path(config_file)
    if not path.is_file():
        raise PreconditionError(f"配置文件不存在: {config_file}")

    values: Dict[str, Any] = {}
    for raw_key, value in dotenv_values(path).items():
        key = raw_key.strip().lower().replace("-", "_")
        if key.startswith(ENV_PREFIX.lower()):
            key = key[len(ENV_PREFIX):]
        if key not in Settings.model_fields:
            raise PreconditionError(f"配置文件 {config_file} 中存在未知配置项: {raw_key}")
        values[key] = value
    return values


def load_settings(config_file: Optional[str] = None, **overrides: Any) -> Settings:
    """
    构造配置实例

    优先级：显式参数（CLI 参数） > 配置文件 > 环境变量 / .env > 默认值

    Args:
        config_file: key=value 格式的配置文件路径
        **overrides: 覆盖项，值为 None 的项被忽略

    Returns:
        Settings: 新的配置实例
    """
    values: Dict[str, Any] = {}
    if config_file:
        values.update(_read_config_file(config_file))
    values.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return Settings(**values)
    except ValueError as e:
        raise PreconditionError(f"配置无效: {e}") from e


# 全局配置实例（首次访问时创建）
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """获取配置实例"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


__all__ = ["Settings", "find_env_file", "load_settings", "get_settings"]
