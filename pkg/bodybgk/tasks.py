"""
并行任务模块

负责参数扫描（相图、系数表、盆地统计、粒子副本）的进程池调度与随机数流派生
"""
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from .logger import get_logger

logger = get_logger("TaskWorker")

T = TypeVar("T")
R = TypeVar("R")


def resolve_jobs(jobs: Optional[int]) -> int:
    """并行度：None 或 0 表示逻辑核数"""
    if not jobs:
        return os.cpu_count() or 1
    return max(1, int(jobs))


def run_parallel(func: Callable[[T], R], items: Iterable[T], jobs: Optional[int] = 1,
                 label: str = "任务") -> List[R]:
    """
    在进程池中对 items 逐项执行 func，结果保持输入顺序

    Args:
        func: 可 pickle 的模块级函数
        items: 任务参数
        jobs: 并行度，1 表示在当前进程内顺序执行，0/None 表示逻辑核数
        label: 日志中显示的任务名

    Returns:
        List: 与 items 顺序一致的结果
    """
    items = list(items)
    workers = min(resolve_jobs(jobs), max(1, len(items)))
    logger.info(f"🚀 开始{label}：{len(items)} 项，并行度 {workers}")

    if workers == 1:
        results = [func(item) for item in items]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))

    logger.info(f"✅ {label}完成")
    return results


def spawn_generators(seed: int, n: int) -> List[np.random.Generator]:
    """从一个种子派生 n 个相互独立的随机数流（SeedSequence.spawn）"""
    children: Sequence[np.random.SeedSequence] = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(child) for child in children]


__all__ = ["resolve_jobs", "run_parallel", "spawn_generators"]
