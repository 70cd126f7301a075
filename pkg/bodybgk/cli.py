"""
命令行入口

子命令：
- phase-diagram  相图表与临界密度
- relax          通量梯度流弛豫（矩阵文件或随机初值）
- simulate       粒子跳跃过程与平均场对比
- coeffs         SOHB 宏观系数表
- verify         性质检查套件

退出码：0 成功，1 用法错误，2 数值失败
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import Settings, load_settings
from .equilibria import CRITICAL_WINDOW, classify, critical_densities, match_record, phase_diagram
from .errors import MatrixParseError, NumericalError, PreconditionError
from .flow import convergence_rate, relax_flux
from .hydro import coefficient_table
from .logger import get_logger, setup_logger
from .models import CheckResult, CoefficientRow, PhaseRow
from .particles import calibrate_band, compare_meanfield, init_ensemble, replicas, run
from .so3 import polar_rotation
from .store import ResultStore, build_manifest, read_matrix
from .verify import SUITES, run_suites

logger = get_logger("CLI")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

TRAJECTORY_HEADER = ["t", "d1", "d2", "d3", "V", "grad_norm"]
FLUX_HEADER = ["t"] + [f"j{i}{j}" for i in range(1, 4) for j in range(1, 4)] + ["frobenius_norm"]


class UsageError(Exception):
    """命令行参数无效"""


class _Parser(argparse.ArgumentParser):
    """参数错误抛出 UsageError，由 main 统一映射为退出码 1"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


# ============================================================================
# 第一部分：参数解析
# ============================================================================

def parse_rho_range(text: str):
    """'a:b:n' → (a, b, n)"""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"需要 a:b:n 形式，得到 {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析范围 {text!r}") from None
    if not (0.0 <= lo < hi) or n < 1:
        raise argparse.ArgumentTypeError(f"范围无效 {text!r}：需要 0 ≤ a < b 且 n ≥ 1")
    return lo, hi, n


def parse_rho_list(text: str) -> List[float]:
    """'7,8,10' → [7.0, 8.0, 10.0]"""
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析密度列表 {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("密度列表为空")
    return values


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("通用选项")
    group.add_argument("--seed", type=int, help="随机种子（64 位无符号整数）")
    group.add_argument("--nodes-1d", type=int, help="一维 Gauss–Legendre 节点数")
    group.add_argument("--nodes-s3", type=int, help="S³ 每个角度方向的节点数")
    group.add_argument("--out", type=Path, help="输出目录")
    group.add_argument("--format", choices=["csv", "json"], help="表格格式")
    group.add_argument("--jobs", type=int, help="并行度，0 表示逻辑核数")
    group.add_argument("--t-max", type=float, help="梯度流积分时间上限")
    group.add_argument("--tol", type=float, help="收敛阈值 |rhs| ≤ tol")
    group.add_argument("--config", type=str, help="key=value 配置文件")
    group.add_argument("--log-level", type=str, help="日志级别")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="bodybgk", description="Body-attitude BGK 模型：平衡态、梯度流、粒子模拟与宏观系数")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phase-diagram", parents=[common], help="相图表与临界密度")
    p.add_argument("--rho", type=parse_rho_range, required=True, help="a:b:n 等距密度网格")

    p = sub.add_parser("relax", parents=[common], help="通量梯度流弛豫")
    p.add_argument("--rho", type=float, required=True, help="密度")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--matrix", type=Path, help="初始通量 3×3 矩阵文件")
    source.add_argument("--random", action="store_true", help="随机高斯初始通量")

    p = sub.add_parser("simulate", parents=[common], help="粒子跳跃过程与平均场对比")
    p.add_argument("--n", type=int, required=True, help="粒子数")
    p.add_argument("--rho-eff", type=float, required=True, help="对齐强度")
    p.add_argument("--t-end", type=float, required=True, help="模拟时长")
    p.add_argument("--checkpoint-dt", type=float, default=0.1, help="检查点间隔")
    p.add_argument("--init-kappa", type=float, default=0.0, help="初始分布 M_{κI}，0 为均匀分布")
    p.add_argument("--replicas", type=int, default=0, help="用于标定带宽的独立副本数")

    p = sub.add_parser("coeffs", parents=[common], help="SOHB 宏观系数表")
    p.add_argument("--rho", type=parse_rho_list, required=True, help="逗号分隔的密度列表")

    p = sub.add_parser("verify", parents=[common], help="性质检查套件")
    p.add_argument("suites", nargs="*", default=["all"], help=f"套件名：{', '.join(SUITES)} 或 all")

    return parser


def _settings_from_args(args: argparse.Namespace) -> Settings:
    return load_settings(
        args.config,
        seed=args.seed,
        nodes_1d=args.nodes_1d,
        nodes_s3=args.nodes_s3,
        output_dir=args.out,
        output_format=args.format,
        jobs=args.jobs,
        t_max=args.t_max,
        stop_grad_norm=args.tol,
        log_level=args.log_level,
    )


# ============================================================================
# 第二部分：子命令
# ============================================================================

def cmd_phase_diagram(args: argparse.Namespace, settings: Settings, store: ResultStore) -> int:
    cfg = settings.quadrature()
    lo, hi, n = args.rho
    crit = critical_densities(cfg)
    rows = phase_diagram(lo, hi, n, cfg, settings.jobs)
    store.write_models("phase_diagram", rows, PhaseRow)
    store.write_summary("critical", {"rho_star": crit.rho_star, "alpha_star": crit.alpha_star, "rho_c": crit.rho_c})
    logger.info(f"✅ 相图：{n} 个密度，{len(rows)} 行，ρ* = {crit.rho_star:.10f}")
    return EXIT_OK


def cmd_relax(args: argparse.Namespace, settings: Settings, store: ResultStore) -> int:
    cfg = settings.quadrature()
    if args.matrix is not None:
        J0 = read_matrix(args.matrix)
    else:
        J0 = np.random.default_rng(settings.seed).standard_normal((3, 3))

    J_eq, path = relax_flux(J0, args.rho, settings.flow_options(), cfg)
    traj = path.trajectory
    store.write_table("trajectory", TRAJECTORY_HEADER, traj.rows())

    limit = traj.limit if traj.converged else traj.states[-1]
    summary: Dict[str, Any] = {
        "rho": args.rho,
        "converged": traj.converged,
        "J0": J0,
        "J_eq": J_eq,
        "limit": limit,
        "kind": None,
        "branch": None,
        "alpha": None,
        "Lambda": None,
        "rate": None,
    }
    crit = critical_densities(cfg)
    if traj.converged and not crit.near_critical(args.rho, CRITICAL_WINDOW):
        record = match_record(limit, classify(args.rho, cfg), 1e-5)
        if record is not None:
            summary.update(kind=record.kind, branch=record.branch, alpha=record.alpha)
            if record.branch in ("alpha_plus", "alpha_1"):
                summary["Lambda"] = polar_rotation(J_eq)
        try:
            summary["rate"] = convergence_rate(traj)
        except PreconditionError as e:
            logger.info(f"未拟合收敛速率：{e}")

    store.write_summary("summary", summary)
    logger.info(f"✅ 弛豫完成：极限 {limit}，类型 {summary['kind']}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, settings: Settings, store: ResultStore) -> int:
    if args.n < 1 or args.t_end <= 0 or args.checkpoint_dt <= 0 or args.replicas < 0:
        raise UsageError("需要 --n ≥ 1、--t-end > 0、--checkpoint-dt > 0、--replicas ≥ 0")
    cfg = settings.quadrature()
    opts = settings.flow_options()
    law = args.init_kappa * np.eye(3) if args.init_kappa else None

    rng = np.random.default_rng(settings.seed)
    ens = init_ensemble(args.n, args.rho_eff, rng, law, cfg)
    series = run(ens, args.t_end, args.checkpoint_dt, rng)
    store.write_table("flux_series", FLUX_HEADER, series.rows())

    band_constant = None
    if args.replicas:
        copies = replicas(args.n, args.rho_eff, args.t_end, args.checkpoint_dt, settings.seed + 1,
                          args.replicas, law, cfg, settings.jobs)
        band_constant = calibrate_band(copies, args.rho_eff, cfg, opts)
    report = compare_meanfield(series, args.rho_eff, cfg, opts, band_constant)

    payload = report.model_dump()
    payload.update(band_constant=band_constant, jumps=ens.jumps, t_end=args.t_end, seed=settings.seed)
    store.write_summary("meanfield", payload)
    return EXIT_OK


def cmd_coeffs(args: argparse.Namespace, settings: Settings, store: ResultStore) -> int:
    rows = coefficient_table(args.rho, settings.quadrature(), settings.jobs)
    store.write_models("coefficients", rows, CoefficientRow)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, settings: Settings, store: ResultStore) -> int:
    results = run_suites(args.suites, settings.quadrature(), settings.seed)
    width = max(len(f"{r.suite}.{r.name}") for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {f'{r.suite}.{r.name}':<{width}}  {r.detail}")
    store.write_models("verify", results, CheckResult)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


COMMANDS = {
    "phase-diagram": cmd_phase_diagram,
    "relax": cmd_relax,
    "simulate": cmd_simulate,
    "coeffs": cmd_coeffs,
    "verify": cmd_verify,
}


# ============================================================================
# 第三部分：入口
# ============================================================================

def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        settings = _settings_from_args(args)
        setup_logger(settings.log_level)

        store = ResultStore(settings.output_dir, settings.output_format)
        store.write_manifest(build_manifest(args.command, argv, settings.seed,
                                            settings.model_dump(mode="json")))
        return COMMANDS[args.command](args, settings, store)
    except (UsageError, PreconditionError, MatrixParseError) as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE
    except NumericalError as e:
        logger.error(f"❌ 数值失败: {e}")
        return EXIT_NUMERICAL


__all__ = ["build_parser", "main", "COMMANDS", "EXIT_OK", "EXIT_USAGE", "EXIT_NUMERICAL"]
