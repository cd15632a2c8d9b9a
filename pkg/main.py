"""DiffMIA 主程序入口."""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

# 添加 src 到路径
sys.path.insert(0, str(Path(__file__).parent))

from src.config import ExperimentConfig, SweepSpec, load_experiment  # noqa: E402
from src.enums import AttackScenario  # noqa: E402
from src.exceptions import ConfigError, DiffMIAError  # noqa: E402
from src.utils.logger import setup_logger  # noqa: E402

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class DiffMIAArgumentParser(argparse.ArgumentParser):
    """用法错误时以退出码 1 结束."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="实验配置文件（JSON）")
    parser.add_argument("--seed", type=int, help="覆盖配置中的全局种子")
    parser.add_argument("--out", type=Path, help="输出目录（覆盖配置中的 output_dir）")


def build_parser() -> argparse.ArgumentParser:
    """构建命令行解析器."""
    parser = DiffMIAArgumentParser(
        prog="diffmia",
        description="DiffMIA - 扩散模型成员推断攻击实验台",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  python main.py train --config exp.json           # 训练目标模型
  python main.py sample --config exp.json --count 512
  python main.py attack --config exp.json --scenario graybox
  python main.py sweep --config exp.json           # 按配置中的扫描轴执行
  python main.py report --config exp.json --snr    # 截断表与信噪比表

环境变量 DIFFMIA_THREADS 限制并行 worker 数。
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=DiffMIAArgumentParser)

    train = subparsers.add_parser("train", help="训练目标模型并写出检查点")
    _add_common_flags(train)

    sample = subparsers.add_parser("sample", help="从目标模型生成样本")
    _add_common_flags(sample)
    sample.add_argument("--count", type=int, help="生成样本数（默认取攻击配置的 synthetic_count）")

    attack = subparsers.add_parser("attack", help="执行成员推断攻击并生成报告")
    _add_common_flags(attack)
    attack.add_argument(
        "--scenario",
        choices=[s.value for s in AttackScenario],
        help="只执行该场景的攻击",
    )

    sweep = subparsers.add_parser("sweep", help="按扫描轴执行全部单元")
    _add_common_flags(sweep)
    sweep.add_argument(
        "--truncation-table",
        action="store_true",
        help="扫描全部统计函数 × 默认截断比例（其余轴沿用配置）",
    )

    report = subparsers.add_parser("report", help="整理扫描结果为截断表")
    _add_common_flags(report)
    report.add_argument("--snr", action="store_true", help="同时导出信噪比表")
    report.add_argument("--profile", action="store_true", help="同时导出成员 / 非成员损失轨迹剖面")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """读取配置并应用命令行覆盖."""
    config = load_experiment(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {args.seed}")
        config = config.with_seed(args.seed)
    return config


def run_command(args: argparse.Namespace) -> None:
    """执行子命令."""
    from src.services import cmd_attack, cmd_report, cmd_sample, cmd_sweep, cmd_train

    config = resolve_config(args)
    out_dir = args.out

    if args.command == "train":
        path = cmd_train(config, out_dir)
        print(f"✅ 检查点已写出: {path}")
    elif args.command == "sample":
        path = cmd_sample(config, out_dir, args.count)
        print(f"✅ 样本已写出: {path}")
    elif args.command == "attack":
        scenario = AttackScenario(args.scenario) if args.scenario else None
        outcomes = cmd_attack(config, out_dir, scenario)
        for outcome in outcomes:
            report = outcome.report
            print(f"✅ {report.scenario} ({report.statistic or '-'}): AUC={report.auc:.4f}")
    elif args.command == "sweep":
        if args.truncation_table:
            config = config.model_copy(update={"sweep": SweepSpec.truncation_table(config.sweep)})
        frame = cmd_sweep(config, out_dir)
        failed = int((frame["status"] == "failed").sum())
        print(f"✅ 扫描完成: {len(frame)} 个单元，失败 {failed} 个")
    elif args.command == "report":
        print(cmd_report(config, out_dir, snr=args.snr, profile=args.profile))


def main(argv: Optional[List[str]] = None) -> int:
    """主函数.

    Returns:
        int: 0 成功，1 用法或配置错误，2 运行时错误
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logger = setup_logger()

    try:
        run_command(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"❌ 配置错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DiffMIAError, OSError) as e:
        logger.error(f"Command '{args.command}' failed: {e}")
        print(f"❌ 运行失败: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        print("\n👋 已中断")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
