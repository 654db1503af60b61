import argparse
import logging
import os
import sys
from typing import List, Optional

from app.api.commands import COMMANDS
from app.config import CONFIG_PATH, load_config
from app.errors import EXIT_USAGE, RidgeError, UsageError
from app.services.basis import BasisFamily
from app.services.experiments import EXPERIMENTS
from app.services.solver import DEFAULT_INNER_STEPS
from version import get_version

logger = logging.getLogger(__name__)


def setup_logging(level: str = "INFO", log_file: Optional[str] = "logs/app.log"):
    """stderr 输出日志，文件使用UTF-8编码，避免中文乱码；CSV 结果走 stdout"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


class ArgumentParser(argparse.ArgumentParser):
    """参数错误以退出码 1 结束（2 留给求解失败）"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", default=CONFIG_PATH, help="YAML 配置文件路径")
    common.add_argument("--log-level", default=None, help="日志级别，覆盖配置文件")
    common.add_argument("--log-file", default=None, help="日志文件，覆盖配置文件")

    parser = ArgumentParser(prog="ridge", description="多项式 ridge 近似：变量投影 Grassmann Gauss-Newton")
    parser.add_argument("--version", action="version", version=get_version())
    sub = parser.add_subparsers(dest="command", metavar="{fit,predict,shadow,bench}", parser_class=ArgumentParser)
    sub.required = True

    fit = sub.add_parser("fit", parents=[common], help="拟合 ridge 模型")
    fit.add_argument("input", help="训练数据 CSV")
    fit.add_argument("--target", default=None, help="目标列名（默认读取配置，f）")
    fit.add_argument("--dim", type=int, required=True, help="子空间维度 n")
    fit.add_argument("--degree", type=int, required=True, help="多项式总次数 p")
    fit.add_argument("--basis", choices=[b.value for b in BasisFamily], default=BasisFamily.LEGENDRE.value)
    fit.add_argument("--solver", choices=["gauss-newton", "alternating"], default="gauss-newton")
    fit.add_argument("--inner-steps", type=int, default=DEFAULT_INNER_STEPS, help="交替法每次外层迭代的最速下降步数")
    fit.add_argument("--restarts", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--workers", type=int, default=None, help="并行重启的线程数")
    fit.add_argument("--max-iter", type=int, default=None)
    fit.add_argument("--max-backtracks", type=int, default=None)
    fit.add_argument("--gamma", type=float, default=None)
    fit.add_argument("--beta", type=float, default=None)
    fit.add_argument("--tol-grad", type=float, default=None)
    fit.add_argument("--tol-residual-change", type=float, default=None)
    fit.add_argument("--tol-subspace", type=float, default=None)
    fit.add_argument("--target-residual", type=float, default=None, help="相对残差达到该值即停止")
    fit.add_argument("--output", default="model.json", help="模型文件路径，- 表示 stdout")
    fit.add_argument("--report", default=None, help="拟合报告路径（默认输出到 stderr）")

    predict = sub.add_parser("predict", parents=[common], help="用模型预测")
    predict.add_argument("model")
    predict.add_argument("input")
    predict.add_argument("--output", default="-")

    shadow = sub.add_parser("shadow", parents=[common], help="输出 shadow plot 数据")
    shadow.add_argument("model")
    shadow.add_argument("input")
    shadow.add_argument("--output", default="-")
    shadow.add_argument("--curve-output", default=None, help="n=1 时拟合曲线的输出路径；默认 <output>_curve.csv，输出到 stdout 时以空行分隔追加")

    bench = sub.add_parser("bench", parents=[common], help=f"运行实验: {', '.join(EXPERIMENTS)}")
    bench.add_argument("name", help="实验名称")
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--replicates", type=int, default=None)
    bench.add_argument("--samples", type=int, default=None)
    bench.add_argument("--max-iter", type=int, default=None)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--raw", action="store_true", help="输出原始记录而非汇总表")
    bench.add_argument("--output", default="-")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_USAGE

    try:
        config = load_config(args.config)
        log_config = config.get("logging", {})
        setup_logging(args.log_level or log_config.get("level", "INFO"),
                      args.log_file or log_config.get("file"))
        logger.info(f"ridge {get_version()} 执行命令 {args.command}")
        return COMMANDS[args.command](args, config)
    except RidgeError as e:
        logger.error(f"{args.command} 失败: {e}")
        sys.stderr.write(f"错误: {e}\n")
        return e.exit_code
    except ValueError as e:
        logger.error(f"{args.command} 参数或数据无效: {e}")
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
