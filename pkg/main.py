import argparse
import logging
import sys
from typing import Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from config import CcaDecayConfig, DEFAULT_CONFIG
from modules import (CcaValidationError, NumericalError, RunConfig, load_run_config, read_overrides, run_figure,
                     run_scenario, run_sweep, run_truncation_study)

# 加载环境变量
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class CcaDecaySystem:
    """
    CCA 中二能级原子自发辐射模拟系统

    核心功能：
    1. 单激发精确动力学（本征分解 / RK4 校验）
    2. 解析预测：衰变率、模式布居、转折时间、缀饰原子衰变
    3. 轨迹分析：拟合衰变率、检测转折、提取振荡频率
    4. 图预设与参数扫描，输出 CSV
    """
    def __init__(self, config: CcaDecayConfig = DEFAULT_CONFIG):
        self.config = config

    def simulate(self, run_config: RunConfig):
        """运行单个场景"""
        print(f"运行场景 {run_config.label} ...")
        result = run_scenario(run_config, self.config.solver_config, self.config.output_config)
        self._print_summary(result.summary)
        for path in result.files:
            print(f"   已写入 {path}")
        return result

    def sweep(self, base: RunConfig, axis: str, values: List[float], workers: int):
        """参数扫描"""
        print(f"扫描 {axis} = {values} ...")
        table = run_sweep(base, axis, values, workers=workers, solver_config=self.config.solver_config,
                          output_config=self.config.output_config)
        print(table.to_string(index=False))
        return table

    def figure(self, name: str, out_dir: str, workers: int, overrides: Optional[Dict[str, str]] = None):
        """图预设，overrides 覆盖到每个预设上"""
        print(f"生成 {name} ...")
        files = run_figure(name, out_dir, workers=workers, overrides=overrides,
                           solver_config=self.config.solver_config, output_config=self.config.output_config)
        for path in files:
            print(f"   已写入 {path}")
        return files

    def truncation_study(self, run_config: RunConfig, windows: List[int]):
        """截断收敛研究"""
        print(f"截断研究 w = {windows} ...")
        table = run_truncation_study(run_config, windows, self.config.solver_config, self.config.output_config)
        print(table.to_string(index=False))
        return table

    @staticmethod
    def _print_summary(summary):
        print("\n运行摘要:")
        for key, value in summary.items():
            print(f"{key}={value}")


def _parse_number(text: str):
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() else value


def build_parser(config: CcaDecayConfig) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CCA 中原子自发辐射模拟与分析")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value 配置文件")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="覆盖配置项，可重复")
    common.add_argument("--out", help="输出目录")
    common.add_argument("--workers", type=int, default=config.output_config.workers, help="并发进程数")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="运行单个场景")

    sweep = sub.add_parser("sweep", parents=[common], help="单参数扫描")
    sweep.add_argument("--axis", required=True, help="N, n, g 或 k0")
    sweep.add_argument("--values", required=True, help="逗号分隔的取值")

    figure = sub.add_parser("figure", parents=[common], help="图预设")
    figure.add_argument("name", choices=["fig1", "fig2", "fig3", "fig4"])

    trunc = sub.add_parser("truncation-study", parents=[common], help="模式截断收敛研究")
    trunc.add_argument("--windows", default="2,5,10,20", help="逗号分隔的截断半宽")
    return parser


def _load(args) -> RunConfig:
    overrides = list(args.set)
    if args.out:
        overrides.append(f"outputs={args.out}")
    return load_run_config(args.config, overrides)


def main(argv: Optional[List[str]] = None, config: CcaDecayConfig = DEFAULT_CONFIG) -> int:
    logging.basicConfig(level=getattr(logging, config.output_config.log_level.upper(), logging.INFO),
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    args = build_parser(config).parse_args(argv)
    system = CcaDecaySystem(config)

    try:
        if args.command == "simulate":
            system.simulate(_load(args))
        elif args.command == "sweep":
            values = [_parse_number(v) for v in args.values.split(",") if v.strip()]
            system.sweep(_load(args), args.axis, values, args.workers)
        elif args.command == "figure":
            system.figure(args.name, args.out or config.output_config.output_dir, args.workers,
                          read_overrides(args.config, args.set))
        elif args.command == "truncation-study":
            windows = [int(w) for w in args.windows.split(",") if w.strip()]
            system.truncation_study(_load(args), windows)
    except (CcaValidationError, ValidationError, ValueError) as e:
        logger.error(f"参数校验失败: {e}")
        print(f"\n❌ 参数错误: {e}")
        return EXIT_VALIDATION
    except NumericalError as e:
        logger.error(f"数值计算失败: {e}")
        print(f"\n❌ 数值错误: {e}")
        return EXIT_NUMERICAL

    print("\n✅ 完成")
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
