import logging
import os
from dataclasses import dataclass, field, asdict
from typing import Dict, Any

from dotenv import load_dotenv


# 加载 .env 文件中的环境变量
load_dotenv()


logger = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """数值求解配置信息"""
    eigen_chunk_size: int = int(os.getenv("CCA_EIGEN_CHUNK_SIZE", 512))  # 本征传播时每批计算的时间点数
    ode_rtol: float = float(os.getenv("CCA_ODE_RTOL", 1e-10))  # 主方程积分相对误差
    ode_atol: float = float(os.getenv("CCA_ODE_ATOL", 1e-12))  # 主方程积分绝对误差
    ode_method: str = os.getenv("CCA_ODE_METHOD", "DOP853")  # solve_ivp 积分方法
    rk4_guard: float = 0.1  # dt·(2η+|ω_a|) 的上限


@dataclass
class OutputConfig:
    """输出配置信息"""
    output_dir: str = os.getenv("CCA_OUTPUT_DIR", "outputs")  # 默认输出目录
    float_format: str = "%.12g"  # CSV 浮点格式，12 位有效数字
    workers: int = int(os.getenv("CCA_WORKERS", 2))  # 并发进程数
    log_level: str = os.getenv("CCA_LOG_LEVEL", "INFO")


@dataclass
class CcaDecayConfig:
    """CCA 原子衰变系统配置信息"""
    # 数值求解配置
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    # 输出配置
    output_config: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> "CcaDecayConfig":
        solver = SolverConfig(**config_dict.get("solver_config", {}))
        output = OutputConfig(**config_dict.get("output_config", {}))
        rest = {k: v for k, v in config_dict.items() if k not in ("solver_config", "output_config")}
        return cls(solver_config=solver, output_config=output, **rest)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


DEFAULT_CONFIG = CcaDecayConfig()
logger.debug(f"默认配置: {DEFAULT_CONFIG}")
