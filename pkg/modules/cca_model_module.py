import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from modules.exceptions import CcaValidationError

logger = logging.getLogger(__name__)


class CcaParams(BaseModel):
    """CCA 模型参数（用户输入）"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_cavities: int = Field(gt=0)  # 腔阵列长度 N
    atom_site: int  # 原子所在腔 n，取值 [1, N]
    coupling_g: float = Field(ge=0.0)  # 原子-腔耦合 g（单位 η）
    hopping_eta: float = Field(default=1.0, gt=0.0)  # 跃迁强度 η
    cavity_freq: float = 0.0  # 单腔频率 ω_c
    resonant_mode: Optional[int] = None  # 共振模式 k₀
    atom_freq: Optional[float] = None  # 或者直接给出原子频率 ω_a

    @model_validator(mode="after")
    def _check_ranges(self) -> "CcaParams":
        if not 1 <= self.atom_site <= self.n_cavities:
            raise ValueError(f"atom_site={self.atom_site} 超出范围 [1, {self.n_cavities}]")
        if (self.resonant_mode is None) == (self.atom_freq is None):
            raise ValueError("resonant_mode 与 atom_freq 必须且只能给出一个")
        if self.resonant_mode is not None and not 1 <= self.resonant_mode <= self.n_cavities:
            raise ValueError(f"resonant_mode={self.resonant_mode} 超出范围 [1, {self.n_cavities}]")
        return self

    @classmethod
    def create(cls, **kwargs) -> "CcaParams":
        """构造参数，校验失败统一转为 CcaValidationError"""
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise CcaValidationError(f"CCA 参数无效: {e}") from e


@dataclass(frozen=True, eq=False)
class CcaModel:
    """由参数导出的不可变模型"""
    params: CcaParams
    theta: np.ndarray  # θ_k = kπ/(N+1)
    omega: np.ndarray  # ω_k = ω_c − 2η cos θ_k
    g_k: np.ndarray  # 原子与第 k 个模式的耦合
    k0: int  # 共振模式
    omega_a: float  # 原子频率
    delta: np.ndarray  # Δ_k = ω_k − ω_a
    delta_1: Optional[float]  # ω_{k₀+1} − ω_{k₀}，k₀ = N 时为 None
    resonance_by_index: bool

    @property
    def n_modes(self) -> int:
        return self.params.n_cavities

    @property
    def mode_indices(self) -> np.ndarray:
        return np.arange(1, self.params.n_cavities + 1)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _mode_frequencies(n: int, eta: float, omega_c: float) -> np.ndarray:
    # −cos θ 写成 sin((2k−N−1)π/(2(N+1)))，带中心 2k = N+1 处严格为零
    k = np.arange(1, n + 1)
    return omega_c + 2.0 * eta * np.sin((2 * k - n - 1) * np.pi / (2.0 * (n + 1)))


def _mode_couplings(n: int, site: int, g: float) -> np.ndarray:
    k = np.arange(1, n + 1)
    # 整数取模后再求 sin，节点处严格为零
    r = (site * k) % (2 * (n + 1))
    s = np.sin(np.pi * r / (n + 1))
    s[r % (n + 1) == 0] = 0.0
    return np.sqrt(2.0 / (n + 1)) * s * g


def _pair_detuning(n: int, eta: float, k: np.ndarray, k0: int) -> np.ndarray:
    """ω_k − ω_{k₀} 的和差化积形式"""
    half = np.pi / (2.0 * (n + 1))
    return 4.0 * eta * np.sin((k + k0) * half) * np.sin((k - k0) * half)


def build_model(params: CcaParams) -> CcaModel:
    """
    构建 CCA 模型：模式谱、耦合、失谐

    Args:
        params: 已校验的模型参数

    Returns:
        不可变的 CcaModel
    """
    if not isinstance(params, CcaParams):
        raise CcaValidationError(f"需要 CcaParams，得到 {type(params).__name__}")
    try:
        # 重新校验，防止 model_construct 绕过校验
        params = CcaParams.model_validate(params.model_dump())
    except ValidationError as e:
        raise CcaValidationError(f"CCA 参数无效: {e}") from e

    n = params.n_cavities
    eta = params.hopping_eta
    k = np.arange(1, n + 1)

    theta = k * np.pi / (n + 1)
    omega = _mode_frequencies(n, eta, params.cavity_freq)
    g_k = _mode_couplings(n, params.atom_site, params.coupling_g)

    if params.resonant_mode is not None:
        k0 = params.resonant_mode
        omega_a = float(omega[k0 - 1])
        delta = _pair_detuning(n, eta, k, k0)
        by_index = True
    else:
        omega_a = float(params.atom_freq)
        # np.argmin 取第一个最小值，即较小的 k
        k0 = int(np.argmin(np.abs(omega - omega_a))) + 1
        delta = omega - omega_a
        by_index = False

    delta_1 = None
    if k0 < n:
        delta_1 = float(_pair_detuning(n, eta, np.array([k0 + 1]), k0)[0])

    model = CcaModel(params=params,
                     theta=_frozen(theta),
                     omega=_frozen(omega),
                     g_k=_frozen(g_k),
                     k0=k0,
                     omega_a=omega_a,
                     delta=_frozen(delta),
                     delta_1=delta_1,
                     resonance_by_index=by_index)
    logger.info(f"已构建CCA模型: N={n}, n={params.atom_site}, g={params.coupling_g}, k0={k0}, ω_a={omega_a:.9f}")
    return model


def _check_mode_index(model: CcaModel, k: int) -> int:
    if not 1 <= k <= model.n_modes:
        raise CcaValidationError(f"模式编号 k={k} 超出范围 [1, {model.n_modes}]")
    return int(k)


def mode_frequency(model: CcaModel, k: int) -> float:
    """第 k 个模式的频率 ω_k"""
    return float(model.omega[_check_mode_index(model, k) - 1])


def mode_coupling(model: CcaModel, k: int) -> float:
    """原子与第 k 个模式的耦合 g_k（保留符号）"""
    return float(model.g_k[_check_mode_index(model, k) - 1])


def detuning(model: CcaModel, k: int) -> float:
    """Δ_k = ω_k − ω_a"""
    return float(model.delta[_check_mode_index(model, k) - 1])


def nearest_mode_spacing(model: CcaModel) -> float:
    """Δ₁ = ω_{k₀+1} − ω_{k₀}"""
    if model.delta_1 is None:
        raise CcaValidationError(f"k0={model.k0} 已是最高模式，不存在 Δ₁")
    return model.delta_1


def find_antinode_site(model: CcaModel, k0: int) -> int:
    """
    找到使 |sin(nθ_{k0})| 最大的腔编号 n，多个并列时取最大的 n

    |sin(nk₀π/(N+1))| 只依赖 r = nk₀ mod (N+1)，r 越接近 (N+1)/2 越大，
    用整数比较避免浮点并列误差。
    """
    k0 = _check_mode_index(model, k0)
    n_plus = model.n_modes + 1
    sites = np.arange(1, model.n_modes + 1)
    score = np.abs(2 * ((sites * k0) % n_plus) - n_plus)
    best = np.flatnonzero(score == score.min())
    return int(sites[best[-1]])


def band_edges(model: CcaModel) -> Tuple[float, float]:
    """能带边界 (ω_c − 2η, ω_c + 2η)"""
    p = model.params
    return p.cavity_freq - 2.0 * p.hopping_eta, p.cavity_freq + 2.0 * p.hopping_eta
