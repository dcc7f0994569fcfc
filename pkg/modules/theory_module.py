import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from config import SolverConfig
from modules.cca_model_module import CcaModel, nearest_mode_spacing, detuning, mode_coupling
from modules.dynamics_module import ExcitationState
from modules.exceptions import CcaValidationError, NumericalError

logger = logging.getLogger(__name__)

# 低于此比值时 Δ_k ≫ Γ 的近似不可靠
MIN_VALIDITY_RATIO = 10.0


@dataclass(frozen=True)
class DressedBlock:
    """缀饰态 |1⟩, |2⟩ 上的 2×2 密度矩阵块"""
    rho11: float
    rho22: float
    rho12: complex
    t_ref: float

    @property
    def trace(self) -> float:
        return self.rho11 + self.rho22

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.rho11, self.rho12],
                         [np.conj(self.rho12), self.rho22]], dtype=complex)


@dataclass(frozen=True)
class DecayPrediction:
    """解析预测：衰变率、共振频率、转折时间、共振耦合"""
    gamma: float
    omega0: float
    t_c: float
    g_r: float


def decay_rate_ww(model: CcaModel) -> float:
    """
    Weisskopf-Wigner 衰变率 Γ = 4g²/√((2η)² − (ω₀−ω_c)²)

    η=1, ω_c=0 时即 4g²/√(4−ω₀²)；ω₀ 落在带边或带外时公式失效。
    """
    p = model.params
    offset = model.omega_a - p.cavity_freq
    radicand = (2.0 * p.hopping_eta) ** 2 - offset ** 2
    if radicand <= 0.0:
        raise CcaValidationError(f"原子频率 ω_a={model.omega_a} 不在能带内部，态密度发散")
    return 4.0 * p.coupling_g ** 2 / math.sqrt(radicand)


def resonant_coupling(model: CcaModel) -> float:
    """g_r = √(2/(N+1))·g"""
    return math.sqrt(2.0 / (model.n_modes + 1)) * model.params.coupling_g


def turning_time(model: CcaModel) -> float:
    """t_c = 2π/Δ₁"""
    return 2.0 * math.pi / nearest_mode_spacing(model)


def decay_prediction(model: CcaModel) -> DecayPrediction:
    return DecayPrediction(gamma=decay_rate_ww(model),
                           omega0=model.omega_a,
                           t_c=turning_time(model),
                           g_r=resonant_coupling(model))


def exponential_prediction(gamma: float, times) -> np.ndarray:
    """布居 e^{−Γt}"""
    if gamma < 0:
        raise CcaValidationError(f"衰变率必须非负: {gamma}")
    return np.exp(-gamma * np.asarray(times, dtype=float))


def mode_population_model(model: CcaModel, gamma: float, k: int, t):
    """
    指数衰变阶段第 k 个模式的布居

    M_k(t) = A_k (e^{−Γt} − 2e^{−Γt/2} cos Δ_k t + 1)，A_k = g_k²/(Γ²/4 + Δ_k²)
    Γ 与 Δ_k 同时为零时取极限 g_k² t²。
    """
    g = mode_coupling(model, k)
    delta = detuning(model, k)
    t = np.asarray(t, dtype=float)

    denom = gamma ** 2 / 4.0 + delta ** 2
    if denom == 0.0:
        result = g ** 2 * t ** 2
    else:
        amp = g ** 2 / denom
        result = amp * (np.exp(-gamma * t) - 2.0 * np.exp(-gamma * t / 2.0) * np.cos(delta * t) + 1.0)
    # 舍入误差可能给出 −1e-20 量级
    result = np.maximum(result, 0.0)
    return float(result) if result.ndim == 0 else result


def mode_population_derivative(model: CcaModel, gamma: float, k: int, t):
    """Ṁ_k(t) = A_k e^{−Γt/2}(−Γe^{−Γt/2} + Γ cos Δ_k t + 2Δ_k sin Δ_k t)"""
    g = mode_coupling(model, k)
    delta = detuning(model, k)
    t = np.asarray(t, dtype=float)
    denom = gamma ** 2 / 4.0 + delta ** 2
    if denom == 0.0:
        result = 2.0 * g ** 2 * t
    else:
        amp = g ** 2 / denom
        half = np.exp(-gamma * t / 2.0)
        result = amp * half * (-gamma * half + gamma * np.cos(delta * t) + 2.0 * delta * np.sin(delta * t))
    return float(result) if np.ndim(result) == 0 else result


def minimum_validity_ratio(model: CcaModel, gamma: float, k: int) -> float:
    """|Δ_k|/Γ，越大极小值位置公式越准"""
    delta = abs(detuning(model, k))
    if gamma == 0.0:
        return math.inf
    return delta / gamma


def mode_minimum_times(model: CcaModel, gamma: float, k: int, l: int = 1) -> float:
    """第 l 个极小值时刻 t_k = 2πl/|Δ_k|"""
    if l < 1:
        raise CcaValidationError(f"l 必须为正整数: {l}")
    delta = detuning(model, k)
    if delta == 0.0:
        raise CcaValidationError(f"模式 k={k} 与原子共振，没有振荡极小值")

    ratio = minimum_validity_ratio(model, gamma, k)
    if ratio < MIN_VALIDITY_RATIO:
        logger.warning(f"模式 k={k} 的 |Δ_k|/Γ = {ratio:.2f}，极小值位置近似不可靠")
    return 2.0 * math.pi * l / abs(delta)


def detuning_linear_approx(model: CcaModel, k: int) -> float:
    """Δ_k ≈ (k−k₀)Δ₁"""
    return (k - model.k0) * nearest_mode_spacing(model)


def detuning_sum_formula(model: CcaModel, k: int) -> float:
    """和差化积形式 Δ_k = 4η sin((k+k₀)π/(2(N+1))) sin((k−k₀)π/(2(N+1)))，相对 ω_{k₀}"""
    half = math.pi / (2.0 * (model.n_modes + 1))
    return 4.0 * model.params.hopping_eta * math.sin((k + model.k0) * half) * math.sin((k - model.k0) * half)


def dressed_basis_project(state: ExcitationState, model: CcaModel, t_ref: float = 0.0) -> DressedBlock:
    """
    投影到 span{|vac,e⟩, |1_{k₀},g⟩} 上的缀饰态块

    |1⟩,|2⟩ = (|vac,e⟩ ± |1_{k₀},g⟩)/√2；其它模式的振幅被丢弃，块的迹 ≤ 1。
    """
    a = complex(state.alpha)
    b = complex(state.beta[model.k0 - 1])
    plus = a + b
    minus = a - b
    return DressedBlock(rho11=abs(plus) ** 2 / 2.0,
                        rho22=abs(minus) ** 2 / 2.0,
                        rho12=plus * np.conj(minus) / 2.0,
                        t_ref=float(t_ref))


def renormalize_block(block: DressedBlock) -> DressedBlock:
    """把块归一化到单位迹"""
    tr = block.trace
    if tr <= 0.0:
        raise NumericalError("缀饰态块的迹为零，无法归一化")
    return replace(block, rho11=block.rho11 / tr, rho22=block.rho22 / tr, rho12=block.rho12 / tr)


def _signed_coupling(model: CcaModel) -> float:
    # 共振模式耦合为负时缀饰态能级互换
    sign = 1.0 if model.g_k[model.k0 - 1] >= 0 else -1.0
    return sign * resonant_coupling(model)


def _elapsed(block: DressedBlock, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < block.t_ref):
        raise CcaValidationError(f"时间早于参考时刻 t_ref={block.t_ref}")
    return times - block.t_ref


def dressed_decay_prediction(model: CcaModel, block: DressedBlock, times,
                             gamma: Optional[float] = None,
                             coupling: Optional[float] = None) -> np.ndarray:
    """
    缀饰原子衰变的原子布居

    ρ_ee(t) = ½e^{−Γτ/2}[ρ11 + ρ22 + ρ12 e^{−2ig_rτ} + ρ21 e^{2ig_rτ}]，τ = t − t_ref
    """
    tau = _elapsed(block, times)
    gamma = decay_rate_ww(model) if gamma is None else gamma
    coupling = _signed_coupling(model) if coupling is None else coupling

    osc = 2.0 * np.real(block.rho12 * np.exp(-2j * coupling * tau))
    return 0.5 * np.exp(-gamma * tau / 2.0) * (block.rho11 + block.rho22 + osc)


def dressed_emptying_time(model: CcaModel, block: DressedBlock,
                          coupling: Optional[float] = None) -> Optional[float]:
    """
    缀饰预测中原子布居第一次到达极小值（原子排空）的时刻

    ρ12 e^{−2ig_rτ} 的相位第一次转到 π 时取极小；不计 e^{−Γτ/2} 对极小位置的微小平移。
    没有相干项时返回 None。
    """
    coupling = _signed_coupling(model) if coupling is None else coupling
    if coupling == 0.0 or abs(block.rho12) == 0.0:
        return None
    phase = float(np.angle(block.rho12))
    tau = ((phase - np.pi) / (2.0 * coupling)) % (np.pi / abs(coupling))
    return block.t_ref + float(tau)


def _integrate(rhs, y0: np.ndarray, tau: np.ndarray, config: SolverConfig, rtol: float, atol: float):
    if tau[-1] == 0.0:
        return np.repeat(y0[:, None], len(tau), axis=1)
    sol = solve_ivp(rhs, (0.0, float(tau[-1])), y0, method=config.ode_method,
                    t_eval=tau, rtol=rtol, atol=atol)
    if not sol.success:
        logger.error(f"主方程积分失败: {sol.message}")
        raise NumericalError(f"主方程积分失败: {sol.message}")
    return sol.y


def dressed_secular_oracle(block: DressedBlock, times, gamma: float, coupling: float,
                           config: Optional[SolverConfig] = None) -> np.ndarray:
    """
    数值积分久期方程 ρ̇_ii = −Γρ_ii/2, ρ̇_12 = (−2ig_r − Γ/2)ρ_12，返回 ρ_ee
    """
    config = config or SolverConfig()
    tau = _elapsed(block, times)

    def rhs(_t, y):
        return np.array([-gamma / 2.0 * y[0],
                         -gamma / 2.0 * y[1],
                         (-2j * coupling - gamma / 2.0) * y[2]])

    y0 = np.array([block.rho11, block.rho22, block.rho12], dtype=complex)
    y = _integrate(rhs, y0, tau, config, rtol=1e-12, atol=1e-14)
    return 0.5 * np.real(y[0] + y[1] + 2.0 * y[2])


def dressed_lindblad_oracle(model: CcaModel, block: DressedBlock, times,
                            gamma: Optional[float] = None,
                            coupling: Optional[float] = None,
                            config: Optional[SolverConfig] = None) -> np.ndarray:
    """
    在 {|e,0⟩, |g,1_{k₀}⟩, |g,0⟩} 上积分完整主方程（不做久期近似）

    H_d = ½ω₀σ_z + ω₀b†b + g_r(b†σ⁻ + h.c.)，跃迁算符 √Γ σ⁻
    """
    config = config or SolverConfig()
    tau = _elapsed(block, times)
    gamma = decay_rate_ww(model) if gamma is None else gamma
    coupling = _signed_coupling(model) if coupling is None else coupling
    if gamma < 0:
        raise CcaValidationError(f"衰变率必须非负: {gamma}")

    w0 = model.omega_a
    H = np.array([[w0 / 2.0, coupling, 0.0],
                  [coupling, w0 / 2.0, 0.0],
                  [0.0, 0.0, -w0 / 2.0]], dtype=complex)
    L = np.zeros((3, 3), dtype=complex)
    L[2, 0] = math.sqrt(gamma)
    LdL = L.conj().T @ L

    # 缀饰基 -> 裸基
    U = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)
    rho0 = np.zeros((3, 3), dtype=complex)
    rho0[:2, :2] = U @ block.as_matrix() @ U.conj().T

    def rhs(_t, y):
        rho = y.reshape(3, 3)
        drho = -1j * (H @ rho - rho @ H)
        drho += L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)
        return drho.reshape(-1)

    y = _integrate(rhs, rho0.reshape(-1), tau, config, rtol=config.ode_rtol, atol=config.ode_atol)
    return np.real(y[0])
