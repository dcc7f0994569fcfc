import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from config import SolverConfig
from modules.cca_model_module import CcaModel, CcaParams
from modules.exceptions import CcaValidationError, NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExcitationState:
    """单激发态：原子振幅 α 与 N 个模式振幅 β_k（模式基）"""
    alpha: complex
    beta: np.ndarray

    def norm(self) -> float:
        return float(abs(self.alpha) ** 2 + np.sum(np.abs(self.beta) ** 2))

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.alpha], self.beta)).astype(complex)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "ExcitationState":
        vec = np.asarray(vec, dtype=complex)
        return cls(alpha=complex(vec[0]), beta=vec[1:].copy())


@dataclass(frozen=True)
class TruncationWindow:
    """模式截断窗口 [center−w, center+w]，center 默认为 k₀"""
    half_width: int
    center: Optional[int] = None

    def __post_init__(self):
        if self.half_width < 0:
            raise CcaValidationError(f"截断半宽必须非负: {self.half_width}")

    def bounds(self, model: CcaModel) -> Tuple[int, int]:
        center = model.k0 if self.center is None else self.center
        return max(1, center - self.half_width), min(model.n_modes, center + self.half_width)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """时间网格上的原子与模式布居"""
    times: np.ndarray
    atom_pop: np.ndarray
    mode_pops: Dict[int, np.ndarray]
    total_pop: np.ndarray  # 原子 + 所有已记录模式
    params: CcaParams
    truncation: Optional[TruncationWindow] = None
    method: str = "eigen"
    tracked: Tuple[int, ...] = field(default=())

    def tracks_all_modes(self) -> bool:
        return len(self.tracked) == self.params.n_cavities


def included_modes(model: CcaModel, trunc: Optional[TruncationWindow] = None) -> np.ndarray:
    """截断窗口内的模式编号（无截断时为全部模式）"""
    if trunc is None:
        return model.mode_indices
    lo, hi = trunc.bounds(model)
    if lo > hi:
        raise CcaValidationError(f"截断窗口为空: center={trunc.center}, half_width={trunc.half_width}")
    return np.arange(lo, hi + 1)


def build_hamiltonian(model: CcaModel, trunc: Optional[TruncationWindow] = None) -> np.ndarray:
    """
    构建单激发子空间中的箭头形哈密顿量

    第 0 行/列为原子，其余为窗口内模式：对角线 (ω_a, ω_k)，首行首列为 g_k。
    """
    modes = included_modes(model, trunc)
    idx = modes - 1
    dim = len(modes) + 1

    H = np.zeros((dim, dim), dtype=float)
    H[0, 0] = model.omega_a
    H[np.arange(1, dim), np.arange(1, dim)] = model.omega[idx]
    H[0, 1:] = model.g_k[idx]
    H[1:, 0] = model.g_k[idx]
    return H


def initial_excited_state(model: CcaModel) -> ExcitationState:
    """原子处于激发态，腔阵列处于真空态"""
    return ExcitationState(alpha=1.0 + 0.0j, beta=np.zeros(model.n_modes, dtype=complex))


def _check_state(model: CcaModel, state: ExcitationState):
    if len(state.beta) != model.n_modes:
        raise CcaValidationError(f"态的模式数 {len(state.beta)} 与模型 N={model.n_modes} 不一致")


def _resolve_tracked(model: CcaModel, tracked_modes: Optional[Iterable[int]]) -> List[int]:
    if tracked_modes is None:
        return list(range(1, model.n_modes + 1))
    tracked = sorted(set(int(k) for k in tracked_modes))
    for k in tracked:
        if not 1 <= k <= model.n_modes:
            raise CcaValidationError(f"记录模式 k={k} 超出范围 [1, {model.n_modes}]")
    return tracked


class EigenPropagator:
    """
    基于本征分解的精确传播器

    窗口内: c(t) = V·diag(e^{−iλt})·Vᵀ·c(0)
    窗口外的模式与原子解耦，只做自由相位转动 β_k(0)e^{−iω_k t}
    """

    def __init__(self, model: CcaModel, trunc: Optional[TruncationWindow] = None,
                 config: Optional[SolverConfig] = None):
        self.model = model
        self.trunc = trunc
        self.config = config or SolverConfig()

        self.modes = included_modes(model, trunc)
        self.hamiltonian = build_hamiltonian(model, trunc)

        # 模式编号 -> 窗口内行号
        self.row_of = {int(k): i + 1 for i, k in enumerate(self.modes)}

        self.eigvals, self.eigvecs = self._diagonalize()

    def _diagonalize(self) -> Tuple[np.ndarray, np.ndarray]:
        dim = self.hamiltonian.shape[0]
        logger.info(f"开始本征分解，矩阵维度: {dim}")
        try:
            eigvals, eigvecs = linalg.eigh(self.hamiltonian)
        except linalg.LinAlgError as e:
            logger.error(f"本征分解失败: {e}")
            raise NumericalError(f"本征分解失败: {e}") from e

        if not (np.all(np.isfinite(eigvals)) and np.all(np.isfinite(eigvecs))):
            raise NumericalError("本征分解结果含非有限值")
        logger.info(f"本征分解完成，本征值范围: [{eigvals[0]:.6f}, {eigvals[-1]:.6f}]")
        return eigvals, eigvecs

    def _split_state(self, state: ExcitationState) -> Tuple[np.ndarray, np.ndarray]:
        vec = state.as_vector()
        sub = np.concatenate(([vec[0]], vec[self.modes]))
        return sub, vec

    def amplitudes(self, state: ExcitationState, times: np.ndarray,
                   tracked: Sequence[int]) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
        """
        计算原子与指定模式在各时刻的振幅

        Returns:
            (α(t), {k: β_k(t)})
        """
        times = np.asarray(times, dtype=float)
        sub, full = self._split_state(state)
        coeff = self.eigvecs.T @ sub

        inside = [k for k in tracked if k in self.row_of]
        outside = [k for k in tracked if k not in self.row_of]
        rows = [0] + [self.row_of[k] for k in inside]
        vecs = self.eigvecs[rows, :]

        out = np.empty((len(rows), len(times)), dtype=complex)
        chunk = max(1, int(self.config.eigen_chunk_size))
        # 不同时刻相互独立，按块计算以限制内存
        for start in range(0, len(times), chunk):
            t = times[start:start + chunk]
            phases = np.exp(-1j * np.outer(self.eigvals, t))
            out[:, start:start + chunk] = vecs @ (coeff[:, None] * phases)

        if not np.all(np.isfinite(out)):
            raise NumericalError("传播结果含非有限值")

        betas = {k: out[i + 1] for i, k in enumerate(inside)}
        for k in outside:
            betas[k] = full[k] * np.exp(-1j * self.model.omega[k - 1] * times)
        return out[0], betas

    def evolve(self, state: ExcitationState, t: float) -> ExcitationState:
        """单个时刻（可为负）的完整态"""
        alpha, betas = self.amplitudes(state, np.array([t]), list(range(1, self.model.n_modes + 1)))
        beta = np.array([betas[k][0] for k in range(1, self.model.n_modes + 1)], dtype=complex)
        return ExcitationState(alpha=complex(alpha[0]), beta=beta)


def _check_times(times: np.ndarray):
    if times.ndim != 1 or len(times) == 0:
        raise CcaValidationError("时间网格必须是非空一维数组")
    if times[0] < 0:
        raise CcaValidationError(f"起始时间必须非负: {times[0]}")
    if np.any(np.diff(times) <= 0):
        raise CcaValidationError("时间网格必须严格递增")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _make_trajectory(model: CcaModel, times: np.ndarray, alpha: np.ndarray, betas: Dict[int, np.ndarray],
                     trunc: Optional[TruncationWindow], method: str) -> Trajectory:
    atom_pop = np.abs(alpha) ** 2
    mode_pops = {k: _freeze(np.abs(b) ** 2) for k, b in sorted(betas.items())}
    total = atom_pop.copy()
    for pop in mode_pops.values():
        total += pop
    return Trajectory(times=_freeze(times.copy()),
                      atom_pop=_freeze(atom_pop),
                      mode_pops=mode_pops,
                      total_pop=_freeze(total),
                      params=model.params,
                      truncation=trunc,
                      method=method,
                      tracked=tuple(mode_pops.keys()))


def propagate_eigen(model: CcaModel, state0: ExcitationState, times,
                    trunc: Optional[TruncationWindow] = None,
                    tracked_modes: Optional[Iterable[int]] = None,
                    config: Optional[SolverConfig] = None) -> Trajectory:
    """
    通过完整本征分解精确求解薛定谔方程 iĊ = HC

    Args:
        model: CCA 模型
        state0: 初始态
        times: 严格递增、非负的时间网格
        trunc: 可选的模式截断窗口
        tracked_modes: 需要记录布居的模式，None 表示全部

    Returns:
        Trajectory
    """
    times = np.asarray(times, dtype=float)
    _check_times(times)
    _check_state(model, state0)
    tracked = _resolve_tracked(model, tracked_modes)

    propagator = EigenPropagator(model, trunc, config)
    alpha, betas = propagator.amplitudes(state0, times, tracked)
    logger.info(f"本征传播完成: {len(times)} 个采样点, 记录 {len(tracked)} 个模式")
    return _make_trajectory(model, times, alpha, betas, trunc, "eigen")


def evolve_state(model: CcaModel, state: ExcitationState, t: float,
                 trunc: Optional[TruncationWindow] = None,
                 config: Optional[SolverConfig] = None) -> ExcitationState:
    """把态演化时间 t（可为负，用于时间反演）"""
    _check_state(model, state)
    return EigenPropagator(model, trunc, config).evolve(state, float(t))


def energy_expectation(model: CcaModel, state: ExcitationState,
                       trunc: Optional[TruncationWindow] = None) -> float:
    """⟨C|H|C⟩，窗口外模式按自由模式能量计入"""
    _check_state(model, state)
    modes = included_modes(model, trunc)
    H = build_hamiltonian(model, trunc)
    vec = state.as_vector()
    sub = np.concatenate(([vec[0]], vec[modes]))
    energy = np.vdot(sub, H @ sub).real

    mask = np.ones(model.n_modes, dtype=bool)
    mask[modes - 1] = False
    energy += float(np.sum(model.omega[mask] * np.abs(state.beta[mask]) ** 2))
    return float(energy)


def propagate_ode(model: CcaModel, state0: ExcitationState, t_max: float, dt: float,
                  trunc: Optional[TruncationWindow] = None,
                  tracked_modes: Optional[Iterable[int]] = None,
                  sample_every: int = 1,
                  config: Optional[SolverConfig] = None) -> Trajectory:
    """
    固定步长四阶 Runge-Kutta 积分 iĊ = HC，作为本征传播的独立校验

    时间网格为 t_i = i·dt，每 sample_every 步记录一次。
    """
    config = config or SolverConfig()
    _check_state(model, state0)
    if t_max <= 0 or dt <= 0:
        raise CcaValidationError(f"t_max 与 dt 必须为正: t_max={t_max}, dt={dt}")
    if sample_every < 1:
        raise CcaValidationError(f"sample_every 必须 ≥ 1: {sample_every}")

    scale = 2.0 * model.params.hopping_eta + abs(model.omega_a)
    if dt * scale >= config.rk4_guard:
        raise CcaValidationError(f"步长过大: dt·(2η+|ω_a|) = {dt * scale:.4f} ≥ {config.rk4_guard}")

    tracked = _resolve_tracked(model, tracked_modes)
    modes = included_modes(model, trunc)
    H = build_hamiltonian(model, trunc)
    diag = np.diag(H).astype(complex)
    couplings = H[0, 1:]

    def rhs(c: np.ndarray) -> np.ndarray:
        # 箭头矩阵乘法，O(M)
        hc = diag * c
        hc[0] += couplings @ c[1:]
        hc[1:] += couplings * c[0]
        return -1j * hc

    full0 = state0.as_vector()
    c = np.concatenate(([full0[0]], full0[modes]))
    n_steps = int(round(t_max / dt))
    n_samples = n_steps // sample_every + 1

    row_of = {int(k): i + 1 for i, k in enumerate(modes)}
    inside = [k for k in tracked if k in row_of]
    outside = [k for k in tracked if k not in row_of]
    rows = [0] + [row_of[k] for k in inside]

    record = np.empty((len(rows), n_samples), dtype=complex)
    record[:, 0] = c[rows]
    logger.info(f"开始RK4积分: {n_steps} 步, dt={dt}")

    j = 1
    for step in range(1, n_steps + 1):
        k1 = rhs(c)
        k2 = rhs(c + 0.5 * dt * k1)
        k3 = rhs(c + 0.5 * dt * k2)
        k4 = rhs(c + dt * k3)
        c = c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % sample_every == 0:
            record[:, j] = c[rows]
            j += 1

    if not np.all(np.isfinite(record)):
        raise NumericalError("RK4 积分结果含非有限值")

    times = np.arange(n_samples) * (dt * sample_every)
    betas = {k: record[i + 1] for i, k in enumerate(inside)}
    for k in outside:
        betas[k] = full0[k] * np.exp(-1j * model.omega[k - 1] * times)
    return _make_trajectory(model, times, record[0], betas, trunc, "ode")


def observables(traj: Trajectory, selection: Iterable[int] = ()) -> pd.DataFrame:
    """按列输出 time, atom_pop, mode_<k>（k 升序）"""
    selection = sorted(set(int(k) for k in selection))
    missing = [k for k in selection if k not in traj.mode_pops]
    if missing:
        raise CcaValidationError(f"以下模式未被记录: {missing}")

    columns = {"time": traj.times, "atom_pop": traj.atom_pop}
    for k in selection:
        columns[f"mode_{k}"] = traj.mode_pops[k]
    return pd.DataFrame(columns)
