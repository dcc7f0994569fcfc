import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize, signal

from config import SolverConfig
from modules.cca_model_module import CcaModel
from modules.dynamics_module import (Trajectory, TruncationWindow, initial_excited_state, propagate_eigen)
from modules.exceptions import CcaValidationError, NumericalError
from modules.theory_module import exponential_prediction, turning_time

logger = logging.getLogger(__name__)

SeriesLike = Union[np.ndarray, pd.Series, Sequence[float]]


@dataclass(frozen=True)
class FitResult:
    """指数拟合结果"""
    rate: float
    intercept: float
    residual_rms: float
    window: Tuple[float, float]


@dataclass(frozen=True)
class ComparisonMetrics:
    """两条序列的偏差"""
    rmse: float
    max_abs_dev: float
    at_time: float


def _window_mask(times: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    t_lo, t_hi = window
    if not t_lo < t_hi:
        raise CcaValidationError(f"窗口无效: {window}")
    return (times >= t_lo) & (times <= t_hi)


def fit_decay_rate(traj: Trajectory, window: Tuple[float, float], min_samples: int = 10) -> FitResult:
    """
    在窗口内对 ln(atom_pop) 做最小二乘直线拟合，rate = −slope
    """
    mask = _window_mask(traj.times, window)
    t = traj.times[mask]
    pop = traj.atom_pop[mask]
    if len(t) < min_samples:
        raise CcaValidationError(f"窗口 {window} 内只有 {len(t)} 个采样点，至少需要 {min_samples}")
    if np.any(pop <= 0.0):
        raise CcaValidationError(f"窗口 {window} 内存在非正布居，无法取对数")

    log_pop = np.log(pop)
    slope, intercept = np.polyfit(t, log_pop, 1)
    residual = log_pop - (slope * t + intercept)
    result = FitResult(rate=float(-slope),
                       intercept=float(intercept),
                       residual_rms=float(np.sqrt(np.mean(residual ** 2))),
                       window=(float(window[0]), float(window[1])))
    logger.info(f"拟合衰变率: Γ_fit={result.rate:.6e}, 残差={result.residual_rms:.3e}")
    return result


def detect_turning_time(traj: Trajectory, gamma: float, threshold: float = 0.2,
                        hold: int = 5) -> Optional[float]:
    """
    原子布居相对 e^{−Γt} 的相对偏差连续 hold 个采样点超过阈值的第一个时刻

    Returns:
        转折时刻；没有检测到时返回 None
    """
    if gamma <= 0:
        raise CcaValidationError(f"衰变率必须为正: {gamma}")
    if hold < 1:
        raise CcaValidationError(f"hold 必须 ≥ 1: {hold}")

    reference = exponential_prediction(gamma, traj.times)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_dev = np.abs(traj.atom_pop - reference) / reference
    exceed = np.nan_to_num(rel_dev, nan=np.inf) > threshold

    # 长度为 hold 的滑动窗口全部超阈值
    runs = np.convolve(exceed.astype(int), np.ones(hold, dtype=int), mode="valid")
    hits = np.flatnonzero(runs == hold)
    if len(hits) == 0:
        logger.info("未检测到转折点")
        return None
    t_turn = float(traj.times[hits[0]])
    logger.info(f"检测到转折时刻: t_turn={t_turn:.6e}")
    return t_turn


def compare_series(a: SeriesLike, b: SeriesLike, times: Optional[SeriesLike] = None) -> ComparisonMetrics:
    """
    同一时间网格上两条序列的 RMSE 与最大绝对偏差

    pd.Series 以索引为时间网格，两者索引必须一致；数组按位置对齐，可用 times 给出时间。
    """
    if isinstance(a, pd.Series) and isinstance(b, pd.Series):
        if not a.index.equals(b.index):
            raise CcaValidationError("两条序列的时间网格不一致")
        grid = a.index.to_numpy(dtype=float)
        a, b = a.to_numpy(dtype=float), b.to_numpy(dtype=float)
    else:
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if a.shape != b.shape:
            raise CcaValidationError(f"序列长度不一致: {a.shape} vs {b.shape}")
        grid = np.arange(len(a), dtype=float) if times is None else np.asarray(times, dtype=float)
        if grid.shape != a.shape:
            raise CcaValidationError("时间网格长度与序列不一致")
    if len(a) == 0:
        raise CcaValidationError("序列为空")

    dev = np.abs(a - b)
    i = int(np.argmax(dev))
    rmse = float(np.sqrt(np.mean(dev ** 2)))
    max_abs = float(dev[i])
    # 浮点求和可能使 rmse 略大于 max
    return ComparisonMetrics(rmse=min(rmse, max_abs), max_abs_dev=max_abs, at_time=float(grid[i]))


def truncation_study(model: CcaModel, windows: Iterable[int], t_max: float, dt_sample: float,
                     config: Optional[SolverConfig] = None) -> pd.DataFrame:
    """
    不同截断半宽下原子布居相对全模式结果的偏差

    Returns:
        DataFrame: half_width, first_mode, last_mode, n_modes, max_abs_dev, rmse
    """
    windows = list(windows)
    if not windows:
        raise CcaValidationError("截断窗口列表为空")
    if t_max <= 0 or dt_sample <= 0:
        raise CcaValidationError(f"t_max 与 dt_sample 必须为正: {t_max}, {dt_sample}")

    times = np.arange(0.0, t_max + 0.5 * dt_sample, dt_sample)
    state0 = initial_excited_state(model)
    full = propagate_eigen(model, state0, times, tracked_modes=(), config=config)

    rows = []
    for w in windows:
        trunc = TruncationWindow(half_width=int(w))
        lo, hi = trunc.bounds(model)
        if lo == 1 and hi == model.n_modes:
            # 覆盖全部模式时与全模式计算完全相同
            part = full
        else:
            part = propagate_eigen(model, state0, times, trunc=trunc, tracked_modes=(), config=config)
        metrics = compare_series(full.atom_pop, part.atom_pop, times)
        rows.append({"half_width": int(w),
                     "first_mode": lo,
                     "last_mode": hi,
                     "n_modes": hi - lo + 1,
                     "max_abs_dev": metrics.max_abs_dev,
                     "rmse": metrics.rmse})
        logger.info(f"截断 w={w} (模式 {lo}-{hi}): max_abs_dev={metrics.max_abs_dev:.3e}")
    return pd.DataFrame(rows)


def _peak_envelope(s: np.ndarray, y: np.ndarray, mean: float) -> np.ndarray:
    """对数序列的局部极大值线性拟合得到 A·e^{−bs} 包络，极大值不足两个时取常数"""
    log_y = np.log(np.clip(y, np.finfo(float).tiny, None))
    # 显著性在对数尺度上判断
    peaks, _ = signal.find_peaks(log_y, prominence=0.5)
    peaks = peaks[y[peaks] > 0.0]
    if len(peaks) < 2:
        return np.full_like(y, mean)
    slope, intercept = np.polyfit(s[peaks], log_y[peaks], 1)
    # 谷底的小起伏不属于包络，剔除后重新拟合一次
    upper = peaks[log_y[peaks] >= intercept + slope * s[peaks] - 1.0]
    if 2 <= len(upper) < len(peaks):
        slope, intercept = np.polyfit(s[upper], log_y[upper], 1)
    return np.exp(intercept + slope * s)


def _cosine(t, amp, omega, phase, offset):
    return amp * np.cos(omega * t + phase) + offset


def extract_oscillation_frequency(series: SeriesLike, window: Tuple[float, float],
                                  times: Optional[SeriesLike] = None,
                                  noise_ratio: float = 10.0) -> float:
    """
    去除指数包络后的主振荡角频率

    1. 由局部极大值拟合 A·e^{−bt} 包络并相除，再去掉线性漂移
    2. 离散频谱（补零 FFT）取主峰
    3. 以主峰为初值做余弦最小二乘细化
    """
    if isinstance(series, pd.Series) and times is None:
        times = series.index.to_numpy(dtype=float)
        series = series.to_numpy(dtype=float)
    if times is None:
        raise CcaValidationError("需要提供时间网格")
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)

    mask = _window_mask(times, window)
    t = times[mask] - times[mask][0]
    y = series[mask]
    if len(t) < 16:
        raise CcaValidationError(f"窗口 {window} 内采样点过少: {len(t)}")
    # 拟合在 [0, 1] 的无量纲时间上进行
    span = float(t[-1])
    s = t / span
    ds = float(np.median(np.diff(s)))

    mean = float(np.mean(y))
    if mean <= 0.0:
        raise NumericalError("序列均值非正，无法拟合包络")
    envelope = _peak_envelope(s, y, mean)
    ratio = y / envelope
    # 去除包络误差留下的线性漂移
    detrended = ratio - np.polyval(np.polyfit(s, ratio, 1), s)
    if np.std(detrended) < 1e-9:
        raise NumericalError("去趋势后没有振荡成分")

    n_fft = 1 << int(math.ceil(math.log2(len(s) * 32)))
    freqs = np.fft.rfftfreq(n_fft, d=ds)
    power = np.abs(np.fft.rfft(detrended * signal.windows.hann(len(s)), n=n_fft)) ** 2
    power[0] = 0.0
    peak = int(np.argmax(power))
    floor = float(np.median(power[1:])) if len(power) > 1 else 0.0
    if power[peak] == 0.0 or power[peak] <= noise_ratio * floor:
        raise NumericalError("频谱中没有高于噪声的峰")
    omega_guess = 2.0 * math.pi * freqs[peak]

    # 固定频率下线性最小二乘得到振幅与相位初值
    basis = np.column_stack([np.cos(omega_guess * s), np.sin(omega_guess * s), np.ones_like(s)])
    (c_cos, c_sin, offset), *_ = np.linalg.lstsq(basis, detrended, rcond=None)
    p0 = (math.hypot(c_cos, c_sin), omega_guess, math.atan2(-c_sin, c_cos), offset)
    try:
        popt, _ = optimize.curve_fit(_cosine, s, detrended, p0=p0, maxfev=20000)
        omega_s = abs(float(popt[1]))
    except RuntimeError:
        logger.warning("余弦细化失败，使用频谱峰值")
        omega_s = omega_guess
    # 细化只在主峰附近有效
    if not 0.5 * omega_guess < omega_s < 1.5 * omega_guess:
        omega_s = omega_guess

    omega = omega_s / span
    if omega_s < 4.0 * math.pi:
        logger.warning(f"窗口内不足两个完整周期 ({omega_s / (2.0 * math.pi):.2f})，频率可能不准")
    logger.info(f"振荡角频率: {omega:.6e}")
    return omega


def local_minimum_near(times: SeriesLike, series: SeriesLike, t_guess: float,
                       rel_window: float = 0.3) -> Optional[float]:
    """在 [t_guess(1−w), t_guess(1+w)] 内离 t_guess 最近的局部极小值时刻"""
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    minima, _ = signal.find_peaks(-series)
    if len(minima) == 0:
        return None
    t_min = times[minima]
    inside = np.abs(t_min - t_guess) <= rel_window * t_guess
    if not np.any(inside):
        return None
    candidates = t_min[inside]
    return float(candidates[np.argmin(np.abs(candidates - t_guess))])


def collective_minimum_table(traj: Trajectory, model: CcaModel, offsets: Iterable[int] = (1, 2, 3)) -> pd.DataFrame:
    """
    k₀ 两侧各模式在 t_c 附近的极小值时刻

    Returns:
        DataFrame: mode, offset, t_min, t_c, rel_error
    """
    t_c = turning_time(model)
    rows = []
    for m in offsets:
        for k in (model.k0 - m, model.k0 + m):
            if k not in traj.mode_pops:
                raise CcaValidationError(f"模式 {k} 未被记录")
            t_min = local_minimum_near(traj.times, traj.mode_pops[k], t_c)
            rel = math.nan if t_min is None else abs(t_min - t_c) / t_c
            rows.append({"mode": k, "offset": k - model.k0, "t_min": t_min, "t_c": t_c, "rel_error": rel})
    return pd.DataFrame(rows)
