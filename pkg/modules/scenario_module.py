import io
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from dotenv.parser import parse_stream
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from tqdm import tqdm

from config import OutputConfig, SolverConfig
from modules.analysis_module import (compare_series, detect_turning_time, fit_decay_rate, truncation_study)
from modules.cca_model_module import CcaModel, CcaParams, build_model, find_antinode_site
from modules.dynamics_module import (TruncationWindow, evolve_state, initial_excited_state, observables,
                                     propagate_eigen, propagate_ode)
from modules.exceptions import CcaValidationError
from modules.theory_module import (decay_prediction, dressed_basis_project, dressed_decay_prediction,
                                   dressed_emptying_time, dressed_lindblad_oracle, exponential_prediction,
                                   mode_population_model, renormalize_block)

logger = logging.getLogger(__name__)

# 扫描轴的简写
SWEEP_AXES = {
    "N": "n_cavities",
    "n": "atom_site",
    "g": "coupling_g",
    "k0": "resonant_mode",
    "n_cavities": "n_cavities",
    "atom_site": "atom_site",
    "coupling_g": "coupling_g",
    "resonant_mode": "resonant_mode",
}

DEFAULT_TRUNCATION_WINDOWS = (2, 5, 10, 20)


def _parse_modes(value: Any) -> List[int]:
    """解析 "50-60"、"50,52,55" 或其组合"""
    if value is None:
        return []
    if isinstance(value, (list, tuple, range)):
        return sorted(set(int(v) for v in value))
    modes = set()
    for part in str(value).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            modes.update(range(int(lo), int(hi) + 1))
        else:
            modes.add(int(part))
    return sorted(modes)


class RunConfig(BaseModel):
    """单次运行配置"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # 模型参数
    n_cavities: int = Field(gt=0)
    atom_site: Optional[int] = None  # 为空时取共振模式的波腹
    coupling_g: float = Field(ge=0.0)
    hopping_eta: float = Field(default=1.0, gt=0.0)
    cavity_freq: float = 0.0
    resonant_mode: Optional[int] = None
    atom_freq: Optional[float] = None

    # 传播
    t_max: float = Field(gt=0.0)
    dt_sample: float = Field(default=10.0, gt=0.0)
    truncation_half_width: Optional[int] = Field(default=None, ge=0)
    tracked_modes: List[int] = Field(default_factory=list)
    method: Literal["eigen", "ode"] = "eigen"
    ode_dt: float = Field(default=0.01, gt=0.0)

    # 分析
    fit_window_fraction: float = Field(default=0.5, gt=0.0)  # 拟合窗口 [0, fraction·t_c]
    turning_threshold: float = Field(default=0.2, gt=0.0)
    turning_hold: int = Field(default=5, ge=1)
    dressed_decay_lengths: float = Field(default=2.0, gt=0.0)  # 缀饰比较窗口 [t_turn, t_turn + x/Γ]
    renormalize_dressed_block: bool = False

    # 输出
    outputs: str = Field(default_factory=lambda: OutputConfig().output_dir)
    label: str = "run"
    window_note: Optional[str] = None

    @field_validator("atom_site", "resonant_mode", "atom_freq", "truncation_half_width", "window_note",
                     mode="before")
    @classmethod
    def _blank_to_none(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value

    @field_validator("tracked_modes", mode="before")
    @classmethod
    def _modes(cls, value):
        return _parse_modes(value)

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if (self.resonant_mode is None) == (self.atom_freq is None):
            raise ValueError("resonant_mode 与 atom_freq 必须且只能给出一个")
        if self.method == "ode":
            ratio = self.dt_sample / self.ode_dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(f"dt_sample={self.dt_sample} 必须是 ode_dt={self.ode_dt} 的整数倍")
        return self

    @classmethod
    def create(cls, **kwargs) -> "RunConfig":
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise CcaValidationError(f"运行配置无效: {e}") from e

    def with_updates(self, **updates) -> "RunConfig":
        data = self.model_dump()
        data.update(updates)
        return RunConfig.create(**data)


def parse_key_values(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """按 .env 语法解析 key=value 行（支持引号、export 前缀与行尾注释）"""
    text = "\n".join(line.rstrip("\r\n") for line in lines)
    for binding in parse_stream(io.StringIO(text)):
        if binding.error or (binding.key is not None and binding.value is None):
            raise CcaValidationError(f"{source}:{binding.original.line} 不是 key=value 格式: "
                                     f"{binding.original.string.strip()}")
    return dict(dotenv_values(stream=io.StringIO(text), interpolate=False))


def read_overrides(path: Optional[str] = None, overrides: Sequence[str] = ()) -> Dict[str, str]:
    """配置文件与 --set 覆盖合并为原始字符串字典，后者优先"""
    values: Dict[str, str] = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise CcaValidationError(f"无法读取配置文件 {path}: {e}") from e
        values.update(parse_key_values(text.splitlines(), source=path))
    values.update(parse_key_values(overrides, source="--set"))
    return values


def load_run_config(path: Optional[str] = None, overrides: Sequence[str] = (),
                    base: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    读取配置文件并应用 --set 覆盖

    Args:
        path: key=value 配置文件路径
        overrides: ["key=value", ...]
        base: 预设的默认值（如图预设）
    """
    values: Dict[str, Any] = dict(base or {})
    values.update(read_overrides(path, overrides))
    config = RunConfig.create(**values)
    logger.info(f"已加载运行配置: {config.label}")
    return config


def resolve_params(config: RunConfig) -> CcaParams:
    """RunConfig -> CcaParams，atom_site 为空时取波腹"""
    fields = dict(n_cavities=config.n_cavities,
                  coupling_g=config.coupling_g,
                  hopping_eta=config.hopping_eta,
                  cavity_freq=config.cavity_freq,
                  resonant_mode=config.resonant_mode,
                  atom_freq=config.atom_freq)
    site = config.atom_site
    if site is None:
        draft = build_model(CcaParams.create(atom_site=1, **fields))
        site = find_antinode_site(draft, draft.k0)
        logger.info(f"atom_site 未指定，取共振模式 k0={draft.k0} 的波腹 n={site}")
    return CcaParams.create(atom_site=site, **fields)


@dataclass
class ScenarioResult:
    """一次运行的输出文件与摘要"""
    label: str
    files: List[Path]
    summary: Dict[str, Any] = field(default_factory=dict)


def _prepare_output_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        marker = out / ".write_test"
        marker.write_text("", encoding="utf-8")
        marker.unlink()
    except OSError as e:
        raise CcaValidationError(f"输出目录不可写: {out} ({e})") from e
    return out


def write_csv(frame: pd.DataFrame, path: Path, output_config: Optional[OutputConfig] = None) -> Path:
    """表头 + 12 位有效数字 + 逗号分隔 + 换行结尾"""
    output_config = output_config or OutputConfig()
    frame.to_csv(path, index=False, float_format=output_config.float_format,
                 lineterminator="\n", encoding="utf-8")
    logger.info(f"已写入: {path}")
    return path


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        # repr 可精确还原
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def write_summary(summary: Dict[str, Any], path: Path) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in summary.items():
            f.write(f"{key}={_format_value(value)}\n")
    logger.info(f"已写入: {path}")
    return path


def _propagate(config: RunConfig, model: CcaModel, solver_config: SolverConfig):
    trunc = None
    if config.truncation_half_width is not None:
        trunc = TruncationWindow(half_width=config.truncation_half_width)
    state0 = initial_excited_state(model)
    if config.method == "eigen":
        times = np.arange(0.0, config.t_max + 0.5 * config.dt_sample, config.dt_sample)
        traj = propagate_eigen(model, state0, times, trunc=trunc,
                               tracked_modes=config.tracked_modes, config=solver_config)
    else:
        stride = int(round(config.dt_sample / config.ode_dt))
        traj = propagate_ode(model, state0, config.t_max, config.ode_dt, trunc=trunc,
                             tracked_modes=config.tracked_modes, sample_every=stride, config=solver_config)
    return traj, trunc, state0


def run_scenario(config: RunConfig, solver_config: Optional[SolverConfig] = None,
                 output_config: Optional[OutputConfig] = None) -> ScenarioResult:
    """
    运行单个场景并写出轨迹 CSV、理论对照 CSV 与摘要文件
    """
    solver_config = solver_config or SolverConfig()
    output_config = output_config or OutputConfig()
    out_dir = _prepare_output_dir(config.outputs)

    params = resolve_params(config)
    model = build_model(params)
    prediction = decay_prediction(model)
    logger.info(f"[{config.label}] Γ={prediction.gamma:.6e}, t_c={prediction.t_c:.6e}, g_r={prediction.g_r:.6e}")

    traj, trunc, state0 = _propagate(config, model, solver_config)
    times = traj.times

    # 1. 指数阶段拟合
    fit_hi = min(config.fit_window_fraction * prediction.t_c, float(times[-1]))
    fit = fit_decay_rate(traj, (0.0, fit_hi))

    # 2. 转折检测
    t_turn = detect_turning_time(traj, prediction.gamma, config.turning_threshold, config.turning_hold)

    # 3. 理论曲线
    theory = pd.DataFrame({"time": times, "exponential": exponential_prediction(prediction.gamma, times)})
    summary: Dict[str, Any] = {
        "label": config.label,
        "n_cavities": params.n_cavities,
        "atom_site": params.atom_site,
        "coupling_g": params.coupling_g,
        "resonant_mode": model.k0,
        "omega_a": model.omega_a,
        "method": config.method,
        "truncation_half_width": config.truncation_half_width,
        "gamma_theory": prediction.gamma,
        "gamma_fit": fit.rate,
        "fit_window": list(fit.window),
        "fit_residual_rms": fit.residual_rms,
        "t_c": prediction.t_c,
        "t_turn": t_turn,
        "g_r": prediction.g_r,
    }

    early = times <= prediction.t_c
    for k in config.tracked_modes:
        curve = mode_population_model(model, prediction.gamma, k, times)
        theory[f"mode_model_{k}"] = curve
        peak = float(np.max(traj.mode_pops[k][early])) if np.any(early) else 0.0
        metrics = compare_series(traj.mode_pops[k][early], curve[early], times[early])
        summary[f"mode_model_rel_rmse_{k}"] = metrics.rmse / peak if peak > 0 else None

    summary["dressed_rmse"] = None
    summary["dressed_max_abs_dev"] = None
    summary["dressed_empty_time"] = None
    summary["dressed_rmse_pre_empty"] = None
    if t_turn is not None:
        state_turn = evolve_state(model, state0, t_turn, trunc, solver_config)
        block = dressed_basis_project(state_turn, model, t_ref=t_turn)
        if config.renormalize_dressed_block:
            block = renormalize_block(block)
        after = times >= t_turn
        dressed = np.full(len(times), np.nan)
        dressed[after] = dressed_decay_prediction(model, block, times[after])
        lindblad = np.full(len(times), np.nan)
        lindblad[after] = dressed_lindblad_oracle(model, block, times[after], config=solver_config)
        theory["dressed"] = dressed
        theory["dressed_lindblad"] = lindblad

        window = after & (times <= t_turn + config.dressed_decay_lengths / prediction.gamma)
        metrics = compare_series(traj.atom_pop[window], dressed[window], times[window])
        # 排空之后原子布居回升，超出 e^{−Γτ/2} 包络
        t_empty = dressed_emptying_time(model, block)
        pre_empty = after & (times <= (t_empty if t_empty is not None else t_turn))
        pre_metrics = compare_series(traj.atom_pop[pre_empty], dressed[pre_empty], times[pre_empty])
        summary.update({
            "dressed_block_trace": block.trace,
            "dressed_renormalized": config.renormalize_dressed_block,
            "dressed_rmse": metrics.rmse,
            "dressed_max_abs_dev": metrics.max_abs_dev,
            "dressed_empty_time": t_empty,
            "dressed_rmse_pre_empty": pre_metrics.rmse,
        })
    if config.window_note:
        summary["window_note"] = config.window_note

    files = [
        write_csv(observables(traj, config.tracked_modes), out_dir / f"{config.label}_trajectory.csv", output_config),
        write_csv(theory, out_dir / f"{config.label}_theory.csv", output_config),
        write_summary(summary, out_dir / f"{config.label}_summary.txt"),
    ]
    return ScenarioResult(label=config.label, files=files, summary=summary)


def _run_config_worker(config_data: Dict[str, Any], solver_config: SolverConfig,
                       output_config: OutputConfig) -> ScenarioResult:
    return run_scenario(RunConfig.create(**config_data), solver_config, output_config)


def run_many(configs: Sequence[RunConfig], workers: int = 1, desc: str = "运行场景",
             solver_config: Optional[SolverConfig] = None,
             output_config: Optional[OutputConfig] = None) -> List[ScenarioResult]:
    """并发运行多个互相独立的场景，结果按输入顺序返回"""
    solver_config = solver_config or SolverConfig()
    output_config = output_config or OutputConfig()
    if workers <= 1 or len(configs) <= 1:
        return [run_scenario(c, solver_config, output_config) for c in tqdm(configs, desc=desc)]

    results: List[Optional[ScenarioResult]] = [None] * len(configs)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_run_config_worker, c.model_dump(), solver_config, output_config): i
                   for i, c in enumerate(configs)}
        for future in tqdm(as_completed(futures), total=len(futures), desc=desc):
            results[futures[future]] = future.result()
    return results


def run_sweep(base: RunConfig, axis: str, values: Sequence[Any], workers: int = 1,
              solver_config: Optional[SolverConfig] = None,
              output_config: Optional[OutputConfig] = None) -> pd.DataFrame:
    """
    单参数扫描，每个取值独立运行并汇总

    Returns:
        DataFrame: value, gamma_fit, gamma_theory, t_c, t_turn, dressed_rmse
    """
    if axis not in SWEEP_AXES:
        raise CcaValidationError(f"不支持的扫描参数: {axis}，可选 {sorted(SWEEP_AXES)}")
    name = SWEEP_AXES[axis]
    values = list(values)
    if not values:
        raise CcaValidationError("扫描取值为空")

    configs = []
    for value in values:
        updates: Dict[str, Any] = {name: value,
                                   "label": f"{name}_{value}",
                                   "outputs": str(Path(base.outputs) / f"sweep_{name}_{value}")}
        if name == "resonant_mode":
            updates["atom_freq"] = None
        configs.append(base.with_updates(**updates))

    results = run_many(configs, workers=workers, desc=f"扫描 {name}",
                       solver_config=solver_config, output_config=output_config)
    rows = []
    for value, result in zip(values, results):
        s = result.summary
        rows.append({"value": value,
                     "gamma_fit": s["gamma_fit"],
                     "gamma_theory": s["gamma_theory"],
                     "t_c": s["t_c"],
                     "t_turn": s["t_turn"],
                     "dressed_rmse": s["dressed_rmse"]})
    table = pd.DataFrame(rows)
    write_csv(table, _prepare_output_dir(base.outputs) / f"sweep_{name}.csv", output_config)
    return table


def run_truncation_study(config: RunConfig, windows: Sequence[int] = DEFAULT_TRUNCATION_WINDOWS,
                         solver_config: Optional[SolverConfig] = None,
                         output_config: Optional[OutputConfig] = None) -> pd.DataFrame:
    """截断收敛表，写出 <label>_truncation.csv"""
    out_dir = _prepare_output_dir(config.outputs)
    model = build_model(resolve_params(config))
    table = truncation_study(model, windows, config.t_max, config.dt_sample, solver_config)
    write_csv(table, out_dir / f"{config.label}_truncation.csv", output_config)
    return table


# 图预设参数（N=2001 时原子位于近波腹 n=1984）
PRESET_ARRAYS = ((1001, 992), (1501, 1488), (2001, 1984))
PRESET_COUPLING = 0.0015
PRESET_MODE = 55


def figure_configs(name: str, out_dir: str, overrides: Optional[Dict[str, Any]] = None) -> List[RunConfig]:
    """fig1-fig4 的运行配置，overrides 覆盖到每个预设上"""
    overrides = dict(overrides or {})
    base = dict(coupling_g=PRESET_COUPLING, resonant_mode=PRESET_MODE, dt_sample=10.0, outputs=out_dir)
    k0_window = list(range(PRESET_MODE - 5, PRESET_MODE + 6))

    def preset(**fields) -> RunConfig:
        return RunConfig.create(**{**base, **fields, **overrides})

    if name == "fig1":
        return [preset(n_cavities=n, atom_site=site, t_max=5.0e4, label=f"fig1_N{n}")
                for n, site in PRESET_ARRAYS]
    if name == "fig2":
        return [preset(n_cavities=2001, atom_site=1984, t_max=3.5e4, tracked_modes=k0_window,
                       label="fig2_N2001")]
    if name == "fig3":
        configs = []
        for n, site in PRESET_ARRAYS:
            draft = preset(n_cavities=n, atom_site=site, t_max=1.0, label=f"fig3_N{n}")
            t_c = decay_prediction(build_model(resolve_params(draft))).t_c
            t_max = float(overrides.get("t_max", 3.0 * t_c))
            configs.append(draft.with_updates(t_max=t_max, window_note=overrides.get("window_note", "[0, 3t_c]")))
        return configs
    if name == "fig4":
        return [preset(n_cavities=2001, atom_site=1984, t_max=5.0e4, truncation_half_width=w,
                       label=f"fig4_{'full' if w is None else f'w{w}'}")
                for w in (None, 5, 2)]
    raise CcaValidationError(f"未知的图预设: {name}，可选 fig1/fig2/fig3/fig4")


def run_figure(name: str, out_dir: str, workers: int = 1, overrides: Optional[Dict[str, Any]] = None,
               solver_config: Optional[SolverConfig] = None,
               output_config: Optional[OutputConfig] = None) -> List[Path]:
    """运行图预设，返回全部输出文件"""
    configs = figure_configs(name, out_dir, overrides)
    files: List[Path] = []
    for result in run_many(configs, workers=workers, desc=name,
                           solver_config=solver_config, output_config=output_config):
        files.extend(result.files)
    if name == "fig4":
        fig4 = configs[0].with_updates(label="fig4")
        table = run_truncation_study(fig4, windows=(2, 5), solver_config=solver_config,
                                     output_config=output_config)
        files.append(Path(fig4.outputs) / "fig4_truncation.csv")
        logger.info(f"fig4 截断表:\n{table}")
    return files
