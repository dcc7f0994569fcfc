from .exceptions import CcaValidationError, NumericalError
from .cca_model_module import (CcaParams, CcaModel, build_model, mode_frequency, mode_coupling, detuning,
                               nearest_mode_spacing, find_antinode_site, band_edges)
from .dynamics_module import (ExcitationState, TruncationWindow, Trajectory, EigenPropagator, build_hamiltonian,
                              included_modes, initial_excited_state, propagate_eigen, propagate_ode, evolve_state,
                              energy_expectation, observables)
from .theory_module import (DressedBlock, DecayPrediction, decay_rate_ww, resonant_coupling, decay_prediction,
                            exponential_prediction, mode_population_model, mode_population_derivative,
                            minimum_validity_ratio, mode_minimum_times, turning_time, detuning_linear_approx,
                            detuning_sum_formula, dressed_basis_project, renormalize_block,
                            dressed_decay_prediction, dressed_emptying_time, dressed_secular_oracle,
                            dressed_lindblad_oracle)
from .analysis_module import (FitResult, ComparisonMetrics, fit_decay_rate, detect_turning_time, compare_series,
                              truncation_study, extract_oscillation_frequency, local_minimum_near,
                              collective_minimum_table)
from .scenario_module import (RunConfig, ScenarioResult, load_run_config, parse_key_values, read_overrides,
                              resolve_params, run_scenario, run_many, run_sweep, run_truncation_study, figure_configs,
                              run_figure, write_csv)


__all__ = [
    "CcaValidationError",
    "NumericalError",
    "CcaParams",
    "CcaModel",
    "build_model",
    "mode_frequency",
    "mode_coupling",
    "detuning",
    "nearest_mode_spacing",
    "find_antinode_site",
    "band_edges",
    "ExcitationState",
    "TruncationWindow",
    "Trajectory",
    "EigenPropagator",
    "build_hamiltonian",
    "included_modes",
    "initial_excited_state",
    "propagate_eigen",
    "propagate_ode",
    "evolve_state",
    "energy_expectation",
    "observables",
    "DressedBlock",
    "DecayPrediction",
    "decay_rate_ww",
    "resonant_coupling",
    "decay_prediction",
    "exponential_prediction",
    "mode_population_model",
    "mode_population_derivative",
    "minimum_validity_ratio",
    "mode_minimum_times",
    "turning_time",
    "detuning_linear_approx",
    "detuning_sum_formula",
    "dressed_basis_project",
    "renormalize_block",
    "dressed_decay_prediction",
    "dressed_emptying_time",
    "dressed_secular_oracle",
    "dressed_lindblad_oracle",
    "FitResult",
    "ComparisonMetrics",
    "fit_decay_rate",
    "detect_turning_time",
    "compare_series",
    "truncation_study",
    "extract_oscillation_frequency",
    "local_minimum_near",
    "collective_minimum_table",
    "RunConfig",
    "ScenarioResult",
    "load_run_config",
    "parse_key_values",
    "read_overrides",
    "resolve_params",
    "run_scenario",
    "run_many",
    "run_sweep",
    "run_truncation_study",
    "figure_configs",
    "run_figure",
    "write_csv",
]
