"""Differentially private approximation of LTI filters over event streams."""

__version__ = "0.1.0"

from .design import (
    DecisionDevice,
    MechanismDesign,
    WaterfillProblem,
    causal_wiener,
    design_df,
    design_df_prefilter_variants,
    design_lmmse,
    design_lzf,
    df_limit_mse,
    lmmse_theoretical_mse,
    lzf_theoretical_mse,
    noncausal_wiener,
    solve_waterfill_df,
    solve_waterfill_lmmse,
)
from .estimators import DecisionFeedbackMechanism, LmmseMechanism, LzfMechanism
from .lti import (
    FilterState,
    FrequencyGrid,
    RationalTransferFunction,
    TwoSidedFir,
    UnstableSystemError,
    freq_response,
    h2_norm,
    impulse_response,
    lp_norm,
)
from .privacy import (
    NoiseCalibration,
    PrivacyParams,
    calibrate,
    filter_sensitivity,
    kappa,
    q_function,
    q_function_inv,
)
from .runtime import MechanismInstance, ReleaseView, StreamReport, release_stream, run, trace_to_csv
from .simulate import (
    ArSource,
    IidSource,
    MarkovSource,
    SimulationReport,
    adjacency_oracle,
    markov_sample,
    monte_carlo,
    psd_of_markov,
    waterfill_oracle,
)
from .spectral import (
    GridPsd,
    RationalPsd,
    SpectralFactor,
    causal_part,
    factor_grid,
    factor_rational,
    min_phase_fir_from_magnitude,
    paley_wiener_check,
)

__all__ = [
    "ArSource", "DecisionDevice", "DecisionFeedbackMechanism", "FilterState",
    "FrequencyGrid", "GridPsd", "IidSource", "LmmseMechanism", "LzfMechanism",
    "MarkovSource", "MechanismDesign", "MechanismInstance", "NoiseCalibration",
    "PrivacyParams", "RationalPsd", "RationalTransferFunction", "ReleaseView",
    "SimulationReport", "SpectralFactor", "StreamReport", "TwoSidedFir",
    "UnstableSystemError", "WaterfillProblem", "adjacency_oracle", "calibrate",
    "causal_part", "causal_wiener", "design_df", "design_df_prefilter_variants",
    "design_lmmse", "design_lzf", "df_limit_mse", "factor_grid",
    "factor_rational", "filter_sensitivity", "freq_response", "h2_norm",
    "impulse_response", "kappa", "lmmse_theoretical_mse", "lp_norm",
    "lzf_theoretical_mse", "markov_sample", "min_phase_fir_from_magnitude",
    "monte_carlo", "noncausal_wiener", "paley_wiener_check", "psd_of_markov",
    "q_function", "q_function_inv", "release_stream", "run",
    "solve_waterfill_df", "solve_waterfill_lmmse", "trace_to_csv",
    "waterfill_oracle",
]
