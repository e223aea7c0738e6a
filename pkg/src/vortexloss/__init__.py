"""Trapped-vortex microwave loss in superconducting niobium resonators.

Physics model, measurement reduction, global fitting and synthetic data
generation for the complex sensitivity ``S + iS'`` of the surface
impedance to trapped magnetic flux.
"""

from .exceptions import (
    ConfigError,
    DataError,
    DomainError,
    FitError,
    RankDeficiencyError,
    VortexLossError,
)
from .fitting import (
    FitConfig,
    FitResult,
    VortexSensitivityRegressor,
    curves_to_xy,
    fit_simultaneous,
    predict_curves,
    residual_vector,
)
from .model import (
    DEFAULT_MATERIAL,
    REFERENCE_PINNING,
    ComplexSensitivity,
    MaterialParams,
    PinningParams,
    bc2,
    crossover_temperature,
    depinning_frequency,
    flux_flow_resistivity,
    gr_resistivity,
    lambda_s,
    scale_sensitivity_frequency,
    sensitivity_model,
    surface_impedance,
    t1_bound,
)
from .pipeline import (
    DecayTrace,
    QDataset,
    SensitivityCurve,
    average_thermalized,
    extract_sensitivity,
    flux_trapping_ratio,
    onaxis_field,
    photon_number,
    q0_from_ql,
    ql_from_decay,
    reduce_traces,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DomainError",
    "FitError",
    "RankDeficiencyError",
    "VortexLossError",
    "FitConfig",
    "FitResult",
    "VortexSensitivityRegressor",
    "curves_to_xy",
    "fit_simultaneous",
    "predict_curves",
    "residual_vector",
    "DEFAULT_MATERIAL",
    "REFERENCE_PINNING",
    "ComplexSensitivity",
    "MaterialParams",
    "PinningParams",
    "bc2",
    "crossover_temperature",
    "depinning_frequency",
    "flux_flow_resistivity",
    "gr_resistivity",
    "lambda_s",
    "scale_sensitivity_frequency",
    "sensitivity_model",
    "surface_impedance",
    "t1_bound",
    "DecayTrace",
    "QDataset",
    "SensitivityCurve",
    "average_thermalized",
    "extract_sensitivity",
    "flux_trapping_ratio",
    "onaxis_field",
    "photon_number",
    "q0_from_ql",
    "ql_from_decay",
    "reduce_traces",
]
