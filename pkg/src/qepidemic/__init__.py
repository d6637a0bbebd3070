"""Epidemic spreading on a community network simulated with a spin system coupled to reset baths."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CalibrationError,
    ConfigurationError,
    EngineRefusal,
    FitDomainError,
    InfeasibleRateError,
    ModelError,
    PerturbativeRegimeError,
    QEpidemicError,
    ValidationError,
)
from .evolution import run_protocol, trotter_interval  # noqa: E402
from .model import EpidemicModel, HamiltonianTerm, auto_alpha, build_terms  # noqa: E402
from .timeseries import TimeSeries, extract_infection_rate, fit_decay_rate  # noqa: E402

__all__ = [
    "CalibrationError",
    "ConfigurationError",
    "EngineRefusal",
    "EpidemicModel",
    "FitDomainError",
    "HamiltonianTerm",
    "InfeasibleRateError",
    "ModelError",
    "PerturbativeRegimeError",
    "QEpidemicError",
    "TimeSeries",
    "ValidationError",
    "auto_alpha",
    "build_terms",
    "extract_infection_rate",
    "fit_decay_rate",
    "run_protocol",
    "trotter_interval",
]
