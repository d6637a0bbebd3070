"""Exception hierarchy shared by the engines, calibration and CLI."""


class QEpidemicError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(QEpidemicError, ValueError):
    """Inconsistent run settings (step sizes, horizons, lengths)."""

    exit_code = 2


class ValidationError(ConfigurationError):
    """Scenario file failed schema or range validation.

    ``path`` is the dotted location of the offending field, e.g. ``virus.sar``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ModelError(ConfigurationError):
    """Invalid Hamiltonian parameters."""


class InvalidGateError(QEpidemicError, ValueError):
    pass


class FitDomainError(QEpidemicError, ValueError):
    """Data outside the domain of a fit (e.g. log of a non-positive value)."""


class InfeasibleRateError(QEpidemicError, ValueError):
    """Requested infection rate is not reachable on the monotone sinc branch."""


class PerturbativeRegimeError(QEpidemicError, ValueError):
    """Second-order stochastic matrix has negative entries for this coupling."""

    def __init__(self, message: str, lam: float | None = None):
        self.lam = lam
        super().__init__(message)


class EngineRefusal(QEpidemicError, RuntimeError):
    """The selected engine cannot represent a system of this size."""

    exit_code = 3

    def __init__(self, message: str, n_qubits: int | None = None, engine: str = ""):
        self.n_qubits = n_qubits
        self.engine = engine
        super().__init__(message)


class CalibrationError(QEpidemicError, RuntimeError):
    """Calibration fit is of unacceptable quality."""

    exit_code = 4


class CalibrationWarning(UserWarning):
    pass
