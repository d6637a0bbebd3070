"""Parameter determination from epidemiological inputs.

* ``lam`` from the secondary attack rate, through the power law between the
  household infection rate and the system-bath coupling;
* ``sigma`` from the basic reproduction number, through the total infected
  population at the end of the incubation period;
* ``alpha`` from the number of index patients;
* the time-rescaling factor that trades a smaller ``lam`` for longer runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from . import state as qs
from .errors import CalibrationError, CalibrationWarning, ConfigurationError, FitDomainError
from .evolution import DENSITY, run_protocol
from .geometry import CommunityMap, gamma_matrix, sinc_rate
from .model import EpidemicModel, auto_alpha  # noqa: F401  (re-export)
from .timeseries import TimeSeries, extract_infection_rate

DEFAULT_LAMBDA_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
DEFAULT_SIGMA_GRID = tuple(float(s) for s in range(40, 91, 5))
SLOPE_BOUNDS = (1.5, 2.5)
SAR_SHOTS = 4096
R0_SHOTS = 50000


@dataclass
class VirusInputs:
    sar: float | None = None
    sar_horizon: int = 7
    r0: float | None = None
    incubation: int = 4

    def __post_init__(self):
        if self.sar is not None and not 0.0 < self.sar < 1.0:
            raise FitDomainError(f"sar must lie in (0, 1), got {self.sar}")
        if self.r0 is not None and not self.r0 > 0:
            raise ConfigurationError(f"r0 must be positive, got {self.r0}")
        for name in ("sar_horizon", "incubation"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v}")


@dataclass
class SimSettings:
    """How calibration runs are simulated."""

    delta_t: float = 1.0
    trotter_dt: float = 0.01
    mode: str = DENSITY
    shots: int = SAR_SHOTS
    seed: int = 0


def gamma_from_sar(inputs: VirusInputs) -> float:
    """Household rate ``-ln(1 - SAR) / horizon``."""
    if inputs.sar is None:
        raise ConfigurationError("sar is required")
    return -math.log1p(-inputs.sar) / inputs.sar_horizon


def rescale_time(lam_ref: float, lam: float, exponent: float = 2.0) -> float:
    """Computer-time dilation ``(lam_ref / lam)**exponent`` that keeps physical curves fixed."""
    if not (lam_ref > 0 and lam > 0):
        raise ConfigurationError("couplings must be positive")
    return (lam_ref / lam) ** exponent


@dataclass
class LinearFit:
    slope: float
    intercept: float
    cov: np.ndarray
    residuals: np.ndarray

    @property
    def slope_stderr(self) -> float:
        return float(math.sqrt(self.cov[0, 0]))

    @property
    def intercept_stderr(self) -> float:
        return float(math.sqrt(self.cov[1, 1]))

    def solve(self, y: float) -> tuple[float, float]:
        """``x`` with ``slope x + intercept = y`` and its propagated error."""
        x = (y - self.intercept) / self.slope
        jac = np.array([-x / self.slope, -1.0 / self.slope])
        return float(x), float(math.sqrt(max(jac @ self.cov @ jac, 0.0)))


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise FitDomainError("need at least 3 points for a line fit with errors")
    coef, cov = np.polyfit(x, y, 1, cov=True)
    resid = y - np.polyval(coef, x)
    return LinearFit(float(coef[0]), float(coef[1]), np.asarray(cov), resid)


def household_model(lam: float, gamma: float = math.pi, settings: SimSettings | None = None) -> EpidemicModel:
    """One index patient and one household with ``alpha = pi / dt``."""
    settings = settings or SimSettings()
    return EpidemicModel(
        gamma=[[gamma]],
        lam=lam,
        alpha=auto_alpha(1, settings.delta_t),
        delta_t=settings.delta_t,
        trotter_dt=settings.trotter_dt,
    )


def _run(model: EpidemicModel, days: float, settings: SimSettings, *keys: int) -> TimeSeries:
    return run_protocol(model, days, settings.mode, settings.shots, qs.derive_seed(settings.seed, *keys))


def household_rate(lam: float, horizon: int = 7, gamma: float = math.pi, settings: SimSettings | None = None, key: int = 0):
    """Fitted household infection rate over days ``1..horizon``."""
    settings = settings or SimSettings()
    series = _run(household_model(lam, gamma, settings), horizon, settings, key)
    return extract_infection_rate(series, series.site_ids[0], (settings.delta_t, horizon))


@dataclass
class LambdaCalibration:
    lam: float
    stderr: float
    gamma_sar: float
    grid: list[float]
    rates: list[float]
    rate_stderrs: list[float]
    fit: LinearFit

    @property
    def slope(self) -> float:
        return self.fit.slope


def fit_power_law(lams, rates) -> LinearFit:
    """Line through ``(ln lam, ln rate)``."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise FitDomainError("rates must be positive for a log-log fit")
    return linear_fit(np.log(lams), np.log(rates))


def calibrate_lambda(
    inputs: VirusInputs, grid=DEFAULT_LAMBDA_GRID, settings: SimSettings | None = None, rate_fn=None
) -> LambdaCalibration:
    """Solve ``rate(lam) = gamma_sar`` on the fitted log-log line.

    ``rate_fn(lam) -> (rate, stderr)`` replaces the simulation when given.
    """
    settings = settings or SimSettings()
    grid = sorted(float(x) for x in grid)
    if len(grid) < 3 or grid[-1] / grid[0] < math.sqrt(10.0):
        raise ConfigurationError("lambda grid needs at least 3 points spanning half a decade")
    target = gamma_from_sar(inputs)
    rates, errs = [], []
    for k, lam in enumerate(grid):
        if rate_fn is None:
            fit = household_rate(lam, inputs.sar_horizon, settings=settings, key=k)
            rates.append(fit.rate)
            errs.append(fit.stderr)
        else:
            r, e = rate_fn(lam)
            rates.append(float(r))
            errs.append(float(e))
    fit = fit_power_law(grid, rates)
    lo, hi = SLOPE_BOUNDS
    if not lo <= fit.slope <= hi:
        raise CalibrationError(f"log-log slope {fit.slope:.4f} outside [{lo}, {hi}]: not in the quadratic regime")
    log_lam, log_err = fit.solve(math.log(target))
    lam = math.exp(log_lam)
    return LambdaCalibration(lam, lam * log_err, target, grid, rates, errs, fit)


def build_model(
    cmap: CommunityMap,
    sigma: float,
    lam: float,
    delta_t: float = 1.0,
    trotter_dt: float = 0.01,
    alpha: float | None = None,
) -> EpidemicModel:
    """Model for a community map: couplings from the Gaussian contact overlaps."""
    return EpidemicModel(
        gamma=gamma_matrix(cmap, sigma, delta_t),
        lam=lam,
        alpha=alpha,
        delta_t=delta_t,
        trotter_dt=trotter_dt,
        populations=cmap.populations,
        site_ids=cmap.site_ids,
    )


def total_infected(
    cmap: CommunityMap, sigma: float, lam: float, days: int, settings: SimSettings | None = None, key: int = 0
) -> tuple[float, float]:
    """Total infected population at ``days`` and its statistical error."""
    settings = settings or SimSettings()
    model = build_model(cmap, sigma, lam, settings.delta_t, settings.trotter_dt)
    series = _run(model, days, settings, key)
    row = int(np.flatnonzero(np.isclose(series.times, days))[0])
    err = float(np.sqrt(np.sum((series.populations * series.stderr[row]) ** 2)))
    return series.total_infected(days), err


@dataclass
class SigmaCalibration:
    sigma: float
    stderr: float
    grid: list[float]
    totals: list[float]
    total_stderrs: list[float]
    fit: LinearFit
    extrapolated: bool = False
    notes: list[str] = field(default_factory=list)


def calibrate_sigma(
    cmap: CommunityMap,
    lam: float,
    inputs: VirusInputs,
    grid=DEFAULT_SIGMA_GRID,
    settings: SimSettings | None = None,
    total_fn=None,
) -> SigmaCalibration:
    """Solve ``total(sigma) = R0`` on a straight line fitted to the simulated totals.

    ``total_fn(sigma) -> (total, stderr)`` replaces the simulation when given.
    """
    if inputs.r0 is None:
        raise ConfigurationError("r0 is required")
    settings = settings or SimSettings()
    grid = sorted(float(x) for x in grid)
    totals, errs = [], []
    for k, sigma in enumerate(grid):
        t, e = (
            total_infected(cmap, sigma, lam, inputs.incubation, settings, key=k)
            if total_fn is None
            else total_fn(sigma)
        )
        totals.append(float(t))
        errs.append(float(e))
    diffs = np.diff(totals)
    tol = 2.0 * np.hypot(errs[1:], errs[:-1])
    if np.any(diffs <= -tol) or (settings.mode == DENSITY and np.any(diffs <= 0)):
        raise CalibrationError("total infected population is not increasing in sigma over the grid")
    fit = linear_fit(grid, totals)
    sigma, err = fit.solve(inputs.r0)
    notes = []
    extrapolated = not min(totals) <= inputs.r0 <= max(totals)
    if extrapolated:
        msg = f"R0={inputs.r0} lies outside the simulated totals [{min(totals):.4g}, {max(totals):.4g}]; sigma is extrapolated"
        warnings.warn(msg, CalibrationWarning, stacklevel=2)
        notes.append(msg)
    if not sigma > 0:
        raise CalibrationError(f"linear fit gives non-positive sigma {sigma:.4g}")
    return SigmaCalibration(sigma, err, grid, totals, errs, fit, extrapolated, notes)


@dataclass
class SincFit:
    lam: float
    lam_stderr: float
    delta_t: float
    delta_t_stderr: float


def fit_sinc(gammas, rates, alpha: float = math.pi, guess=(0.2, 1.0)) -> SincFit:
    """Least-squares fit of ``rate = lam**2 dt sinc**2((gamma - alpha) dt)`` for ``(lam, dt)``."""

    def f(g, lam, dt):
        return sinc_rate(g, lam, alpha, dt)

    popt, pcov = curve_fit(f, np.asarray(gammas, float), np.asarray(rates, float), p0=guess)
    err = np.sqrt(np.diag(pcov))
    return SincFit(float(abs(popt[0])), float(err[0]), float(popt[1]), float(err[1]))


def gamma_scan(lam: float, gammas, horizon: int = 7, settings: SimSettings | None = None):
    """Fitted household rates ``(rates, stderrs)`` for every coupling in ``gammas``."""
    settings = settings or SimSettings()
    fits = [household_rate(lam, horizon, g, settings, key=k) for k, g in enumerate(gammas)]
    return np.array([f.rate for f in fits]), np.array([f.stderr for f in fits])


def rescaled_survival(model: EpidemicModel, physical_days, lam_ref: float, exponent: float = 2.0) -> np.ndarray:
    """Survival of every site at the physical ``days`` from a run at ``model.lam``.

    The run covers computer time ``a * max(days)``; values between reset
    boundaries are interpolated linearly in ``ln P``.
    """
    a = rescale_time(lam_ref, abs(model.lam), exponent)
    days = np.asarray(physical_days, dtype=float)
    comp = a * days
    n_int = max(1, math.ceil(comp.max() / model.delta_t - 1e-9))
    series = run_protocol(model, n_int * model.delta_t)
    logp = np.log(np.maximum(series.survival, 1e-300))
    out = np.empty((len(days), series.survival.shape[1]))
    for j in range(out.shape[1]):
        out[:, j] = np.exp(np.interp(comp, series.times, logp[:, j]))
    return out
