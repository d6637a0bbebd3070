"""Per-site survival curves and single-exponential rate fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import FitDomainError

log = logging.getLogger(__name__)

CHI2_THRESHOLD = 10.0
DEFAULT_WINDOW = (1.0, 7.0)


@dataclass
class TimeSeries:
    """Survival probabilities ``survival[t, j]`` of susceptible site ``site_ids[j]``."""

    times: np.ndarray
    site_ids: list[int]
    survival: np.ndarray
    stderr: np.ndarray
    populations: np.ndarray
    shots: int = 0
    engine: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.survival = np.asarray(self.survival, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        self.populations = np.asarray(self.populations, dtype=float)

    @property
    def infected_population(self) -> np.ndarray:
        return self.populations[None, :] * (1.0 - self.survival)

    def total_infected(self, day: float) -> float:
        return float(self.infected_population[self._row(day)].sum())

    def column(self, site_id: int) -> int:
        return self.site_ids.index(site_id)

    def at(self, day: float, site_id: int | None = None):
        row = self.survival[self._row(day)]
        return row if site_id is None else float(row[self.column(site_id)])

    def _row(self, day: float) -> int:
        hits = np.flatnonzero(np.isclose(self.times, day, atol=1e-9))
        if len(hits) == 0:
            raise KeyError(f"day {day} not recorded")
        return int(hits[0])

    def rows(self):
        """``(day, site_id, survival, stderr, infected)`` tuples, day-major."""
        infected = self.infected_population
        for t, day in enumerate(self.times):
            for j, sid in enumerate(self.site_ids):
                yield (
                    float(day),
                    int(sid),
                    float(self.survival[t, j]),
                    float(self.stderr[t, j]),
                    float(infected[t, j]),
                )


@dataclass
class RateFit:
    rate: float
    stderr: float
    reduced_chi2: float
    single_exponential: bool
    n_points: int


def fit_decay_rate(times, survival, stderr=None, shots: int = 0) -> RateFit:
    """Least-squares fit of ``ln P(t) = -rate * t`` through the origin.

    Points with a statistical error are weighted by ``(P / stderr)**2``; with
    no errors the fit is unweighted and the rate error comes from the
    residual scatter.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(survival, dtype=float)
    if len(t) < 3:
        raise FitDomainError(f"need at least 3 time points, got {len(t)}")
    if np.any(p <= 0):
        raise FitDomainError("survival probabilities must be positive to take logs")
    y = np.log(p)
    n = len(t)
    sig = None if stderr is None else np.asarray(stderr, dtype=float)
    if sig is not None and np.any(sig > 0):
        floor = 0.5 / shots if shots else np.min(sig[sig > 0])
        sig_y = np.maximum(sig, floor) / p
        w = 1.0 / sig_y**2
        stt = float(np.sum(w * t * t))
        rate = -float(np.sum(w * t * y)) / stt
        resid = y + rate * t
        chi2 = float(np.sum(w * resid**2)) / (n - 1)
        err = 1.0 / np.sqrt(stt)
        single = chi2 <= CHI2_THRESHOLD
    else:
        stt = float(np.sum(t * t))
        rate = -float(np.sum(t * y)) / stt
        resid = y + rate * t
        err = float(np.sqrt(np.sum(resid**2) / (n - 1) / stt))
        chi2 = float("nan")
        single = True
    if not single:
        log.warning("survival curve is not single-exponential (reduced chi2 %.3g)", chi2)
    return RateFit(rate=rate, stderr=float(err), reduced_chi2=chi2, single_exponential=single, n_points=n)


def extract_infection_rate(series: TimeSeries, site_id: int, window=DEFAULT_WINDOW) -> RateFit:
    """Infection rate of ``site_id`` from the points with ``window[0] <= t <= window[1]``."""
    lo, hi = window
    sel = (series.times >= lo - 1e-9) & (series.times <= hi + 1e-9)
    j = series.column(site_id)
    return fit_decay_rate(series.times[sel], series.survival[sel, j], series.stderr[sel, j], series.shots)
