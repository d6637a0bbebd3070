"""Community layouts, Gaussian contact overlaps and the sinc-law inversion.

An index patient's movement is modelled as an isotropic 2-D Gaussian of
width ``sigma`` around their home.  A site's infection rate is the
household rate scaled by the mean of that Gaussian over the site's area.
The resonance law ``rate(gamma) = lam**2 dt sinc**2((gamma - alpha) dt)``
then turns rates into ZZ couplings.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FitDomainError, InfeasibleRateError

INDEX_PATIENT = "index_patient"
HOUSEHOLD = "household"
COMMUNITY = "community"
SITE_KINDS = (INDEX_PATIENT, HOUSEHOLD, COMMUNITY)

BISECT_TOL = 1e-13


@dataclass
class Site:
    id: int
    kind: str
    position: tuple[float, float] | None = None
    rect: tuple[float, float, float, float] | None = None
    population: float | None = None

    def __post_init__(self):
        if self.kind not in SITE_KINDS:
            raise ConfigurationError(f"site {self.id}: unknown kind {self.kind!r}")
        if self.rect is not None:
            x1, y1, x2, y2 = map(float, self.rect)
            if not (x1 <= x2 and y1 <= y2):
                raise ConfigurationError(f"site {self.id}: rectangle needs x1 <= x2 and y1 <= y2")
            self.rect = (x1, y1, x2, y2)
        if self.position is not None:
            self.position = tuple(map(float, self.position))
        if self.rect is None and self.position is None:
            raise ConfigurationError(f"site {self.id}: needs a position or a rectangle")
        if self.kind == INDEX_PATIENT and self.position is None:
            raise ConfigurationError(f"site {self.id}: index patients need a position")
        if self.kind != INDEX_PATIENT:
            if self.population is None or not self.population > 0:
                raise ConfigurationError(f"site {self.id}: susceptible sites need a positive population")

    @property
    def susceptible(self) -> bool:
        return self.kind != INDEX_PATIENT

    @property
    def area(self) -> tuple[float, float, float, float]:
        """The site as a rectangle; points become zero-size rectangles."""
        if self.rect is not None:
            return self.rect
        x, y = self.position
        return (x, y, x, y)

    @property
    def center(self) -> tuple[float, float]:
        x1, y1, x2, y2 = self.area
        return (0.5 * (x1 + x2), 0.5 * (y1 + y2))


@dataclass
class ContactProfile:
    sigma: float
    gamma_sar: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.gamma_sar > 0):
            raise ConfigurationError("sigma and gamma_sar must both be positive")


@dataclass
class CommunityMap:
    sites: list[Site] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("site ids must be unique")
        if not self.index_patients:
            raise ConfigurationError("need at least one index_patient site")

    @property
    def index_patients(self) -> list[Site]:
        return [s for s in self.sites if s.kind == INDEX_PATIENT]

    @property
    def susceptible(self) -> list[Site]:
        return [s for s in self.sites if s.susceptible]

    @property
    def populations(self) -> np.ndarray:
        return np.array([s.population for s in self.susceptible], dtype=float)

    @property
    def site_ids(self) -> list[int]:
        return [s.id for s in self.susceptible]

    def overlaps(self, sigma: float) -> np.ndarray:
        """``overlap[i, j]`` of index patient ``i``'s Gaussian with susceptible site ``j``."""
        return np.array(
            [[gaussian_overlap(s.area, p.position, sigma) for s in self.susceptible] for p in self.index_patients]
        )

    def overlapping_communities(self) -> list[tuple[int, int]]:
        rects = [s for s in self.susceptible if s.rect is not None]
        pairs = []
        for a in range(len(rects)):
            for b in range(a + 1, len(rects)):
                p, q = rects[a].rect, rects[b].rect
                if p[0] < q[2] and q[0] < p[2] and p[1] < q[3] and q[1] < p[3]:
                    pairs.append((rects[a].id, rects[b].id))
        return pairs


def _axis_average(a: float, b: float, c: float, sigma: float) -> float:
    """Mean of ``exp(-(x-c)**2 / 2 sigma**2)`` over ``[a, b]`` (point value if ``a == b``)."""
    if b - a <= 0.0:
        return math.exp(-((a - c) ** 2) / (2.0 * sigma * sigma))
    s = math.sqrt(2.0) * sigma
    u, v = (a - c) / s, (b - c) / s
    # subtract in the tail that keeps precision
    if u >= 0.0:
        diff = math.erfc(u) - math.erfc(v)
    elif v <= 0.0:
        diff = math.erfc(-v) - math.erfc(-u)
    else:
        diff = math.erf(v) - math.erf(u)
    return 0.5 * math.sqrt(math.pi) * s * diff / (b - a)


def gaussian_overlap(rect, r0, sigma: float) -> float:
    """Area-averaged Gaussian weight of an axis-aligned rectangle ``(x1, y1, x2, y2)``."""
    if not sigma > 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    x1, y1, x2, y2 = map(float, rect)
    if x2 < x1 or y2 < y1:
        raise ConfigurationError(f"invalid rectangle {rect}")
    return _axis_average(x1, x2, r0[0], sigma) * _axis_average(y1, y2, r0[1], sigma)


def site_infection_rate(profile: ContactProfile, site: Site, r0) -> float:
    if not site.susceptible:
        raise ConfigurationError(f"site {site.id} is not susceptible")
    return profile.gamma_sar * gaussian_overlap(site.area, r0, profile.sigma)


def sinc_rate(gamma, lam: float, alpha: float, delta_t: float):
    """Second-order infection rate ``lam**2 dt sinc**2((gamma - alpha) dt)``."""
    x = (np.asarray(gamma, dtype=float) - alpha) * delta_t
    out = lam * lam * delta_t * np.sinc(x / np.pi) ** 2
    return float(out) if np.ndim(out) == 0 else out


def invert_sinc(rate: float, lam: float, alpha: float, delta_t: float) -> float:
    """The coupling ``gamma`` in ``(0, alpha]`` whose resonance-law rate is ``rate``.

    Bisection on the increasing branch left of the resonance.
    """
    if not rate > 0:
        raise FitDomainError(f"rate must be positive, got {rate}")
    peak = lam * lam * delta_t
    if rate > peak * (1.0 + 1e-12):
        raise InfeasibleRateError(f"rate {rate:.6g} exceeds the resonance maximum {peak:.6g}")
    if alpha * delta_t > math.pi * (1.0 + 1e-12):
        raise ConfigurationError("the rate law is only monotone on (0, alpha] when alpha * delta_t <= pi")
    if rate >= peak:
        return float(alpha)
    if sinc_rate(0.0, lam, alpha, delta_t) >= rate:
        raise InfeasibleRateError(f"rate {rate:.6g} is below the zero-coupling floor")
    lo, hi = 0.0, float(alpha)
    while hi - lo > BISECT_TOL * max(1.0, alpha):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if sinc_rate(mid, lam, alpha, delta_t) < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def coupling_from_overlap(overlap: float, delta_t: float = 1.0) -> float:
    """ZZ coupling of a site whose rate is ``overlap`` times the household rate.

    The household itself sits on resonance (``gamma = alpha = pi / delta_t``),
    so the ratio fixes ``sinc**2((gamma - alpha) dt)`` independently of lam.
    Returns 0 for a vanishing overlap (the site decouples).
    """
    if not 0.0 <= overlap <= 1.0 + 1e-12:
        raise FitDomainError(f"overlap must lie in [0, 1], got {overlap}")
    if overlap <= 0.0:
        return 0.0
    return invert_sinc(min(overlap, 1.0) * delta_t, 1.0, math.pi / delta_t, delta_t)


def gamma_matrix(cmap: CommunityMap, sigma: float, delta_t: float = 1.0) -> np.ndarray:
    """Couplings ``gamma[i, j]`` from every index patient to every susceptible site.

    Each patient is converted with the single-patient law; patients share sigma.
    """
    if cmap.overlapping_communities():
        warnings.warn(f"overlapping community rectangles: {cmap.overlapping_communities()}", stacklevel=2)
    ov = cmap.overlaps(sigma)
    return np.vectorize(lambda o: coupling_from_overlap(o, delta_t))(ov) if ov.size else ov
