"""Model description shared by all engines.

Site layout: index patients are sites ``0..n_index-1``, susceptible sites
follow.  System qubit ``k`` is site ``k``; its bath partner is qubit
``k + n_sites``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ModelError

GAMMA_MIN = 1e-6
STEP_TOL = 1e-9

SYSTEM_ZZ = "system_zz"
COUPLING_XX = "coupling_xx"
BATH_ZZ = "bath_zz"


def auto_alpha(n_index: int, delta_t: float) -> float:
    """Inter-bath coupling ``pi / (|I| dt)`` that puts every site on resonance at zero contact."""
    if n_index < 1:
        raise ModelError(f"need at least one index patient, got {n_index}")
    if delta_t <= 0:
        raise ModelError(f"reset interval must be positive, got {delta_t}")
    return math.pi / (n_index * delta_t)


def integer_ratio(total: float, step: float, what: str) -> int:
    """``total / step`` as an integer, or ConfigurationError if it is not one."""
    if step <= 0 or total <= 0:
        raise ConfigurationError(f"{what}: durations must be positive ({total}, {step})")
    ratio = total / step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > STEP_TOL * max(1.0, ratio):
        raise ConfigurationError(f"{what}: {total} is not an integer multiple of {step}")
    return n


@dataclass
class EpidemicModel:
    """Parameters of the system-bath spin Hamiltonian and its reset schedule.

    ``gamma[i, j]`` couples index patient ``i`` to susceptible site ``j``.
    ``alpha=None`` selects ``pi / (|I| delta_t)``.
    """

    gamma: np.ndarray
    lam: float
    alpha: float | None = None
    delta_t: float = 1.0
    trotter_dt: float = 0.01
    populations: np.ndarray | None = None
    site_ids: list[int] | None = None
    bath_delta_t: float | None = None

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ModelError(f"gamma must be a non-empty |I| x |S| matrix, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ModelError("gamma contains non-finite entries")
        if np.any(g < 0):
            raise ModelError("inter-system couplings gamma must be non-negative")
        self.gamma = g
        if not math.isfinite(self.lam):
            raise ModelError(f"lambda must be finite, got {self.lam}")
        if self.delta_t <= 0 or self.trotter_dt <= 0:
            raise ModelError("delta_t and trotter_dt must be positive")
        if self.alpha is not None and not self.alpha > 0:
            raise ModelError(f"alpha must be positive, got {self.alpha}")
        if self.populations is None:
            self.populations = np.ones(self.n_susceptible)
        self.populations = np.asarray(self.populations, dtype=float).reshape(-1)
        if self.populations.shape != (self.n_susceptible,) or np.any(self.populations <= 0):
            raise ModelError("need one positive population per susceptible site")
        if self.site_ids is None:
            self.site_ids = list(range(self.n_index, self.n_sites))
        if len(self.site_ids) != self.n_susceptible:
            raise ModelError("need one site id per susceptible site")
        if self.bath_delta_t is not None and abs(self.bath_delta_t - self.delta_t) > STEP_TOL:
            raise ConfigurationError(
                "bath reset interval different from the index reset interval is not supported"
            )

    @property
    def n_index(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_susceptible(self) -> int:
        return self.gamma.shape[1]

    @property
    def n_sites(self) -> int:
        return self.n_index + self.n_susceptible

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    @property
    def alpha_value(self) -> float:
        return auto_alpha(self.n_index, self.delta_t) if self.alpha is None else float(self.alpha)

    @property
    def trotter_steps(self) -> int:
        return integer_ratio(self.delta_t, self.trotter_dt, "Trotter steps per reset interval")

    def system_qubit(self, site: int) -> int:
        return site

    def bath_qubit(self, site: int) -> int:
        return site + self.n_sites

    def susceptible_site(self, j: int) -> int:
        return self.n_index + j

    def with_lambda(self, lam: float) -> "EpidemicModel":
        return replace(self, lam=float(lam))

    def active_sites(self) -> np.ndarray:
        """Susceptible sites with at least one coupling above ``GAMMA_MIN``."""
        return np.flatnonzero(self.gamma.max(axis=0) >= GAMMA_MIN)

    def pruned(self) -> tuple["EpidemicModel", np.ndarray]:
        """Drop susceptible sites that no index patient couples to.

        Returns the reduced model and the kept column indices.  ``None`` as
        the model means no site is left.
        """
        keep = self.active_sites()
        if len(keep) == self.n_susceptible:
            return self, keep
        if len(keep) == 0:
            return None, keep
        sub = replace(
            self,
            gamma=self.gamma[:, keep],
            populations=self.populations[keep],
            site_ids=[self.site_ids[k] for k in keep],
            alpha=self.alpha_value,
        )
        return sub, keep


@dataclass(frozen=True)
class HamiltonianTerm:
    kind: str
    qubits: tuple[int, int]
    coefficient: float


def build_terms(model: EpidemicModel) -> list[HamiltonianTerm]:
    """Pauli terms of the full Hamiltonian in canonical Trotter order.

    System ZZ terms sorted by ``(i, j)``, then XX couplings by site, then bath
    ZZ terms sorted by ``(i, j)``.
    """
    if np.any(model.gamma < 0):
        raise ModelError("inter-system couplings gamma must be non-negative")
    nI, nS = model.n_index, model.n_susceptible
    alpha = model.alpha_value
    system = [
        HamiltonianTerm(SYSTEM_ZZ, (i, model.susceptible_site(j)), -float(model.gamma[i, j]))
        for i in range(nI)
        for j in range(nS)
    ]
    coupling = [
        HamiltonianTerm(COUPLING_XX, (k, model.bath_qubit(k)), -float(model.lam))
        for k in range(model.n_sites)
    ]
    bath = [
        HamiltonianTerm(
            BATH_ZZ, (model.bath_qubit(i), model.bath_qubit(model.susceptible_site(j))), -alpha
        )
        for i in range(nI)
        for j in range(nS)
    ]
    return system + coupling + bath


def configuration_energy(model: EpidemicModel, index_bits, susceptible_bits) -> float:
    """System energy ``-sum gamma_ij z_i z_j`` of a configuration (bit 1 = infected)."""
    zi = 1.0 - 2.0 * np.asarray(index_bits, dtype=float)
    zs = 1.0 - 2.0 * np.asarray(susceptible_bits, dtype=float)
    return float(-(zi @ model.gamma @ zs))


@dataclass
class ResolvedParameters:
    """Plain-data view of a model, for manifests."""

    gamma: list[list[float]]
    lam: float
    alpha: float
    delta_t: float
    trotter_dt: float
    populations: list[float]
    site_ids: list[int]
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: EpidemicModel, **extra) -> "ResolvedParameters":
        return cls(
            gamma=model.gamma.tolist(),
            lam=float(model.lam),
            alpha=model.alpha_value,
            delta_t=float(model.delta_t),
            trotter_dt=float(model.trotter_dt),
            populations=model.populations.tolist(),
            site_ids=list(model.site_ids),
            extra=dict(extra),
        )
