"""Independent reference engines for the spin epidemic model.

Two oracles are provided:

* a classical Markov chain over system bit strings, built from the
  second-order (in lam) transition matrix and the index-reset matrix;
* a fourth-order Runge-Kutta integrator of ``d rho / dt = -i [H, rho]`` with
  the same reset channels as the Trotter engine.

Markov configurations are ordered with the susceptible bits first and the
index bits last, both big-endian, so for one patient and one site the basis
is ``|m_S m_I>`` = 00, 01, 10, 11.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import state as qs
from .errors import ConfigurationError, EngineRefusal, PerturbativeRegimeError
from .model import EpidemicModel, integer_ratio
from .timeseries import TimeSeries

MAX_MARKOV_SITES = 12
MAX_RK4_QUBITS = 12
RK4_STEP = 1e-3
TRACE_TOL = 1e-8
NEG_DUST = 1e-12
SINGULAR_TOL = 1e-9
MARKOV = "markov"
RK4 = "rk4"


# ---------------------------------------------------------------------------
# classical Markov chain


def config_bits(model: EpidemicModel, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(index_bits, susceptible_bits)`` of Markov configuration ``n``."""
    nI, nS = model.n_index, model.n_susceptible
    bits = (n >> np.arange(nS + nI - 1, -1, -1)) & 1
    return bits[nS:], bits[:nS]


def config_index(model: EpidemicModel, index_bits, susceptible_bits) -> int:
    n = 0
    for b in list(susceptible_bits) + list(index_bits):
        n = (n << 1) | int(b)
    return n


def config_energy(model: EpidemicModel, n: int) -> float:
    """``E_n = -sum gamma_ij z_i z_j`` with ``z = +1`` for bit 0."""
    ib, sb = config_bits(model, n)
    zi = 1.0 - 2.0 * ib
    zs = 1.0 - 2.0 * sb
    return float(-(zi @ model.gamma @ zs))


def _all_energies(model: EpidemicModel) -> np.ndarray:
    nI, nS = model.n_index, model.n_susceptible
    n = np.arange(1 << (nI + nS))
    bits = (n[:, None] >> np.arange(nS + nI - 1, -1, -1)[None, :]) & 1
    zs = 1.0 - 2.0 * bits[:, :nS]
    zi = 1.0 - 2.0 * bits[:, nS:]
    return -np.einsum("ni,ij,nj->n", zi, model.gamma, zs)


def transition_coefficient(omega, t: float):
    """``(1 - cos(omega t)) / omega**2`` with the ``t**2 / 2`` limit at ``omega = 0``."""
    omega = np.asarray(omega, dtype=float)
    small = np.abs(omega * t) < 1e-4
    safe = np.where(small, 1.0, omega)
    # 2 sin^2(x/2) avoids the cancellation in 1 - cos(x)
    out = np.where(small, t * t / 2.0 - (omega * omega) * t**4 / 24.0, 2.0 * np.sin(0.5 * safe * t) ** 2 / safe**2)
    return float(out) if out.ndim == 0 else out


def _check_markov_size(model: EpidemicModel) -> None:
    if model.n_sites > MAX_MARKOV_SITES:
        raise EngineRefusal(
            f"markov engine supports at most {MAX_MARKOV_SITES} sites, model has {model.n_sites}",
            n_qubits=model.n_qubits,
            engine=MARKOV,
        )


def flip_coefficients(model: EpidemicModel, t: float | None = None):
    """``A[n, j]`` for susceptible flips and ``B[n, i]`` for index flips."""
    t = model.delta_t if t is None else t
    nI, nS = model.n_index, model.n_susceptible
    alpha = model.alpha_value
    energy = _all_energies(model)
    n = np.arange(len(energy))
    a = np.empty((len(n), nS))
    b = np.empty((len(n), nI))
    for j in range(nS):
        flipped = n ^ (1 << (nS + nI - 1 - j))
        a[:, j] = transition_coefficient(-2.0 * nI * alpha + energy - energy[flipped], t)
    for i in range(nI):
        flipped = n ^ (1 << (nI - 1 - i))
        b[:, i] = transition_coefficient(-2.0 * nS * alpha + energy - energy[flipped], t)
    return a, b


def second_order_matrix(model: EpidemicModel, include_index_flips: bool = True) -> np.ndarray:
    """Column-stochastic transition matrix ``S = 1 + lam**2 S2`` over one reset interval."""
    _check_markov_size(model)
    nI, nS = model.n_index, model.n_susceptible
    a, b = flip_coefficients(model)
    if not include_index_flips:
        b = np.zeros_like(b)
    lam2 = model.lam * model.lam
    dim = 1 << (nI + nS)
    n = np.arange(dim)
    s = np.zeros((dim, dim))
    for j in range(nS):
        s[n ^ (1 << (nS + nI - 1 - j)), n] += 2.0 * lam2 * a[:, j]
    for i in range(nI):
        s[n ^ (1 << (nI - 1 - i)), n] += 2.0 * lam2 * b[:, i]
    s[n, n] = 1.0 - 2.0 * lam2 * (a.sum(axis=1) + b.sum(axis=1))
    worst = float(s.min())
    if worst < -NEG_DUST:
        raise PerturbativeRegimeError(
            f"lambda={model.lam} leaves the second-order regime (matrix entry {worst:.3g} < 0)", lam=model.lam
        )
    return np.maximum(s, 0.0)


def reset_matrix(model: EpidemicModel) -> np.ndarray:
    """Move the probability of ``(m_S, m_I)`` onto ``(m_S, all ones)``."""
    _check_markov_size(model)
    nI = model.n_index
    dim = 1 << model.n_sites
    n = np.arange(dim)
    r = np.zeros((dim, dim))
    r[n | ((1 << nI) - 1), n] = 1.0
    return r


def initial_distribution(model: EpidemicModel) -> np.ndarray:
    p = np.zeros(1 << model.n_sites)
    p[(1 << model.n_index) - 1] = 1.0
    return p


def markov_evolve(
    model: EpidemicModel,
    days: float,
    s: np.ndarray | None = None,
    r: np.ndarray | None = None,
    p0: np.ndarray | None = None,
) -> TimeSeries:
    """Apply ``R S`` once per reset interval and record per-site survival."""
    n_int = integer_ratio(days, model.delta_t, "protocol length in reset intervals")
    s = second_order_matrix(model) if s is None else s
    r = reset_matrix(model) if r is None else r
    p = initial_distribution(model) if p0 is None else np.asarray(p0, dtype=float)
    nS, nI = model.n_susceptible, model.n_index
    n = np.arange(len(p))
    clean = np.stack([((n >> (nS + nI - 1 - j)) & 1) == 0 for j in range(nS)], axis=1)
    rs = r @ s
    surv = [p @ clean]
    for _ in range(n_int):
        p = rs @ p
        surv.append(p @ clean)
    surv = np.clip(np.array(surv), 0.0, 1.0)
    times = model.delta_t * np.arange(n_int + 1)
    return TimeSeries(times, list(model.site_ids), surv, np.zeros_like(surv), model.populations, 0, MARKOV)


def flip_probability(model: EpidemicModel) -> np.ndarray:
    """Per-interval infection probability of every susceptible site from the initial state."""
    series = markov_evolve(model, model.delta_t)
    return 1.0 - series.survival[1]


@dataclass
class DecayAnalysis:
    eigenvalues: np.ndarray
    rate: float
    diagonalizable: bool
    a0: float | None = None
    a1: float | None = None


def pair_coefficients(gamma: float, alpha: float, delta_t: float) -> tuple[float, float]:
    """Recovery and infection coefficients ``(A0, A1)`` of one patient and one site."""

    def f(w):
        return delta_t**2 if w == 0 else math.sin(w * delta_t) ** 2 / w**2

    return f(gamma + alpha), f(gamma - alpha)


def decay_analysis(model: EpidemicModel) -> DecayAnalysis:
    """Spectrum of ``R S`` and the slowest decay rate.

    The rate is ``-ln(mu) / dt`` for the largest eigenvalue ``mu`` below 1.
    For one patient and one site the eigenvector matrix is singular when
    ``A0 == A1`` and the result is flagged as not diagonalizable.
    """
    rs = reset_matrix(model) @ second_order_matrix(model)
    w, v = np.linalg.eig(rs)
    w_sorted = w[np.argsort(-np.abs(w))]
    sub = [x for x in w_sorted if abs(x - 1.0) > 1e-12 and abs(x) > 1e-14]
    mu = float(np.real(sub[0])) if sub else 0.0
    rate = -math.log(mu) / model.delta_t if mu > 0 else math.inf
    if model.n_index == 1 and model.n_susceptible == 1:
        a0, a1 = pair_coefficients(float(model.gamma[0, 0]), model.alpha_value, model.delta_t)
        diag = abs(a0 - a1) > SINGULAR_TOL * max(a0, a1, 1e-300)
        return DecayAnalysis(w_sorted, rate, diag, a0, a1)
    diag = bool(np.linalg.cond(v) < 1.0 / SINGULAR_TOL)
    return DecayAnalysis(w_sorted, rate, diag)


def pair_decay_rate(lam: float, gamma: float, alpha: float, delta_t: float) -> float:
    """``(1/dt) ln(1 / (1 - lam**2 (A0 + A1)))`` for one patient and one site."""
    a0, a1 = pair_coefficients(gamma, alpha, delta_t)
    x = 1.0 - lam * lam * (a0 + a1)
    if x <= 0:
        raise PerturbativeRegimeError("decay eigenvalue is not positive", lam=lam)
    return math.log(1.0 / x) / delta_t


def multi_source_rate(gammas, lam: float, delta_t: float = 1.0, alpha=None) -> float:
    """Resonance-law rate of a site coupled to several index patients.

    ``alpha`` defaults to ``pi / (len(gammas) dt)`` per patient.
    """
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    a = np.full_like(g, math.pi / (len(g) * delta_t)) if alpha is None else np.broadcast_to(alpha, g.shape)
    x = float(np.sum(g - a)) * delta_t
    return lam * lam * delta_t * float(np.sinc(x / math.pi)) ** 2


def linearized_multi_source_rate(gammas, lam: float, delta_t: float = 1.0, k: int = 1) -> float:
    """Small-coupling form ``(sum sqrt(rate_i) / k)**2`` of the multi-source rate.

    ``rate_i`` is the single-patient rate at ``alpha dt = pi``.
    """
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    single = [multi_source_rate([x], lam, delta_t, math.pi / delta_t) for x in g]
    return float(np.sum(np.sqrt(single)) / k) ** 2


# ---------------------------------------------------------------------------
# Runge-Kutta integration of the von Neumann equation


def _check_rk4_size(model: EpidemicModel) -> None:
    if model.n_qubits > MAX_RK4_QUBITS:
        raise EngineRefusal(
            f"rk4 engine supports at most {MAX_RK4_QUBITS} qubits, model needs {model.n_qubits}",
            n_qubits=model.n_qubits,
            engine=RK4,
        )


def hamiltonian_parts(model: EpidemicModel):
    """Diagonal of ``H_s + H_b`` and the XX flip permutations, full qubit register."""
    n = model.n_qubits
    diag = np.zeros(1 << n)
    for i in range(model.n_index):
        for j in range(model.n_susceptible):
            sj = model.susceptible_site(j)
            diag -= model.gamma[i, j] * qs.zz_signs(n, i, sj)
            diag -= model.alpha_value * qs.zz_signs(n, model.bath_qubit(i), model.bath_qubit(sj))
    flips = [qs.xx_flip_index(n, k, model.bath_qubit(k)) for k in range(model.n_sites)]
    return diag, flips


def hamiltonian_matrix(model: EpidemicModel) -> np.ndarray:
    """Dense ``H`` (for small systems and tests)."""
    diag, flips = hamiltonian_parts(model)
    dim = len(diag)
    h = np.diag(diag).astype(complex)
    for f in flips:
        h[np.arange(dim), f] -= model.lam
    return h


def _rk4(deriv, x: np.ndarray, h: float, n_steps: int) -> np.ndarray:
    for _ in range(n_steps):
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * h * k1)
        k3 = deriv(x + 0.5 * h * k2)
        k4 = deriv(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _commutator(apply_h):
    def deriv(rho):
        m = apply_h(rho)
        # rho stays Hermitian, so rho H = (H rho)^dagger
        return -1j * (m - m.conj().T)

    return deriv


def rk4_propagate(model: EpidemicModel, rho: np.ndarray, t: float, h: float = RK4_STEP) -> np.ndarray:
    """Integrate ``d rho/dt = -i [H, rho]`` on the full register for time ``t``."""
    _check_rk4_size(model)
    n_steps = integer_ratio(t, h, "RK4 steps")
    diag, flips = hamiltonian_parts(model)
    lam = model.lam

    def apply_h(r):
        out = diag[:, None] * r
        for f in flips:
            out = out - lam * r[f]
        return out

    return _rk4(_commutator(apply_h), np.asarray(rho, dtype=complex), t / n_steps, n_steps)


class _SectorLayout:
    """Index bookkeeping for the conserved-parity representation.

    ``H`` conserves ``s_k xor b_k`` at every site.  After the resets every
    index site has parity 1 and a susceptible site's parity equals its
    system bit.  The joint state is therefore a set of blocks
    ``rho[c, c'][x, x']`` between parity sectors ``c, c'`` (one per
    susceptible configuration), where ``x`` runs over all system bits and the
    bath bits are ``x xor (1_I, c)``.  ``H`` acts on sector ``c`` as the real
    matrix ``blocks[c]``.
    """

    def __init__(self, model: EpidemicModel):
        nI, nS, ns = model.n_index, model.n_susceptible, model.n_sites
        self.k = 1 << nS
        self.d = 1 << ns
        x = np.arange(self.d)

        def spins(v):
            return 1.0 - 2.0 * ((v[:, None] >> np.arange(ns - 1, -1, -1)[None, :]) & 1)

        zs = spins(x)
        alpha = model.alpha_value
        self.blocks = np.zeros((self.k, self.d, self.d))
        for c in range(self.k):
            zb = spins(x ^ ((((1 << nI) - 1) << nS) | c))
            diag = np.zeros(self.d)
            for i in range(nI):
                for j in range(nS):
                    diag -= model.gamma[i, j] * zs[:, i] * zs[:, nI + j]
                    diag -= alpha * zb[:, i] * zb[:, nI + j]
            self.blocks[c, x, x] = diag
            for k in range(ns):
                self.blocks[c, x, x ^ (1 << (ns - 1 - k))] -= model.lam
        # post-reset basis state |1_I, s, 0_B> lives in sector s at x = (1_I, s)
        s = np.arange(self.k)
        self.entry = (((1 << nI) - 1) << nS) | s
        # trace over index and bath bits:
        # rho_S[s, t] = sum_{c, i} rho[c, c ^ s ^ t][(i, s), (i, t)]
        self.si, self.ti, self.ci, ii = np.meshgrid(s, s, s, np.arange(1 << nI), indexing="ij")
        self.cj = self.ci ^ self.si ^ self.ti
        self.xs = (ii << nS) | self.si
        self.xt = (ii << nS) | self.ti


def _interval_blocks(lay: _SectorLayout, h: float, n_steps: int) -> np.ndarray:
    """RK4-evolve every post-reset basis operator ``|s><t|`` over one interval.

    The equation is linear and the same in every interval, so the evolved
    basis operators give the whole protocol.  Returns real and imaginary
    parts stacked as ``out[2, c, c', x, x']``.
    """
    k, d = lay.k, lay.d
    y = np.zeros((2, k, k, d, d))
    c = np.arange(k)
    y[0, c[:, None], c[None, :], lay.entry[:, None], lay.entry[None, :]] = 1.0
    left = lay.blocks[:, None]
    right = lay.blocks[None, :]

    def deriv(y):
        # -i [H, X] for X = Xr + i Xi and real H
        com_r = np.matmul(left, y[0]) - np.matmul(y[0], right)
        com_i = np.matmul(left, y[1]) - np.matmul(y[1], right)
        return np.stack([com_i, -com_r])

    return _rk4(deriv, y, h, n_steps)


def rk4_evolve(model: EpidemicModel, days: float, h: float = RK4_STEP) -> TimeSeries:
    """Reset protocol with RK4 integration of the von Neumann equation between resets."""
    _check_rk4_size(model)
    n_int = integer_ratio(days, model.delta_t, "protocol length in reset intervals")
    n_steps = integer_ratio(model.delta_t, h, "RK4 steps per reset interval")
    sub, keep = model.pruned()
    times = model.delta_t * np.arange(n_int + 1)
    surv = np.ones((n_int + 1, model.n_susceptible))
    if sub is not None:
        lay = _SectorLayout(sub)
        y = _interval_blocks(lay, model.delta_t / n_steps, n_steps)
        phi = y[0] + 1j * y[1]
        c = np.arange(lay.k)
        traces = np.trace(phi[c, c], axis1=1, axis2=2).real
        drift = float(np.max(np.abs(traces - 1.0)))
        if drift > TRACE_TOL:
            raise ConfigurationError(f"RK4 trace drift {drift:.3g} exceeds {TRACE_TOL}; reduce the step size")
        w = phi[lay.ci, lay.cj, lay.xs, lay.xt]
        rho_s = np.zeros((lay.k, lay.k), dtype=complex)
        rho_s[0, 0] = 1.0
        bits = (c[:, None] >> np.arange(sub.n_susceptible - 1, -1, -1)[None, :]) & 1
        for t in range(1, n_int + 1):
            rho_s = (rho_s[lay.ci, lay.cj] * w).sum(axis=(2, 3))
            rho_s = 0.5 * (rho_s + rho_s.conj().T)
            p = np.real(np.diagonal(rho_s))
            surv[t, keep] = (p[:, None] * (1 - bits)).sum(axis=0)
    surv = np.clip(surv, 0.0, 1.0)
    return TimeSeries(times, list(model.site_ids), surv, np.zeros_like(surv), model.populations, 0, RK4)
