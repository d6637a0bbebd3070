"""Trotterised system-bath evolution with periodic resets.

Protocol: index patients start in ``|1>``, susceptible sites and the bath in
``|0>``.  Each reset interval applies ``delta_t / trotter_dt`` first-order
Trotter steps, resets every bath qubit to ``|0>`` and every index qubit to
``|1>``, then records ``P_j = (1 + <Z_j>) / 2`` for the susceptible sites.

After the resets the joint state is always ``|1_I 0_B><1_I 0_B| (x) rho_S``,
so one interval is fully described by the propagator restricted to the
``2**|S|`` post-reset basis states.  The protocol runners below exploit this:
the density-matrix update acts on ``rho_S`` only, and trajectories carry a
``2**|S|`` statevector between resets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import state as qs
from .errors import ConfigurationError, EngineRefusal
from .model import (
    BATH_ZZ,
    COUPLING_XX,
    SYSTEM_ZZ,
    EpidemicModel,
    HamiltonianTerm,
    build_terms,
    integer_ratio,
)
from .timeseries import TimeSeries, extract_infection_rate  # noqa: F401  (re-export)

DENSITY = "density"
SHOTS = "shots"
TRAJECTORIES = "trajectories"
MODES = (DENSITY, SHOTS, TRAJECTORIES)

MAX_DENSITY_QUBITS = 12
MAX_TRAJECTORY_QUBITS = 20
TRAJECTORY_CHUNK = 2048


class TrotterStep:
    """One first-order Trotter step compiled for ``n_qubits``.

    Mutually commuting diagonal terms that are adjacent in the canonical
    order are merged into a single phase vector; this is exact.
    """

    def __init__(self, terms: list[HamiltonianTerm], n_qubits: int, dt: float):
        self.n_qubits = n_qubits
        self.ops: list[tuple] = []
        diag = None
        for term in terms:
            a, b = term.qubits
            theta = 2.0 * term.coefficient * dt
            if term.kind in (SYSTEM_ZZ, BATH_ZZ):
                signs = qs.zz_signs(n_qubits, a, b)
                diag = -0.5 * theta * signs if diag is None else diag - 0.5 * theta * signs
            elif term.kind == COUPLING_XX:
                if diag is not None:
                    self.ops.append(("diag", np.exp(1j * diag)))
                    diag = None
                self.ops.append(
                    ("xx", qs.xx_flip_index(n_qubits, a, b), np.cos(0.5 * theta), np.sin(0.5 * theta))
                )
            else:
                raise ConfigurationError(f"unknown term kind {term.kind!r}")
        if diag is not None:
            self.ops.append(("diag", np.exp(1j * diag)))

    def apply(self, m: np.ndarray) -> np.ndarray:
        """Apply the step to every column of ``m`` (shape ``(2**n, k)`` or ``(2**n,)``)."""
        for op in self.ops:
            if op[0] == "diag":
                m = m * (op[1] if m.ndim == 1 else op[1][:, None])
            else:
                _, flip, c, s = op
                m = c * m - 1j * s * m[flip]
        return m


def trotter_interval(
    state: qs.QuantumState, terms: list[HamiltonianTerm], delta_t: float, dt: float
) -> qs.QuantumState:
    """Evolve ``state`` for ``delta_t`` with ``delta_t / dt`` first-order Trotter steps."""
    n_steps = integer_ratio(delta_t, dt, "Trotter steps per interval")
    step = TrotterStep(terms, state.n_qubits, dt)
    data = state.data
    if state.mode == qs.PURE:
        for _ in range(n_steps):
            data = step.apply(data)
        return qs.QuantumState(qs.PURE, state.n_qubits, data)
    for _ in range(n_steps):
        data = step.apply(data)
        data = step.apply(data.conj().T).conj().T
    return qs.QuantumState(qs.DENSITY, state.n_qubits, data)


def post_reset_index(model: EpidemicModel, s: int) -> int:
    """Basis index of ``|1_I, s, 0_B>`` for susceptible configuration ``s``."""
    nI, nS, ns = model.n_index, model.n_susceptible, model.n_sites
    return ((((1 << nI) - 1) << nS) | s) << ns


def interval_propagator(model: EpidemicModel) -> np.ndarray:
    """Trotterised interval evolution applied to every post-reset basis state.

    Column ``s`` is ``U_interval |1_I, s, 0_B>``; shape ``(2**n_qubits, 2**|S|)``.
    """
    k = 1 << model.n_susceptible
    v = np.zeros((1 << model.n_qubits, k), dtype=np.complex128)
    v[[post_reset_index(model, s) for s in range(k)], np.arange(k)] = 1.0
    step = TrotterStep(build_terms(model), model.n_qubits, model.trotter_dt)
    for _ in range(model.trotter_steps):
        v = step.apply(v)
    return v


def _split(model: EpidemicModel, v: np.ndarray) -> np.ndarray:
    """View propagator columns as ``[index bits, susceptible bits, bath bits, column]``."""
    return v.reshape(1 << model.n_index, 1 << model.n_susceptible, 1 << model.n_sites, -1)


def _susceptible_bits(n_susceptible: int) -> np.ndarray:
    s = np.arange(1 << n_susceptible)
    return (s[:, None] >> (n_susceptible - 1 - np.arange(n_susceptible))[None, :]) & 1


def reduced_interval(model: EpidemicModel, v: np.ndarray, rho_s: np.ndarray) -> np.ndarray:
    """One interval plus resets acting on the susceptible density matrix."""
    k = rho_s.shape[0]
    v4 = _split(model, v)
    w = np.tensordot(v4, rho_s, axes=([3], [0]))
    w2 = np.moveaxis(w, 1, 0).reshape(k, -1)
    v2 = np.moveaxis(v4, 1, 0).reshape(k, -1)
    out = w2 @ v2.conj().T
    return 0.5 * (out + out.conj().T)


@dataclass
class _Run:
    model: EpidemicModel
    keep: np.ndarray
    n_intervals: int


def _prepare(model: EpidemicModel, days: float) -> _Run:
    n = integer_ratio(days, model.delta_t, "protocol length in reset intervals")
    sub, keep = model.pruned()
    return _Run(sub, keep, n)


def _assemble(model, run, times, surv_active, err_active, shots, engine) -> TimeSeries:
    surv = np.ones((len(times), model.n_susceptible))
    err = np.zeros_like(surv)
    if len(run.keep):
        surv[:, run.keep] = surv_active
        err[:, run.keep] = err_active
    return TimeSeries(
        times=times,
        site_ids=list(model.site_ids),
        survival=np.clip(surv, 0.0, 1.0),
        stderr=err,
        populations=model.populations,
        shots=shots,
        engine=engine,
    )


def _survival_from_probs(probs: np.ndarray, n_susceptible: int) -> np.ndarray:
    return (probs[:, None] * (1 - _susceptible_bits(n_susceptible))).sum(axis=0)


def density_curve(model: EpidemicModel, n_intervals: int) -> list[np.ndarray]:
    """Susceptible density matrices after each of ``n_intervals`` intervals (index 0 = start)."""
    k = 1 << model.n_susceptible
    rho = np.zeros((k, k), dtype=np.complex128)
    rho[0, 0] = 1.0
    v = interval_propagator(model)
    out = [rho]
    for _ in range(n_intervals):
        rho = reduced_interval(model, v, rho)
        out.append(rho)
    return out


def _trajectory_batch(model, v, n_intervals, shots, seed, t_index) -> np.ndarray:
    """Unravel the resets into ``shots`` trajectories ending at interval ``n_intervals``.

    Each trajectory measures the index and bath qubits at every boundary
    (equivalent to resetting them one by one) and a terminal Z measurement of
    the susceptible sites.  Returns the terminal bitstrings as integers.
    """
    nS = model.n_susceptible
    k = 1 << nS
    v4 = _split(model, v)
    outcomes = np.empty(shots, dtype=np.int64)
    for start in range(0, shots, TRAJECTORY_CHUNK):
        idx = np.arange(start, min(shots, start + TRAJECTORY_CHUNK))
        u = np.stack(
            [qs.trajectory_stream(seed, (t_index << 32) | int(i)).random(n_intervals + 1) for i in idx]
        )
        phi = np.zeros((len(idx), k), dtype=np.complex128)
        phi[:, 0] = 1.0
        for step in range(n_intervals):
            psi = np.einsum("isbk,nk->nisb", v4, phi)
            p_ib = np.sum(np.abs(psi) ** 2, axis=2).reshape(len(idx), -1)
            cdf = np.cumsum(p_ib, axis=1)
            cdf /= cdf[:, -1:]
            choice = np.minimum((u[:, step, None] >= cdf).sum(axis=1), cdf.shape[1] - 1)
            i_b = np.unravel_index(choice, (1 << model.n_index, 1 << model.n_sites))
            phi = psi[np.arange(len(idx)), i_b[0], :, i_b[1]]
            phi /= np.linalg.norm(phi, axis=1, keepdims=True)
        cdf = np.cumsum(np.abs(phi) ** 2, axis=1)
        cdf /= cdf[:, -1:]
        outcomes[idx] = np.minimum((u[:, -1, None] >= cdf).sum(axis=1), k - 1)
    return outcomes


def _check_size(model: EpidemicModel, mode: str) -> None:
    limit = MAX_DENSITY_QUBITS if mode in (DENSITY, SHOTS) else MAX_TRAJECTORY_QUBITS
    if model.n_qubits > limit:
        raise EngineRefusal(
            f"{mode} engine supports at most {limit} qubits, model needs {model.n_qubits}",
            n_qubits=model.n_qubits,
            engine=mode,
        )


def run_protocol(
    model: EpidemicModel,
    days: float,
    mode: str = DENSITY,
    shots: int = 4096,
    seed: int = 0,
) -> TimeSeries:
    """Survival curves of every susceptible site at ``t = 0, dt, ..., days``.

    ``density`` is exact.  ``shots`` samples the exact state with ``shots``
    terminal measurements per time point.  ``trajectories`` simulates
    ``shots`` independent trajectories per time point with measured resets.
    Every time point uses its own batch, as one circuit per data point would.
    """
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    _check_size(model, mode)
    if mode != DENSITY and shots <= 0:
        raise ConfigurationError(f"shots must be positive, got {shots}")
    run = _prepare(model, days)
    times = model.delta_t * np.arange(run.n_intervals + 1)
    nrec = len(run.keep)
    surv = np.ones((len(times), nrec))
    err = np.zeros_like(surv)
    used_shots = 0 if mode == DENSITY else int(shots)
    if run.model is None:
        return _assemble(model, run, times, surv, err, used_shots, mode)
    sub = run.model
    if mode in (DENSITY, SHOTS):
        rhos = density_curve(sub, run.n_intervals)
        for t, rho in enumerate(rhos):
            if mode == DENSITY or t == 0:
                surv[t] = _survival_from_probs(np.real(np.diagonal(rho)), sub.n_susceptible)
                continue
            st = qs.QuantumState(qs.DENSITY, sub.n_susceptible, rho)
            res = qs.sample_z(st, list(range(sub.n_susceptible)), shots, qs.derive_seed(seed, t))
            surv[t] = [res.frequency(j, "0") for j in range(sub.n_susceptible)]
    else:
        v = interval_propagator(sub)
        bits = _susceptible_bits(sub.n_susceptible)
        for t in range(1, len(times)):
            outcomes = _trajectory_batch(sub, v, t, shots, seed, t)
            surv[t] = 1.0 - bits[outcomes].mean(axis=0)
    if mode != DENSITY:
        err = np.sqrt(surv * (1.0 - surv) / shots)
    return _assemble(model, run, times, surv, err, used_shots, mode)


def run_protocol_reference(model: EpidemicModel, days: float) -> TimeSeries:
    """Full density-matrix protocol built from the generic state-engine operations.

    Slow (the whole ``2**n`` density matrix is evolved); used to cross-check
    the reduced runner on small systems.
    """
    _check_size(model, DENSITY)
    n_int = integer_ratio(days, model.delta_t, "protocol length in reset intervals")
    nI, ns = model.n_index, model.n_sites
    bits = "1" * nI + "0" * (model.n_qubits - nI)
    st = qs.init_basis_state(model.n_qubits, bits, qs.DENSITY)
    terms = build_terms(model)
    surv = [np.ones(model.n_susceptible)]
    for _ in range(n_int):
        st = trotter_interval(st, terms, model.delta_t, model.trotter_dt)
        for k in range(ns):
            st = qs.reset_qubit(st, model.bath_qubit(k), 0)
        for i in range(nI):
            st = qs.reset_qubit(st, model.system_qubit(i), 1)
        surv.append(
            [(1.0 + qs.expect_z(st, model.susceptible_site(j))) / 2.0 for j in range(model.n_susceptible)]
        )
    times = model.delta_t * np.arange(n_int + 1)
    surv = np.array(surv)
    return TimeSeries(times, list(model.site_ids), surv, np.zeros_like(surv), model.populations, 0, "reference")
