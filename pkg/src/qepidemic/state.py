"""Dense multi-qubit simulation kernel.

States are stored big-endian: qubit 0 is the most significant bit of the
basis index, so ``init_basis_state(2, "01")`` has its amplitude at index 1.
Two representations are supported, a statevector (``mode="pure"``) and a
density matrix (``mode="density"``).  Only the operations the spin model needs
are provided: ZZ and XX rotations, single-qubit reset, Z expectations and
Z-basis shot sampling.

Rotation convention: ``gate(theta) = exp(-i theta/2 P(x)P)``.  A Hamiltonian
term ``c * P(x)P`` evolved for a time ``dt`` therefore uses ``theta = 2 c dt``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidGateError

PURE = "pure"
DENSITY = "density"

NORM_TOL = 1e-10
EIG_TOL = 1e-9


def trajectory_stream(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based random stream for trajectory ``index``.

    The stream depends only on ``(master_seed, index)``, so results do not
    depend on the order in which trajectories are executed.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed for the sub-task labelled ``keys`` (grid point, time point, ...)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, np.uint64)[0])


def basis_indices(n_qubits: int) -> np.ndarray:
    return np.arange(1 << n_qubits, dtype=np.int64)


def qubit_mask(n_qubits: int, q: int) -> int:
    return 1 << (n_qubits - 1 - q)


def z_signs(n_qubits: int, q: int) -> np.ndarray:
    """Eigenvalue of ``Z_q`` on every basis state (+1 for bit 0, -1 for bit 1)."""
    bits = (basis_indices(n_qubits) >> (n_qubits - 1 - q)) & 1
    return 1.0 - 2.0 * bits


def zz_signs(n_qubits: int, a: int, b: int) -> np.ndarray:
    """``(-1)**(bit_a xor bit_b)`` for every basis state."""
    return z_signs(n_qubits, a) * z_signs(n_qubits, b)


def xx_flip_index(n_qubits: int, a: int, b: int) -> np.ndarray:
    """Permutation of basis indices implementing ``X_a X_b``."""
    return basis_indices(n_qubits) ^ (qubit_mask(n_qubits, a) | qubit_mask(n_qubits, b))


@dataclass
class QuantumState:
    """Statevector or density matrix over ``n_qubits`` qubits."""

    mode: str
    n_qubits: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.mode not in (PURE, DENSITY):
            raise ConfigurationError(f"unknown state mode {self.mode!r}")
        dim = 1 << self.n_qubits
        shape = (dim,) if self.mode == PURE else (dim, dim)
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != shape:
            raise ConfigurationError(
                f"{self.mode} state on {self.n_qubits} qubits needs shape {shape}, "
                f"got {self.data.shape}"
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def copy(self) -> "QuantumState":
        return QuantumState(self.mode, self.n_qubits, self.data.copy())

    def probabilities(self) -> np.ndarray:
        """Born probabilities of every computational basis state."""
        if self.mode == PURE:
            return np.abs(self.data) ** 2
        return np.clip(np.real(np.diagonal(self.data)), 0.0, None)

    def to_density(self) -> "QuantumState":
        if self.mode == DENSITY:
            return self.copy()
        return QuantumState(DENSITY, self.n_qubits, np.outer(self.data, self.data.conj()))

    def check(self, tol: float = NORM_TOL) -> None:
        """Raise ``ValueError`` if the state is not normalised/physical."""
        if self.mode == PURE:
            norm = float(np.vdot(self.data, self.data).real)
            if abs(norm - 1.0) > tol:
                raise ValueError(f"statevector norm {norm!r} differs from 1")
            return
        rho = self.data
        tr = np.trace(rho)
        if abs(tr - 1.0) > tol:
            raise ValueError(f"density matrix trace {tr!r} differs from 1")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -EIG_TOL:
            raise ValueError("density matrix has negative eigenvalues")


def init_basis_state(n_qubits: int, bits: str, mode: str = PURE) -> QuantumState:
    """Computational basis state ``|bits>`` (bit 0 of the string is qubit 0)."""
    if len(bits) != n_qubits or any(c not in "01" for c in bits):
        raise ConfigurationError(
            f"basis label {bits!r} does not describe {n_qubits} qubits"
        )
    index = int(bits, 2) if bits else 0
    psi = np.zeros(1 << n_qubits, dtype=np.complex128)
    psi[index] = 1.0
    state = QuantumState(PURE, n_qubits, psi)
    return state if mode == PURE else state.to_density()


def random_state(n_qubits: int, rng: np.random.Generator, mode: str = PURE, rank: int = 1) -> QuantumState:
    """Haar-like random statevector, or a random mixture of ``rank`` of them."""
    dim = 1 << n_qubits
    vecs = rng.normal(size=(rank, dim)) + 1j * rng.normal(size=(rank, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    if mode == PURE:
        if rank != 1:
            raise ConfigurationError("a pure state has rank 1")
        return QuantumState(PURE, n_qubits, vecs[0])
    weights = rng.dirichlet(np.ones(rank))
    rho = np.einsum("k,ki,kj->ij", weights, vecs, vecs.conj())
    return QuantumState(DENSITY, n_qubits, rho)


def _check_pair(state: QuantumState, a: int, b: int) -> None:
    for q in (a, b):
        if not 0 <= q < state.n_qubits:
            raise InvalidGateError(f"qubit {q} outside 0..{state.n_qubits - 1}")
    if a == b:
        raise InvalidGateError(f"two-qubit rotation needs distinct qubits, got {a} twice")


def _check_qubit(state: QuantumState, q: int) -> None:
    if not 0 <= q < state.n_qubits:
        raise InvalidGateError(f"qubit {q} outside 0..{state.n_qubits - 1}")


def apply_diagonal(state: QuantumState, phases: np.ndarray) -> QuantumState:
    """Apply the diagonal unitary ``diag(phases)``."""
    if state.mode == PURE:
        return QuantumState(PURE, state.n_qubits, state.data * phases)
    rho = state.data * phases[:, None] * phases.conj()[None, :]
    return QuantumState(DENSITY, state.n_qubits, rho)


def apply_zz_rotation(state: QuantumState, a: int, b: int, theta: float) -> QuantumState:
    """``exp(-i theta/2 Z_a Z_b)``."""
    _check_pair(state, a, b)
    if not np.isfinite(theta):
        raise InvalidGateError(f"rotation angle must be finite, got {theta!r}")
    phases = np.exp(-0.5j * theta * zz_signs(state.n_qubits, a, b))
    return apply_diagonal(state, phases)


def apply_xx_rotation(state: QuantumState, a: int, b: int, theta: float) -> QuantumState:
    """``exp(-i theta/2 X_a X_b) = cos(theta/2) - i sin(theta/2) X_a X_b``."""
    _check_pair(state, a, b)
    if not np.isfinite(theta):
        raise InvalidGateError(f"rotation angle must be finite, got {theta!r}")
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    flip = xx_flip_index(state.n_qubits, a, b)
    if state.mode == PURE:
        psi = state.data
        return QuantumState(PURE, state.n_qubits, c * psi - 1j * s * psi[flip])
    rho = state.data
    rho = c * rho - 1j * s * rho[flip, :]
    rho = c * rho + 1j * s * rho[:, flip]
    return QuantumState(DENSITY, state.n_qubits, rho)


def apply_cnot(state: QuantumState, control: int, target: int) -> QuantumState:
    _check_pair(state, control, target)
    idx = basis_indices(state.n_qubits)
    cmask, tmask = qubit_mask(state.n_qubits, control), qubit_mask(state.n_qubits, target)
    perm = np.where(idx & cmask, idx ^ tmask, idx)
    if state.mode == PURE:
        return QuantumState(PURE, state.n_qubits, state.data[perm])
    return QuantumState(DENSITY, state.n_qubits, state.data[perm][:, perm])


def apply_single_qubit(state: QuantumState, q: int, gate: np.ndarray) -> QuantumState:
    """Apply an arbitrary 2x2 unitary to qubit ``q``."""
    _check_qubit(state, q)
    n = state.n_qubits
    gate = np.asarray(gate, dtype=np.complex128)
    if state.mode == PURE:
        t = np.moveaxis(state.data.reshape((2,) * n), q, 0)
        t = np.tensordot(gate, t, axes=(1, 0))
        return QuantumState(PURE, n, np.moveaxis(t, 0, q).reshape(-1))
    t = state.data.reshape((2,) * (2 * n))
    t = np.moveaxis(np.tensordot(gate, np.moveaxis(t, q, 0), axes=(1, 0)), 0, q)
    t = np.moveaxis(np.tensordot(gate.conj(), np.moveaxis(t, n + q, 0), axes=(1, 0)), 0, n + q)
    return QuantumState(DENSITY, n, t.reshape(1 << n, 1 << n))


def reset_qubit(
    state: QuantumState, q: int, target: int, rng: np.random.Generator | None = None
) -> QuantumState:
    """Reset qubit ``q`` to ``|target>``.

    Density mode applies the exact channel ``rho -> |t><t|_q (x) Tr_q(rho)``.
    Pure mode measures ``q`` in the Z basis with ``rng`` and flips the qubit
    when the outcome differs from ``target``; averaged over trajectories this
    reproduces the density-mode channel.
    """
    _check_qubit(state, q)
    if target not in (0, 1):
        raise ConfigurationError(f"reset target must be 0 or 1, got {target!r}")
    n = state.n_qubits
    mask = qubit_mask(n, q)
    idx = basis_indices(n)
    idx0 = idx[(idx & mask) == 0]
    idx1 = idx0 | mask
    dest = idx1 if target else idx0
    if state.mode == DENSITY:
        rho = state.data
        reduced = rho[np.ix_(idx0, idx0)] + rho[np.ix_(idx1, idx1)]
        out = np.zeros_like(rho)
        out[np.ix_(dest, dest)] = reduced
        return QuantumState(DENSITY, n, out)
    if rng is None:
        raise ConfigurationError("pure-mode reset needs a random stream")
    psi = state.data
    p1 = float(np.sum(np.abs(psi[idx1]) ** 2))
    outcome = int(rng.random() < p1)
    branch = psi[idx1] if outcome else psi[idx0]
    norm = np.sqrt(p1 if outcome else 1.0 - p1)
    out = np.zeros_like(psi)
    out[dest] = branch / norm
    return QuantumState(PURE, n, out)


def expect_z(state: QuantumState, q: int) -> float:
    """``<Z_q>``, exact to floating point precision."""
    _check_qubit(state, q)
    return float(np.dot(state.probabilities(), z_signs(state.n_qubits, q)))


def marginal_probabilities(state: QuantumState, qubits: Sequence[int]) -> np.ndarray:
    """Joint Z-basis distribution of ``qubits`` (big-endian in the given order)."""
    for q in qubits:
        _check_qubit(state, q)
    n = state.n_qubits
    probs = state.probabilities().reshape((2,) * n)
    others = tuple(k for k in range(n) if k not in qubits)
    marg = probs.sum(axis=others) if others else probs
    # sum() leaves the kept axes in increasing qubit order; reorder to the request
    kept = sorted(qubits)
    marg = np.transpose(marg, [kept.index(q) for q in qubits])
    return marg.reshape(-1)


@dataclass
class ShotResult:
    counts: dict[str, int]
    shots: int
    seed: int

    def frequency(self, position: int, value: str = "0") -> float:
        """Fraction of shots whose bit at ``position`` equals ``value``."""
        hits = sum(c for bits, c in self.counts.items() if bits[position] == value)
        return hits / self.shots


def sample_z(state: QuantumState, qubits: Sequence[int], shots: int, seed: int) -> ShotResult:
    """Sample ``shots`` Z-basis measurements of ``qubits``.

    Density-mode states are sampled from their exact Born distribution.
    """
    if shots <= 0:
        raise ConfigurationError(f"shots must be positive, got {shots}")
    probs = marginal_probabilities(state, list(qubits))
    probs = probs / probs.sum()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    draws = rng.multinomial(shots, probs)
    k = len(qubits)
    counts = {format(i, f"0{k}b") if k else "": int(c) for i, c in enumerate(draws) if c}
    return ShotResult(counts=counts, shots=int(shots), seed=int(seed))


def partial_trace(state: QuantumState, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (in that order)."""
    n = state.n_qubits
    rho = state.to_density().data.reshape((2,) * (2 * n))
    drop = [q for q in range(n) if q not in keep]
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    rows = list(letters[:n])
    cols = list(letters[n:2 * n])
    for q in drop:
        cols[q] = rows[q]
    out = "".join(rows[q] for q in keep) + "".join(cols[q] for q in keep)
    red = np.einsum("".join(rows) + "".join(cols) + "->" + out, rho)
    d = 1 << len(keep)
    return red.reshape(d, d)
