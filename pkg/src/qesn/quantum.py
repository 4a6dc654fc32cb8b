"""Small exact quantum simulator: states, gates, measure-and-reset, trajectories.

Basis convention: qubit 0 is the least-significant bit of a basis index.
Multi-qubit matrices passed to :func:`apply_matrix` list their qubits
most-significant first, so ``kron(A, B)`` acting on ``(q_a, q_b)`` applies
``A`` to ``q_a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NORM_TOL = 1e-10
NEG_PROB_TOL = 1e-12

GATE_KINDS = ("RZ", "RX", "RY", "CNOT", "CRX", "CRY", "CRZ")
_CONTROLLED = {"CNOT", "CRX", "CRY", "CRZ"}

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class QuantumError(ValueError):
    """Invalid argument passed to a quantum-core operation."""


class NumericalDegeneracyError(RuntimeError):
    """A state lost (almost) all of its norm during a projective update."""


# ---------------------------------------------------------------------------
# single- and two-qubit matrices


def _check_angle(*angles: float) -> None:
    for a in angles:
        if not np.isfinite(a):
            raise QuantumError(f"rotation angle must be finite, got {a!r}")


def rz(theta: float) -> np.ndarray:
    _check_angle(theta)
    return np.array(
        [[np.exp(-0.5j * theta), 0.0], [0.0, np.exp(0.5j * theta)]], dtype=complex
    )


def rx(theta: float) -> np.ndarray:
    _check_angle(theta)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(theta: float) -> np.ndarray:
    _check_angle(theta)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def compose_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Euler rotation ``Rz(gamma) @ Rx(beta) @ Rz(alpha)``.

    ``alpha`` is applied first in time.
    """
    _check_angle(alpha, beta, gamma)
    return rz(gamma) @ rx(beta) @ rz(alpha)


def controlled(u: np.ndarray) -> np.ndarray:
    """4x4 controlled-``u`` with the control as the most significant qubit."""
    out = np.eye(4, dtype=complex)
    out[2:, 2:] = u
    return out


CNOT_MATRIX = controlled(PAULI_X)


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise QuantumError(f"unknown gate kind {self.kind!r}")
        if self.kind in _CONTROLLED:
            if self.control is None:
                raise QuantumError(f"{self.kind} needs a control qubit")
            if self.control == self.target:
                raise QuantumError("control and target must differ")
        elif self.control is not None:
            raise QuantumError(f"{self.kind} is a single-qubit gate")
        if self.kind == "CNOT":
            if self.angle is not None:
                raise QuantumError("CNOT takes no angle")
        elif self.angle is None:
            raise QuantumError(f"{self.kind} needs an angle")
        else:
            _check_angle(self.angle)

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)

    def matrix(self) -> np.ndarray:
        """Unitary on :attr:`qubits` (control first)."""
        if self.kind == "CNOT":
            return CNOT_MATRIX
        base = {"RZ": rz, "RX": rx, "RY": ry, "CRZ": rz, "CRX": rx, "CRY": ry}[self.kind]
        u = base(self.angle)
        return controlled(u) if self.kind in _CONTROLLED else u


# ---------------------------------------------------------------------------
# states


def _check_qubits(qubits: Sequence[int], n_qubits: int) -> None:
    if len(set(qubits)) != len(qubits):
        raise QuantumError(f"duplicate qubit indices in {list(qubits)}")
    for q in qubits:
        if not (0 <= q < n_qubits):
            raise QuantumError(f"qubit index {q} out of range for {n_qubits} qubits")


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.n_qubits < 1 or self.amplitudes.shape != (2**self.n_qubits,):
            raise QuantumError("amplitude vector must have length 2**n_qubits")

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def to_density(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(self.n_qubits, np.outer(a, a.conj()))


@dataclass
class DensityMatrix:
    n_qubits: int
    elements: np.ndarray

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        return StateVector.zero(n_qubits).to_density()

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(n_qubits, np.eye(d, dtype=complex) / d)

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=complex)
        d = 2**self.n_qubits
        if self.n_qubits < 1 or self.elements.shape != (d, d):
            raise QuantumError("density matrix must be 2**n x 2**n")

    def trace(self) -> float:
        return float(np.trace(self.elements).real)

    def validate(self, tol: float = NORM_TOL) -> None:
        """Raise if the matrix is not Hermitian, unit-trace and PSD."""
        rho = self.elements
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise QuantumError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > tol:
            raise QuantumError(f"density matrix trace {np.trace(rho).real} != 1")
        if np.linalg.eigvalsh(rho).min() < -1e-8:
            raise QuantumError("density matrix has a negative eigenvalue")


# ---------------------------------------------------------------------------
# gate application


def apply_matrix(arr: np.ndarray, n_qubits: int, mat: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply ``mat`` to the leading ``2**n_qubits`` axis of ``arr``.

    ``arr`` may carry trailing batch axes, e.g. ``(2**n, shots)``.
    """
    k = len(qubits)
    rest = arr.shape[1:]
    if k > 1 and all(q == qubits[0] + j for j, q in enumerate(qubits)):
        # ascending run: reverse the matrix's qubit order to hit the fast path
        perm = list(range(k - 1, -1, -1))
        mat = np.asarray(mat).reshape((2,) * (2 * k)).transpose(perm + [p + k for p in perm]).reshape(2**k, 2**k)
        qubits = list(reversed(qubits))
    hi = qubits[0]
    if all(q == hi - j for j, q in enumerate(qubits)):
        # contiguous block, most significant first: one batched matmul
        t = arr.reshape((2 ** (n_qubits - hi - 1), 2**k, -1))
        return np.matmul(mat, t).reshape(arr.shape)
    t = arr.reshape((2,) * n_qubits + rest)
    axes = [n_qubits - 1 - q for q in qubits]
    m = np.asarray(mat).reshape((2,) * (2 * k))
    t = np.tensordot(m, t, axes=(list(range(k, 2 * k)), axes))
    t = np.moveaxis(t, list(range(k)), axes)
    return t.reshape(arr.shape)


def conjugate_by(rho: np.ndarray, n_qubits: int, mat: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """``U rho U^dagger`` for ``U`` acting on ``qubits``."""
    tmp = apply_matrix(rho, n_qubits, mat, qubits)
    return apply_matrix(tmp.conj().T, n_qubits, mat, qubits).conj().T


def apply_gate(state: StateVector | DensityMatrix, gate: GateOp) -> StateVector | DensityMatrix:
    n = state.n_qubits
    _check_qubits(gate.qubits, n)
    u = gate.matrix()
    if isinstance(state, StateVector):
        return StateVector(n, apply_matrix(state.amplitudes, n, u, gate.qubits))
    return DensityMatrix(n, conjugate_by(state.elements, n, u, gate.qubits))


# ---------------------------------------------------------------------------
# registers


def interleaved_wires(n_memory: int, n_readout: int) -> tuple[list[int], list[int]]:
    """Wire indices of the memory and readout registers.

    Pair ``i`` sits on wires ``2i`` (memory) and ``2i + 1`` (readout); any
    unpaired qubits of the larger register follow on the higher wires.
    """
    paired = min(n_memory, n_readout)
    mem = [2 * i for i in range(paired)]
    ro = [2 * i + 1 for i in range(paired)]
    nxt = 2 * paired
    for _ in range(n_memory - paired):
        mem.append(nxt)
        nxt += 1
    for _ in range(n_readout - paired):
        ro.append(nxt)
        nxt += 1
    return mem, ro


def register_index_map(n_qubits: int, memory_wires: Sequence[int], readout_wires: Sequence[int]) -> np.ndarray:
    """``idx[m, k]`` = joint basis index for memory index ``m`` and readout index ``k``.

    Bit ``j`` of ``m`` is ``memory_wires[j]`` and bit ``i`` of ``k`` is ``readout_wires[i]``.
    """
    dm, dr = 2 ** len(memory_wires), 2 ** len(readout_wires)
    m = np.arange(dm)[:, None]
    k = np.arange(dr)[None, :]
    idx = np.zeros((dm, dr), dtype=np.int64)
    for j, w in enumerate(memory_wires):
        idx |= ((m >> j) & 1) << w
    for i, w in enumerate(readout_wires):
        idx |= ((k >> i) & 1) << w
    return idx


def tensor_extend(memory: DensityMatrix, n_readout: int) -> DensityMatrix:
    """``rho_mem (x) |0..0><0..0|`` with memory and readout interleaved."""
    if n_readout < 1:
        raise QuantumError("n_readout must be positive")
    n_mem = memory.n_qubits
    n = n_mem + n_readout
    mem_w, ro_w = interleaved_wires(n_mem, n_readout)
    idx = register_index_map(n, mem_w, ro_w)[:, 0]
    out = np.zeros((2**n, 2**n), dtype=complex)
    out[np.ix_(idx, idx)] = memory.elements
    return DensityMatrix(n, out)


@dataclass
class MeasureResetOutcome:
    probabilities: np.ndarray
    post_state: DensityMatrix


def clean_probabilities(p: np.ndarray) -> np.ndarray:
    """Clamp round-off negatives to zero and renormalize."""
    p = np.asarray(p, dtype=float)
    if p.min(initial=0.0) < -NEG_PROB_TOL:
        raise QuantumError(f"probability {p.min()} is negative beyond round-off")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-8:
        raise QuantumError(f"probabilities sum to {total}, expected 1")
    return p / total


def measure_and_reset(joint: DensityMatrix, readout_qubits: Sequence[int]) -> MeasureResetOutcome:
    """Measure ``readout_qubits`` in the Z basis, discard the outcome, reset them.

    Averaging over discarded outcomes makes this a partial trace over the
    readout register: sum_k (I x <k|) rho (I x |k>). Bit ``i`` of the outcome
    index refers to ``readout_qubits[i]``; the surviving qubits keep their
    relative order as qubits ``0..n_mem-1`` of ``post_state``.
    """
    n = joint.n_qubits
    readout_qubits = list(readout_qubits)
    _check_qubits(readout_qubits, n)
    if not readout_qubits or len(readout_qubits) == n:
        raise QuantumError("readout register must be a proper, non-empty subset")
    memory = [q for q in range(n) if q not in readout_qubits]
    idx = register_index_map(n, memory, readout_qubits)
    dm, dr = idx.shape
    rho = joint.elements
    # block[m, k, m', k'] = rho[idx[m,k], idx[m',k']]
    flat = idx.reshape(-1)
    block = rho[np.ix_(flat, flat)].reshape(dm, dr, dm, dr)
    post = np.einsum("akbk->ab", block)
    probs = np.einsum("akak->k", block).real
    probs = clean_probabilities(probs)
    post = post / np.trace(post).real
    return MeasureResetOutcome(probs, DensityMatrix(len(memory), post))


def readout_marginals(states: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Per-shot readout distributions from ``(2**n, shots)`` amplitudes."""
    amp = states[idx]  # (dm, dr, shots)
    return np.einsum("mks,mks->sk", amp, amp.conj()).real


def measure_reset_batch(
    states: np.ndarray,
    n_qubits: int,
    readout_qubits: Sequence[int],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample one mid-circuit measure-and-reset on a batch of pure states.

    ``states`` has shape ``(2**n, shots)``. Returns the integer outcomes and
    the normalized post-reset states (readout register back in ``|0..0>``).
    Exactly one uniform draw is consumed per shot.
    """
    readout_qubits = list(readout_qubits)
    memory = [q for q in range(n_qubits) if q not in readout_qubits]
    idx = register_index_map(n_qubits, memory, readout_qubits)
    amp = states[idx]  # (dm, dr, shots)
    probs = np.einsum("mks,mks->sk", amp, amp.conj()).real
    probs = np.clip(probs, 0.0, None)
    totals = probs.sum(axis=1)
    if np.any(totals < 1e-9):
        raise NumericalDegeneracyError("state norm vanished before measurement")
    cdf = np.cumsum(probs / totals[:, None], axis=1)
    u = rng.random(states.shape[1])
    outcomes = (u[:, None] >= cdf).sum(axis=1)
    outcomes = np.minimum(outcomes, cdf.shape[1] - 1)
    shots = np.arange(states.shape[1])
    # zero-probability branch picked by round-off: fall back to the likeliest
    bad = probs[shots, outcomes] <= 0.0
    if np.any(bad):
        outcomes[bad] = probs[bad].argmax(axis=1)
    kept = amp[:, outcomes, shots]  # (dm, shots)
    norms = np.sqrt(np.einsum("ms,ms->s", kept, kept.conj()).real)
    if np.any(norms < np.sqrt(1e-9)):
        raise NumericalDegeneracyError("selected measurement branch has vanishing norm")
    out = np.zeros_like(states)
    out[idx[:, 0]] = kept / norms
    return outcomes, out


def sample_trajectory_step(
    state: StateVector, readout_qubits: Sequence[int], rng: np.random.Generator
) -> tuple[int, StateVector]:
    """Single-shot measure-and-reset. Bit ``i`` of the outcome is ``readout_qubits[i]``."""
    n = state.n_qubits
    _check_qubits(list(readout_qubits), n)
    if state.norm() < 1e-9:
        raise NumericalDegeneracyError("state has (near) zero norm")
    outcomes, post = measure_reset_batch(state.amplitudes[:, None], n, readout_qubits, rng)
    return int(outcomes[0]), StateVector(n, post[:, 0])


def outcome_bitstring(outcome: int, n_readout: int) -> str:
    """Outcome as a bitstring, highest readout qubit first."""
    return format(outcome, f"0{n_readout}b")


def expectation_z(probabilities: np.ndarray, n_readout: int) -> np.ndarray:
    """Per-qubit Pauli-Z means; entry ``i`` uses bit ``i`` of the basis index."""
    p = np.asarray(probabilities, dtype=float)
    k = np.arange(2**n_readout)
    signs = 1.0 - 2.0 * ((k[:, None] >> np.arange(n_readout)[None, :]) & 1)
    return p @ signs


def apply_depolarizing(rho: DensityMatrix, qubit: int, p: float) -> DensityMatrix:
    """Single-qubit depolarizing channel ``(1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)``.

    Uses the Pauli twirl identity sum_P P rho P = 2 Tr_q(rho) (x) I, so the
    channel reduces to ``(1 - 4p/3) rho + (2p/3) Tr_q(rho) (x) I``.
    """
    if not (0.0 <= p <= 1.0):
        raise QuantumError(f"depolarizing probability must lie in [0, 1], got {p}")
    n = rho.n_qubits
    _check_qubits([qubit], n)
    return DensityMatrix(n, depolarize_array(rho.elements, n, qubit, p))


def depolarize_array(rho: np.ndarray, n_qubits: int, qubit: int, p: float) -> np.ndarray:
    if p == 0.0:
        return rho
    d = 2**n_qubits
    ax = n_qubits - 1 - qubit
    t = rho.reshape((2,) * (2 * n_qubits))
    reduced = np.trace(t, axis1=ax, axis2=n_qubits + ax)  # removes both axes
    full = np.expand_dims(reduced, axis=(ax, n_qubits + ax))
    shape = [1] * (2 * n_qubits)
    shape[ax] = shape[n_qubits + ax] = 2
    eye = np.eye(2).reshape(shape)
    twirl = (full * eye).reshape(d, d)
    return (1.0 - 4.0 * p / 3.0) * rho + (2.0 * p / 3.0) * twirl
