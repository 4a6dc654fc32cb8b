import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qesn import quantum as qc
from qesn.quantum import DensityMatrix, GateOp, StateVector

angles = st.floats(-4 * math.pi, 4 * math.pi, allow_nan=False)


def random_density(n, rng, rank=None):
    d = 2**n
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def dense_gate(n, gate):
    """Full 2^n unitary built column by column from basis-state bit flips (no tensor tricks)."""
    d = 2**n
    u2 = {"RZ": qc.rz, "RX": qc.rx, "RY": qc.ry, "CRZ": qc.rz, "CRX": qc.rx, "CRY": qc.ry}
    small = qc.PAULI_X if gate.kind == "CNOT" else u2[gate.kind](gate.angle)
    U = np.zeros((d, d), dtype=complex)
    for col in range(d):
        if gate.control is not None and not (col >> gate.control) & 1:
            U[col, col] = 1.0
            continue
        b = (col >> gate.target) & 1
        for nb in (0, 1):
            row = (col & ~(1 << gate.target)) | (nb << gate.target)
            U[row, col] += small[nb, b]
    return U


# rotations


def test_rotation_identity():
    assert np.allclose(qc.compose_rotation(0, 0, 0), np.eye(2), atol=1e-12)


def test_rotation_x_pi_is_minus_i_x():
    m = qc.compose_rotation(0, math.pi, 0)
    assert np.allclose(m, -1j * qc.PAULI_X, atol=1e-12)
    out = m @ np.array([1, 0])
    assert abs(out[1] - (-1j)) < 1e-12
    assert abs(abs(out[1]) ** 2 - 1) < 1e-12


def _hand_rotation(a, b, g):
    # written out element by element
    rz = lambda t: np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])
    rx = lambda t: np.array([[np.cos(t / 2), -1j * np.sin(t / 2)], [-1j * np.sin(t / 2), np.cos(t / 2)]])
    return rz(g) @ (rx(b) @ rz(a))


def test_rotation_half_pi_against_hand_product():
    t = math.pi / 2
    assert np.max(np.abs(qc.compose_rotation(t, t, t) - _hand_rotation(t, t, t))) < 1e-12


@given(angles, angles, angles)
def test_rotation_is_unitary_and_matches_oracle(a, b, g):
    m = qc.compose_rotation(a, b, g)
    assert np.allclose(m @ m.conj().T, np.eye(2), atol=1e-12)
    assert np.max(np.abs(m - _hand_rotation(a, b, g))) < 1e-12


def test_alpha_is_applied_first():
    # RZ(alpha) on |0> only adds a phase, so alpha must not change populations
    a = qc.compose_rotation(1.3, 0.7, 0.0) @ np.array([1, 0])
    b = qc.compose_rotation(0.0, 0.7, 0.0) @ np.array([1, 0])
    assert np.allclose(np.abs(a) ** 2, np.abs(b) ** 2)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_angle_rejected(bad):
    with pytest.raises(ValueError):
        qc.compose_rotation(0.0, bad, 0.0)
    with pytest.raises(ValueError):
        GateOp("RX", 0, angle=bad)


# gates


def test_cnot_truth_table():
    psi = StateVector.basis(2, 0b01)  # qubit 0 set
    out = qc.apply_gate(psi, GateOp("CNOT", target=1, control=0))
    assert np.allclose(out.amplitudes, StateVector.basis(2, 0b11).amplitudes)


def test_crz_with_control_unset_is_identity():
    out = qc.apply_gate(StateVector.zero(2), GateOp("CRZ", target=1, control=0, angle=1.234))
    assert np.allclose(out.amplitudes, StateVector.zero(2).amplitudes)


def test_rx_half_pi_on_zero():
    out = qc.apply_gate(StateVector.zero(1), GateOp("RX", 0, angle=math.pi / 2))
    expected = np.array([[math.cos(math.pi / 4), -1j * math.sin(math.pi / 4)], [-1j * math.sin(math.pi / 4), math.cos(math.pi / 4)]]) @ [1, 0]
    assert np.allclose(out.amplitudes, expected, atol=1e-15)


@pytest.mark.parametrize("kind", ["RZ", "RX", "RY", "CNOT", "CRX", "CRY", "CRZ"])
def test_gates_match_dense_oracle(kind):
    rng = np.random.default_rng(7)
    n = 4
    for _ in range(10):
        t, c = rng.choice(n, size=2, replace=False)
        if kind in ("RZ", "RX", "RY"):
            g = GateOp(kind, int(t), angle=float(rng.uniform(-7, 7)))
        elif kind == "CNOT":
            g = GateOp(kind, int(t), int(c))
        else:
            g = GateOp(kind, int(t), int(c), float(rng.uniform(-7, 7)))
        psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
        psi /= np.linalg.norm(psi)
        got = qc.apply_gate(StateVector(n, psi), g).amplitudes
        assert np.allclose(got, dense_gate(n, g) @ psi, atol=1e-12)
        rho = random_density(n, rng)
        U = dense_gate(n, g)
        got_rho = qc.apply_gate(DensityMatrix(n, rho), g).elements
        assert np.allclose(got_rho, U @ rho @ U.conj().T, atol=1e-12)


def test_batched_state_application():
    rng = np.random.default_rng(3)
    states = rng.normal(size=(16, 5)) + 0j
    g = GateOp("CRY", 1, 3, 0.4)
    out = qc.apply_matrix(states, 4, g.matrix(), g.qubits)
    assert np.allclose(out, dense_gate(4, g) @ states)


@pytest.mark.parametrize("qubits", [(0, 0), (2,), (-1,)])
def test_bad_qubit_indices(qubits):
    with pytest.raises(ValueError):
        if len(qubits) == 2:
            GateOp("CNOT", qubits[0], qubits[1])
        else:
            qc.apply_gate(StateVector.zero(2), GateOp("RX", qubits[0], angle=0.1))


def test_unknown_gate_kind():
    with pytest.raises(ValueError):
        GateOp("H", 0)


# registers


def test_tensor_extend_pure_zero():
    out = qc.tensor_extend(DensityMatrix.zero(1), 1)
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    assert np.allclose(out.elements, expected)


def test_tensor_extend_mixed_by_hand():
    out = qc.tensor_extend(DensityMatrix.maximally_mixed(1), 1).elements
    # memory on wire 0, readout on wire 1: readout = 0 at indices 0b00 and 0b01
    expected = np.diag([0.5, 0.5, 0, 0])
    assert np.allclose(out, expected)


def test_tensor_extend_preserves_trace():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        rho = DensityMatrix(n, random_density(n, rng))
        assert abs(qc.tensor_extend(rho, n).trace() - rho.trace()) < 1e-13


# measure and reset


def test_measure_reset_product_state():
    rng = np.random.default_rng(1)
    psi = rng.normal(size=2) + 1j * rng.normal(size=2)
    psi /= np.linalg.norm(psi)
    mem = StateVector(1, psi).to_density()
    out = qc.measure_and_reset(qc.tensor_extend(mem, 1), [1])
    assert np.allclose(out.probabilities, [1, 0])
    assert np.allclose(out.post_state.elements, mem.elements)


def test_measure_reset_bell_state():
    bell = np.zeros(4, dtype=complex)
    bell[0b00] = bell[0b11] = 1 / math.sqrt(2)
    out = qc.measure_and_reset(StateVector(2, bell).to_density(), [1])
    assert np.allclose(out.probabilities, [0.5, 0.5])
    assert np.allclose(out.post_state.elements, np.eye(2) / 2)


def projector_oracle(rho, n, readout):
    """Project onto each outcome, trace out the readout wires, sum the branches."""
    memory = [q for q in range(n) if q not in readout]
    d = 2**n
    probs = np.zeros(2 ** len(readout))
    post = np.zeros((2 ** len(memory),) * 2, dtype=complex)
    for k in range(2 ** len(readout)):
        P = np.zeros((d, d))
        for i in range(d):
            if all(((i >> w) & 1) == ((k >> j) & 1) for j, w in enumerate(readout)):
                P[i, i] = 1
        branch = P @ rho @ P
        probs[k] = np.trace(branch).real
        for a in range(2 ** len(memory)):
            for b in range(2 ** len(memory)):
                ia = sum(((a >> j) & 1) << w for j, w in enumerate(memory)) | sum(((k >> j) & 1) << w for j, w in enumerate(readout))
                ib = sum(((b >> j) & 1) << w for j, w in enumerate(memory)) | sum(((k >> j) & 1) << w for j, w in enumerate(readout))
                post[a, b] += branch[ia, ib]
    return probs, post


def test_measure_reset_matches_projector_oracle():
    rng = np.random.default_rng(11)
    for readout in ([1, 3], [0], [2, 1, 0]):
        rho = random_density(4, rng)
        out = qc.measure_and_reset(DensityMatrix(4, rho), readout)
        p, post = projector_oracle(rho, 4, readout)
        assert np.max(np.abs(out.probabilities - p)) < 1e-10
        assert np.max(np.abs(out.post_state.elements - post)) < 1e-10


def test_measure_reset_rejects_duplicates():
    with pytest.raises(ValueError):
        qc.measure_and_reset(DensityMatrix.zero(2), [1, 1])
    with pytest.raises(ValueError):
        qc.measure_and_reset(DensityMatrix.zero(2), [5])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_measure_reset_post_state_is_valid(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(3, rng, rank=int(rng.integers(1, 9)))
    out = qc.measure_and_reset(DensityMatrix(3, rho), [0])
    out.post_state.validate()
    assert abs(out.probabilities.sum() - 1) < 1e-12
    assert out.probabilities.min() >= 0


def test_clean_probabilities():
    assert np.allclose(qc.clean_probabilities([1.0 + 1e-14, -1e-14]), [1, 0])
    with pytest.raises(ValueError):
        qc.clean_probabilities([1.1, -0.1])


# trajectory sampling


def test_trajectory_deterministic_outcome():
    psi = StateVector.basis(2, 0b10)
    k, nxt = qc.sample_trajectory_step(psi, [0], np.random.default_rng(0))
    assert k == 0
    assert np.allclose(nxt.amplitudes, psi.amplitudes)


def test_trajectory_bell_frequencies():
    bell = np.zeros((4, 100_000), dtype=complex)
    bell[0b00] = bell[0b11] = 1 / math.sqrt(2)
    outcomes, post = qc.measure_reset_batch(bell, 2, [1], np.random.default_rng(5))
    freq = np.bincount(outcomes, minlength=2) / len(outcomes)
    assert np.all(np.abs(freq - 0.5) < 0.01)
    # readout reset to |0>, memory collapsed consistently with the outcome
    assert np.allclose(np.abs(post[0b10]) + np.abs(post[0b11]), 0)
    assert np.allclose(np.abs(post[0b01][outcomes == 1]), 1)


def test_trajectory_degenerate_state():
    with pytest.raises(qc.NumericalDegeneracyError):
        qc.sample_trajectory_step(StateVector(2, np.zeros(4)), [1], np.random.default_rng(0))


def test_trajectory_matches_exact_channel_three_steps():
    rng = np.random.default_rng(21)
    n, readout, shots = 4, [1, 3], 50_000
    gates = []
    for _ in range(8):
        t, c = rng.choice(n, size=2, replace=False)
        gates.append(GateOp("RX", int(t), angle=float(rng.uniform(0, 3))))
        gates.append(GateOp("CRY", int(t), int(c), float(rng.uniform(0, 3))))
    mem = DensityMatrix.zero(2)
    states = np.zeros((16, shots), dtype=complex)
    states[0] = 1
    srng = np.random.default_rng(99)
    for _ in range(3):
        joint = qc.tensor_extend(mem, 2)
        for g in gates:
            joint = qc.apply_gate(joint, g)
            states = qc.apply_matrix(states, n, g.matrix(), g.qubits)
        exact = qc.measure_and_reset(joint, readout)
        mem = exact.post_state
        outcomes, states = qc.measure_reset_batch(states, n, readout, srng)
        emp = np.bincount(outcomes, minlength=4) / shots
        assert 0.5 * np.abs(emp - exact.probabilities).sum() < 0.02


# expectations


def test_expectations():
    assert np.allclose(qc.expectation_z([1, 0, 0, 0], 2), [1, 1])
    assert np.allclose(qc.expectation_z([0.25] * 4, 2), [0, 0])
    assert np.allclose(qc.expectation_z([0.75, 0.25], 1), [0.5])


def test_expectation_bit_order():
    # outcome 0b01 means readout qubit 0 is |1>
    assert np.allclose(qc.expectation_z([0, 1, 0, 0], 2), [-1, 1])
    assert qc.outcome_bitstring(1, 2) == "01"


# depolarizing


def test_depolarizing_zero_is_identity():
    rho = DensityMatrix(2, random_density(2, np.random.default_rng(2)))
    assert np.allclose(qc.apply_depolarizing(rho, 1, 0.0).elements, rho.elements)


def test_depolarizing_fixed_point():
    out = qc.apply_depolarizing(DensityMatrix.zero(1), 0, 0.75)
    assert np.allclose(out.elements, np.eye(2) / 2)


def test_depolarizing_matches_pauli_sum():
    rng = np.random.default_rng(4)
    rho = random_density(3, rng)
    p = 0.13
    for q in range(3):
        acc = (1 - p) * rho
        for P in (qc.PAULI_X, qc.PAULI_Y, qc.PAULI_Z):
            full = np.kron(np.kron(np.eye(2 ** (2 - q)), P), np.eye(2**q))
            acc = acc + p / 3 * full @ rho @ full.conj().T
        got = qc.apply_depolarizing(DensityMatrix(3, rho), q, p).elements
        assert np.allclose(got, acc, atol=1e-14)


@given(st.floats(0, 1), st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_depolarizing_preserves_trace(p, q, seed):
    rho = DensityMatrix(3, random_density(3, np.random.default_rng(seed)))
    assert abs(qc.apply_depolarizing(rho, q, p).trace() - 1) < 1e-12


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_depolarizing_range(p):
    with pytest.raises(ValueError):
        qc.apply_depolarizing(DensityMatrix.zero(1), 0, p)
