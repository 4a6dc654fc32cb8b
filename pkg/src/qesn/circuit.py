"""QESN circuit construction and recurrent evolution.

Each recurrent step embeds a context window as Euler rotations on every
qubit, applies ``n_c`` repeats of the entangling block, then measures and
resets the readout register. Two backends evolve the reservoir:

``exact``
    carries the memory-register density matrix between steps. The step is
    applied as a Kraus map K_k = (I (x) <k|) U (I (x) |0>), which is the
    measure/discard/reset channel written without ever forming the joint
    density matrix. With ``noise_p`` set, the gate list is applied one gate
    at a time to the joint density matrix instead, with depolarizing noise
    after every gate.
``trajectory``
    carries one pure state per shot and samples every mid-circuit
    measurement. Shots are split into fixed-size chunks, each with its own
    random substream, so counts do not depend on the worker count.
"""

from __future__ import annotations

import functools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import quantum as qc
from .quantum import GateOp

BACKENDS = ("exact", "trajectory")
_BACKEND_ALIASES = {"exact-channel": "exact"}
FEATURE_MODES = ("probability", "expectation")

# stream ids for SeedSequence spawn keys
_WEIGHT_STREAM = 0
_SHOT_STREAM = 1


@dataclass
class QesnConfig:
    n_q: int = 8
    c: int = 2
    d: int = 1
    n_c: int = 3
    kappa: float = 0.3
    seed: int = 0
    shots: int = 60000
    backend: str = "exact"
    noise_p: float | None = None
    drop_cnot: bool = False
    weight_mean: float = math.pi / 2
    weight_std: float = math.pi / 4
    shot_chunk: int = 4096
    workers: int = 1

    def __post_init__(self):
        self.backend = _BACKEND_ALIASES.get(self.backend, self.backend)
        self.validate()

    def validate(self) -> None:
        if self.n_q < 2 or self.n_q % 2:
            raise ValueError(f"n_q must be an even integer >= 2, got {self.n_q}")
        if self.c < 1 or self.d < 1 or self.n_c < 1:
            raise ValueError("c, d and n_c must be positive")
        if not (0.0 <= self.kappa <= 1.0):
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.shots < 1 or self.shot_chunk < 1 or self.workers < 1:
            raise ValueError("shots, shot_chunk and workers must be positive")
        if self.noise_p is not None and not (0.0 <= self.noise_p <= 1.0):
            raise ValueError("noise_p must lie in [0, 1]")
        if self.noise_p and self.backend != "exact":
            raise ValueError("depolarizing noise is only supported on the exact backend")
        if self.weight_std <= 0:
            raise ValueError("weight_std must be positive")

    @property
    def n_pairs(self) -> int:
        return self.n_q // 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "QesnConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown QESN config keys: {sorted(unknown)}")
        return cls(**data)


def memory_wires(n_q: int) -> list[int]:
    return qc.interleaved_wires(n_q // 2, n_q // 2)[0]


def readout_wires(n_q: int) -> list[int]:
    return qc.interleaved_wires(n_q // 2, n_q // 2)[1]


# ---------------------------------------------------------------------------
# weights


@dataclass
class QesnWeights:
    w_in: np.ndarray  # (c*d, n_q, 3)
    w_bias: np.ndarray  # (n_q,)
    w_ent: np.ndarray  # (n_q/2, 2): CRY, CRX angle per pair
    w_mem: np.ndarray  # (n_q/2,): CRZ ring angles
    ent_mask: np.ndarray  # True where the w_ent entry was pruned
    mem_mask: np.ndarray
    seed: int
    config: QesnConfig

    @property
    def n_pruned(self) -> int:
        return int(self.ent_mask.sum() + self.mem_mask.sum())

    @property
    def n_tunable(self) -> int:
        return self.ent_mask.size + self.mem_mask.size

    def to_json(self) -> str:
        doc = {
            "w_in": self.w_in.tolist(),
            "w_bias": self.w_bias.tolist(),
            "w_ent": self.w_ent.tolist(),
            "w_mem": self.w_mem.tolist(),
            "masks": {"ent": self.ent_mask.tolist(), "mem": self.mem_mask.tolist()},
            "seed": self.seed,
            "config": {k: v for k, v in self.config.to_dict().items() if k != "workers"},  # execution setting only
        }
        return dumps_exact(doc)

    @classmethod
    def from_json(cls, text: str) -> "QesnWeights":
        doc = json.loads(text)
        cfg = QesnConfig.from_dict(doc["config"])
        return cls(
            w_in=np.array(doc["w_in"], dtype=float).reshape(cfg.c * cfg.d, cfg.n_q, 3),
            w_bias=np.array(doc["w_bias"], dtype=float),
            w_ent=np.array(doc["w_ent"], dtype=float).reshape(cfg.n_pairs, 2),
            w_mem=np.array(doc["w_mem"], dtype=float),
            ent_mask=np.array(doc["masks"]["ent"], dtype=bool).reshape(cfg.n_pairs, 2),
            mem_mask=np.array(doc["masks"]["mem"], dtype=bool),
            seed=int(doc["seed"]),
            config=cfg,
        )


def dumps_exact(obj, indent: int = 1) -> str:
    """JSON text with every float written to 17 significant digits."""

    def enc(o, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            if not math.isfinite(o):
                return json.dumps(str(o))
            return format(o, ".17g")
        if isinstance(o, int):
            return str(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, depth + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if all(not isinstance(v, (list, tuple, dict)) for v in o):
                return "[" + ", ".join(enc(v, depth + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, depth + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, np.generic):
            return enc(o.item(), depth)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


def _truncated_normal(rng: np.random.Generator, mean: float, std: float, size) -> np.ndarray:
    """Normal samples restricted to (0, pi] by rejection."""
    out = rng.normal(mean, std, size=size)
    bad = (out <= 0.0) | (out > math.pi)
    while bad.any():
        out[bad] = rng.normal(mean, std, size=int(bad.sum()))
        bad = (out <= 0.0) | (out > math.pi)
    return out


def n_pruned_for(kappa: float, n_tunable: int) -> int:
    # small epsilon keeps e.g. 0.29 * 100 from flooring to 28
    return min(n_tunable, int(math.floor(kappa * n_tunable + 1e-9)))


def weight_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_WEIGHT_STREAM,)))


def init_weights(config: QesnConfig, rng: np.random.Generator | None = None) -> QesnWeights:
    """Draw the random circuit weights and prune tunable entanglers.

    Pruning zeroes a prefix of one random permutation of the pooled
    ``w_ent`` and ``w_mem`` entries, so for a fixed seed the pruned sets are
    nested across ``kappa`` and the unpruned values never change.
    """
    if rng is None:
        rng = weight_rng(config.seed)
    cd, n_q, n_p = config.c * config.d, config.n_q, config.n_pairs
    mu, sd = config.weight_mean, config.weight_std
    w_in = _truncated_normal(rng, mu, sd, (cd, n_q, 3)) / (cd * config.n_c)
    w_bias = _truncated_normal(rng, mu, sd, n_q)
    w_ent = _truncated_normal(rng, mu, sd, (n_p, 2))
    w_mem = _truncated_normal(rng, mu, sd, n_p)
    order = rng.permutation(3 * n_p)

    pruned = np.zeros(3 * n_p, dtype=bool)
    pruned[order[: n_pruned_for(config.kappa, 3 * n_p)]] = True
    ent_mask = pruned[: 2 * n_p].reshape(n_p, 2)
    mem_mask = pruned[2 * n_p :]
    w_ent[ent_mask] = 0.0
    w_mem[mem_mask] = 0.0
    return QesnWeights(w_in, w_bias, w_ent, w_mem, ent_mask, mem_mask, config.seed, config)


# ---------------------------------------------------------------------------
# circuit structure


def compute_angles(context: np.ndarray, weights: QesnWeights) -> np.ndarray:
    """Euler angles (n_q x 3) for one context window, oldest input first."""
    context = np.asarray(context, dtype=float).reshape(-1)
    if context.shape[0] != weights.w_in.shape[0]:
        raise ValueError(
            f"context has length {context.shape[0]}, weights expect {weights.w_in.shape[0]}"
        )
    return np.einsum("t,tij->ij", context, weights.w_in) + weights.w_bias[:, None]


def _rotation_gates(wire: int, angles: np.ndarray) -> list[GateOp]:
    alpha, beta, gamma = (float(a) for a in angles)
    return [GateOp("RZ", wire, angle=alpha), GateOp("RX", wire, angle=beta), GateOp("RZ", wire, angle=gamma)]


def crz_ring(n_pairs: int) -> list[tuple[int, int, int]]:
    """(weight index, control wire, target wire) for the memory CRZ ring."""
    if n_pairs < 2:
        return []
    mem = memory_wires(2 * n_pairs)
    return [(i, mem[i], mem[(i + 1) % n_pairs]) for i in range(n_pairs)]


def build_embedding_layer(
    angles: np.ndarray, weights: QesnWeights, n_c: int, drop_cnot: bool = False
) -> list[GateOp]:
    """Gate list of one recurrent block (without the final measure/reset)."""
    n_q = angles.shape[0]
    mem, ro = qc.interleaved_wires(n_q // 2, n_q // 2)
    block: list[GateOp] = []
    for i, (m, r) in enumerate(zip(mem, ro)):
        rot = _rotation_gates(m, angles[m]) + _rotation_gates(r, angles[r])
        block += rot
        if not drop_cnot:
            block.append(GateOp("CNOT", r, control=m))
        block += rot
        if weights.w_ent[i, 0] != 0.0:
            block.append(GateOp("CRY", r, control=m, angle=float(weights.w_ent[i, 0])))
        block += rot
        if weights.w_ent[i, 1] != 0.0:
            block.append(GateOp("CRX", r, control=m, angle=float(weights.w_ent[i, 1])))
    for j, ctrl, tgt in crz_ring(n_q // 2):
        if weights.w_mem[j] != 0.0:
            block.append(GateOp("CRZ", tgt, control=ctrl, angle=float(weights.w_mem[j])))
    return block * n_c


def gate_counts(gates: Sequence[GateOp]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for g in gates:
        counts[g.kind] = counts.get(g.kind, 0) + 1
    return counts


def _pair_block(angles: np.ndarray, m: int, r: int, w_ent: np.ndarray, drop_cnot: bool) -> np.ndarray:
    rot = np.kron(qc.compose_rotation(*angles[m]), qc.compose_rotation(*angles[r]))
    u = rot
    if not drop_cnot:
        u = qc.CNOT_MATRIX @ u
    u = rot @ u
    if w_ent[0] != 0.0:
        u = qc.controlled(qc.ry(w_ent[0])) @ u
    u = rot @ u
    if w_ent[1] != 0.0:
        u = qc.controlled(qc.rx(w_ent[1])) @ u
    return u


_SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]


def _ring_phases(n_q: int, w_mem: np.ndarray) -> np.ndarray:
    """Diagonal of the product of all CRZ ring gates over the joint basis."""
    idx = np.arange(2**n_q)
    phase = np.zeros(2**n_q)
    for j, ctrl, tgt in crz_ring(n_q // 2):
        theta = w_mem[j]
        if theta == 0.0:
            continue
        on = (idx >> ctrl) & 1
        sign = np.where((idx >> tgt) & 1, 0.5, -0.5)
        phase += on * sign * theta
    return np.exp(1j * phase)


@dataclass
class StepOperator:
    """Fused unitary of one recurrent block: pair 4x4 blocks then a diagonal."""

    n_q: int
    pair_blocks: list[tuple[np.ndarray, tuple[int, int]]]
    ring_diag: np.ndarray
    n_c: int

    def apply(self, arr: np.ndarray) -> np.ndarray:
        diag = self.ring_diag.reshape((-1,) + (1,) * (arr.ndim - 1))
        for _ in range(self.n_c):
            for u, wires in self.pair_blocks:
                arr = qc.apply_matrix(arr, self.n_q, u, wires)
            arr = arr * diag
        return arr


def step_operator(angles: np.ndarray, weights: QesnWeights, n_c: int, drop_cnot: bool = False) -> StepOperator:
    n_q = angles.shape[0]
    mem, ro = qc.interleaved_wires(n_q // 2, n_q // 2)
    # readout wire 2i+1 is the higher bit of each pair; reorder so the
    # block acts on a contiguous (r, m) digit
    blocks = [
        (_SWAP @ _pair_block(angles, m, r, weights.w_ent[i], drop_cnot) @ _SWAP, (r, m))
        for i, (m, r) in enumerate(zip(mem, ro))
    ]
    return StepOperator(n_q, blocks, _ring_phases(n_q, weights.w_mem), n_c)


def kraus_operators(op: StepOperator) -> np.ndarray:
    """Kraus tensor ``K[k, m', m]`` of the measure/discard/reset step channel."""
    n_q = op.n_q
    idx = qc.register_index_map(n_q, memory_wires(n_q), readout_wires(n_q))
    dm = idx.shape[0]
    emb = np.zeros((2**n_q, dm), dtype=complex)
    emb[idx[:, 0], np.arange(dm)] = 1.0
    iso = op.apply(emb)  # (2**n_q, dm)
    return iso[idx].transpose(1, 0, 2)


def apply_kraus(rho: np.ndarray, kraus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Readout probabilities and the post-reset memory state."""
    dr, dm, _ = kraus.shape
    a = kraus @ rho  # (dr, dm, dm)
    kc = kraus.conj()
    probs = (a * kc).sum(axis=(1, 2)).real
    # sum_k a_k K_k^dagger as one matrix product
    post = a.transpose(1, 0, 2).reshape(dm, dr * dm) @ kc.transpose(0, 2, 1).reshape(dr * dm, dm)
    post = 0.5 * (post + post.conj().T)
    post /= np.trace(post).real
    return qc.clean_probabilities(probs), post


# ---------------------------------------------------------------------------
# reservoir evolution


@dataclass
class ReservoirState:
    backend: str
    t: int = 0
    memory: qc.DensityMatrix | None = None
    shot_states: list[np.ndarray] = field(default_factory=list)
    shot_rngs: list[np.random.Generator] = field(default_factory=list)


def shot_chunks(shots: int, chunk: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, shots)) for lo in range(0, shots, chunk)]


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SHOT_STREAM, chunk_index)))


def initial_state(config: QesnConfig) -> ReservoirState:
    """All qubits in |0>; for trajectories one state per shot, grouped by chunk."""
    if config.backend == "exact":
        return ReservoirState("exact", memory=qc.DensityMatrix.zero(config.n_pairs))
    state = ReservoirState("trajectory")
    dim = 2**config.n_q
    for ci, (lo, hi) in enumerate(shot_chunks(config.shots, config.shot_chunk)):
        s = np.zeros((dim, hi - lo), dtype=complex)
        s[0] = 1.0
        state.shot_states.append(s)
        state.shot_rngs.append(chunk_rng(config.seed, ci))
    return state


def _group_gates(gates: Sequence[GateOp], max_qubits: int = 2) -> list[tuple[list[int], list[GateOp]]]:
    """Split a gate list into consecutive runs touching at most ``max_qubits`` wires."""
    groups: list[tuple[list[int], list[GateOp]]] = []
    for g in gates:
        if groups:
            qs, run = groups[-1]
            merged = sorted(set(qs) | set(g.qubits))
            if len(merged) <= max_qubits:
                groups[-1] = (merged, run + [g])
                continue
        groups.append((sorted(g.qubits), [g]))
    return groups


@functools.lru_cache(maxsize=64)
def _depolarizing_superop(k: int, qubit: int, p: float) -> np.ndarray:
    d = 2**k
    S = np.empty((d * d, d * d), dtype=complex)
    for col in range(d * d):
        rho = np.zeros((d, d), dtype=complex)
        rho.flat[col] = 1.0
        S[:, col] = qc.depolarize_array(rho, k, qubit, p).ravel()
    return S


def local_channel(qubits: Sequence[int], gates: Sequence[GateOp], p: float) -> np.ndarray:
    """Superoperator of ``gates`` (each followed by depolarizing noise on its
    wires) restricted to ``qubits``; local qubit ``j`` is ``qubits[j]``.

    Indexed ``S[(r', c'), (r, c)]`` on row-major vectorized density matrices,
    where ``vec(U rho U^dagger) = (U kron conj(U)) vec(rho)``.
    """
    k = len(qubits)
    local = {q: j for j, q in enumerate(qubits)}
    d = 2**k
    S = np.eye(d * d, dtype=complex)
    for g in gates:
        lq = [local[q] for q in g.qubits]
        u = qc.apply_matrix(np.eye(d, dtype=complex), k, g.matrix(), lq)
        S = np.kron(u, u.conj()) @ S
        for q in lq:
            S = _depolarizing_superop(k, q, float(p)) @ S
    return S


def apply_channel(rho: np.ndarray, n_q: int, S: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    k = len(qubits)
    t = rho.reshape((2,) * (2 * n_q))
    # local bit order is MSB first in the reshaped superoperator
    row_axes = [n_q - 1 - q for q in reversed(qubits)]
    axes = row_axes + [n_q + a for a in row_axes]
    out = np.tensordot(S.reshape((2,) * (4 * k)), t, axes=(list(range(2 * k, 4 * k)), axes))
    return np.moveaxis(out, list(range(2 * k)), axes).reshape(rho.shape)


def _noisy_step(memory: qc.DensityMatrix, gates: list[GateOp], n_q: int, p: float) -> qc.MeasureResetOutcome:
    joint = qc.tensor_extend(memory, n_q // 2).elements
    for qs, run in _group_gates(gates):
        joint = apply_channel(joint, n_q, local_channel(qs, run, p), qs)
    return qc.measure_and_reset(qc.DensityMatrix(n_q, joint), readout_wires(n_q))


def noisy_step_reference(memory: qc.DensityMatrix, gates: list[GateOp], n_q: int, p: float) -> qc.MeasureResetOutcome:
    """Gate-by-gate noisy step on the joint density matrix (slow oracle)."""
    joint = qc.tensor_extend(memory, n_q // 2).elements
    for g in gates:
        joint = qc.conjugate_by(joint, n_q, g.matrix(), g.qubits)
        for q in g.qubits:
            joint = qc.depolarize_array(joint, n_q, q, p)
    return qc.measure_and_reset(qc.DensityMatrix(n_q, joint), readout_wires(n_q))


def _trajectory_chunk_step(states, rng, op: StepOperator):
    states = op.apply(states)
    outcomes, states = qc.measure_reset_batch(states, op.n_q, readout_wires(op.n_q), rng)
    counts = np.bincount(outcomes, minlength=2 ** (op.n_q // 2))
    return counts, states


def step(
    state: ReservoirState, context: np.ndarray, config: QesnConfig, weights: QesnWeights
) -> tuple[np.ndarray, ReservoirState]:
    """Advance one recurrent block and return the readout feature row.

    The exact backend returns Born probabilities; the trajectory backend
    returns outcome counts divided by ``shots``.
    """
    angles = compute_angles(context, weights)
    if state.backend == "exact":
        if config.noise_p:
            gates = build_embedding_layer(angles, weights, config.n_c, config.drop_cnot)
            out = _noisy_step(state.memory, gates, config.n_q, config.noise_p)
            probs, post = out.probabilities, out.post_state
        else:
            op = step_operator(angles, weights, config.n_c, config.drop_cnot)
            probs, rho = apply_kraus(state.memory.elements, kraus_operators(op))
            post = qc.DensityMatrix(config.n_pairs, rho)
        return probs, ReservoirState("exact", state.t + 1, memory=post)

    op = step_operator(angles, weights, config.n_c, config.drop_cnot)
    total = np.zeros(2**config.n_pairs, dtype=np.int64)
    new_states = []
    for s, rng in zip(state.shot_states, state.shot_rngs):
        counts, s = _trajectory_chunk_step(s, rng, op)
        total += counts
        new_states.append(s)
    nxt = ReservoirState("trajectory", state.t + 1, shot_states=new_states, shot_rngs=state.shot_rngs)
    return total / config.shots, nxt


def context_windows(inputs: np.ndarray, c: int) -> np.ndarray:
    """Flattened windows X[t-c:t] for t = c..N, oldest first, shape (N-c+1, c*d)."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < c:
        raise ValueError(f"series of length {n} is shorter than the context window {c}")
    win = np.lib.stride_tricks.sliding_window_view(x, c, axis=0)  # (N-c+1, d, c)
    return win.transpose(0, 2, 1).reshape(n - c + 1, -1)


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (rows, features)
    timesteps: np.ndarray  # input index of the newest sample in each window
    mode: str
    labels: list[str]
    washout: int = 0

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ValueError(f"mode must be one of {FEATURE_MODES}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def rows_for(self, timesteps: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.timesteps, timesteps)
        if np.any(pos >= len(self.timesteps)) or np.any(self.timesteps[pos] != timesteps):
            raise ValueError("requested timesteps have no feature rows")
        return self.values[pos]


def probability_labels(n_readout: int) -> list[str]:
    return [qc.outcome_bitstring(k, n_readout) for k in range(2**n_readout)]


def expectation_features(fm: FeatureMatrix) -> FeatureMatrix:
    """Pauli-Z expectation features derived from a probability feature matrix."""
    if fm.mode != "probability":
        raise ValueError("expectation features are derived from probability rows")
    n_r = int(round(math.log2(fm.width)))
    vals = qc.expectation_z(fm.values, n_r)
    return FeatureMatrix(vals, fm.timesteps, "expectation", [f"z_exp_{i}" for i in range(n_r)], fm.washout)


def _run_trajectory_chunk(args):
    config, weights, windows, chunk_index, lo, hi = args
    rng = chunk_rng(config.seed, chunk_index)
    states = np.zeros((2**config.n_q, hi - lo), dtype=complex)
    states[0] = 1.0
    counts = np.zeros((len(windows), 2**config.n_pairs), dtype=np.int64)
    for t, ctx in enumerate(windows):
        op = step_operator(compute_angles(ctx, weights), weights, config.n_c, config.drop_cnot)
        counts[t], states = _trajectory_chunk_step(states, rng, op)
    return counts


def trajectory_counts(windows: np.ndarray, config: QesnConfig, weights: QesnWeights) -> np.ndarray:
    """Integer outcome counts per step, summed over all shot chunks."""
    jobs = [
        (config, weights, windows, ci, lo, hi)
        for ci, (lo, hi) in enumerate(shot_chunks(config.shots, config.shot_chunk))
    ]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_trajectory_chunk, jobs))
    else:
        parts = [_run_trajectory_chunk(j) for j in jobs]
    return np.sum(parts, axis=0)


def run_series(
    inputs: np.ndarray,
    config: QesnConfig,
    weights: QesnWeights,
    mode: str = "probability",
    washout: int = 0,
) -> FeatureMatrix:
    """Slide the context window over ``inputs`` and collect one row per step."""
    windows = context_windows(inputs, config.c)
    if windows.shape[1] != config.c * config.d:
        raise ValueError("input dimension does not match config.d")
    if config.backend == "trajectory":
        rows = trajectory_counts(windows, config, weights) / config.shots
    else:
        state = initial_state(config)
        rows = np.empty((len(windows), 2**config.n_pairs))
        for t, ctx in enumerate(windows):
            rows[t], state = step(state, ctx, config, weights)
    timesteps = np.arange(config.c - 1, config.c - 1 + len(windows))
    fm = FeatureMatrix(rows, timesteps, "probability", probability_labels(config.n_pairs), washout)
    return expectation_features(fm) if mode == "expectation" else fm


# ---------------------------------------------------------------------------
# OpenQASM 3


_QASM_NAMES = {"RZ": "rz", "RX": "rx", "RY": "ry", "CNOT": "cx", "CRX": "crx", "CRY": "cry", "CRZ": "crz"}


def _qasm_gate(g: GateOp) -> str:
    name = _QASM_NAMES[g.kind]
    args = ", ".join(f"q[{q}]" for q in g.qubits)
    if g.angle is None:
        return f"{name} {args};"
    return f"{name}({format(g.angle, '.17g')}) {args};"


def export_qasm3(config: QesnConfig, weights: QesnWeights, inputs: np.ndarray) -> str:
    """Unrolled OpenQASM 3 program of the full recurrent circuit.

    Layout: one ``bit`` register ``m<t>_<i>`` per (timestep, readout qubit),
    each step's gates followed by ``measure``/``reset`` on the readout wires.
    Noise channels are not exported.
    """
    windows = context_windows(inputs, config.c)
    ro = readout_wires(config.n_q)
    lines = [
        "OPENQASM 3.0;",
        'include "stdgates.inc";',
        f"// QESN n_q={config.n_q} c={config.c} d={config.d} n_c={config.n_c} "
        f"kappa={config.kappa} seed={config.seed} steps={len(windows)}",
        f"qubit[{config.n_q}] q;",
    ]
    for t in range(len(windows)):
        for i in range(len(ro)):
            lines.append(f"bit m{t}_{i};")
    for t, ctx in enumerate(windows):
        lines.append(f"// step {t}")
        angles = compute_angles(ctx, weights)
        lines += [_qasm_gate(g) for g in build_embedding_layer(angles, weights, config.n_c, config.drop_cnot)]
        for i, w in enumerate(ro):
            lines.append(f"m{t}_{i} = measure q[{w}];")
        for w in ro:
            lines.append(f"reset q[{w}];")
    return "\n".join(lines) + "\n"
