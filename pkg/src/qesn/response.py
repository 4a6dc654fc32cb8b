"""Time-domain response analysis of the reservoir.

Probe signals (step, ramp, sinusoid) are pushed through the exact backend.
Rise time and harmonic content come from the exact feature rows. Condition
numbers are taken on shot-sampled rows: exact rows of a settled reservoir
are numerically rank deficient, so without sampling noise every
configuration would report an infinite condition number.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import circuit
from .circuit import QesnConfig
from .linalg import condition_number

PROBE_KINDS = ("step", "ramp", "sinusoid")
_SAMPLE_STREAM = 2


@dataclass
class ProbeSignal:
    kind: str
    length: int = 200
    transition: int | None = None  # step: first index at 1, default midpoint
    slope: float | None = None  # ramp: increase per step, default 1/(length-1)
    period: float = 20.0
    amplitude: float = 0.5

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ValueError(f"probe kind must be one of {PROBE_KINDS}, got {self.kind!r}")
        if self.length < 2:
            raise ValueError("probe length must be at least 2")
        if self.transition is not None and not (0 < self.transition < self.length):
            raise ValueError("step transition must fall inside the signal")
        if self.slope is not None and self.slope <= 0:
            raise ValueError("ramp slope must be positive")
        if self.period <= 0 or not (0 <= self.amplitude <= 0.5):
            raise ValueError("sinusoid needs period > 0 and amplitude in [0, 0.5]")

    @property
    def step_index(self) -> int:
        return self.length // 2 if self.transition is None else self.transition


def gen_probe(kind: str | ProbeSignal, length: int = 200, **params) -> np.ndarray:
    """Probe signal with values in [0, 1]."""
    probe = kind if isinstance(kind, ProbeSignal) else ProbeSignal(kind, length, **params)
    t = np.arange(probe.length, dtype=float)
    if probe.kind == "step":
        return (t >= probe.step_index).astype(float)
    if probe.kind == "ramp":
        slope = 1.0 / (probe.length - 1) if probe.slope is None else probe.slope
        return np.minimum(t * slope, 1.0)
    return 0.5 + probe.amplitude * np.sin(2 * np.pi * t / probe.period)


def rise_time(features: np.ndarray, transition: int, epsilon: float = 0.02, tail: int = 10) -> int | None:
    """Steps after ``transition`` until every later row stays within ``epsilon``.

    Distances are L1 over the row, measured against the mean of the last
    ``tail`` rows. Returns ``None`` if the series never settles (the final
    row itself is out of band).
    """
    f = np.asarray(features, dtype=float)
    if not (0 <= transition < len(f)) or len(f) - transition < tail:
        raise ValueError("features must cover the transition and a settled tail")
    settled = f[-tail:].mean(axis=0)
    dist = np.abs(f[transition:] - settled).sum(axis=1)
    outside = np.nonzero(dist > epsilon)[0]
    if len(outside) == 0:
        return 0
    k = int(outside[-1]) + 1
    if transition + k >= len(f):
        return None
    return k


def harmonic_fraction(features: np.ndarray, period: float, n_rows: int | None = None, floor: float = 1e-6) -> np.ndarray:
    """Per-column share of AC spectral energy at frequencies >= 2 / period.

    Uses the last ``n_rows`` rows (default: the largest whole number of
    periods). Columns whose AC energy is below ``floor`` times the largest
    column's report 0.
    """
    f = np.asarray(features, dtype=float)
    if n_rows is None:
        n_rows = int(math.floor(len(f) / period) * period)
    if n_rows < 2 * period:
        raise ValueError("need at least two periods of rows")
    x = f[-n_rows:] - f[-n_rows:].mean(axis=0)
    power = np.abs(np.fft.rfft(x, axis=0)) ** 2
    freqs = np.fft.rfftfreq(n_rows)
    total = power[1:].sum(axis=0)
    high = power[freqs >= 2.0 / period - 0.5 / n_rows].sum(axis=0)
    frac = np.where(total > 0, high / np.where(total > 0, total, 1.0), 0.0)
    frac[total < floor * total.max(initial=0.0)] = 0.0
    return frac


def sample_counts(prob_rows: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Shot-sampled frequencies: one multinomial draw per row."""
    p = np.clip(np.asarray(prob_rows, dtype=float), 0.0, None)
    p /= p.sum(axis=1, keepdims=True)
    return np.stack([rng.multinomial(shots, row) for row in p]) / shots


def entangling_gate_fraction(weights: circuit.QesnWeights, drop_cnot: bool) -> float:
    """Share of the possible two-qubit gates (C-NOTs included) absent from the block."""
    n_p = weights.config.n_pairs
    ring = len(circuit.crz_ring(n_p))
    possible = 3 * n_p + ring
    removed = int(weights.ent_mask.sum()) + (int(weights.mem_mask.sum()) if ring else 0)
    if drop_cnot:
        removed += n_p
    return removed / possible


@dataclass
class ResponseCell:
    probe: str
    label: str
    kappa: float
    n_c: int
    drop_cnot: bool
    probabilities: np.ndarray
    expectations: np.ndarray
    sampled: np.ndarray | None
    rise_time: int | None
    condition_number: float
    condition_number_exact: float
    harmonic_fraction: float
    gate_counts: dict
    realized_sparsity: float

    def summary(self) -> dict:
        return {
            "probe": self.probe,
            "label": self.label,
            "kappa": self.kappa,
            "n_c": self.n_c,
            "drop_cnot": self.drop_cnot,
            "rise_time": self.rise_time,
            "condition_number": _finite_or_str(self.condition_number),
            "condition_number_exact": _finite_or_str(self.condition_number_exact),
            "harmonic_fraction": self.harmonic_fraction,
            "gate_counts": self.gate_counts,
            "realized_sparsity": self.realized_sparsity,
        }


def _finite_or_str(x: float):
    return x if math.isfinite(x) else "inf"


@dataclass
class ResponseReport:
    kind: str
    cells: list[ResponseCell]
    settings: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def cell(self, probe: str, label: str) -> ResponseCell:
        for c in self.cells:
            if c.probe == probe and c.label == label:
                return c
        raise KeyError((probe, label))

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "settings": self.settings,
            "flags": self.flags,
            "cells": [c.summary() for c in self.cells],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def cell_csv(cell: ResponseCell) -> str:
    n_r = int(round(math.log2(cell.probabilities.shape[1])))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + circuit.probability_labels(n_r) + [f"z_exp_{i}" for i in range(n_r)])
    for t, (p, z) in enumerate(zip(cell.probabilities, cell.expectations)):
        w.writerow([t] + [repr(float(v)) for v in p] + [repr(float(v)) for v in z])
    return buf.getvalue()


@dataclass
class _CellJob:
    index: int
    probe: ProbeSignal
    label: str
    config: QesnConfig
    shots: int
    washout: int
    epsilon: float


def _run_cell(job: _CellJob) -> ResponseCell:
    cfg = job.config
    weights = circuit.init_weights(cfg)
    signal = gen_probe(job.probe)
    fm = circuit.run_series(signal, cfg, weights)
    probs = fm.values
    # row r holds the window ending at input index r + c - 1
    offset = cfg.c - 1
    rt = None
    if job.probe.kind == "step":
        rt = rise_time(probs, job.probe.step_index - offset, job.epsilon)
    harm = 0.0
    if job.probe.kind == "sinusoid":
        harm = float(harmonic_fraction(probs, job.probe.period).max())
    sampled = None
    cond = math.inf
    if job.shots > 0:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_SAMPLE_STREAM, job.index)))
        sampled = sample_counts(probs, job.shots, rng)
        cond = condition_number(sampled[job.washout:])
    gates = circuit.build_embedding_layer(circuit.compute_angles(np.zeros(cfg.c * cfg.d), weights), weights, cfg.n_c, cfg.drop_cnot)
    return ResponseCell(
        probe=job.probe.kind,
        label=job.label,
        kappa=cfg.kappa,
        n_c=cfg.n_c,
        drop_cnot=cfg.drop_cnot,
        probabilities=probs,
        expectations=circuit.expectation_features(fm).values,
        sampled=sampled,
        rise_time=rt,
        condition_number=cond,
        condition_number_exact=condition_number(probs[job.washout:]),
        harmonic_fraction=harm,
        gate_counts=circuit.gate_counts(gates),
        realized_sparsity=entangling_gate_fraction(weights, cfg.drop_cnot),
    )


def _run_jobs(jobs: list[_CellJob], workers: int) -> list[ResponseCell]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def _probes(kinds, length: int, **params) -> list[ProbeSignal]:
    return [ProbeSignal(k, length, **{k2: v for k2, v in params.items() if v is not None}) for k in kinds]


def _identity(cfg: QesnConfig) -> dict:
    d = cfg.to_dict()
    d.pop("workers")
    return d


def sparsity_label(level: float, decoupled: bool) -> str:
    pct = f"{100 * level:g}%"
    return f"{pct} (decoupled)" if decoupled else pct


def sparsity_sweep(
    probe_kinds=PROBE_KINDS,
    levels=(0.0, 0.29, 0.42, 1.0),
    config: QesnConfig | None = None,
    seed: int | None = None,
    length: int = 200,
    transition: int | None = None,
    period: float = 20.0,
    shots: int = 60000,
    washout: int = 20,
    epsilon: float = 0.02,
    decouple_full: bool = True,
    workers: int = 1,
) -> ResponseReport:
    """Probe every sparsity level with one shared weight draw.

    ``decouple_full`` also drops the C-NOTs at level 1.0, giving a circuit
    with no memory/readout interaction at all.
    """
    base = config or QesnConfig(n_q=12, c=1)
    if seed is not None:
        base = replace(base, seed=seed)
    base = replace(base, backend="exact")
    probes = _probes(probe_kinds, length, transition=transition, period=period)
    jobs = []
    for level in levels:
        decoupled = decouple_full and level >= 1.0
        cfg = replace(base, kappa=float(level), drop_cnot=decoupled or base.drop_cnot)
        for probe in probes:
            jobs.append(_CellJob(len(jobs), probe, sparsity_label(level, decoupled), cfg, shots, washout, epsilon))
    cells = _run_jobs(jobs, workers)
    settings = {
        "levels": list(levels), "probes": list(probe_kinds), "length": length, "period": period,
        "transition": probes[0].step_index, "shots": shots, "washout": washout, "epsilon": epsilon,
        "decouple_full": decouple_full, "config": _identity(base),
    }
    return ResponseReport("sparsity", cells, settings)


def repeat_block_sweep(
    probe_kinds=PROBE_KINDS,
    n_c_values=(1, 2, 3, 4),
    config: QesnConfig | None = None,
    seed: int | None = None,
    length: int = 200,
    transition: int | None = None,
    period: float = 20.0,
    shots: int = 60000,
    washout: int = 20,
    epsilon: float = 0.02,
    workers: int = 1,
) -> ResponseReport:
    """Probe a range of re-uploading block counts.

    Weights are redrawn per ``n_c`` from the same seed; only the input
    scaling (which divides by ``n_c``) differs between the draws.
    """
    base = config or QesnConfig(n_q=12, c=1, kappa=0.29)
    if seed is not None:
        base = replace(base, seed=seed)
    base = replace(base, backend="exact")
    probes = _probes(probe_kinds, length, transition=transition, period=period)
    jobs = []
    for n_c in n_c_values:
        cfg = replace(base, n_c=int(n_c))
        for probe in probes:
            jobs.append(_CellJob(len(jobs), probe, f"n_c={n_c}", cfg, shots, washout, epsilon))
    cells = _run_jobs(jobs, workers)
    report = ResponseReport("repeat-blocks", cells, {
        "n_c_values": list(n_c_values), "probes": list(probe_kinds), "length": length, "period": period,
        "shots": shots, "washout": washout, "epsilon": epsilon, "config": _identity(base),
    })
    report.flags = parity_flags(report)
    return report


def parity_flags(report: ResponseReport) -> list[str]:
    """Note probes where even n_c has weaker harmonics or worse conditioning than odd."""
    flags = []
    for probe in {c.probe for c in report.cells}:
        cells = [c for c in report.cells if c.probe == probe]
        odd = [c for c in cells if c.n_c % 2]
        even = [c for c in cells if c.n_c % 2 == 0]
        if not odd or not even:
            continue
        if probe == "sinusoid":
            o, e = np.mean([c.harmonic_fraction for c in odd]), np.mean([c.harmonic_fraction for c in even])
            if e < o:
                flags.append(f"{probe}: even n_c mean harmonic fraction {e:.4f} < odd {o:.4f}")
        o = np.median([c.condition_number for c in odd])
        e = np.median([c.condition_number for c in even])
        if e > o:
            flags.append(f"{probe}: even n_c median condition number {e:.4g} > odd {o:.4g}")
    return sorted(flags)


def cell_plot(cell: ResponseCell) -> str:
    from .svg import two_row_plot

    return two_row_plot(
        cell.expectations,
        cell.probabilities,
        f"{cell.probe} response, {cell.label}",
        "Pauli-Z expectation values",
        "readout basis-state probabilities",
    )
