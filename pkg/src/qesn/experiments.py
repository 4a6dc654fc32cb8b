"""Experiment configs, pipelines and artifact persistence."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import re
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, baseline, circuit, lorenz, readout, response
from .circuit import QesnConfig
from .lorenz import LorenzParams

KINDS = ("lorenz-observer", "response", "sweep", "baseline-compare", "export")
OUTPUT_ROOT_ENV = "QESN_OUTPUT_ROOT"
MANIFEST = "manifest.json"


@dataclass
class DataConfig:
    n_points: int = 9900
    train_len: int = 6900
    test_len: int = 3000
    washout: int = 300
    train_only_stats: bool = False


@dataclass
class RegressionConfig:
    lambda_grid: list = field(default_factory=lambda: list(readout.DEFAULT_LAMBDA_GRID))
    l1_grid: list = field(default_factory=lambda: list(readout.DEFAULT_L1_GRID))
    selection: str = "test"
    tol: float = 1e-8
    max_iter: int = 5000

    def kwargs(self) -> dict:
        return {"lambda_grid": self.lambda_grid, "l1_grid": self.l1_grid, "selection": self.selection,
                "tol": self.tol, "max_iter": self.max_iter}


@dataclass
class ResponseConfig:
    probes: list = field(default_factory=lambda: list(response.PROBE_KINDS))
    levels: list = field(default_factory=lambda: [0.0, 0.29, 0.42, 1.0])
    n_c_values: list = field(default_factory=lambda: [1, 2, 3, 4])
    length: int = 200
    transition: int | None = None
    period: float = 20.0
    shots: int = 60000
    washout: int = 20
    epsilon: float = 0.02
    decouple_full: bool = True
    plot: bool = False


@dataclass
class CompareConfig:
    qubit_counts: list = field(default_factory=lambda: [4, 6, 8])


@dataclass
class ExperimentConfig:
    kind: str = "lorenz-observer"
    qesn: QesnConfig = field(default_factory=QesnConfig)
    lorenz: LorenzParams = field(default_factory=LorenzParams)
    data: DataConfig = field(default_factory=DataConfig)
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    response: ResponseConfig = field(default_factory=ResponseConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    feature_mode: str = "both"
    output_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"experiment kind must be one of {KINDS}, got {self.kind!r}")
        if self.feature_mode not in ("probability", "expectation", "both"):
            raise ValueError("feature_mode must be probability, expectation or both")
        # the master seed drives the circuit weights
        self.qesn = replace(self.qesn, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lorenz"] = self.lorenz.to_dict()
        # parallelism never changes results, so it is not part of a run's identity
        d["qesn"].pop("workers")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        sections = {
            "qesn": QesnConfig, "lorenz": LorenzParams, "data": DataConfig,
            "regression": RegressionConfig, "response": ResponseConfig, "compare": CompareConfig,
        }
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in doc.items():
            if key in sections:
                typ = sections[key]
                allowed = {f.name for f in fields(typ)}
                bad = set(value) - allowed
                if bad:
                    raise ValueError(f"unknown keys in '{key}': {sorted(bad)}")
                kwargs[key] = typ(**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def default_output_dir(kind: str) -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "qesn-out")) / kind


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ArtifactWriter:
    """Stages files in a scratch directory and moves them into place on success.

    On failure the scratch directory is removed, so an output directory never
    holds a partial run.
    """

    def __init__(self, out_dir: Path, config: ExperimentConfig):
        self.out_dir = Path(out_dir)
        self.config = config
        self.timings: dict[str, float] = {}
        self._staging: Path | None = None

    def __enter__(self):
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self._staging = Path(tempfile.mkdtemp(prefix=".qesn-staging-", dir=self.out_dir.parent))
        self._start = time.perf_counter()
        return self

    def write(self, name: str, text: str) -> None:
        path = self._staging / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)

    def timed(self, label: str):
        writer = self

        class _Timer:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()

            def __exit__(self_inner, *exc):
                writer.timings[label] = round(time.perf_counter() - self_inner.t0, 6)

        return _Timer()

    def _clear_previous(self) -> None:
        """Drop a prior run's files so the new manifest covers the whole directory."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        existing = [p for p in self.out_dir.rglob("*") if p.is_file()]
        if not existing:
            return
        old = self.out_dir / MANIFEST
        if not old.is_file():
            raise FileExistsError(f"{self.out_dir} is not empty and holds no previous run; refusing to overwrite")
        listed = set(json.loads(old.read_text())["files"]) | {MANIFEST}
        stray = [p for p in existing if str(p.relative_to(self.out_dir)) not in listed]
        if stray:
            raise FileExistsError(f"{self.out_dir} contains files from outside a previous run: {stray[0]}")
        for p in existing:
            p.unlink()

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self._staging, ignore_errors=True)
            return False
        try:
            self.write("config.json", self.config.to_json())
            files = sorted(p for p in self._staging.rglob("*") if p.is_file())
            self.timings["total"] = round(time.perf_counter() - self._start, 6)
            manifest = {
                "config_hash": self.config.config_hash(),
                "files": {str(p.relative_to(self._staging)): sha256_file(p) for p in files},
                "durations_s": self.timings,
                "versions": {
                    "qesn": __version__,
                    "numpy": np.__version__,
                    "python": platform.python_version(),
                },
            }
            self.write(MANIFEST, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
            self._clear_previous()
            for p in sorted(self._staging.rglob("*")):
                if p.is_file():
                    dest = self.out_dir / p.relative_to(self._staging)
                    dest.parent.mkdir(parents=True, exist_ok=True)
                    os.replace(p, dest)
        finally:
            shutil.rmtree(self._staging, ignore_errors=True)
        return False


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def features_csv(fm: circuit.FeatureMatrix) -> str:
    return _csv_text(["t"] + fm.labels, ([int(t)] + [repr(float(v)) for v in row] for t, row in zip(fm.timesteps, fm.values)))


# ---------------------------------------------------------------------------
# Lorenz observer


@dataclass
class ObserverData:
    dataset: lorenz.LorenzDataset
    inputs: np.ndarray  # normalized x(t), t = 0..N-1
    targets: np.ndarray  # normalized (y, z)(t + 1)
    fit_idx: np.ndarray
    test_idx: np.ndarray


def observer_data(config: ExperimentConfig) -> ObserverData:
    """Trajectory of ``n_points + 1`` states so every input has a t+1 target."""
    d = config.data
    if d.train_len + d.test_len > d.n_points:
        raise ValueError("train_len + test_len exceeds n_points")
    if d.washout < config.qesn.c - 1:
        raise ValueError("washout must cover the first incomplete context window")
    params = replace(config.lorenz, n_steps=d.n_points + 1)
    traj = lorenz.integrate_lorenz(params)
    ds = lorenz.make_dataset(traj, d.train_len, d.test_len, d.washout, d.train_only_stats)
    n = d.n_points
    return ObserverData(
        dataset=ds,
        inputs=ds.normalized[:n, 0],
        targets=ds.normalized[1 : n + 1, 1:],
        fit_idx=np.arange(ds.fit_range.start, ds.fit_range.stop),
        test_idx=np.arange(ds.test.start, ds.test.stop),
    )


@dataclass
class ObserverResult:
    features: dict  # mode -> FeatureMatrix
    models: dict  # mode -> RegressionModel
    reports: dict  # mode -> FitReport
    weights: circuit.QesnWeights
    data: ObserverData


def modes_for(feature_mode: str) -> list[str]:
    return ["probability", "expectation"] if feature_mode == "both" else [feature_mode]


def fit_observer(config: ExperimentConfig, data: ObserverData | None = None) -> ObserverResult:
    """Run the QESN on x(t) and fit (y, z)(t+1) for each requested feature mode."""
    data = data or observer_data(config)
    weights = circuit.init_weights(config.qesn)
    fm = circuit.run_series(data.inputs, config.qesn, weights, washout=config.data.washout)
    features = {"probability": fm}
    if "expectation" in modes_for(config.feature_mode):
        features["expectation"] = circuit.expectation_features(fm)
    models, reports = {}, {}
    for mode in modes_for(config.feature_mode):
        f = features[mode]
        model, rep = readout.tune_hyperparameters(
            f.rows_for(data.fit_idx), data.targets[data.fit_idx],
            f.rows_for(data.test_idx), data.targets[data.test_idx],
            label=f"qesn-{mode}", **config.regression.kwargs(),
        )
        rep.extras.update({"n_q": config.qesn.n_q, "seed": config.seed, "fit_rows": len(data.fit_idx),
                           "test_rows": len(data.test_idx), "washout": config.data.washout})
        models[mode], reports[mode] = model, rep
    return ObserverResult(features, models, reports, weights, data)


def run_lorenz_observer(config: ExperimentConfig, out_dir: Path | None = None) -> dict:
    out_dir = Path(out_dir or config.output_dir or default_output_dir("lorenz-observer"))
    with ArtifactWriter(out_dir, config) as aw:
        with aw.timed("simulate_and_fit"):
            res = fit_observer(config)
        data = res.data
        aw.write("weights.json", res.weights.to_json())
        aw.write("lorenz.csv", _csv_text(
            ["t", "x_n", "y_n", "z_n"],
            ([i] + [repr(float(v)) for v in row] for i, row in enumerate(data.dataset.normalized)),
        ))
        for mode, f in res.features.items():
            aw.write(f"features_{mode}.csv", features_csv(f))
        for mode, rep in res.reports.items():
            model = res.models[mode]
            aw.write(f"model_{mode}.json", model.to_json())
            aw.write(f"report_{mode}.json", rep.to_json())
            aw.write(f"report_{mode}.csv", rep.to_csv())
            f = res.features[mode]
            idx = np.concatenate([data.fit_idx, data.test_idx])
            pred = readout.predict(model, f.rows_for(idx))
            split = ["train"] * len(data.fit_idx) + ["test"] * len(data.test_idx)
            aw.write(f"predictions_{mode}.csv", _csv_text(
                ["t", "split", "y_true", "z_true", "y_pred", "z_pred"],
                ([int(t), s] + [repr(float(v)) for v in (*data.targets[t], *p)] for t, s, p in zip(idx, split, pred)),
            ))
    return {mode: rep for mode, rep in res.reports.items()}


# ---------------------------------------------------------------------------
# response analysis


def run_response(config: ExperimentConfig, out_dir: Path | None = None) -> response.ResponseReport:
    """Sparsity sweep (kind ``response``) or re-uploading block sweep (kind ``sweep``)."""
    out_dir = Path(out_dir or config.output_dir or default_output_dir(config.kind))
    rc = config.response
    common = dict(
        probe_kinds=tuple(rc.probes), config=config.qesn, length=rc.length, transition=rc.transition,
        period=rc.period, shots=rc.shots, washout=rc.washout, epsilon=rc.epsilon, workers=config.qesn.workers,
    )
    with ArtifactWriter(out_dir, config) as aw:
        with aw.timed("sweep"):
            if config.kind == "sweep":
                rep = response.repeat_block_sweep(n_c_values=tuple(rc.n_c_values), **common)
            else:
                rep = response.sparsity_sweep(levels=tuple(rc.levels), decouple_full=rc.decouple_full, **common)
        aw.write("response.json", rep.to_json())
        for i, cell in enumerate(rep.cells):
            stem = f"cells/{i:02d}_{cell.probe}_{_slug(cell.label)}"
            aw.write(stem + ".csv", response.cell_csv(cell))
            if rc.plot:
                aw.write(stem + ".svg", response.cell_plot(cell))
    return rep


def _slug(label: str) -> str:
    return re.sub(r"[^0-9A-Za-z]+", "-", label).strip("-")


# ---------------------------------------------------------------------------
# classical comparison


def run_compare(config: ExperimentConfig, out_dir: Path | None = None) -> list[dict]:
    """QESN vs classical ESN vs linear regression on identical data and splits.

    The main table pairs the ESN node count with the number of readout
    qubits; a second table repeats the ESN at the probability-feature width.
    """
    out_dir = Path(out_dir or config.output_dir or default_output_dir("baseline-compare"))
    rows, wide_rows = [], []
    reports = []
    with ArtifactWriter(out_dir, config) as aw:
        for n_q in config.compare.qubit_counts:
            cfg = replace(config, qesn=replace(config.qesn, n_q=int(n_q)), feature_mode="probability")
            with aw.timed(f"n_q={n_q}"):
                data = observer_data(cfg)
                qres = fit_observer(cfg, data)
                windows = circuit.context_windows(data.inputs, cfg.qesn.c)
                # pad so row t lines up with input t (first c-1 rows never fitted)
                windows = np.vstack([np.zeros((cfg.qesn.c - 1, windows.shape[1])), windows])
                esn_seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(3,)).generate_state(1)[0])
                reg = cfg.regression.kwargs()
                n_r = cfg.qesn.n_pairs
                _, esn_rep = baseline.tuned_esn(windows, data.targets, data.fit_idx, data.test_idx, n_r, esn_seed, reg, "esn")
                _, wide_rep = baseline.tuned_esn(windows, data.targets, data.fit_idx, data.test_idx, 2**n_r, esn_seed, reg, "esn-wide")
                lin_rep = baseline.linear_baseline(windows, data.targets, data.fit_idx, data.test_idx, reg)
            split = {"fit_rows": len(data.fit_idx), "test_rows": len(data.test_idx), "washout": cfg.data.washout,
                     "test_start": int(data.test_idx[0])}
            for rep, width in ((qres.reports["probability"], 2**n_r), (esn_rep, n_r), (lin_rep, windows.shape[1])):
                rows.append({"n_q": n_q, "model": rep.model.split("-")[0], "features": width,
                             "train_rmse": rep.train_rmse, "test_rmse": rep.test_rmse, **split})
                reports.append(rep)
            wide_rows.append({"n_q": n_q, "model": "esn", "features": 2**n_r, "pairing": "probability-width",
                              "train_rmse": wide_rep.train_rmse, "test_rmse": wide_rep.test_rmse, **split})
            reports.append(wide_rep)
        header = ["n_q", "model", "features", "train_rmse", "test_rmse", "fit_rows", "test_rows", "washout", "test_start"]
        aw.write("compare.csv", _csv_text(header, ([r[h] if not isinstance(r[h], float) else repr(r[h]) for h in header] for r in rows)))
        wheader = header[:3] + ["pairing"] + header[3:]
        aw.write("compare_esn_wide.csv", _csv_text(wheader, ([r[h] if not isinstance(r[h], float) else repr(r[h]) for h in wheader] for r in wide_rows)))
        aw.write("compare.json", json.dumps({"rows": rows, "esn_probability_width": wide_rows,
                                             "reports": [r.to_dict() for r in reports]}, indent=1, sort_keys=True) + "\n")
    return rows


# ---------------------------------------------------------------------------
# data / export helpers


def run_lorenz_gen(config: ExperimentConfig, out_dir: Path | None = None) -> Path:
    out_dir = Path(out_dir or config.output_dir or default_output_dir("lorenz"))
    params = replace(config.lorenz, n_steps=config.data.n_points + 1)
    with ArtifactWriter(out_dir, config) as aw:
        traj = lorenz.integrate_lorenz(params)
        norm, lo, hi = lorenz.normalize(traj)
        for name, arr, normalized in (("lorenz_raw.csv", traj, False), ("lorenz_normalized.csv", norm, True)):
            buf = io.StringIO()
            header = ["t", "x_n", "y_n", "z_n"] if normalized else ["t", "x", "y", "z"]
            buf.write(_csv_text(header, ([repr(i * params.dt)] + [repr(float(v)) for v in row] for i, row in enumerate(arr))))
            aw.write(name, buf.getvalue())
        aw.write("normalization.json", json.dumps({"min": lo.tolist(), "max": hi.tolist()}, indent=1) + "\n")
    return out_dir


def run_export(config: ExperimentConfig, out_dir: Path | None = None, steps: int | None = None) -> Path:
    """QASM3 program and weights for the observer circuit on the first ``steps`` inputs."""
    out_dir = Path(out_dir or config.output_dir or default_output_dir("export"))
    data = observer_data(config)
    # a step consumes one full context window
    n = config.data.n_points if steps is None else steps + config.qesn.c - 1
    if n > config.data.n_points:
        raise ValueError(f"cannot unroll {steps} steps from {config.data.n_points} points")
    weights = circuit.init_weights(config.qesn)
    with ArtifactWriter(out_dir, config) as aw:
        aw.write("circuit.qasm", circuit.export_qasm3(config.qesn, weights, data.inputs[:n]))
        aw.write("weights.json", weights.to_json())
    return out_dir
