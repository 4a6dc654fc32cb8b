"""Lorenz-63 trajectories: fixed-step RK4, min-max normalization, splits."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class IntegrationError(RuntimeError):
    pass


@dataclass
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.02
    n_steps: int = 10000
    x0: tuple[float, float, float] = (1.0, 1.0, 1.0)
    transient: int = 500

    def __post_init__(self):
        self.x0 = tuple(float(v) for v in self.x0)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1 or self.transient < 0:
            raise ValueError("n_steps must be positive and transient non-negative")
        if len(self.x0) != 3:
            raise ValueError("x0 must be a 3-vector")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x0"] = list(self.x0)
        return d


def lorenz_rhs(state: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    x, y, z = state
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rk4_step(state: np.ndarray, dt: float, sigma: float, rho: float, beta: float) -> np.ndarray:
    k1 = lorenz_rhs(state, sigma, rho, beta)
    k2 = lorenz_rhs(state + 0.5 * dt * k1, sigma, rho, beta)
    k3 = lorenz_rhs(state + 0.5 * dt * k2, sigma, rho, beta)
    k4 = lorenz_rhs(state + dt * k3, sigma, rho, beta)
    return state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_lorenz(params: LorenzParams) -> np.ndarray:
    """States at t = 0, dt, ..., (n_steps-1) dt after discarding ``transient`` steps."""
    s = np.asarray(params.x0, dtype=float)
    out = np.empty((params.n_steps, 3))
    total = params.transient + params.n_steps
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(total):
            if i >= params.transient:
                out[i - params.transient] = s
            if i == total - 1:
                break
            s = rk4_step(s, params.dt, params.sigma, params.rho, params.beta)
            if not np.all(np.isfinite(s)):
                raise IntegrationError(f"non-finite state at step {i + 1}")
    return out


def normalize(traj: np.ndarray, rows: slice | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-component min-max scaling to [0, 1].

    ``rows`` restricts the statistics (e.g. to the training range); values
    outside that range may then fall outside [0, 1].
    """
    traj = np.asarray(traj, dtype=float)
    ref = traj if rows is None else traj[rows]
    lo, hi = ref.min(axis=0), ref.max(axis=0)
    if np.any(hi == lo):
        raise ValueError("cannot normalize a constant component")
    return (traj - lo) / (hi - lo), lo, hi


def denormalize(norm: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.asarray(norm) * (hi - lo) + lo


@dataclass
class LorenzDataset:
    raw: np.ndarray
    normalized: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    train: range
    test: range
    washout: int
    extras: dict = field(default_factory=dict)

    @property
    def fit_range(self) -> range:
        return range(self.train.start + self.washout, self.train.stop)

    @property
    def fit_rows(self) -> int:
        return len(self.fit_range)


def make_dataset(
    trajectory: np.ndarray,
    train_len: int,
    test_len: int,
    washout: int,
    train_only_stats: bool = False,
) -> LorenzDataset:
    """Contiguous train then test ranges; ``washout`` leading train rows are never fitted.

    ``train_only_stats`` normalizes with training-range statistics only,
    avoiding the mild test-range leakage of global min-max.
    """
    n = len(trajectory)
    if train_len < 1 or test_len < 0 or washout < 0:
        raise ValueError("lengths must be non-negative and train_len positive")
    if train_len + test_len > n:
        raise ValueError(f"train_len + test_len = {train_len + test_len} exceeds {n} points")
    if washout >= train_len:
        raise ValueError("washout must be shorter than the training range")
    norm, lo, hi = normalize(trajectory, slice(0, train_len) if train_only_stats else None)
    return LorenzDataset(
        raw=np.asarray(trajectory, dtype=float),
        normalized=norm,
        lo=lo,
        hi=hi,
        train=range(0, train_len),
        test=range(train_len, train_len + test_len),
        washout=washout,
    )


def write_csv(path: Path, trajectory: np.ndarray, dt: float, normalized: bool = False) -> None:
    header = ["t", "x_n", "y_n", "z_n"] if normalized else ["t", "x", "y", "z"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(trajectory):
            w.writerow([repr(i * dt)] + [repr(float(v)) for v in row])
