"""Singular values by one-sided (Hestenes) Jacobi rotations.

Column pairs are orthogonalized with plane rotations until every pair is
numerically orthogonal; the singular values are then the column norms.
Pairs are visited in round-robin order so each round rotates n/2 disjoint
pairs at once. Jacobi keeps small singular values to high relative
accuracy, which matters for badly conditioned feature matrices.
"""

from __future__ import annotations

import math

import numpy as np

COND_RTOL = 1e-14


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """n-1 rounds of n/2 disjoint pairs covering every pair once (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        left = np.array(players[: n // 2])
        right = np.array(players[n // 2 :][::-1])
        rounds.append((np.minimum(left, right), np.maximum(left, right)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def singular_values(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Singular values of a real matrix, descending."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("singular_values needs a non-empty 2-D matrix")
    if a.shape[0] < a.shape[1]:
        a = a.T
    m, n = a.shape
    if n == 1:
        return np.array([np.linalg.norm(a[:, 0])])
    if n % 2:
        a = np.hstack([a, np.zeros((m, 1))])
    rounds = _round_robin(a.shape[1])
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            ap, aq = a[:, p], a[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            active &= (alpha > 0) & (beta > 0)
            if not active.any():
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t[zeta == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
        if not rotated:
            break
    sv = np.sort(np.linalg.norm(a, axis=0))[::-1]
    return sv[:n]


def condition_number(features: np.ndarray) -> float:
    """sigma_max / sigma_min; ``math.inf`` when sigma_min < 1e-14 sigma_max."""
    features = np.asarray(features, dtype=float)
    if features.size == 0:
        raise ValueError("condition number of an empty matrix")
    sv = singular_values(features)
    if sv[0] == 0.0 or sv[-1] < COND_RTOL * sv[0]:
        return math.inf
    return float(sv[0] / sv[-1])
