"""Euclidean projection onto the probability simplex {a >= 0, sum(a) = 1}.

``project`` uses the active-set (water-filling) iteration: start with every
coordinate active, set the shift ``lam = (1 - sum(active entries)) / n_active``,
drop coordinates with ``hat + lam < 0`` and repeat. ``lam`` only grows, so a
dropped coordinate never comes back and the loop ends after at most ``m``
passes. ``project_oracle`` is a brute-force check over every support set and is
meant for tests only.
"""

from __future__ import annotations

import itertools

import numpy as np

ORACLE_MAX_M = 12


def _validate(hat) -> np.ndarray:
    hat = np.asarray(hat, dtype=np.float64)
    if hat.ndim == 0 or hat.shape[-1] == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(hat)):
        raise ValueError("projection input must be finite")
    return hat


def project_rows(hat: np.ndarray) -> np.ndarray:
    """Project every row of a 2-D array independently."""
    hat = _validate(hat)
    if hat.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {hat.shape}")
    rows, m = hat.shape
    active = np.ones((rows, m), dtype=bool)
    lam = np.zeros(rows)
    for _ in range(m):
        count = active.sum(axis=1)
        lam = (1.0 - np.where(active, hat, 0.0).sum(axis=1)) / count
        # ties at exactly zero stay active
        still = active & (hat + lam[:, None] >= 0.0)
        if np.array_equal(still, active):
            break
        active = still
    return np.where(active, hat + lam[:, None], 0.0)


def project(hat) -> np.ndarray:
    """Project a single vector onto the simplex."""
    hat = _validate(hat)
    if hat.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {hat.shape}")
    return project_rows(hat[None, :])[0]


def project_oracle(hat) -> np.ndarray:
    """Exact projection by enumerating all 2**m - 1 candidate supports."""
    hat = _validate(hat)
    if hat.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {hat.shape}")
    m = hat.size
    if m > ORACLE_MAX_M:
        raise ValueError(f"oracle enumeration limited to m <= {ORACLE_MAX_M}, got {m}")
    best, best_dist = None, np.inf
    for k in range(1, m + 1):
        for support in itertools.combinations(range(m), k):
            idx = list(support)
            cand = np.zeros(m)
            # equality-constrained least squares on the support
            cand[idx] = hat[idx] + (1.0 - hat[idx].sum()) / k
            if np.any(cand[idx] < 0.0):
                continue
            dist = float(np.sum((cand - hat) ** 2))
            if dist < best_dist:
                best, best_dist = cand, dist
    return best


def on_simplex(a: np.ndarray, tol: float = 1e-9) -> bool:
    a = np.asarray(a, dtype=np.float64)
    return bool(np.all(a >= 0.0) and np.all(np.abs(a.sum(axis=-1) - 1.0) <= tol))
