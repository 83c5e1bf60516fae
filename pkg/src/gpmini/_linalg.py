"""Batched triangular substitution over stacks of small systems.

LAPACK's per-matrix dispatch dominates run time for thousands of M x M
solves with M ~ 15, so these loops run the recurrences across the batch
dimension in numpy instead: M vector operations instead of B library calls.
"""

from __future__ import annotations

import numpy as np


def batch_forward(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve L u = rhs for stacked lower-triangular L: (B, M, M) against
    (B, M, K) right-hand sides."""
    out = np.empty_like(rhs)
    m = L.shape[1]
    for j in range(m):
        acc = 0.0 if j == 0 else np.einsum("bk,bko->bo", L[:, j, :j], out[:, :j, :])
        out[:, j, :] = (rhs[:, j, :] - acc) / L[:, j, j, None]
    return out


def batch_backward(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve L' x = rhs (same stacked shapes as batch_forward)."""
    out = np.empty_like(rhs)
    m = L.shape[1]
    for j in range(m - 1, -1, -1):
        if j == m - 1:
            acc = 0.0
        else:
            acc = np.einsum("bk,bko->bo", L[:, j + 1:, j], out[:, j + 1:, :])
        out[:, j, :] = (rhs[:, j, :] - acc) / L[:, j, j, None]
    return out
