"""RBF kernel evaluation and Gram-matrix construction.

All detectors share this kernel. Arithmetic is float64 throughout even
though feature files store float32: the QP solver's stopping tests need
the headroom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KernelParams:
    """Width parameter of the Gaussian RBF kernel k(x, y) = exp(-gamma * ||x - y||^2).

    gamma must be strictly positive. gamma == 0 degenerates to k == 1 and is
    accepted only with diagnostic=True.
    """

    gamma: float
    diagnostic: bool = False

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.gamma == 0 and not self.diagnostic:
            raise ValueError("gamma == 0 is only permitted in diagnostic mode")


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    return v


def rbf(x, y, params: KernelParams) -> float:
    """Evaluate k(x, y) = exp(-gamma * ||x - y||^2) in float64.

    Squared distance is computed as sum((x_i - y_i)^2) directly, not via the
    norm expansion, to avoid cancellation at small distances.
    """
    xv = _as_vector(x)
    yv = _as_vector(y)
    if xv.shape != yv.shape:
        raise ValueError(f"dimension mismatch: {xv.shape} vs {yv.shape}")
    return float(np.exp(-params.gamma * np.sum((xv - yv) ** 2)))


def gram(X, params: KernelParams, *, expansion: bool = False) -> np.ndarray:
    """Pairwise kernel matrix G[i][j] = rbf(X[i], X[j]).

    The default path reproduces entrywise ``rbf`` calls bit-for-bit (one
    row-vectorized difference per row, same summation order as the scalar
    call). ``expansion=True`` switches to the ||x||^2 + ||y||^2 - 2 x.y
    form with the squared distance clamped at 0; faster, not bit-identical.
    """
    Xm = np.asarray(X, dtype=np.float64)
    if Xm.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {Xm.shape}")
    n = Xm.shape[0]
    if n == 0:
        raise ValueError("empty feature matrix")
    if not np.all(np.isfinite(Xm)):
        raise ValueError("non-finite input")
    if expansion:
        sq = np.sum(Xm**2, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Xm @ Xm.T), 0.0)
        np.fill_diagonal(d2, 0.0)
        return np.exp(-params.gamma * d2)
    G = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        G[i] = np.exp(-params.gamma * np.sum((Xm - Xm[i]) ** 2, axis=1))
    return G


def kernel_vector(X, x, params: KernelParams) -> np.ndarray:
    """k(X[i], x) for every row of X, same arithmetic as ``rbf``."""
    Xm = np.asarray(X, dtype=np.float64)
    xv = _as_vector(x)
    if Xm.ndim != 2 or Xm.shape[1] != xv.shape[0]:
        raise ValueError(f"dimension mismatch: {Xm.shape} vs {xv.shape}")
    return np.exp(-params.gamma * np.sum((Xm - xv) ** 2, axis=1))
