"""Pseudo-OOD generation from in-distribution features.

Edge pattern detection finds boundary points of the training cloud: a point
whose k nearest neighbors all sit on one side has a long mean unit vector
toward them. Edge points are then shifted outward (away from the data) by
their mean k-NN distance to form tuning outliers, with no real OOD data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ShiftConfig:
    """Knobs for edge detection and the outward shift.

    k_neighbors is clamped to n-1 at call time. edge_threshold is the minimum
    edge score for a point to be shifted; shift_scale multiplies the mean
    k-NN distance used as the shift length. The default scale of 2 places
    pseudo-OODs clearly outside the fringe where held-out inliers still land,
    which keeps width tuning away from memorizing solutions.
    """

    k_neighbors: int = 20
    edge_threshold: float = 0.1
    shift_scale: float = 2.0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not 0 < self.edge_threshold <= 1:
            raise ValueError(f"edge_threshold must be in (0, 1], got {self.edge_threshold}")
        if self.shift_scale <= 0:
            raise ValueError(f"shift_scale must be > 0, got {self.shift_scale}")


def _knn_indices(X: np.ndarray, k: int, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive k-NN: (n, k) neighbor indices and distances, ties to the lower index."""
    n = X.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = X[start:stop]
        d2 = np.sum((block[:, None, :] - X[None, :, :]) ** 2, axis=2)
        for r in range(stop - start):
            d2[r, start + r] = np.inf  # exclude self
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[start:stop] = order
        dist[start:stop] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return idx, dist


def edge_scores(X, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Edge score and inward direction per row.

    v_i is the mean of unit vectors from x_i to its k nearest neighbors
    (coincident neighbors contribute no direction and the mean renormalizes
    by the count actually used). Returns (scores, directions) where
    scores[i] = ||v_i|| in [0, 1] and directions[i] = v_i / ||v_i||; rows
    with score 0 get a zero direction.
    """
    Xm = np.asarray(X, dtype=np.float64)
    if Xm.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {Xm.shape}")
    n, d = Xm.shape
    if not 1 <= k < n:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")

    idx, dist = _knn_indices(Xm, k)
    scores = np.zeros(n)
    directions = np.zeros((n, d))
    for i in range(n):
        diffs = Xm[idx[i]] - Xm[i]
        dists = dist[i]
        used = dists > 0.0
        if not used.any():
            continue  # all k neighbors coincident: flagged by score 0
        units = diffs[used] / dists[used, None]
        v = units.sum(axis=0) / used.sum()
        norm = float(np.linalg.norm(v))
        scores[i] = norm
        if norm > 0.0:
            directions[i] = v / norm
    return scores, directions


def generate_pseudo_ood(X, config: ShiftConfig) -> np.ndarray:
    """Shift edge points outward by shift_scale times their mean k-NN distance.

    Emits one row per edge point (edge score >= edge_threshold). If the
    threshold selects nothing, it drops once to the 90th percentile of the
    observed scores (zero-score rows stay excluded); an empty result after
    that is an error.
    """
    Xm = np.asarray(X, dtype=np.float64)
    if Xm.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {Xm.shape}")
    n = Xm.shape[0]
    k = min(config.k_neighbors, n - 1)
    if k < 1:
        raise ValueError(f"need at least 2 rows, got {n}")

    scores, directions = edge_scores(Xm, k)
    edge = scores >= config.edge_threshold
    if not edge.any():
        relaxed = float(np.percentile(scores, 90.0))
        edge = (scores >= relaxed) & (scores > 0.0)
        if not edge.any():
            raise ValueError(
                f"no edge points at threshold {config.edge_threshold} "
                f"or relaxed threshold {relaxed}"
            )

    _, dist = _knn_indices(Xm, k)
    mean_dist = dist.mean(axis=1)
    rows = np.nonzero(edge)[0]
    return Xm[rows] - config.shift_scale * mean_dist[rows, None] * directions[rows]


def generate_pseudo_targets(X, config: ShiftConfig) -> np.ndarray:
    """Inward mirror of generate_pseudo_ood applied to every point.

    Extension beyond the outward shift: synthetic inliers for error criteria
    that need an acceptance side as well.
    """
    Xm = np.asarray(X, dtype=np.float64)
    if Xm.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {Xm.shape}")
    n = Xm.shape[0]
    k = min(config.k_neighbors, n - 1)
    if k < 1:
        raise ValueError(f"need at least 2 rows, got {n}")
    scores, directions = edge_scores(Xm, k)
    _, dist = _knn_indices(Xm, k)
    mean_dist = dist.mean(axis=1)
    return Xm + config.shift_scale * mean_dist[:, None] * directions
