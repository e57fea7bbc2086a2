"""Feature reduction (global average pooling) and per-layer standardization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StandardizeStats:
    """Per-column mean/std fitted on a training matrix.

    std uses the population convention (divide by n). Zero-variance columns
    get std 1.0 and their indices recorded in flagged_columns, so constant
    features pass through centered instead of dividing by zero.
    """

    mean: np.ndarray
    std: np.ndarray
    flagged_columns: tuple[int, ...] = field(default_factory=tuple)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-d arrays of equal length")
        if np.any(self.std <= 0):
            raise ValueError("std must be strictly positive")


def global_average_pool(tensor) -> np.ndarray:
    """Reduce a C x H x W activation tensor to the length-C vector of spatial means."""
    t = np.asarray(tensor, dtype=np.float64)
    if t.ndim != 3:
        raise ValueError(f"expected a C x H x W tensor, got shape {t.shape}")
    if 0 in t.shape:
        raise ValueError(f"zero-sized dimension in shape {t.shape}")
    return t.mean(axis=(1, 2))


def fit_stats(X_train) -> StandardizeStats:
    """Column means and population standard deviations of the training matrix."""
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {X.shape}")
    if X.shape[0] < 2:
        raise ValueError(f"need at least 2 rows to fit stats, got {X.shape[0]}")
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population (1/n)
    flagged = tuple(int(j) for j in np.nonzero(std == 0.0)[0])
    if flagged:
        std = std.copy()
        std[list(flagged)] = 1.0
    return StandardizeStats(mean=mean, std=std, flagged_columns=flagged)


def apply_stats(stats: StandardizeStats, X) -> np.ndarray:
    """(X - mean) / std, column-wise."""
    Xm = np.asarray(X, dtype=np.float64)
    if Xm.ndim == 1:
        Xm = Xm[None, :]
        if Xm.shape[1] != stats.d:
            raise ValueError(f"dimension mismatch: {Xm.shape[1]} vs stats.d={stats.d}")
        return ((Xm - stats.mean) / stats.std)[0]
    if Xm.ndim != 2 or Xm.shape[1] != stats.d:
        raise ValueError(f"dimension mismatch: {Xm.shape} vs stats.d={stats.d}")
    return (Xm - stats.mean) / stats.std


def invert_stats(stats: StandardizeStats, X) -> np.ndarray:
    """Undo apply_stats: X * std + mean."""
    Xm = np.asarray(X, dtype=np.float64)
    return Xm * stats.std + stats.mean
