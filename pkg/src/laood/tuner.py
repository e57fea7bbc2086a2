"""Kernel-width selection per layer: nu stays fixed, gamma is searched over a
grid and judged by how well the detector separates pseudo-OODs from the
training features."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelParams
from .metrics import auroc
from .ocsvm import ConvergenceError, OcsvmConfig, fit, score_batch

DEFAULT_NU = 0.001
DEFAULT_GAMMA_GRID = (0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class TuneSpec:
    """nu, the gamma grid, and the selection criterion.

    criterion "balanced_error" (default) ranks gammas by the mean of the
    false-alarm rate on training data and the miss rate on pseudo-OODs at the
    zero threshold (lower is better); "auroc" by AUROC of pseudo-OOD vs
    training scores (higher is better). AUROC rewards memorization: a width
    large enough to isolate every training point scores the pseudo side
    perfectly while pushing all held-out data over the boundary, so the
    threshold-aware criterion is the default. Ties go to the smaller gamma:
    a smoother boundary.
    """

    nu: float = DEFAULT_NU
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    criterion: str = "balanced_error"
    solver_tol: float = 1e-6
    max_iter: int | None = None

    def __post_init__(self):
        grid = tuple(float(g) for g in self.gamma_grid)
        if len(grid) == 0:
            raise ValueError("gamma_grid must be nonempty")
        if any(g <= 0 for g in grid):
            raise ValueError("gamma_grid entries must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("gamma_grid must be strictly increasing")
        object.__setattr__(self, "gamma_grid", grid)
        if self.criterion not in ("auroc", "balanced_error"):
            raise ValueError(f"unknown criterion {self.criterion!r}")


@dataclass(frozen=True)
class GammaTrial:
    gamma: float
    value: float | None  # criterion value; None when skipped
    skip_reason: str | None = None


@dataclass(frozen=True)
class TuneReport:
    criterion: str
    trials: tuple[GammaTrial, ...] = field(default_factory=tuple)


def _criterion_value(spec: TuneSpec, s_train: np.ndarray, s_pseudo: np.ndarray) -> float:
    if spec.criterion == "auroc":
        return auroc(s_train, s_pseudo)
    false_alarm = float(np.mean(s_train > 0.0))
    miss = float(np.mean(s_pseudo <= 0.0))
    return 0.5 * (false_alarm + miss)


def select_gamma(X_train, X_pseudo, spec: TuneSpec) -> tuple[float, TuneReport]:
    """Fit one detector per grid gamma and keep the best.

    A failed fit skips that gamma with a reason in the report; if every
    gamma fails the last failure propagates. The returned gamma is always a
    grid member, and ties resolve to the smaller gamma because the grid is
    scanned in increasing order with strict improvement.
    """
    Xt = np.asarray(X_train, dtype=np.float64)
    Xp = np.asarray(X_pseudo, dtype=np.float64)
    if Xt.size == 0 or Xp.size == 0:
        raise ValueError("X_train and X_pseudo must be nonempty")
    if Xt.shape[1] != Xp.shape[1]:
        raise ValueError(f"dimension mismatch: {Xt.shape} vs {Xp.shape}")

    maximize = spec.criterion == "auroc"
    best_gamma: float | None = None
    best_value = -np.inf if maximize else np.inf
    trials: list[GammaTrial] = []
    last_error: Exception | None = None
    for gamma in spec.gamma_grid:
        config = OcsvmConfig(
            nu=spec.nu,
            kernel=KernelParams(gamma=gamma),
            solver_tol=spec.solver_tol,
            max_iter=spec.max_iter,
        )
        try:
            model = fit(Xt, config)
        except (ConvergenceError, ValueError) as exc:
            trials.append(GammaTrial(gamma=gamma, value=None, skip_reason=str(exc)))
            last_error = exc
            continue
        value = _criterion_value(spec, score_batch(model, Xt), score_batch(model, Xp))
        trials.append(GammaTrial(gamma=gamma, value=value))
        better = value > best_value if maximize else value < best_value
        if better:
            best_value = value
            best_gamma = gamma

    report = TuneReport(criterion=spec.criterion, trials=tuple(trials))
    if best_gamma is None:
        raise RuntimeError("every gamma in the grid failed to fit") from last_error
    return best_gamma, report
