"""Layer-adaptive detector ensemble: one OCSVM per layer, max-score policy.

Each layer keeps its own standardization so per-layer scores are comparable;
the final score of a sample is the maximum over layers (the most confident
opinion wins) and the confusion score is their sum.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernel import KernelParams
from .ocsvm import OcsvmConfig, OcsvmModel, fit, score_batch
from .preprocess import StandardizeStats, apply_stats, fit_stats
from .pseudo_ood import ShiftConfig, generate_pseudo_ood
from .tuner import TuneSpec, select_gamma

THREADS_ENV = "LAOOD_THREADS"


class LayerBuildError(RuntimeError):
    """A per-layer build step failed; names the layer, chains the cause."""

    def __init__(self, layer_name: str, cause: Exception):
        super().__init__(f"layer {layer_name}: {cause}")
        self.layer_name = layer_name


def resolve_threads() -> int:
    """Worker cap from LAOOD_THREADS; 0 or unset means auto (cpu count)."""
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        v = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if v < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {v}")
    return v if v > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class LayerDetector:
    name: str
    stats: StandardizeStats
    model: OcsvmModel


@dataclass(frozen=True)
class DetectorEnsemble:
    layers: tuple[LayerDetector, ...]
    delta: float = 0.0

    def __post_init__(self):
        if len(self.layers) == 0:
            raise ValueError("ensemble needs at least one layer")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names: {names}")
        for layer in self.layers:
            if layer.model.dim != layer.stats.d:
                raise ValueError(
                    f"layer {layer.name}: model dim {layer.model.dim} != stats dim {layer.stats.d}"
                )

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(layer.name for layer in self.layers)


@dataclass(frozen=True)
class SamplePrediction:
    """Per-layer and combined scores for one sample.

    argmax_layer is 1-indexed; ties go to the earliest layer.
    """

    per_layer_scores: np.ndarray
    final_score: float
    argmax_layer: int
    confusion: float
    is_ood: bool


@dataclass(frozen=True)
class DatasetScores:
    predictions: tuple[SamplePrediction, ...]
    detections_per_layer: np.ndarray  # predicted-OOD rows attributed to their argmax layer

    def __len__(self) -> int:
        return len(self.predictions)


def _prediction_from_scores(scores: np.ndarray, delta: float) -> SamplePrediction:
    argmax = int(np.argmax(scores))  # first occurrence: earliest layer wins ties
    final = float(scores[argmax])
    return SamplePrediction(
        per_layer_scores=scores,
        final_score=final,
        argmax_layer=argmax + 1,
        confusion=float(scores.sum()),
        is_ood=final > delta,
    )


def score_sample(ens: DetectorEnsemble, per_layer_features) -> SamplePrediction:
    """Standardize and score one sample's L per-layer feature vectors."""
    if len(per_layer_features) != ens.n_layers:
        raise ValueError(
            f"expected {ens.n_layers} per-layer vectors, got {len(per_layer_features)}"
        )
    scores = np.empty(ens.n_layers)
    for li, (layer, x) in enumerate(zip(ens.layers, per_layer_features)):
        xs = apply_stats(layer.stats, np.asarray(x, dtype=np.float64))
        scores[li] = score_batch(layer.model, xs[None, :])[0]
    return _prediction_from_scores(scores, ens.delta)


def score_dataset(ens: DetectorEnsemble, per_layer_matrices) -> DatasetScores:
    """Row-aligned predictions for L feature matrices plus per-layer detection counts."""
    if len(per_layer_matrices) != ens.n_layers:
        raise ValueError(
            f"expected {ens.n_layers} matrices, got {len(per_layer_matrices)}"
        )
    mats = [np.asarray(m, dtype=np.float64) for m in per_layer_matrices]
    n_rows = {m.shape[0] for m in mats}
    if len(n_rows) != 1:
        raise ValueError(f"row count mismatch across layers: {sorted(n_rows)}")
    n = n_rows.pop()

    counts = np.zeros(ens.n_layers, dtype=np.int64)
    if n == 0:
        return DatasetScores(predictions=(), detections_per_layer=counts)

    per_layer = np.empty((n, ens.n_layers))
    for li, (layer, m) in enumerate(zip(ens.layers, mats)):
        per_layer[:, li] = score_batch(layer.model, apply_stats(layer.stats, m))
    predictions = tuple(_prediction_from_scores(per_layer[r], ens.delta) for r in range(n))
    for p in predictions:
        if p.is_ood:
            counts[p.argmax_layer - 1] += 1
    return DatasetScores(predictions=predictions, detections_per_layer=counts)


def _build_layer(
    name: str, X: np.ndarray, tune: TuneSpec, shift: ShiftConfig
) -> LayerDetector:
    stats = fit_stats(X)
    Xs = apply_stats(stats, X)
    pseudo = generate_pseudo_ood(Xs, shift)
    gamma, _ = select_gamma(Xs, pseudo, tune)
    model = fit(
        Xs,
        OcsvmConfig(
            nu=tune.nu,
            kernel=KernelParams(gamma=gamma),
            solver_tol=tune.solver_tol,
            max_iter=tune.max_iter,
        ),
    )
    model.feature_mean = stats.mean
    model.feature_std = stats.std
    model.flagged_columns = stats.flagged_columns
    return LayerDetector(name=name, stats=stats, model=model)


def build_ensemble(
    per_layer_train,
    tune: TuneSpec,
    shift: ShiftConfig,
    layer_names: list[str] | None = None,
    delta: float = 0.0,
) -> DetectorEnsemble:
    """Full detector-only training path, backbone frozen.

    Per layer: fit stats, standardize, generate pseudo-OODs, select gamma,
    fit the detector. Layers are independent and may fit in parallel (capped
    by LAOOD_THREADS); assembly order is always the input layer order.
    """
    mats = [np.asarray(m, dtype=np.float64) for m in per_layer_train]
    if len(mats) == 0:
        raise ValueError("need at least one layer")
    if len({m.shape[0] for m in mats}) != 1:
        raise ValueError("row count mismatch across layers")
    if layer_names is None:
        layer_names = [f"layer{i + 1}" for i in range(len(mats))]
    if len(layer_names) != len(mats):
        raise ValueError("layer_names length mismatch")

    def build_one(item):
        name, X = item
        try:
            return _build_layer(name, X, tune, shift)
        except Exception as exc:
            raise LayerBuildError(name, exc) from exc

    items = list(zip(layer_names, mats))
    workers = min(resolve_threads(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            layers = tuple(pool.map(build_one, items))
    else:
        layers = tuple(build_one(item) for item in items)
    return DetectorEnsemble(layers=layers, delta=delta)
