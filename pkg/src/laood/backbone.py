"""Desk-scale differentiable backbone and detector co-training.

A small tanh MLP exposes every hidden layer's post-activation output as a
feature tap. The joint objective is the classifier's cross-entropy plus
lambda/(2L) times the sum over layers of the detector dual objectives
alpha^T K alpha, evaluated on (frozen-)standardized taps. Alternating
optimization descends on the backbone with dual weights frozen (Step I),
then refits every detector on the refreshed taps (Step II).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import DetectorEnsemble, LayerDetector, build_ensemble
from .kernel import KernelParams, gram
from .ocsvm import OcsvmConfig, fit
from .preprocess import StandardizeStats, apply_stats, fit_stats
from .pseudo_ood import ShiftConfig
from .tuner import TuneSpec


@dataclass
class ToyBackbone:
    """MLP with dims (d0, hidden..., K), tanh hidden activations, linear logits."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, layer_dims, seed: int = 0) -> "ToyBackbone":
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 3:
            raise ValueError("need (input, at least one hidden, output) dims")
        if dims[-1] < 2:
            raise ValueError(f"output dimension must be >= 2 classes, got {dims[-1]}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(layer_dims=dims, weights=weights, biases=biases)

    @property
    def n_taps(self) -> int:
        return len(self.layer_dims) - 2

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "ToyBackbone":
        return ToyBackbone(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def params_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def set_params_flat(self, theta: np.ndarray) -> None:
        pos = 0
        for arr in self.weights + self.biases:
            arr[...] = theta[pos : pos + arr.size].reshape(arr.shape)
            pos += arr.size
        if pos != theta.size:
            raise ValueError(f"parameter vector length {theta.size}, expected {pos}")


def forward_batch(bb: ToyBackbone, X) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits (n, K) and the list of post-activation hidden taps, one per layer."""
    h = np.asarray(X, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != bb.layer_dims[0]:
        raise ValueError(f"input shape {h.shape} does not match d0={bb.layer_dims[0]}")
    taps = []
    for W, b in zip(bb.weights[:-1], bb.biases[:-1]):
        h = np.tanh(h @ W + b)
        taps.append(h)
    logits = h @ bb.weights[-1] + bb.biases[-1]
    return logits, taps


def forward(bb: ToyBackbone, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Single-sample forward: (logits, taps) as 1-d vectors."""
    xv = np.asarray(x, dtype=np.float64)
    if xv.ndim != 1:
        raise ValueError(f"expected a vector, got shape {xv.shape}")
    logits, taps = forward_batch(bb, xv[None, :])
    return logits[0], [t[0] for t in taps]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean softmax cross-entropy."""
    return float(-_log_softmax(logits)[np.arange(len(y)), y].mean())


def accuracy(logits: np.ndarray, y: np.ndarray) -> float:
    return float((logits.argmax(axis=1) == y).mean())


def _standardized_taps(
    taps: list[np.ndarray], stats_per_layer: list[StandardizeStats] | None
) -> list[np.ndarray]:
    if stats_per_layer is None:
        return taps
    if len(stats_per_layer) != len(taps):
        raise ValueError("stats_per_layer length mismatch")
    return [apply_stats(s, t) for s, t in zip(stats_per_layer, taps)]


def _reg_terms(
    taps: list[np.ndarray],
    alphas_per_layer: list[np.ndarray],
    kernels_per_layer: list[KernelParams],
) -> list[float]:
    terms = []
    for t, a, kp in zip(taps, alphas_per_layer, kernels_per_layer):
        K = gram(t, kp)
        terms.append(float(a @ K @ a))
    return terms


def joint_loss(
    bb: ToyBackbone,
    X,
    y,
    alphas_per_layer,
    kernels_per_layer,
    lam: float,
    stats_per_layer: list[StandardizeStats] | None = None,
) -> float:
    """Cross-entropy plus lambda/(2L) * sum_l alpha^T K_l alpha.

    alphas_per_layer are dense dual vectors over the batch rows, treated as
    constants. stats_per_layer, when given, standardizes each tap before the
    kernel and is also treated as constant.
    """
    total, _, _ = joint_parts(bb, X, y, alphas_per_layer, kernels_per_layer, lam, stats_per_layer)
    return total


def joint_parts(
    bb: ToyBackbone,
    X,
    y,
    alphas_per_layer,
    kernels_per_layer,
    lam: float,
    stats_per_layer: list[StandardizeStats] | None = None,
) -> tuple[float, float, float]:
    """(total, cross_entropy, regularizer) for the joint objective."""
    Xm = np.asarray(X, dtype=np.float64)
    yv = np.asarray(y, dtype=np.int64)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    logits, taps = forward_batch(bb, Xm)
    ce = cross_entropy(logits, yv)
    if lam == 0:
        return ce, ce, 0.0
    L = bb.n_taps
    alphas = [np.asarray(a, dtype=np.float64) for a in alphas_per_layer]
    if len(alphas) != L or len(kernels_per_layer) != L:
        raise ValueError(f"need {L} alpha vectors and kernels")
    for a in alphas:
        if a.shape[0] != Xm.shape[0]:
            raise ValueError("alpha indexes outside the batch")
    terms = _reg_terms(_standardized_taps(taps, stats_per_layer), alphas, kernels_per_layer)
    reg = lam / (2.0 * L) * sum(terms)
    return ce + reg, ce, reg


def joint_grad(
    bb: ToyBackbone,
    X,
    y,
    alphas_per_layer,
    kernels_per_layer,
    lam: float,
    stats_per_layer: list[StandardizeStats] | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradient of joint_loss w.r.t. (weights, biases).

    The kernel term injects, at tap l for sample i, the cotangent
    -(2 lambda gamma_l / L) * alpha_i * sum_j alpha_j (u_i - u_j) k(u_i, u_j)
    (divided elementwise by the frozen std when standardizing), which then
    flows backward through layers 1..l only.
    """
    Xm = np.asarray(X, dtype=np.float64)
    yv = np.asarray(y, dtype=np.int64)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    n = Xm.shape[0]
    L = bb.n_taps

    # forward, keeping taps
    hs = [Xm]
    h = Xm
    for W, b in zip(bb.weights[:-1], bb.biases[:-1]):
        h = np.tanh(h @ W + b)
        hs.append(h)
    logits = h @ bb.weights[-1] + bb.biases[-1]

    # per-tap cotangents from the kernel regularizer
    reg_cots: list[np.ndarray | None] = [None] * L
    if lam > 0:
        alphas = [np.asarray(a, dtype=np.float64) for a in alphas_per_layer]
        if len(alphas) != L or len(kernels_per_layer) != L:
            raise ValueError(f"need {L} alpha vectors and kernels")
        for a in alphas:
            if a.shape[0] != n:
                raise ValueError("alpha indexes outside the batch")
        taps_std = _standardized_taps(hs[1:], stats_per_layer)
        for l in range(L):
            a = alphas[l]
            kp = kernels_per_layer[l]
            U = taps_std[l]
            K = gram(U, kp)
            M = (a[:, None] * a[None, :]) * K
            cot = -(2.0 * lam * kp.gamma / L) * (U * M.sum(axis=1)[:, None] - M @ U)
            if stats_per_layer is not None:
                cot = cot / stats_per_layer[l].std
            reg_cots[l] = cot

    # backward
    p = np.exp(_log_softmax(logits))
    g_logits = p.copy()
    g_logits[np.arange(n), yv] -= 1.0
    g_logits /= n

    grad_w = [np.zeros_like(W) for W in bb.weights]
    grad_b = [np.zeros_like(b) for b in bb.biases]
    grad_w[-1] = hs[-1].T @ g_logits
    grad_b[-1] = g_logits.sum(axis=0)
    d_h = g_logits @ bb.weights[-1].T
    for l in range(L - 1, -1, -1):
        if reg_cots[l] is not None:
            d_h = d_h + reg_cots[l]
        d_z = d_h * (1.0 - hs[l + 1] ** 2)
        grad_w[l] = hs[l].T @ d_z
        grad_b[l] = d_z.sum(axis=0)
        d_h = d_z @ bb.weights[l].T
    return grad_w, grad_b


@dataclass(frozen=True)
class JointConfig:
    """Alternating-optimization knobs.

    lam is the regularization weight coupling detectors into the backbone
    loss. Gamma is tuned once, before the loop, via the TuneSpec; Step II
    refits keep it frozen. pretrain_epochs > 0 runs plain cross-entropy
    descent first (warm start for a backbone that is not yet pre-trained).
    """

    lam: float
    outer_iters: int
    inner_epochs: int
    learning_rate: float
    convergence_tol: float = 1e-8
    tune: TuneSpec = field(default_factory=TuneSpec)
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    pretrain_epochs: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.outer_iters < 0:
            raise ValueError(f"outer_iters must be >= 0, got {self.outer_iters}")
        if self.inner_epochs <= 0:
            raise ValueError(f"inner_epochs must be > 0, got {self.inner_epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.convergence_tol <= 0:
            raise ValueError(f"convergence_tol must be > 0, got {self.convergence_tol}")


@dataclass(frozen=True)
class TraceRow:
    outer_iter: int
    step: str  # "pretrain" | "step1" | "step2"
    joint_objective: float
    ce_loss: float
    reg_term: float
    train_accuracy: float


class AlternatingAbort(RuntimeError):
    """Detector fit failed mid-loop; carries the partial trace."""

    def __init__(self, message: str, trace: list[TraceRow]):
        super().__init__(message)
        self.trace = trace


def pretrain_classifier(bb: ToyBackbone, X, y, epochs: int, learning_rate: float) -> None:
    """Full-batch cross-entropy gradient descent, in place."""
    for _ in range(epochs):
        gw, gb = joint_grad(bb, X, y, [], [], 0.0)
        for W, g in zip(bb.weights, gw):
            W -= learning_rate * g
        for b, g in zip(bb.biases, gb):
            b -= learning_rate * g


def _dense_alphas(ens: DetectorEnsemble, n: int) -> list[np.ndarray]:
    dense = []
    for layer in ens.layers:
        a = np.zeros(n)
        a[layer.model.support_indices] = layer.model.alphas
        dense.append(a)
    return dense


def _refit_detectors(
    taps: list[np.ndarray],
    gammas: list[float],
    tune: TuneSpec,
    layer_names: list[str],
) -> DetectorEnsemble:
    layers = []
    for name, t, gamma in zip(layer_names, taps, gammas):
        stats = fit_stats(t)
        model = fit(
            apply_stats(stats, t),
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
        layers.append(LayerDetector(name=name, stats=stats, model=model))
    return DetectorEnsemble(layers=tuple(layers))


def train_alternating(
    bb: ToyBackbone, dataset: tuple[np.ndarray, np.ndarray], config: JointConfig
) -> tuple[ToyBackbone, DetectorEnsemble, list[TraceRow]]:
    """Alternate backbone descent (Step I) and detector refits (Step II).

    Gamma per layer is tuned once on the initial taps; every Step II recomputes
    standardization stats and refits the dual weights at the frozen gammas.
    The trace records the joint objective after every step; the loop stops at
    outer_iters or when the after-Step-II objective decrease falls below
    convergence_tol.
    """
    X = np.asarray(dataset[0], dtype=np.float64)
    y = np.asarray(dataset[1], dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"features/labels row mismatch: {X.shape[0]} vs {y.shape[0]}")
    if y.min() < 0 or y.max() >= bb.n_classes:
        raise ValueError(f"labels must lie in [0, {bb.n_classes})")
    n = X.shape[0]
    L = bb.n_taps
    layer_names = [f"layer{i + 1}" for i in range(L)]
    trace: list[TraceRow] = []

    if config.pretrain_epochs > 0:
        pretrain_classifier(bb, X, y, config.pretrain_epochs, config.learning_rate)
        logits, _ = forward_batch(bb, X)
        ce = cross_entropy(logits, y)
        trace.append(TraceRow(0, "pretrain", ce, ce, 0.0, accuracy(logits, y)))

    # initial detector build: tunes gamma per layer (once, before the loop)
    _, taps = forward_batch(bb, X)
    try:
        ens = build_ensemble(taps, config.tune, config.shift, layer_names=layer_names)
    except Exception as exc:
        raise AlternatingAbort(f"initial detector build failed: {exc}", trace) from exc
    gammas = [layer.model.kernel.gamma for layer in ens.layers]

    def record(outer: int, step: str, ensemble: DetectorEnsemble) -> float:
        alphas = _dense_alphas(ensemble, n)
        kernels = [layer.model.kernel for layer in ensemble.layers]
        stats = [layer.stats for layer in ensemble.layers]
        total, ce, reg = joint_parts(bb, X, y, alphas, kernels, config.lam, stats)
        logits, _ = forward_batch(bb, X)
        trace.append(TraceRow(outer, step, total, ce, reg, accuracy(logits, y)))
        return total

    prev_obj = record(0, "step2", ens)

    for outer in range(1, config.outer_iters + 1):
        # Step I: descend on the joint objective, duals and stats frozen
        alphas = _dense_alphas(ens, n)
        kernels = [layer.model.kernel for layer in ens.layers]
        stats = [layer.stats for layer in ens.layers]
        for _ in range(config.inner_epochs):
            gw, gb = joint_grad(bb, X, y, alphas, kernels, config.lam, stats)
            for W, g in zip(bb.weights, gw):
                W -= config.learning_rate * g
            for b, g in zip(bb.biases, gb):
                b -= config.learning_rate * g
        record(outer, "step1", ens)

        # Step II: refresh taps, refit stats and duals at frozen gammas
        _, taps = forward_batch(bb, X)
        try:
            ens = _refit_detectors(taps, gammas, config.tune, layer_names)
        except Exception as exc:
            raise AlternatingAbort(f"detector refit failed at outer={outer}: {exc}", trace) from exc
        obj = record(outer, "step2", ens)

        if prev_obj - obj < config.convergence_tol:
            break
        prev_obj = obj

    return bb, ens, trace
