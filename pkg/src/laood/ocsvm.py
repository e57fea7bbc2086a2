"""One-class SVM per layer: dual QP solved by SMO, offset recovery, scoring.

The dual problem is

    min_alpha  1/2 sum_ij alpha_i alpha_j k(x_i, x_j)
    s.t.       0 <= alpha_i <= 1/(nu*n),  sum_i alpha_i = 1

Scores follow the convention: positive = predicted OOD, negative = predicted
in-distribution (zero threshold).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernel import KernelParams, gram, kernel_vector

_GRAM_CACHE_MAX = 4096  # full Gram matrix up to this n, on-the-fly rows above
_LAZY_ROW_CACHE = 512


class ConvergenceError(RuntimeError):
    """Solver hit max_iter before reaching tol.

    Carries the achieved KKT violation and the model built from the partial
    solution, so a caller may inspect and accept it.
    """

    def __init__(self, violation: float, max_iter: int, model: "OcsvmModel | None" = None):
        super().__init__(
            f"solver stopped at max_iter={max_iter} with KKT violation {violation:.3e}"
        )
        self.violation = violation
        self.max_iter = max_iter
        self.model = model


@dataclass(frozen=True)
class OcsvmConfig:
    """Training knobs: error bound nu, kernel width, solver stopping rule.

    max_iter=None resolves to 100*n^2 at fit time.
    """

    nu: float
    kernel: KernelParams
    solver_tol: float = 1e-6
    max_iter: int | None = None

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise ValueError(f"nu must be in (0, 1], got {self.nu}")
        if self.solver_tol <= 0:
            raise ValueError(f"solver_tol must be > 0, got {self.solver_tol}")
        if self.max_iter is not None and self.max_iter <= 0:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")


@dataclass
class OcsvmModel:
    """Trained detector: support set, dual weights, offset, kernel.

    feature_mean/feature_std are the standardization applied upstream of this
    detector (identity unless the ensemble builder attaches real stats).
    support_indices maps support vectors back to training-set rows; it is
    training-time metadata and is None on models loaded from disk.
    rho_degenerate flags the no-margin-SV fallback path of offset recovery.
    """

    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    kernel: KernelParams
    nu: float
    n_train: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    flagged_columns: tuple[int, ...] = field(default_factory=tuple)
    support_indices: np.ndarray | None = None
    rho_degenerate: bool = False

    @property
    def upper_bound(self) -> float:
        return 1.0 / (self.nu * self.n_train)

    @property
    def n_support(self) -> int:
        return self.support_vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def margin_mask(self) -> np.ndarray:
        """Support vectors with alpha strictly inside (0, 1/(nu n))."""
        return self.alphas < self.upper_bound * (1.0 - 1e-9)


def _smo(
    row: Callable[[int], np.ndarray], n: int, nu: float, tol: float, max_iter: int
) -> tuple[np.ndarray, float, int]:
    u = 1.0 / (nu * n)

    # libsvm-style start: first floor(nu*n) coordinates at the box bound,
    # the remainder on the next coordinate.
    alpha = np.zeros(n)
    n_full = min(int(np.floor(nu * n)), n)
    alpha[:n_full] = u
    if n_full < n:
        alpha[n_full] = 1.0 - n_full * u

    g = np.zeros(n)
    for j in np.nonzero(alpha)[0]:
        g += alpha[j] * row(j)

    inf = np.inf
    it = 0
    while True:
        up = alpha < u  # room to grow
        low = alpha > 0.0  # room to shrink
        if not up.any():
            violation = 0.0  # nu*n == n: the box admits a single point
            break
        i = int(np.argmin(np.where(up, g, inf)))
        j = int(np.argmax(np.where(low, g, -inf)))
        violation = g[j] - g[i]
        if violation <= tol:
            break
        if it >= max_iter:
            return alpha, float(violation), it

        row_i = row(i)
        row_j = row(j)
        a = row_i[i] + row_j[j] - 2.0 * row_i[j]
        if a <= 1e-12:
            a = 1e-12
        delta = violation / a
        room_i = u - alpha[i]
        room_j = alpha[j]
        old_i, old_j = alpha[i], alpha[j]
        s = old_i + old_j
        if delta >= room_i and room_i <= room_j:
            alpha[i] = u
            alpha[j] = s - u
        elif delta >= room_j:
            alpha[j] = 0.0
            alpha[i] = s
        else:
            alpha[i] = old_i + delta
            alpha[j] = old_j - delta
        g += (alpha[i] - old_i) * row_i + (alpha[j] - old_j) * row_j
        it += 1

    return alpha, float(violation), it


def solve_dual(
    K: np.ndarray, nu: float, tol: float, max_iter: int
) -> tuple[np.ndarray, float, int]:
    """SMO on the box-and-simplex dual; returns (alpha, violation, iterations).

    Pairwise updates move mass between two coordinates, so sum(alpha) = 1 is
    maintained exactly up to one rounding per step. Working pair is the
    maximal first-order KKT violator; ties resolve to the lowest index, which
    makes the sweep order (and the result) deterministic.
    """
    K = np.asarray(K, dtype=np.float64)
    return _smo(lambda i: K[i], K.shape[0], nu, tol, max_iter)


def _lazy_rows(X: np.ndarray, params: KernelParams) -> Callable[[int], np.ndarray]:
    cache: OrderedDict[int, np.ndarray] = OrderedDict()

    def row(i: int) -> np.ndarray:
        r = cache.get(i)
        if r is None:
            r = np.exp(-params.gamma * np.sum((X - X[i]) ** 2, axis=1))
            cache[i] = r
            if len(cache) > _LAZY_ROW_CACHE:
                cache.popitem(last=False)
        else:
            cache.move_to_end(i)
        return r

    return row


def recover_rho(
    alphas: np.ndarray,
    support_vectors: np.ndarray,
    kernel: KernelParams,
    upper_bound: float | None = None,
) -> tuple[float, bool]:
    """Offset rho = mean over margin SVs i of sum_j alpha_j k(x_j, x_i).

    Margin SVs are those with alpha strictly below upper_bound (all stored
    alphas are already > 0). When none exist (every alpha at a bound), falls
    back to the mean over all support vectors; the True in the returned
    (rho, degenerate) pair marks that path.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.size == 0:
        raise ValueError("empty alpha vector")
    if upper_bound is not None:
        margin = alphas < upper_bound * (1.0 - 1e-9)
    else:
        margin = np.ones(alphas.shape, dtype=bool)
    degenerate = not margin.any()
    anchors = np.arange(alphas.size) if degenerate else np.nonzero(margin)[0]
    vals = [
        float(alphas @ kernel_vector(support_vectors, support_vectors[i], kernel))
        for i in anchors
    ]
    return float(np.mean(vals)), degenerate


def fit(X, config: OcsvmConfig) -> OcsvmModel:
    """Solve the dual on X (already standardized) and build the detector.

    Raises ConvergenceError (with the partial model attached) if the solver
    hits max_iter above solver_tol.
    """
    Xm = np.asarray(X, dtype=np.float64)
    if Xm.ndim != 2 or Xm.shape[0] == 0:
        raise ValueError(f"expected a nonempty 2-d matrix, got shape {Xm.shape}")
    n, d = Xm.shape
    max_iter = config.max_iter if config.max_iter is not None else 100 * n * n

    if n <= _GRAM_CACHE_MAX:
        K = gram(Xm, config.kernel)
        row = lambda i: K[i]  # noqa: E731
    else:
        row = _lazy_rows(Xm, config.kernel)
    alpha, violation, _ = _smo(row, n, config.nu, config.solver_tol, max_iter)

    sv_idx = np.nonzero(alpha > 0.0)[0]
    sv = Xm[sv_idx].copy()
    sv_alpha = alpha[sv_idx].copy()
    u = 1.0 / (config.nu * n)
    rho, degenerate = recover_rho(sv_alpha, sv, config.kernel, upper_bound=u)
    model = OcsvmModel(
        support_vectors=sv,
        alphas=sv_alpha,
        rho=rho,
        kernel=config.kernel,
        nu=config.nu,
        n_train=n,
        feature_mean=np.zeros(d),
        feature_std=np.ones(d),
        support_indices=sv_idx,
        rho_degenerate=degenerate,
    )
    if violation > config.solver_tol:
        raise ConvergenceError(violation, max_iter, model)
    return model


def score(model: OcsvmModel, x) -> float:
    """Decision function C(x) = -sum_i alpha_i k(sv_i, x) + rho.

    Positive = predicted OOD, negative = predicted in-distribution.
    """
    xv = np.asarray(x, dtype=np.float64)
    if xv.ndim != 1 or xv.shape[0] != model.dim:
        raise ValueError(f"dimension mismatch: {xv.shape} vs model dim {model.dim}")
    kv = kernel_vector(model.support_vectors, xv, model.kernel)
    return float(-(model.alphas @ kv) + model.rho)


def score_batch(model: OcsvmModel, X) -> np.ndarray:
    """Elementwise ``score`` over the rows of X, order-preserving."""
    Xm = np.asarray(X, dtype=np.float64)
    if Xm.size == 0:
        return np.zeros(0)
    if Xm.ndim != 2 or Xm.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: {Xm.shape} vs model dim {model.dim}")
    return np.array([score(model, row) for row in Xm])


def dual_objective(model: OcsvmModel) -> float:
    """1/2 alpha^T K alpha over the support set (zero-alpha rows contribute nothing)."""
    K = gram(model.support_vectors, model.kernel)
    return float(0.5 * model.alphas @ K @ model.alphas)
