"""OOD evaluation metrics: AUROC, AUPR, FPR at a target TPR.

OOD is the positive class everywhere (higher score = more OOD). The
threshold convention is "score >= t predicts positive", with candidate
thresholds at the distinct observed scores plus +inf, which keeps every
sweep finite and exactly matched by an exhaustive oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    aupr: float
    fpr_at_95_tpr: float
    n_ind: int
    n_ood: int

    def as_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "aupr": self.aupr,
            "fpr_at_95_tpr": self.fpr_at_95_tpr,
            "n_ind": self.n_ind,
            "n_ood": self.n_ood,
        }


def _check_sides(scores_ind, scores_ood) -> tuple[np.ndarray, np.ndarray]:
    ind = np.asarray(scores_ind, dtype=np.float64).ravel()
    ood = np.asarray(scores_ood, dtype=np.float64).ravel()
    if ind.size == 0 or ood.size == 0:
        raise ValueError("both score sets must be nonempty")
    return ind, ood


def auroc(scores_ind, scores_ood) -> float:
    """P(random OOD score > random InD score), ties counting 1/2.

    Mann-Whitney formulation via midranks; equals the trapezoidal area
    under the ROC curve.
    """
    ind, ood = _check_sides(scores_ind, scores_ood)
    n_i, n_o = ind.size, ood.size
    combined = np.concatenate([ood, ind])
    order = np.argsort(combined, kind="stable")
    ranks = np.empty(combined.size, dtype=np.float64)
    sorted_vals = combined[order]
    # midranks for tied groups
    pos = 0
    while pos < sorted_vals.size:
        end = pos
        while end + 1 < sorted_vals.size and sorted_vals[end + 1] == sorted_vals[pos]:
            end += 1
        ranks[order[pos : end + 1]] = 0.5 * (pos + end) + 1.0
        pos = end + 1
    rank_sum_ood = float(ranks[:n_o].sum())
    u = rank_sum_ood - n_o * (n_o + 1) / 2.0
    return u / (n_o * n_i)


def aupr(scores_ind, scores_ood) -> float:
    """Area under precision-recall by step-wise (non-interpolated) summation.

    Descending sweep over distinct scores; each threshold group contributes
    its precision weighted by the recall increment it produces (average
    precision).
    """
    ind, ood = _check_sides(scores_ind, scores_ood)
    scores = np.concatenate([ood, ind])
    labels = np.concatenate([np.ones(ood.size, dtype=bool), np.zeros(ind.size, dtype=bool)])
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    labels = labels[order]
    n_pos = ood.size

    area = 0.0
    tp = 0
    total = 0
    pos = 0
    while pos < scores.size:
        end = pos
        while end + 1 < scores.size and scores[end + 1] == scores[pos]:
            end += 1
        group_tp = int(labels[pos : end + 1].sum())
        tp += group_tp
        total += end - pos + 1
        if group_tp:
            area += (tp / total) * (group_tp / n_pos)
        pos = end + 1
    return area


def fpr_at_tpr(scores_ind, scores_ood, tpr_target: float = 0.95) -> float:
    """Minimum FPR over thresholds t with TPR(t) >= tpr_target.

    Both rates use the "score >= t" convention; since both are non-increasing
    in t, the answer is the FPR at the largest threshold still meeting the
    target.
    """
    ind, ood = _check_sides(scores_ind, scores_ood)
    if not 0 < tpr_target <= 1:
        raise ValueError(f"tpr_target must be in (0, 1], got {tpr_target}")
    # descending distinct candidate thresholds; +inf (predict nothing) can
    # never reach a positive target so it is omitted
    candidates = np.unique(np.concatenate([ind, ood]))[::-1]
    ood_sorted = np.sort(ood)
    ind_sorted = np.sort(ind)
    for t in candidates:
        tpr = (ood.size - np.searchsorted(ood_sorted, t, side="left")) / ood.size
        if tpr >= tpr_target:
            fpr = (ind.size - np.searchsorted(ind_sorted, t, side="left")) / ind.size
            return float(fpr)
    return 1.0  # unreachable: the smallest score always yields TPR = 1


def evaluate(scores_ind, scores_ood, tpr_target: float = 0.95) -> EvalReport:
    ind, ood = _check_sides(scores_ind, scores_ood)
    return EvalReport(
        auroc=auroc(ind, ood),
        aupr=aupr(ind, ood),
        fpr_at_95_tpr=fpr_at_tpr(ind, ood, tpr_target),
        n_ind=int(ind.size),
        n_ood=int(ood.size),
    )
