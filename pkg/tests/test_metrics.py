import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import aupr_sweep, auroc_pairwise, fpr_exhaustive
from laood.metrics import aupr, auroc, evaluate, fpr_at_tpr


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.1, 0.2], [0.3, 0.4]) == 1.0

    def test_all_ties(self):
        assert auroc([1.0] * 5, [1.0] * 7) == 0.5

    def test_interleaved(self):
        # 3 of the 4 (ood, ind) pairs rank correctly
        assert auroc([1.0, 3.0], [2.0, 4.0]) == pytest.approx(0.75, abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            auroc([], [1.0])
        with pytest.raises(ValueError):
            auroc([1.0], [])

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(50):
            n_i = int(rng.integers(1, 51))
            n_o = int(rng.integers(1, 51))
            ind = np.round(rng.normal(size=n_i), 1)  # rounding forces ties
            ood = np.round(rng.normal(0.5, 1.0, size=n_o), 1)
            assert auroc(ind, ood) == pytest.approx(auroc_pairwise(ind, ood), abs=1e-9)

    def test_complement_identity(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=20)
        b = rng.normal(size=30)  # continuous draws: tie-free
        assert auroc(a, b) + auroc(b, a) == pytest.approx(1.0, abs=1e-12)


class TestAupr:
    def test_perfect_separation(self):
        assert aupr([0.1, 0.2], [0.3, 0.4]) == 1.0

    def test_fully_reversed(self):
        # hand oracle: positives hit at ranks 3 and 4 -> (1/3 + 2/4) / 2
        assert aupr([3.0, 4.0], [1.0, 2.0]) == pytest.approx(5.0 / 12.0, abs=1e-12)

    def test_interleaved(self):
        # sweep 4,3,2,1: positives at ranks 1 and 3 -> (1/1 + 2/3) / 2
        assert aupr([1.0, 3.0], [2.0, 4.0]) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_matches_sweep_oracle(self):
        rng = np.random.default_rng(321)
        for _ in range(50):
            ind = np.round(rng.normal(size=int(rng.integers(1, 40))), 1)
            ood = np.round(rng.normal(0.5, 1.0, size=int(rng.integers(1, 40))), 1)
            assert aupr(ind, ood) == pytest.approx(aupr_sweep(ind, ood), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aupr([], [1.0])


class TestFprAtTpr:
    def test_perfect_separation(self):
        assert fpr_at_tpr([0.1, 0.2], [0.3, 0.4]) == 0.0

    def test_identical_constant_scores(self):
        # one achievable step (TPR jumps 0 -> 1), so the answer rounds up to 1.0
        scores = [0.5] * 20
        assert fpr_at_tpr(scores, scores, 0.95) == 1.0

    def test_identical_multisets(self):
        # same 20 distinct values on both sides: the nearest achievable TPR
        # step >= 0.95 is exactly 19/20, and FPR equals it
        scores = list(np.linspace(0.0, 1.0, 20))
        assert fpr_at_tpr(scores, scores, 0.95) == pytest.approx(0.95, abs=1e-12)
        assert fpr_at_tpr(scores, scores, 0.95) == fpr_exhaustive(scores, scores, 0.95)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(55)
        for _ in range(100):
            ind = np.round(rng.normal(size=10), 1)
            ood = np.round(rng.normal(0.5, 1.0, size=10), 1)
            assert fpr_at_tpr(ind, ood, 0.95) == fpr_exhaustive(ind, ood, 0.95)

    def test_monotone_in_target(self):
        rng = np.random.default_rng(77)
        ind = rng.normal(size=40)
        ood = rng.normal(1.0, 1.0, size=40)
        prev = 1.0
        for target in [0.99, 0.95, 0.9, 0.8, 0.5]:
            fpr = fpr_at_tpr(ind, ood, target)
            assert fpr <= prev
            prev = fpr

    def test_bad_target_rejected(self):
        with pytest.raises(ValueError):
            fpr_at_tpr([1.0], [2.0], 0.0)
        with pytest.raises(ValueError):
            fpr_at_tpr([1.0], [2.0], 1.5)


@settings(max_examples=100, deadline=None)
@given(
    ind=st.lists(st.integers(-20, 20).map(float), min_size=1, max_size=30),
    ood=st.lists(st.integers(-20, 20).map(float), min_size=1, max_size=30),
)
def test_monotone_transform_invariance(ind, ood):
    def transform(v):
        return np.exp(0.3 * np.asarray(v)) + 2.0  # strictly increasing

    assert auroc(ind, ood) == pytest.approx(auroc(transform(ind), transform(ood)), abs=1e-12)
    assert aupr(ind, ood) == pytest.approx(aupr(transform(ind), transform(ood)), abs=1e-12)
    assert fpr_at_tpr(ind, ood, 0.9) == pytest.approx(
        fpr_at_tpr(transform(ind), transform(ood), 0.9), abs=1e-12
    )


def test_evaluate_report():
    report = evaluate([1.0, 3.0], [2.0, 4.0])
    assert report.auroc == pytest.approx(0.75)
    assert report.aupr == pytest.approx(5.0 / 6.0)
    assert report.n_ind == 2 and report.n_ood == 2
    assert set(report.as_dict()) == {"auroc", "aupr", "fpr_at_95_tpr", "n_ind", "n_ood"}
    for rate in (report.auroc, report.aupr, report.fpr_at_95_tpr):
        assert 0.0 <= rate <= 1.0
