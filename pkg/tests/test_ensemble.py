import numpy as np
import pytest

from laood.ensemble import (
    DetectorEnsemble,
    LayerBuildError,
    LayerDetector,
    build_ensemble,
    score_dataset,
    score_sample,
)
from laood.kernel import KernelParams
from laood.metrics import auroc
from laood.ocsvm import OcsvmConfig, OcsvmModel, fit, score_batch
from laood.preprocess import StandardizeStats, apply_stats, fit_stats
from laood.pseudo_ood import ShiftConfig, generate_pseudo_ood
from laood.tuner import TuneSpec, select_gamma


def _stub_layer(name: str, rho: float, dim: int = 2) -> LayerDetector:
    """Single-support-vector detector: score(sv) = rho - 1 exactly."""
    model = OcsvmModel(
        support_vectors=np.zeros((1, dim)),
        alphas=np.array([1.0]),
        rho=rho,
        kernel=KernelParams(gamma=1.0),
        nu=0.5,
        n_train=1,
        feature_mean=np.zeros(dim),
        feature_std=np.ones(dim),
    )
    stats = StandardizeStats(mean=np.zeros(dim), std=np.ones(dim))
    return LayerDetector(name=name, stats=stats, model=model)


def _stub_ensemble(rhos, delta=0.0):
    layers = tuple(_stub_layer(f"layer{i + 1}", 1.0 + r) for i, r in enumerate(rhos))
    return DetectorEnsemble(layers=layers, delta=delta)


_ORIGIN = np.zeros(2)


class TestScoreSample:
    def test_max_sum_and_argmax(self):
        ens = _stub_ensemble([-1.0, 0.2, -0.3])
        p = score_sample(ens, [_ORIGIN, _ORIGIN, _ORIGIN])
        assert p.final_score == pytest.approx(0.2, abs=1e-12)
        assert p.argmax_layer == 2  # 1-indexed
        assert p.confusion == pytest.approx(-1.1, abs=1e-12)
        assert p.is_ood

    def test_single_layer(self):
        ens = _stub_ensemble([-0.4])
        p = score_sample(ens, [_ORIGIN])
        assert p.final_score == pytest.approx(-0.4, abs=1e-12)
        assert p.confusion == p.final_score
        assert not p.is_ood

    def test_tie_breaks_to_earliest_layer(self):
        ens = _stub_ensemble([-0.5, -0.5])
        p = score_sample(ens, [_ORIGIN, _ORIGIN])
        assert p.argmax_layer == 1
        assert not p.is_ood
        assert p.confusion == pytest.approx(-1.0, abs=1e-12)

    def test_wrong_layer_count(self):
        ens = _stub_ensemble([0.0, 0.0])
        with pytest.raises(ValueError):
            score_sample(ens, [_ORIGIN])

    def test_delta_threshold(self):
        ens = _stub_ensemble([0.2], delta=0.5)
        assert not score_sample(ens, [_ORIGIN]).is_ood
        ens2 = _stub_ensemble([0.2], delta=0.1)
        assert score_sample(ens2, [_ORIGIN]).is_ood

    def test_standardization_applied(self):
        layer = _stub_layer("layer1", rho=1.0, dim=1)
        stats = StandardizeStats(mean=np.array([5.0]), std=np.array([2.0]))
        ens = DetectorEnsemble(layers=(LayerDetector("layer1", stats, layer.model),))
        # raw 5.0 standardizes onto the support vector: score = rho - 1 = 0
        p = score_sample(ens, [np.array([5.0])])
        assert p.final_score == pytest.approx(0.0, abs=1e-12)


class TestScoreDataset:
    def test_empty(self):
        ens = _stub_ensemble([0.0, 0.0])
        scores = score_dataset(ens, [np.zeros((0, 2)), np.zeros((0, 2))])
        assert len(scores) == 0
        assert np.array_equal(scores.detections_per_layer, [0, 0])

    def test_row_alignment_and_counts(self):
        ens = _stub_ensemble([0.5, -0.5])  # layer 1 always fires on the SV point
        X = np.zeros((4, 2))
        scores = score_dataset(ens, [X, X])
        assert len(scores) == 4
        assert all(p.is_ood and p.argmax_layer == 1 for p in scores.predictions)
        assert np.array_equal(scores.detections_per_layer, [4, 0])

    def test_permutation_permutes_predictions(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 3))
        m = fit(X, OcsvmConfig(nu=0.2, kernel=KernelParams(gamma=0.5)))
        stats = StandardizeStats(mean=np.zeros(3), std=np.ones(3))
        ens = DetectorEnsemble(layers=(LayerDetector("layer1", stats, m),))
        probe = rng.normal(size=(10, 3))
        perm = rng.permutation(10)
        base = score_dataset(ens, [probe])
        shuffled = score_dataset(ens, [probe[perm]])
        for i, j in enumerate(perm):
            assert shuffled.predictions[i].final_score == base.predictions[j].final_score

    def test_row_count_mismatch(self):
        ens = _stub_ensemble([0.0, 0.0])
        with pytest.raises(ValueError):
            score_dataset(ens, [np.zeros((3, 2)), np.zeros((4, 2))])


def _mixed_layer_data(seed, n_ind, n_group):
    """Layer 1 separates group A only, layer 2 separates group B only."""
    rng = np.random.default_rng(seed)
    shift = 6.0 / np.sqrt(2.0)
    train = [rng.normal(size=(n_ind, 2)) for _ in range(2)]
    test_ind = [rng.normal(size=(n_ind, 2)) for _ in range(2)]
    a_l1 = rng.normal(shift, 1.0, size=(n_group, 2))
    a_l2 = rng.normal(size=(n_group, 2))
    b_l1 = rng.normal(size=(n_group, 2))
    b_l2 = rng.normal(shift, 1.0, size=(n_group, 2))
    test_l1 = np.vstack([test_ind[0], a_l1, b_l1])
    test_l2 = np.vstack([test_ind[1], a_l2, b_l2])
    labels = np.concatenate(
        [np.zeros(n_ind, np.int64), np.ones(n_group, np.int64), np.full(n_group, 2, np.int64)]
    )
    return train, [test_l1, test_l2], labels


class TestBuildEnsemble:
    def test_single_layer_reduces_to_pipeline(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(150, 3))
        tune = TuneSpec(nu=0.05)
        shift = ShiftConfig(k_neighbors=10)
        ens = build_ensemble([X], tune, shift)
        assert ens.n_layers == 1

        stats = fit_stats(X)
        Xs = apply_stats(stats, X)
        pseudo = generate_pseudo_ood(Xs, shift)
        gamma, _ = select_gamma(Xs, pseudo, tune)
        manual = fit(Xs, OcsvmConfig(nu=0.05, kernel=KernelParams(gamma=gamma)))
        layer = ens.layers[0]
        assert layer.model.kernel.gamma == gamma
        assert np.array_equal(layer.model.alphas, manual.alphas)
        assert layer.model.rho == manual.rho

    def test_deterministic_rebuild(self):
        train, _, _ = _mixed_layer_data(2, 120, 60)
        tune = TuneSpec(nu=0.05)
        shift = ShiftConfig(k_neighbors=10)
        e1 = build_ensemble(train, tune, shift)
        e2 = build_ensemble(train, tune, shift)
        for l1, l2 in zip(e1.layers, e2.layers):
            assert np.array_equal(l1.model.alphas, l2.model.alphas)
            assert np.array_equal(l1.model.support_vectors, l2.model.support_vectors)
            assert l1.model.rho == l2.model.rho
            assert l1.model.kernel.gamma == l2.model.kernel.gamma

    def test_argmax_attribution_by_group(self):
        train, test, labels = _mixed_layer_data(3, 250, 120)
        ens = build_ensemble(train, TuneSpec(nu=0.05), ShiftConfig(k_neighbors=15))
        scores = score_dataset(ens, test)
        for group, layer in ((1, 1), (2, 2)):
            detected = [
                p for p, lbl in zip(scores.predictions, labels) if lbl == group and p.is_ood
            ]
            assert len(detected) > 0
            frac = np.mean([p.argmax_layer == layer for p in detected])
            assert frac >= 0.9

    def test_ensemble_beats_single_layers_on_mixed(self):
        train, test, labels = _mixed_layer_data(4, 250, 120)
        tune = TuneSpec(nu=0.05)
        shift = ShiftConfig(k_neighbors=15)
        ens = build_ensemble(train, tune, shift)
        scores = score_dataset(ens, test)
        final = np.array([p.final_score for p in scores.predictions])
        ens_auroc = auroc(final[labels == 0], final[labels > 0])

        per_layer = []
        for li, layer in enumerate(ens.layers):
            s = score_batch(layer.model, apply_stats(layer.stats, test[li]))
            per_layer.append(auroc(s[labels == 0], s[labels > 0]))
        assert ens_auroc >= max(per_layer) - 0.02
        assert all(ens_auroc >= pl + 0.05 for pl in per_layer)

    def test_layer_error_names_layer(self):
        bad = np.ones((1, 2))  # single row: stats cannot be fit
        with pytest.raises(LayerBuildError, match="layer1"):
            build_ensemble([bad], TuneSpec(), ShiftConfig())

    def test_duplicate_layer_names_rejected(self):
        layers = (_stub_layer("a", 1.0), _stub_layer("a", 1.0))
        with pytest.raises(ValueError):
            DetectorEnsemble(layers=layers)


class TestArgmaxInvariance:
    def test_common_increasing_transform(self):
        rng = np.random.default_rng(9)
        raw = rng.normal(size=(40, 3))

        def predict(mat):
            argmax = mat.argmax(axis=1)
            final = mat.max(axis=1)
            return argmax, final

        base_argmax, base_final = predict(raw)
        transformed = np.tanh(raw) * 2.0 + 1.0  # strictly increasing, common to all layers
        new_argmax, new_final = predict(transformed)
        assert np.array_equal(base_argmax, new_argmax)
        # is_ood ordering: ranks of final scores unchanged
        assert np.array_equal(np.argsort(base_final), np.argsort(new_final))

    def test_final_dominates_and_confusion_bound(self):
        ens = _stub_ensemble([-0.7, 0.3, 0.1])
        p = score_sample(ens, [_ORIGIN, _ORIGIN, _ORIGIN])
        assert all(p.final_score >= s for s in p.per_layer_scores)
        assert p.confusion <= 3 * p.final_score
