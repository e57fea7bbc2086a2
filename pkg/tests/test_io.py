import hashlib
import json

import numpy as np
import pytest

from laood.ensemble import build_ensemble, score_dataset
from laood.io import (
    FormatError,
    Manifest,
    ManifestLayer,
    gen_synthetic,
    load_model,
    read_features,
    read_manifest,
    save_model,
    write_features,
    write_manifest,
)
from laood.kernel import KernelParams
from laood.metrics import auroc
from laood.ocsvm import OcsvmConfig, fit, score_batch
from laood.pseudo_ood import ShiftConfig
from laood.tuner import TuneSpec


class TestFeatureFiles:
    def test_empty_matrix_round_trip(self, tmp_path):
        p = tmp_path / "empty.laod"
        write_features(p, np.zeros((0, 0), dtype=np.float32))
        assert p.stat().st_size == 24
        out = read_features(p)
        assert out.shape == (0, 0)

    def test_single_value_exact_bytes(self, tmp_path):
        p = tmp_path / "one.laod"
        write_features(p, np.array([[1.0]], dtype=np.float32))
        data = p.read_bytes()
        assert data == (
            b"LAOD"
            + (1).to_bytes(4, "little")
            + (1).to_bytes(8, "little")
            + (1).to_bytes(8, "little")
            + bytes([0x00, 0x00, 0x80, 0x3F])  # IEEE-754 float32 1.0
        )

    def test_round_trip_is_byte_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(17, 5)).astype(np.float32)
        p = tmp_path / "rt.laod"
        write_features(p, X)
        out = read_features(p)
        assert out.dtype == np.float32
        assert np.array_equal(out, X)
        p2 = tmp_path / "rt2.laod"
        write_features(p2, out)
        assert p.read_bytes() == p2.read_bytes()

    def test_fixed_seed_hash_stable(self, tmp_path):
        rng = np.random.default_rng(2718)
        X = rng.normal(size=(100, 16)).astype(np.float32)
        p = tmp_path / "hash.laod"
        write_features(p, X)
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        # recorded at first write; must never drift across runs or platforms
        assert digest == "c0e5c4c883c03f4eafe376c1584ebea72b0318e32c25f84b1ddb65038acac0ce"

    def test_bad_magic_named(self, tmp_path):
        p = tmp_path / "bad.laod"
        write_features(p, np.zeros((1, 1), dtype=np.float32))
        data = bytearray(p.read_bytes())
        data[:4] = b"NOPE"
        p.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            read_features(p)

    def test_bad_version_named(self, tmp_path):
        p = tmp_path / "bad.laod"
        write_features(p, np.zeros((1, 1), dtype=np.float32))
        data = bytearray(p.read_bytes())
        data[4] = 9
        p.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version"):
            read_features(p)

    def test_truncation_named(self, tmp_path):
        p = tmp_path / "bad.laod"
        write_features(p, np.ones((2, 3), dtype=np.float32))
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(FormatError, match="length"):
            read_features(p)
        p.write_bytes(b"LA")
        with pytest.raises(FormatError, match="header"):
            read_features(p)

    def test_nonfinite_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_features(tmp_path / "nan.laod", np.array([[np.nan]]))


class TestManifest:
    def test_round_trip_with_validation(self, tmp_path):
        X1 = np.ones((4, 2), dtype=np.float32)
        X2 = np.zeros((4, 3), dtype=np.float32)
        write_features(tmp_path / "l1.laod", X1)
        write_features(tmp_path / "l2.laod", X2)
        layers = [ManifestLayer("early", 2, "l1.laod"), ManifestLayer("late", 3, "l2.laod")]
        write_manifest(tmp_path / "m.json", 4, layers)
        m = read_manifest(tmp_path / "m.json")
        assert m.num_samples == 4
        assert m.layer_names == ("early", "late")
        mats = m.load_matrices()
        assert np.array_equal(mats[0], X1)
        assert np.array_equal(mats[1], X2)

    def test_row_mismatch_detected(self, tmp_path):
        write_features(tmp_path / "l1.laod", np.ones((3, 2), dtype=np.float32))
        write_manifest(tmp_path / "m.json", 4, [ManifestLayer("a", 2, "l1.laod")])
        with pytest.raises(FormatError, match="num_samples"):
            read_manifest(tmp_path / "m.json").load_matrices()

    def test_dim_mismatch_detected(self, tmp_path):
        write_features(tmp_path / "l1.laod", np.ones((4, 5), dtype=np.float32))
        write_manifest(tmp_path / "m.json", 4, [ManifestLayer("a", 2, "l1.laod")])
        with pytest.raises(FormatError, match="dim"):
            read_manifest(tmp_path / "m.json").load_matrices()

    def test_labels(self, tmp_path):
        write_features(tmp_path / "l1.laod", np.ones((3, 1), dtype=np.float32))
        (tmp_path / "y.txt").write_text("0\n1\n2\n")
        write_manifest(
            tmp_path / "m.json", 3, [ManifestLayer("a", 1, "l1.laod")], labels_file="y.txt"
        )
        m = read_manifest(tmp_path / "m.json")
        assert np.array_equal(m.load_labels(), [0, 1, 2])

    def test_schema_errors(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{}")
        with pytest.raises(FormatError, match="version"):
            read_manifest(p)
        p.write_text(json.dumps({"version": 1, "num_samples": 2, "layers": []}))
        with pytest.raises(FormatError, match="layers"):
            read_manifest(p)


def _small_ensemble(seed=0, n=100, d=3):
    rng = np.random.default_rng(seed)
    train = [rng.normal(size=(n, d)), rng.normal(size=(n, d))]
    return build_ensemble(train, TuneSpec(nu=0.05), ShiftConfig(k_neighbors=10)), rng


class TestModelPersistence:
    def test_round_trip_scores_identical(self, tmp_path):
        ens, rng = _small_ensemble()
        probes = [rng.normal(size=(10, 3)), rng.normal(size=(10, 3))]
        save_model(tmp_path / "m.json", ens)
        loaded = load_model(tmp_path / "m.json")
        before = score_dataset(ens, probes)
        after = score_dataset(loaded, probes)
        for a, b in zip(before.predictions, after.predictions):
            assert np.array_equal(a.per_layer_scores, b.per_layer_scores)
            assert a.final_score == b.final_score
            assert a.confusion == b.confusion

    def test_canonical_serialization(self, tmp_path):
        ens, _ = _small_ensemble(seed=5)
        save_model(tmp_path / "a.json", ens)
        save_model(tmp_path / "b.json", ens)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_unknown_version_rejected(self, tmp_path):
        ens, _ = _small_ensemble(seed=6, n=40)
        save_model(tmp_path / "m.json", ens)
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["format_version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="format_version"):
            load_model(tmp_path / "m.json")

    def test_schema_violation_names_json_path(self, tmp_path):
        ens, _ = _small_ensemble(seed=7, n=40)
        save_model(tmp_path / "m.json", ens)
        doc = json.loads((tmp_path / "m.json").read_text())
        del doc["layers"][0]["rho"]
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"\$\.layers\[0\]\.rho"):
            load_model(tmp_path / "m.json")

    def test_flagged_columns_survive(self, tmp_path):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 3))
        X[:, 1] = 4.0  # constant column
        ens = build_ensemble([X], TuneSpec(nu=0.1), ShiftConfig(k_neighbors=10))
        save_model(tmp_path / "m.json", ens)
        loaded = load_model(tmp_path / "m.json")
        assert loaded.layers[0].stats.flagged_columns == (1,)


class TestGenSynthetic:
    def test_deterministic(self, tmp_path):
        a = gen_synthetic(7, 50, 40, 4, "far_gaussian", tmp_path / "a")
        b = gen_synthetic(7, 50, 40, 4, "far_gaussian", tmp_path / "b")
        for name in ("train_manifest.json", "test_manifest.json", "train_layer1.laod",
                     "test_layer2.laod", "test_labels.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert a.train_manifest.name == "train_manifest.json"

    def test_far_gaussian_distance(self, tmp_path):
        gen_synthetic(3, 100, 100, 8, "far_gaussian", tmp_path)
        test = read_manifest(tmp_path / "test_manifest.json")
        mats = test.load_matrices()
        labels = test.load_labels()
        for m in mats:
            ind_mean = m[labels == 0].mean(axis=0)
            ood_mean = m[labels == 1].mean(axis=0)
            assert np.linalg.norm(ood_mean - ind_mean) >= 5.0

    def test_shell_is_separable(self, tmp_path):
        gen_synthetic(4, 150, 100, 6, "shell", tmp_path)
        train = read_manifest(tmp_path / "train_manifest.json").load_matrices()
        test = read_manifest(tmp_path / "test_manifest.json")
        mats = test.load_matrices()
        labels = test.load_labels()
        m = fit(
            np.asarray(train[0], dtype=np.float64),
            OcsvmConfig(nu=0.05, kernel=KernelParams(gamma=0.1)),
        )
        s = score_batch(m, np.asarray(mats[0], dtype=np.float64))
        assert auroc(s[labels == 0], s[labels == 1]) > 0.95

    def test_layerwise_mixed_structure(self, tmp_path):
        gen_synthetic(5, 120, 100, 4, "layerwise_mixed", tmp_path)
        test = read_manifest(tmp_path / "test_manifest.json")
        labels = test.load_labels()
        assert set(labels.tolist()) == {0, 1, 2}
        assert np.sum(labels == 0) == 120
        assert np.sum(labels > 0) == 100

    def test_validation(self, tmp_path):
        with pytest.raises(ValueError):
            gen_synthetic(1, 1, 10, 2, "far_gaussian", tmp_path)
        with pytest.raises(ValueError):
            gen_synthetic(1, 10, 10, 0, "far_gaussian", tmp_path)
        with pytest.raises(ValueError):
            gen_synthetic(1, 10, 10, 2, "weird", tmp_path)
