"""Feature-file format, dataset manifests, model persistence, synthetic data.

Bulk features use a fixed little-endian binary layout (32-bit storage, the
toolkit computes in 64-bit); manifests and models are JSON so other-language
exporters can produce and consume them.

Feature file layout: magic "LAOD", uint32 version (= 1), uint64 rows,
uint64 cols, then rows*cols float32 values row-major. Total length is
exactly 24 + 4*rows*cols bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import DetectorEnsemble, LayerDetector
from .kernel import KernelParams
from .ocsvm import OcsvmModel
from .preprocess import StandardizeStats

MAGIC = b"LAOD"
FEATURE_VERSION = 1
MODEL_VERSION = 1
MANIFEST_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class FormatError(ValueError):
    """A file failed validation; the message names the offending field."""


def write_features(path, X) -> None:
    """Write a feature matrix; values are stored as little-endian float32."""
    Xm = np.asarray(X)
    if Xm.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {Xm.shape}")
    if Xm.size and not np.all(np.isfinite(Xm)):
        raise ValueError("matrix must be finite-valued")
    rows, cols = Xm.shape
    payload = np.ascontiguousarray(Xm, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FEATURE_VERSION, rows, cols))
        fh.write(payload.tobytes())


def read_features(path) -> np.ndarray:
    """Read and validate a feature file; returns a float32 (rows, cols) array."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}, expected {FEATURE_VERSION}")
    expected = _HEADER.size + 4 * rows * cols
    if len(data) != expected:
        raise FormatError(
            f"{path}: payload length {len(data) - _HEADER.size} does not match "
            f"rows*cols*4 = {expected - _HEADER.size}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(rows, cols).copy()


@dataclass(frozen=True)
class ManifestLayer:
    name: str
    dim: int
    file: str


@dataclass(frozen=True)
class Manifest:
    num_samples: int
    layers: tuple[ManifestLayer, ...]
    labels_file: str | None
    base_dir: Path

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(layer.name for layer in self.layers)

    def load_matrices(self) -> list[np.ndarray]:
        """Read every layer's features, validating shapes against the manifest."""
        mats = []
        for layer in self.layers:
            m = read_features(self.base_dir / layer.file)
            if m.shape[0] != self.num_samples:
                raise FormatError(
                    f"{layer.file}: rows {m.shape[0]} != manifest num_samples {self.num_samples}"
                )
            if m.shape[1] != layer.dim:
                raise FormatError(f"{layer.file}: cols {m.shape[1]} != layer dim {layer.dim}")
            mats.append(m)
        return mats

    def load_labels(self) -> np.ndarray:
        if self.labels_file is None:
            raise FormatError("manifest has no labels_file")
        lines = (self.base_dir / self.labels_file).read_text().split()
        labels = np.array([int(v) for v in lines], dtype=np.int64)
        if labels.shape[0] != self.num_samples:
            raise FormatError(
                f"{self.labels_file}: {labels.shape[0]} labels != num_samples {self.num_samples}"
            )
        return labels


def write_manifest(path, num_samples: int, layers: list[ManifestLayer], labels_file=None) -> None:
    doc = {
        "version": MANIFEST_VERSION,
        "num_samples": int(num_samples),
        "layers": [{"name": l.name, "dim": int(l.dim), "file": l.file} for l in layers],
    }
    if labels_file is not None:
        doc["labels_file"] = labels_file
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_manifest(path) -> Manifest:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: version: expected {MANIFEST_VERSION}, got {doc.get('version')}")
    if not isinstance(doc.get("num_samples"), int) or doc["num_samples"] < 0:
        raise FormatError(f"{path}: num_samples: must be a nonnegative integer")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise FormatError(f"{path}: layers: must be a nonempty list")
    layers = []
    for i, rl in enumerate(raw_layers):
        for key, typ in (("name", str), ("dim", int), ("file", str)):
            if not isinstance(rl.get(key), typ):
                raise FormatError(f"{path}: layers[{i}].{key}: missing or wrong type")
        layers.append(ManifestLayer(name=rl["name"], dim=rl["dim"], file=rl["file"]))
    labels_file = doc.get("labels_file")
    if labels_file is not None and not isinstance(labels_file, str):
        raise FormatError(f"{path}: labels_file: must be a string")
    return Manifest(
        num_samples=doc["num_samples"],
        layers=tuple(layers),
        labels_file=labels_file,
        base_dir=p.parent,
    )


def save_model(path, ens: DetectorEnsemble) -> None:
    """Canonical JSON serialization (sorted keys, shortest round-trip floats)."""
    layers = []
    for layer in ens.layers:
        m = layer.model
        layers.append(
            {
                "name": layer.name,
                "gamma": m.kernel.gamma,
                "nu": m.nu,
                "rho": m.rho,
                "n_train": m.n_train,
                "rho_degenerate": m.rho_degenerate,
                "mean": layer.stats.mean.tolist(),
                "std": layer.stats.std.tolist(),
                "flagged_columns": list(layer.stats.flagged_columns),
                "support": [
                    {"alpha": float(a), "vector": v.tolist()}
                    for a, v in zip(m.alphas, m.support_vectors)
                ],
            }
        )
    doc = {"format_version": MODEL_VERSION, "delta": ens.delta, "layers": layers}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _expect(doc: dict, key: str, typ, path: str):
    if key not in doc:
        raise FormatError(f"{path}.{key}: missing")
    v = doc[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or (typ is not bool and isinstance(v, bool)):
        raise FormatError(f"{path}.{key}: expected {typ.__name__}, got {type(v).__name__}")
    return v


def load_model(path) -> DetectorEnsemble:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("format_version") != MODEL_VERSION:
        raise FormatError(
            f"$.format_version: expected {MODEL_VERSION}, got {doc.get('format_version')}"
        )
    delta = float(_expect(doc, "delta", (int, float), "$"))
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise FormatError("$.layers: must be a nonempty list")
    layers = []
    for i, rl in enumerate(raw_layers):
        at = f"$.layers[{i}]"
        name = _expect(rl, "name", str, at)
        gamma = float(_expect(rl, "gamma", (int, float), at))
        nu = float(_expect(rl, "nu", (int, float), at))
        rho = float(_expect(rl, "rho", (int, float), at))
        n_train = _expect(rl, "n_train", int, at)
        degenerate = _expect(rl, "rho_degenerate", bool, at)
        mean = np.array(_expect(rl, "mean", list, at), dtype=np.float64)
        std = np.array(_expect(rl, "std", list, at), dtype=np.float64)
        flagged = tuple(int(c) for c in _expect(rl, "flagged_columns", list, at))
        support = _expect(rl, "support", list, at)
        if not support:
            raise FormatError(f"{at}.support: must be nonempty")
        alphas = np.empty(len(support))
        vectors = np.empty((len(support), mean.shape[0]))
        for j, sv in enumerate(support):
            alphas[j] = float(_expect(sv, "alpha", (int, float), f"{at}.support[{j}]"))
            vec = _expect(sv, "vector", list, f"{at}.support[{j}]")
            if len(vec) != mean.shape[0]:
                raise FormatError(f"{at}.support[{j}].vector: length {len(vec)} != dim {mean.shape[0]}")
            vectors[j] = vec
        stats = StandardizeStats(mean=mean, std=std, flagged_columns=flagged)
        model = OcsvmModel(
            support_vectors=vectors,
            alphas=alphas,
            rho=rho,
            kernel=KernelParams(gamma=gamma),
            nu=nu,
            n_train=n_train,
            feature_mean=mean,
            feature_std=std,
            flagged_columns=flagged,
            support_indices=None,
            rho_degenerate=degenerate,
        )
        layers.append(LayerDetector(name=name, stats=stats, model=model))
    return DetectorEnsemble(layers=tuple(layers), delta=delta)


@dataclass(frozen=True)
class SyntheticPaths:
    train_manifest: Path
    test_manifest: Path


OOD_KINDS = ("far_gaussian", "shell", "layerwise_mixed")
_N_LAYERS = 2
_SHIFT_NORM = 6.0  # offset of shifted OOD clusters, in units of the InD sigma


def _ood_block(rng: np.random.Generator, n: int, dims: int, kind: str) -> np.ndarray:
    if kind == "far_gaussian":
        mu = _SHIFT_NORM / np.sqrt(dims)
        return rng.normal(mu, 1.0, size=(n, dims))
    if kind == "shell":
        v = rng.normal(0.0, 1.0, size=(n, dims))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * (3.0 * np.sqrt(dims))
    raise ValueError(f"unknown ood_kind {kind!r}")


def gen_synthetic(
    seed: int, n_ind: int, n_ood: int, dims: int, ood_kind: str, out_dir
) -> SyntheticPaths:
    """Write train/test manifests for a two-layer synthetic detection task.

    InD features are standard Gaussian in every layer. far_gaussian and shell
    displace the OOD rows in both layers; layerwise_mixed splits the OOD rows
    into group A (displaced only in layer 1, label 1) and group B (displaced
    only in layer 2, label 2), the multi-complexity analog. Deterministic
    under the seed.
    """
    if n_ind < 2 or n_ood < 2:
        raise ValueError(f"need n_ind >= 2 and n_ood >= 2, got {n_ind}, {n_ood}")
    if dims < 1:
        raise ValueError(f"dims must be >= 1, got {dims}")
    if ood_kind not in OOD_KINDS:
        raise ValueError(f"unknown ood_kind {ood_kind!r}, expected one of {OOD_KINDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    train = [rng.normal(0.0, 1.0, size=(n_ind, dims)) for _ in range(_N_LAYERS)]
    test_ind = [rng.normal(0.0, 1.0, size=(n_ind, dims)) for _ in range(_N_LAYERS)]

    if ood_kind == "layerwise_mixed":
        n_a = n_ood // 2
        n_b = n_ood - n_a
        ood_l1 = np.vstack(
            [_ood_block(rng, n_a, dims, "far_gaussian"), rng.normal(0.0, 1.0, (n_b, dims))]
        )
        ood_l2 = np.vstack(
            [rng.normal(0.0, 1.0, (n_a, dims)), _ood_block(rng, n_b, dims, "far_gaussian")]
        )
        test_ood = [ood_l1, ood_l2]
        labels = np.concatenate(
            [np.zeros(n_ind, np.int64), np.ones(n_a, np.int64), np.full(n_b, 2, np.int64)]
        )
    else:
        test_ood = [_ood_block(rng, n_ood, dims, ood_kind) for _ in range(_N_LAYERS)]
        labels = np.concatenate([np.zeros(n_ind, np.int64), np.ones(n_ood, np.int64)])

    layer_names = [f"layer{i + 1}" for i in range(_N_LAYERS)]
    train_layers, test_layers = [], []
    for li, name in enumerate(layer_names):
        tf = f"train_{name}.laod"
        write_features(out / tf, train[li])
        train_layers.append(ManifestLayer(name=name, dim=dims, file=tf))
        sf = f"test_{name}.laod"
        write_features(out / sf, np.vstack([test_ind[li], test_ood[li]]))
        test_layers.append(ManifestLayer(name=name, dim=dims, file=sf))

    labels_name = "test_labels.txt"
    (out / labels_name).write_text("\n".join(str(int(v)) for v in labels) + "\n")

    train_manifest = out / "train_manifest.json"
    test_manifest = out / "test_manifest.json"
    write_manifest(train_manifest, n_ind, train_layers)
    write_manifest(test_manifest, n_ind + n_ood, test_layers, labels_file=labels_name)
    return SyntheticPaths(train_manifest=train_manifest, test_manifest=test_manifest)
