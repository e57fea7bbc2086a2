"""Command-line surface: gen-synth, fit, score, eval, tune, confusion, joint-train.

Exit codes: 0 success, 1 usage error, 2 runtime error (one-line diagnostic on
stderr). All float output uses 9 significant digits so artifacts diff cleanly.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as laood_io
from .backbone import JointConfig, ToyBackbone, train_alternating
from .ensemble import DetectorEnsemble, build_ensemble, score_dataset
from .metrics import evaluate
from .preprocess import apply_stats, fit_stats
from .pseudo_ood import ShiftConfig, generate_pseudo_ood
from .tuner import DEFAULT_GAMMA_GRID, DEFAULT_NU, TuneSpec, select_gamma

_FMT = "%.9g"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1 instead of 2."""

    def error(self, message):
        raise UsageError(message)


def _fmt(x: float) -> str:
    return _FMT % x


def _parse_gamma_grid(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split(","))
    except ValueError as exc:
        raise UsageError(f"--gamma-grid: {exc}") from exc


def _add_tune_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nu", type=float, default=DEFAULT_NU, help="training error bound")
    p.add_argument(
        "--gamma-grid",
        default=",".join(str(g) for g in DEFAULT_GAMMA_GRID),
        help="comma-separated kernel width candidates",
    )
    p.add_argument(
        "--criterion",
        choices=["auroc", "balanced_error"],
        default="balanced_error",
        help="gamma selection criterion",
    )
    p.add_argument("--k-neighbors", type=int, default=20, help="k for edge pattern detection")
    p.add_argument("--edge-threshold", type=float, default=0.1, help="minimum edge score to shift")
    p.add_argument("--shift-scale", type=float, default=2.0, help="outward shift multiplier")


def _tune_spec(args) -> TuneSpec:
    return TuneSpec(nu=args.nu, gamma_grid=_parse_gamma_grid(args.gamma_grid), criterion=args.criterion)


def _shift_config(args) -> ShiftConfig:
    return ShiftConfig(
        k_neighbors=args.k_neighbors,
        edge_threshold=args.edge_threshold,
        shift_scale=args.shift_scale,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="laood", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-synth", formatter_class=fmt, help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.add_argument("--ood-kind", choices=list(laood_io.OOD_KINDS), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-ind", type=int, default=1000, help="in-distribution samples")
    p.add_argument("--n-ood", type=int, default=1000, help="OOD samples in the test split")
    p.add_argument("--dims", type=int, default=8, help="feature dimension per layer")

    p = sub.add_parser("fit", formatter_class=fmt, help="train a detector ensemble")
    p.add_argument("--train", required=True, help="training manifest (InD features)")
    p.add_argument("--out", required=True, help="output model file")
    _add_tune_flags(p)

    p = sub.add_parser("score", formatter_class=fmt, help="score samples with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="manifest of per-layer features")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--delta", type=float, default=0.0, help="OOD decision threshold")

    p = sub.add_parser("eval", formatter_class=fmt, help="compute AUROC/AUPR/FPR metrics")
    p.add_argument("--scores-ind", required=True, help="scores of in-distribution samples")
    p.add_argument("--scores-ood", required=True, help="scores of OOD samples")
    p.add_argument("--tpr", type=float, default=0.95, help="TPR target for the FPR metric")

    p = sub.add_parser("tune", formatter_class=fmt, help="report the per-gamma tuning table")
    p.add_argument("--train", required=True, help="training manifest (InD features)")
    p.add_argument("--layer", default=None, help="tune only this layer")
    _add_tune_flags(p)

    p = sub.add_parser("confusion", formatter_class=fmt, help="per-sample confusion scores")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--delta", type=float, default=0.0, help="OOD decision threshold")

    p = sub.add_parser("joint-train", formatter_class=fmt, help="co-train backbone and detectors")
    p.add_argument("--config", required=True, help="flat key/value config file")
    p.add_argument("--train", required=True, help="manifest with one raw-input layer and labels")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-trace", required=True)
    return parser


def _load_ensemble(path) -> DetectorEnsemble:
    if not Path(path).exists():
        raise FileNotFoundError(f"model file not found: {path}")
    return laood_io.load_model(path)


def _load_manifest(path) -> laood_io.Manifest:
    if not Path(path).exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return laood_io.read_manifest(path)


def _cmd_gen_synth(args) -> int:
    paths = laood_io.gen_synthetic(
        seed=args.seed,
        n_ind=args.n_ind,
        n_ood=args.n_ood,
        dims=args.dims,
        ood_kind=args.ood_kind,
        out_dir=args.out,
    )
    print(f"train_manifest {paths.train_manifest}")
    print(f"test_manifest {paths.test_manifest}")
    return 0


def _cmd_fit(args) -> int:
    manifest = _load_manifest(args.train)
    mats = manifest.load_matrices()
    ens = build_ensemble(
        mats, _tune_spec(args), _shift_config(args), layer_names=list(manifest.layer_names)
    )
    laood_io.save_model(args.out, ens)
    for layer in ens.layers:
        print(f"{layer.name} gamma {_fmt(layer.model.kernel.gamma)} "
              f"support {layer.model.n_support}")
    return 0


def _write_scores_csv(path, ens, scores, delta_note=None) -> None:
    names = [f"s_{i + 1}" for i in range(ens.n_layers)]
    lines = ["sample_index," + ",".join(names) + ",final_score,argmax_layer,confusion,is_ood"]
    for idx, p in enumerate(scores.predictions):
        per = ",".join(_fmt(s) for s in p.per_layer_scores)
        lines.append(
            f"{idx},{per},{_fmt(p.final_score)},{p.argmax_layer},"
            f"{_fmt(p.confusion)},{1 if p.is_ood else 0}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _cmd_score(args) -> int:
    ens = _load_ensemble(args.model)
    if args.delta != ens.delta:
        ens = DetectorEnsemble(layers=ens.layers, delta=args.delta)
    manifest = _load_manifest(args.features)
    scores = score_dataset(ens, manifest.load_matrices())
    _write_scores_csv(args.out, ens, scores)
    print("detections_per_layer")
    for name, count in zip(ens.layer_names, scores.detections_per_layer):
        print(f"{name} {int(count)}")
    return 0


def _read_score_file(path) -> np.ndarray:
    """Plain one-score-per-line file, or a score CSV (uses final_score)."""
    text = Path(path).read_text().strip()
    if not text:
        raise ValueError(f"{path}: empty score file")
    lines = text.splitlines()
    first = lines[0].split(",")
    try:
        float(first[0])
        return np.array([float(line.split(",")[0]) for line in lines])
    except ValueError:
        pass
    header = [h.strip() for h in first]
    if "final_score" not in header:
        raise ValueError(f"{path}: no final_score column in header {header}")
    col = header.index("final_score")
    return np.array([float(line.split(",")[col]) for line in lines[1:]])


def _cmd_eval(args) -> int:
    ind = _read_score_file(args.scores_ind)
    ood = _read_score_file(args.scores_ood)
    report = evaluate(ind, ood, tpr_target=args.tpr)
    for key, value in report.as_dict().items():
        print(f"{key} {_fmt(value) if isinstance(value, float) else value}")
    return 0


def _cmd_tune(args) -> int:
    manifest = _load_manifest(args.train)
    mats = manifest.load_matrices()
    spec = _tune_spec(args)
    shift = _shift_config(args)
    names = list(manifest.layer_names)
    if args.layer is not None:
        if args.layer not in names:
            raise ValueError(f"layer {args.layer!r} not in manifest layers {names}")
        keep = names.index(args.layer)
        mats, names = [mats[keep]], [names[keep]]
    for name, X in zip(names, mats):
        stats = fit_stats(X)
        Xs = apply_stats(stats, X)
        pseudo = generate_pseudo_ood(Xs, shift)
        gamma, report = select_gamma(Xs, pseudo, spec)
        print(f"layer {name} criterion {report.criterion} selected_gamma {_fmt(gamma)}")
        print("gamma,value,note")
        for trial in report.trials:
            if trial.value is None:
                print(f"{_fmt(trial.gamma)},,skipped: {trial.skip_reason}")
            else:
                mark = " (selected)" if trial.gamma == gamma else ""
                print(f"{_fmt(trial.gamma)},{_fmt(trial.value)},{mark.strip()}")
    return 0


def _text_histogram(values: np.ndarray, bins: int = 20, width: int = 50) -> list[str]:
    counts, edges = np.histogram(values, bins=bins)
    peak = max(int(counts.max()), 1)
    lines = []
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        bar = "#" * int(round(width * c / peak))
        lines.append(f"[{_fmt(lo):>13}, {_fmt(hi):>13})  {int(c):6d}  {bar}")
    return lines


def _cmd_confusion(args) -> int:
    ens = _load_ensemble(args.model)
    if args.delta != ens.delta:
        ens = DetectorEnsemble(layers=ens.layers, delta=args.delta)
    manifest = _load_manifest(args.features)
    scores = score_dataset(ens, manifest.load_matrices())
    confusion = np.array([p.confusion for p in scores.predictions])
    lines = ["sample_index,confusion"]
    lines += [f"{i},{_fmt(c)}" for i, c in enumerate(confusion)]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"n {confusion.size} mean {_fmt(confusion.mean())} "
          f"negative_fraction {_fmt(float(np.mean(confusion < 0)))}")
    for line in _text_histogram(confusion):
        print(line)
    return 0


def _parse_kv_config(path) -> dict[str, str]:
    if not Path(path).exists():
        raise FileNotFoundError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            key, _, value = line.partition(" ")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ValueError(f"{path}:{ln}: expected 'key value' or 'key=value'")
        out[key] = value
    return out


def _cmd_joint_train(args) -> int:
    kv = _parse_kv_config(args.config)

    def take(key, cast, default):
        return cast(kv[key]) if key in kv else default

    tune = TuneSpec(
        nu=take("nu", float, DEFAULT_NU),
        gamma_grid=_parse_gamma_grid(kv["gamma_grid"]) if "gamma_grid" in kv else DEFAULT_GAMMA_GRID,
        criterion=take("criterion", str, "balanced_error"),
    )
    shift = ShiftConfig(
        k_neighbors=take("k_neighbors", int, 20),
        edge_threshold=take("edge_threshold", float, 0.1),
        shift_scale=take("shift_scale", float, 2.0),
    )
    config = JointConfig(
        lam=take("lambda", float, 0.1),
        outer_iters=take("outer_iters", int, 3),
        inner_epochs=take("inner_epochs", int, 50),
        learning_rate=take("learning_rate", float, 0.05),
        convergence_tol=take("convergence_tol", float, 1e-8),
        tune=tune,
        shift=shift,
        pretrain_epochs=take("pretrain_epochs", int, 0),
    )

    manifest = _load_manifest(args.train)
    if len(manifest.layers) != 1:
        raise ValueError(
            f"joint-train expects a single raw-input layer, manifest has {len(manifest.layers)}"
        )
    X = manifest.load_matrices()[0].astype(np.float64)
    y = manifest.load_labels()
    n_classes = take("n_classes", int, int(y.max()) + 1)
    hidden = tuple(int(v) for v in take("hidden_dims", str, "8,8").split(","))
    bb = ToyBackbone.init((X.shape[1], *hidden, n_classes), seed=take("seed", int, 0))

    bb, ens, trace = train_alternating(bb, (X, y), config)
    laood_io.save_model(args.out_model, ens)
    lines = ["outer_iter,step,joint_objective,ce_loss,reg_term,train_accuracy"]
    for row in trace:
        lines.append(
            f"{row.outer_iter},{row.step},{_fmt(row.joint_objective)},"
            f"{_fmt(row.ce_loss)},{_fmt(row.reg_term)},{_fmt(row.train_accuracy)}"
        )
    Path(args.out_trace).write_text("\n".join(lines) + "\n")
    print(f"trace_rows {len(trace)} final_objective {_fmt(trace[-1].joint_objective)}")
    return 0


_HANDLERS = {
    "gen-synth": _cmd_gen_synth,
    "fit": _cmd_fit,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "tune": _cmd_tune,
    "confusion": _cmd_confusion,
    "joint-train": _cmd_joint_train,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except BrokenPipeError:
        return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
