"""Command-line pipeline: synth -> train -> score -> eval, plus sweep
and the affine-bound verifier.

Every subcommand reads/writes plain files (AVF1 features, OLSR models,
CSV/JSON scores and reports), embeds its resolved configuration in its
report for provenance, and is byte-deterministic given identical inputs
and seeds.  Defaults follow the standard training recipe.  A JSON file
passed via --config supplies defaults for any flags; explicit flags
still win.  Set AVOOD_LOG=info (or debug) for progress logging on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import affine, metrics, scoring
from .data import SynthSpec, read_features, split, synth_id, synth_ood, write_features
from .detector import TrainConfig, fit_gaussians, load_model, save_model, train
from .errors import (
    AvoodError,
    BoundViolationError,
    CalibrationError,
    ConfigError,
    DataFormatError,
    EvaluationError,
    ScoringError,
    ShapeError,
    TrainingDivergedError,
    UnsupportedPathError,
)

log = logging.getLogger("avood")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_DIMENSION = 5
EXIT_DIVERGED = 6
EXIT_NUMERIC = 7


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, DataFormatError):
        return EXIT_FORMAT
    if isinstance(exc, ShapeError):
        return EXIT_DIMENSION
    if isinstance(exc, TrainingDivergedError):
        return EXIT_DIVERGED
    if isinstance(
        exc,
        (CalibrationError, ScoringError, EvaluationError, BoundViolationError,
         UnsupportedPathError),
    ):
        return EXIT_NUMERIC
    return EXIT_INTERNAL


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolved(ns: argparse.Namespace, skip=("func", "command", "config")) -> dict:
    out = {}
    for key, value in sorted(vars(ns).items()):
        if key in skip or callable(value):
            continue
        out[key] = value
    return out


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(ns) -> int:
    spec = SynthSpec(
        n_classes=ns.classes, feature_dim=ns.dim, n_samples=ns.samples,
        mean_scale=ns.mean_scale, noise_sigma=ns.noise_sigma,
        ood_kind=ns.kind, ood_multiplier=ns.multiplier, ood_shift=ns.shift,
        seed=ns.seed, sample_seed=ns.sample_seed,
    )
    fs = synth_ood(spec) if ns.ood else synth_id(spec)
    write_features(ns.out, fs)
    log.info("wrote %s: N=%d H=%d C=%d", ns.out, fs.n, fs.h, fs.n_classes)
    print(f"{ns.out}: N={fs.n} H={fs.h} C={fs.n_classes}")
    return EXIT_OK


def _train_config(ns) -> TrainConfig:
    return TrainConfig(
        lam=ns.lam, temperature=ns.temperature, lr=ns.lr, batch=ns.batch,
        epochs=ns.epochs, seed=ns.seed, decoder_hidden=ns.decoder_hidden,
        loss=ns.loss, k=ns.k, val_fraction=ns.val_fraction,
        distance=ns.distance, detach_l2_target=ns.detach_l2_target,
    )


def _load_init_w(path) -> np.ndarray:
    with open(path) as fh:
        manifest = json.load(fh)
    if "final_layer_weight" not in manifest:
        raise DataFormatError(f"{path}: manifest lacks 'final_layer_weight'")
    return np.asarray(manifest["final_layer_weight"], dtype=np.float64)


def cmd_train(ns) -> int:
    config = _train_config(ns)
    features = read_features(ns.features)
    if ns.val_features:
        train_fs, val_fs = features, read_features(ns.val_features)
    else:
        train_fs, val_fs = split(features, config.val_fraction, config.seed)
    init_W = _load_init_w(ns.init_w) if ns.init_w else None

    log.info("training on %d samples (val %d)", train_fs.n, val_fs.n)
    result = train(train_fs, config, init_W=init_W)
    fits = fit_gaussians(result.model, val_fs, k=config.k, distance=config.distance)

    val_table = scoring.score_batch(
        result.model, fits, val_fs.features.astype(np.float64),
        distance=config.distance,
    )
    threshold = scoring.threshold_from_validation(val_table.score, ns.target_tpr)
    factors = np.minimum(
        np.minimum(val_table.phi0, val_table.psi1), val_table.psi2
    )
    floor_fraction = float(np.mean(factors < 0.1))

    save_model(ns.model, result.model, fits, k=config.k)
    notes = []
    if config.lam == 0:
        notes.append("regularizer disabled (lambda = 0)")
    if floor_fraction > 0:
        notes.append(
            f"{floor_fraction:.3f} of validation rows have a factor below 0.1"
        )
    payload = {
        "config": _resolved(ns),
        "n_train": train_fs.n,
        "n_val": val_fs.n,
        "history": result.history,
        "fits": [
            {"mu": g.mu, "sigma": g.sigma, "epsilon": g.epsilon} for g in fits
        ],
        "threshold": threshold,
        "target_tpr": ns.target_tpr,
        "factor_floor_fraction": floor_fraction,
        "notes": notes,
    }
    if ns.log:
        _write_json(ns.log, payload)
    log.info("model written to %s", ns.model)
    print(f"{ns.model}: trained {config.epochs} epochs, threshold {threshold!r}")
    return EXIT_OK


_SCORE_FIELDS = ("conf", "r1", "r2", "phi0", "psi1", "psi2", "score")


def _score_rows(table: scoring.ScoreTable, threshold: float) -> list[dict]:
    rows = []
    for i in range(len(table)):
        b = table.row(i)
        ood = b.flagged or b.score < threshold
        row = {"index": i}
        row.update({f: getattr(b, f) for f in _SCORE_FIELDS})
        row["flagged"] = int(b.flagged)
        row["decision"] = "ood" if ood else "id"
        rows.append(row)
    return rows


def cmd_score(ns) -> int:
    model, fits = load_model(ns.model)
    features = read_features(ns.features)
    table = scoring.score_batch(
        model, fits, features.features.astype(np.float64),
        distance=ns.distance, mode=ns.score,
        use_epsilon=(ns.epsilon == "on"),
    )
    rows = _score_rows(table, ns.threshold)
    if ns.format == "csv":
        with open(ns.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["index", *_SCORE_FIELDS, "flagged", "decision"]
            writer.writerow(header)
            for row in rows:
                writer.writerow([
                    row["index"],
                    *[repr(row[f]) for f in _SCORE_FIELDS],
                    row["flagged"], row["decision"],
                ])
    else:
        for row in rows:
            row["r1"] = _finite_or_none(row["r1"])
            row["r2"] = _finite_or_none(row["r2"])
        _write_json(ns.out, {"config": _resolved(ns), "rows": rows})
    log.info("scored %d samples -> %s", len(rows), ns.out)
    print(f"{ns.out}: {len(rows)} rows")
    return EXIT_OK


def _read_scores(path) -> np.ndarray:
    if str(path).endswith(".json"):
        with open(path) as fh:
            payload = json.load(fh)
        return np.array([row["score"] for row in payload["rows"]], dtype=np.float64)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "score" not in reader.fieldnames:
            raise DataFormatError(f"{path}: no 'score' column")
        return np.array([float(row["score"]) for row in reader], dtype=np.float64)


def _histogram(scores: np.ndarray, bins: int) -> list[int]:
    counts, _ = np.histogram(scores, bins=bins, range=(0.0, 1.0))
    return counts.tolist()


def cmd_eval(ns) -> int:
    id_scores = _read_scores(ns.id_scores)
    ood_scores = _read_scores(ns.ood_scores)
    report = metrics.evaluate(id_scores, ood_scores, tpr=ns.tpr)
    edges = np.linspace(0.0, 1.0, ns.bins + 1).tolist()
    payload = {
        "config": _resolved(ns),
        "counts": {"id": report.n_id, "ood": report.n_ood},
        "metrics": report.as_dict(),
        "display": report.display(),
        "histograms": {
            "bin_edges": edges,
            "id": _histogram(id_scores, ns.bins),
            "ood": _histogram(ood_scores, ns.bins),
        },
    }
    _write_json(ns.out, payload)
    print(
        f"{ns.out}: auroc={report.auroc:.4f} "
        f"fpr@95tpr={report.fpr_at_95tpr:.4f}"
    )
    return EXIT_OK


def cmd_sweep(ns) -> int:
    lambdas = [float(x) for x in ns.lambdas.split(",") if x.strip() != ""]
    if not lambdas:
        raise ConfigError("--lambdas must list at least one value")
    base = _train_config(ns)
    features = read_features(ns.features)
    if ns.val_features:
        train_fs, val_fs = features, read_features(ns.val_features)
    else:
        train_fs, val_fs = split(features, base.val_fraction, base.seed)
    id_test = read_features(ns.id_test).features.astype(np.float64)
    ood_test = read_features(ns.ood_test).features.astype(np.float64)

    table = []
    for lam in lambdas:
        config = base.with_(lam=lam)
        log.info("sweep: training lambda = %g", lam)
        result = train(train_fs, config)
        fits = fit_gaussians(result.model, val_fs, k=config.k, distance=config.distance)
        entry = {"lambda": lam}
        for mode in ("layerwise", "basic"):
            ids = scoring.score_batch(
                result.model, fits, id_test, distance=config.distance, mode=mode
            ).score
            oods = scoring.score_batch(
                result.model, fits, ood_test, distance=config.distance, mode=mode
            ).score
            entry[f"auroc_{mode}"] = metrics.auroc(ids, oods)
        table.append(entry)

    ranges = {
        mode: (
            max(e[f"auroc_{mode}"] for e in table)
            - min(e[f"auroc_{mode}"] for e in table)
        )
        for mode in ("layerwise", "basic")
    }
    payload = {
        "config": _resolved(ns),
        "table": table,
        "auroc_range": ranges,
        "layerwise_range_le_basic": bool(ranges["layerwise"] <= ranges["basic"]),
    }
    _write_json(ns.out, payload)
    for entry in table:
        print(
            f"lambda={entry['lambda']:g}: layerwise={entry['auroc_layerwise']:.4f} "
            f"basic={entry['auroc_basic']:.4f}"
        )
    return EXIT_OK


def cmd_verify_affine(ns) -> int:
    model, _ = load_model(ns.model)
    features = read_features(ns.features)
    path = affine.reconstruction_path(model, "d1")
    V = features.features.astype(np.float64)[: ns.samples]

    max_resid = 0.0
    violations = 0
    worst_ratio = 0.0
    from .nn import forward

    for v in V:
        decomp = affine.decompose(path, v)
        out, _ = forward(path, v)
        resid = float(np.linalg.norm(out - decomp.apply(v)))
        max_resid = max(max_resid, resid / (1.0 + float(np.linalg.norm(out))))
        try:
            bound, actual = affine.recon_error_bound(decomp, v, norm=ns.norm)
        except BoundViolationError:
            violations += 1
            continue
        if bound > 0:
            worst_ratio = max(worst_ratio, actual / bound)

    grid = [float(x) for x in ns.norm_grid.split(",")]
    rows = affine.norm_bias_demo(model, grid, seed=ns.seed)
    payload = {
        "config": _resolved(ns),
        "n_checked": int(V.shape[0]),
        "max_equality_residual": max_resid,
        "bound_violations": violations,
        "worst_actual_over_bound": worst_ratio,
        "norm_bias": [
            {"input_norm": r.input_norm, "mean_l2": r.mean_l2, "mean_nl2": r.mean_nl2}
            for r in rows
        ],
    }
    _write_json(ns.out, payload)
    print(
        f"{ns.out}: checked {V.shape[0]} samples, "
        f"{violations} bound violations, max residual {max_resid:.3e}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="regularizer weight")
    p.add_argument("--temperature", type=float, default=100.0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decoder-hidden", type=int, default=None)
    p.add_argument("--loss", choices=["norm", "squared"], default="norm")
    p.add_argument("--k", type=float, default=10.0,
                   help="epsilon multiplier for the Gaussian fits")
    p.add_argument("--val-fraction", type=float, default=0.04)
    p.add_argument("--distance", choices=["nl2", "l2"], default="nl2")
    p.add_argument("--detach-l2-target", action="store_true")
    p.add_argument("--val-features", default=None,
                   help="explicit validation AVF1 file (skips the internal split)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="avood",
        description="Feature-level out-of-distribution detection toolkit.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def sub(name, func, **kw):
        p = subs.add_parser(name, **kw)
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults (flags override)")
        p.set_defaults(func=func, command=name)
        registry[name] = p
        return p

    p = sub("synth", cmd_synth, help="generate synthetic feature files")
    p.add_argument("--out", required=True)
    p.add_argument("--ood", action="store_true",
                   help="emit the out-of-distribution set instead of ID")
    p.add_argument("--kind", choices=["shifted", "scaled-norm", "uniform"],
                   default="shifted")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--mean-scale", type=float, default=6.0)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--multiplier", type=float, default=0.5)
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-seed", type=int, default=None)

    p = sub("train", cmd_train, help="train and calibrate a detector")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--log", default=None, help="JSON training log path")
    p.add_argument("--init-w", default=None,
                   help="JSON manifest with a final_layer_weight matrix")
    p.add_argument("--target-tpr", type=float, default=0.95)
    _add_train_flags(p)

    p = sub("score", cmd_score, help="score features with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--distance", choices=["nl2", "l2"], default="nl2")
    p.add_argument("--score", choices=["layerwise", "basic"], default="layerwise")
    p.add_argument("--epsilon", choices=["on", "off"], default="on")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="decision threshold (score < threshold -> ood)")

    p = sub("eval", cmd_eval, help="compute OoD metrics from two score files")
    p.add_argument("--id-scores", required=True)
    p.add_argument("--ood-scores", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tpr", type=float, default=0.95)
    p.add_argument("--bins", type=int, default=64)

    p = sub("sweep", cmd_sweep, help="train per lambda and tabulate AUROC")
    p.add_argument("--features", required=True)
    p.add_argument("--id-test", required=True)
    p.add_argument("--ood-test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambdas", default="0.01,0.1,1,10")
    _add_train_flags(p)

    p = sub("verify-affine", cmd_verify_affine,
            help="check the piecewise-affine equality and error bound")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--norm", choices=["spectral", "frobenius"], default="spectral")
    p.add_argument("--norm-grid", default="0,0.5,1,2,4,8")
    p.add_argument("--seed", type=int, default=0)

    return parser, registry


def _dispatch(argv) -> int:
    parser, registry = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        with open(ns.config) as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise ConfigError(f"{ns.config}: config must be a JSON object")
        sub = registry[ns.command]
        valid = {a.dest for a in sub._actions if a.dest != "help"}
        unknown = sorted(set(overrides) - valid)
        if unknown:
            raise ConfigError(f"{ns.config}: unknown config keys {unknown}")
        sub.set_defaults(**overrides)
        ns = parser.parse_args(argv)
    return ns.func(ns)


def run(argv=None) -> int:
    """Parse and execute; returns the process exit code."""
    level = os.environ.get("AVOOD_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(sys.argv[1:] if argv is None else argv)
    except (AvoodError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


def main() -> None:
    sys.exit(run())
