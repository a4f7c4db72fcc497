"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. ``AEOD_OUTDIR`` and ``AEOD_THREADS`` override the
config file's ``outdir`` and ``n_jobs``; command-line flags override both.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .data import DataError, apply_normalizer, fit_normalizer, load_csv, save_csv, save_splits, stratified_split
from .evaluation import ensemble_score, prepare_splits, run_benchmark, select_k, train_ensemble
from .metrics import auc, roc_points
from .nn import NumericalError
from .store import load_ensemble, save_ensemble
from .synthetic import MODES, SyntheticSpec, make_synthetic

log = logging.getLogger("aeod")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _k_value(text):
    return text if text == "auto" else int(text)


def _add_run_flags(p):
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--dataset")
    p.add_argument("--label-column")
    p.add_argument("--detector", choices=["ae-mse", "pae-pre"])
    p.add_argument("--scorer", choices=["mse", "apre", "mss-mse", "mss-apre"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=_k_value)
    p.add_argument("--S1", type=int)
    p.add_argument("--S2", type=int)
    p.add_argument("--Sb", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--outdir")
    p.add_argument("--n-jobs", dest="n_jobs", type=int)


_RUN_FIELDS = ("dataset", "label_column", "detector", "scorer", "alpha", "beta", "m", "k",
               "S1", "S2", "Sb", "epochs", "lr", "seed", "outdir", "n_jobs")


def load_run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    env = {}
    if os.environ.get("AEOD_OUTDIR"):
        env["outdir"] = os.environ["AEOD_OUTDIR"]
    if os.environ.get("AEOD_THREADS"):
        try:
            env["n_jobs"] = int(os.environ["AEOD_THREADS"])
        except ValueError:
            raise ConfigError([f"AEOD_THREADS must be an integer, got {os.environ['AEOD_THREADS']!r}"])
    cfg = cfg.with_overrides(**env)
    cfg = cfg.with_overrides(**{f: getattr(args, f) for f in _RUN_FIELDS})
    return cfg.validate()


def _outdir(cfg_or_path):
    out = cfg_or_path.outdir if isinstance(cfg_or_path, RunConfig) else cfg_or_path
    out = Path(out or os.environ.get("AEOD_OUTDIR") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def write_scores(path, raw, scores, labels=None):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["index"] + [f"raw_{i}" for i in range(raw.shape[0])] + ["score"]
        if labels is not None:
            header.append("label")
        w.writerow(header)
        for i in range(scores.size):
            row = [i] + [repr(float(v)) for v in raw[:, i]] + [repr(float(scores[i]))]
            if labels is not None:
                row.append(int(labels[i]))
            w.writerow(row)


def write_roc(path, scores, labels):
    thresholds, fpr, tpr = roc_points(scores, labels)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(thresholds, fpr, tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])


def cmd_synth(args):
    cov = ((args.cov[0], args.cov[1]), (args.cov[1], args.cov[2]))
    try:
        spec = SyntheticSpec(args.n_inliers, args.n_outliers, cov, args.mode, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out) if args.out else _outdir(None) / f"synthetic_{args.mode}_{args.seed}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(out, make_synthetic(spec), "label")
    print(out)


def cmd_prepare(args):
    data = load_csv(args.csv, args.label_column)
    if data.labels is None:
        raise DataError(f"{args.csv}: a label column is required for splitting (--label-column)")
    splits = stratified_split(data, args.seed)
    stats = fit_normalizer(splits.train)
    out = _outdir(args.outdir)
    save_splits(splits, out, stats, label_column=args.label_column)
    print(json.dumps({k: len(v) for k, v in splits.indices.items()}))


def _load_splits(cfg):
    data = load_csv(cfg.dataset, cfg.label_column)
    if data.labels is None:
        raise DataError(f"{cfg.dataset}: label column {cfg.label_column!r} is required")
    return prepare_splits(data, cfg.seed)


def cmd_select_k(args):
    cfg = load_run_config(args)
    if not cfg.scorer.startswith("mss-"):
        raise ConfigError([f"select-k needs a mean-shift scorer, got {cfg.scorer!r}"])
    splits, _ = _load_splits(cfg)
    sel = select_k(cfg.ensemble_config(), splits, cfg.detector)
    out = _outdir(cfg)
    _dump(out / "select_k.json", {
        "config": cfg.to_dict(),
        "chosen_k": sel.k,
        "mean_auc_by_k": sel.table(),
        "run_aucs": sel.run_aucs.tolist(),
        "seeds": sel.seeds,
    })
    print(sel.k)


def cmd_train(args):
    cfg = load_run_config(args)
    splits, stats = _load_splits(cfg)
    k = None
    if cfg.scorer.startswith("mss-"):
        if cfg.k == "auto":
            k = select_k(cfg.ensemble_config(), splits, cfg.detector).k
        else:
            k = int(cfg.k)
    ens = train_ensemble(cfg.ensemble_config(), splits, cfg.detector, cfg.scorer, k)
    model_dir = _outdir(cfg) / "model"
    save_ensemble(ens, model_dir, stats)
    print(model_dir)


def cmd_score(args):
    ens, stats = load_ensemble(args.model)
    data = load_csv(args.input, args.label_column)
    if data.n_features != stats.mean.size:
        raise DataError(f"{args.input}: expected {stats.mean.size} features, found {data.n_features}")
    X = apply_normalizer(stats, data.values)
    scores, raw = ensemble_score(ens, X, return_raw=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores(out, raw, scores, data.labels)
    if data.labels is not None and 0 < data.labels.sum() < data.labels.size:
        print(json.dumps({"auc": auc(scores, data.labels)}))


def cmd_benchmark(args):
    cfg = load_run_config(args)
    result = run_benchmark(cfg)
    out = _outdir(cfg)
    _dump(out / "report.json", result.report)
    write_scores(out / "scores.csv", result.test_raw, result.test_scores, result.test_labels)
    write_roc(out / "roc.csv", result.test_scores, result.test_labels)
    print(json.dumps({"test_auc": result.report["test_auc"], "chosen_k": result.report["chosen_k"]}))


def build_parser():
    parser = _Parser(prog="aeod", description="Autoencoder outlier detection with mean-shift scoring.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a planted 2-D outlier dataset")
    p.add_argument("--mode", choices=MODES, default="far-bias")
    p.add_argument("--n-inliers", type=int, default=50)
    p.add_argument("--n-outliers", type=int, default=5)
    p.add_argument("--cov", type=float, nargs=3, default=[1.0, 0.8, 1.0], metavar=("VAR1", "COV", "VAR2"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="split a labeled CSV into train/validation/test")
    p.add_argument("csv")
    p.add_argument("--label-column", default="label")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("select-k", help="choose the mean-shift neighbour count")
    _add_run_flags(p)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("train", help="train and save a detector ensemble")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a CSV with a saved ensemble")
    p.add_argument("--model", required=True, help="directory written by 'train'")
    p.add_argument("--input", required=True)
    p.add_argument("--label-column")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("benchmark", help="run the full protocol and report test AUC")
    _add_run_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"aeod: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"aeod: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"aeod: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
