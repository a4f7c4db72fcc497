"""Neighbour-count selection, top-model score ensembles and the end-to-end benchmark."""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .data import Dataset, Splits, apply_normalizer, fit_normalizer, load_csv, stratified_split
from .detector import AE_MSE, PAE_PRE, DetectorModel, ScoreWeights, make_scorer, score_all, train
from .meanshift import CandidateShifter, ShiftChain, default_k_candidates, shift_points
from .metrics import auc, roc_points
from .nn import NumericalError

log = logging.getLogger(__name__)

SCORERS = ("mse", "apre", "mss-mse", "mss-apre")
SCORER_KIND = {"mse": AE_MSE, "mss-mse": AE_MSE, "apre": PAE_PRE, "mss-apre": PAE_PRE}

STEP_SELECT = 1
STEP_ENSEMBLE = 2


def child_seed(master_seed: int, step: int, run: int) -> int:
    """Seed of training run ``run`` in step ``step`` (1 = k selection, 2 = ensemble)."""
    ss = np.random.SeedSequence([int(master_seed), int(step), int(run)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def base_score(score_kind):
    """'mss-apre' -> 'apre', 'mse' -> 'mse'."""
    return score_kind[4:] if score_kind.startswith("mss-") else score_kind


def check_compatible(kind, score_kind):
    if score_kind not in SCORERS:
        raise ValueError(f"unknown scorer {score_kind!r}; choose from {SCORERS}")
    if SCORER_KIND[score_kind] != kind:
        raise ValueError(f"scorer {score_kind!r} requires detector {SCORER_KIND[score_kind]!r}, not {kind!r}")


@dataclass
class EnsembleConfig:
    S1: int = 20
    S2: int = 20
    Sb: int = 5
    k_candidates: Optional[Sequence[int]] = None
    m: int = 1
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    epochs: int = 5000
    lr: float = 1e-3
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if min(self.S1, self.S2, self.Sb) < 1:
            raise ValueError("S1, S2 and Sb must be positive")
        if self.Sb > self.S2:
            raise ValueError(f"Sb={self.Sb} exceeds S2={self.S2}")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    def candidates(self, n_train):
        ks = default_k_candidates(n_train) if self.k_candidates is None else list(self.k_candidates)
        ks = sorted(set(int(k) for k in ks))
        if not ks:
            raise ValueError("empty k candidate list")
        if ks[0] < 1 or ks[-1] > n_train - 1:
            raise ValueError(f"k candidates must lie in [1, {n_train - 1}]")
        return ks


def _run_many(fn, seeds, n_jobs):
    if n_jobs == 1 or len(seeds) == 1:
        return [fn(s) for s in seeds]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(s) for s in seeds)


@dataclass
class KSelection:
    k: int
    candidates: list
    mean_aucs: np.ndarray
    run_aucs: np.ndarray  # (S1, K)
    seeds: list

    def table(self):
        return {str(k): float(a) for k, a in zip(self.candidates, self.mean_aucs)}


def select_k(config: EnsembleConfig, splits: Splits, kind: str) -> KSelection:
    """Step 1: pick k by the validation AUC averaged over S1 runs.

    Every epoch of every run scores the validation split once per candidate
    k; each (run, k) keeps its own best AUC over epochs. Ties go to the
    smaller k.
    """
    X_train, X_val, y_val = splits.train.values, splits.validation.values, splits.validation.labels
    ks = config.candidates(X_train.shape[0])
    targets = CandidateShifter(X_train, ks, config.m).shift(X_val)
    scorer = make_scorer(base_score_for(kind), targets, config.weights)
    seeds = [child_seed(config.seed, STEP_SELECT, r) for r in range(config.S1)]

    def one(seed):
        return train(kind, X_train, X_val, y_val, scorer, config.epochs, config.lr, seed).best_aucs

    run_aucs = np.array(_run_many(one, seeds, config.n_jobs))
    means = run_aucs.mean(axis=0)
    best = int(np.argmax(means))
    return KSelection(ks[best], ks, means, run_aucs, seeds)


def base_score_for(kind):
    return "mse" if kind == AE_MSE else "apre"


@dataclass
class DetectorEnsemble:
    models: list
    scale_max: np.ndarray  # a_i
    scale_min: np.ndarray  # b_i
    score_kind: str
    weights: ScoreWeights
    k: Optional[int] = None
    chain: Optional[ShiftChain] = None
    run_seeds: list = field(default_factory=list)
    run_aucs: list = field(default_factory=list)  # NaN for diverged runs
    retained: list = field(default_factory=list)

    @property
    def kind(self):
        return self.models[0].kind

    @property
    def uses_shift(self):
        return self.score_kind.startswith("mss-")

    def targets(self, X):
        return shift_points(X, self.chain) if self.uses_shift else np.asarray(X, dtype=float)

    def raw_scores(self, X, targets=None):
        X = np.asarray(X, dtype=float)
        if targets is None:
            targets = self.targets(X)
        base = base_score(self.score_kind)
        return np.stack([score_all(mdl, X, base, self.weights, targets) for mdl in self.models])


def normalize_scores(raw, scale_max, scale_min):
    """(score - b) / (a - b) per model; a constant model maps to 0.5."""
    raw = np.atleast_2d(raw)
    a = np.asarray(scale_max, float)[:, None]
    b = np.asarray(scale_min, float)[:, None]
    span = a - b
    degenerate = span == 0
    out = (raw - b) / np.where(degenerate, 1.0, span)
    return np.where(degenerate, 0.5, out)


def train_ensemble(
    config: EnsembleConfig, splits: Splits, kind: str, score_kind: str, k: Optional[int] = None
) -> DetectorEnsemble:
    """Step 2: train S2 runs, keep the Sb with the best validation AUC.

    Each retained model gets scale factors a = max and b = min of its raw
    validation scores. Diverged runs are dropped with a warning.
    """
    check_compatible(kind, score_kind)
    X_train, X_val, y_val = splits.train.values, splits.validation.values, splits.validation.labels
    chain = None
    if score_kind.startswith("mss-"):
        if k is None:
            raise ValueError("mean-shift scoring needs k")
        shifter = CandidateShifter(X_train, [k], config.m)
        chain = shifter.chain(k)
        val_targets = shifter.shift(X_val)[0]
    else:
        val_targets = X_val
    scorer = make_scorer(base_score(score_kind), val_targets, config.weights)
    seeds = [child_seed(config.seed, STEP_ENSEMBLE, r) for r in range(config.S2)]

    def one(seed):
        try:
            return train(kind, X_train, X_val, y_val, scorer, config.epochs, config.lr, seed)
        except NumericalError as exc:
            return exc

    results = _run_many(one, seeds, config.n_jobs)
    survivors = []
    for r, res in enumerate(results):
        if isinstance(res, NumericalError):
            warnings.warn(f"run {r} (seed {seeds[r]}) dropped: {res}", RuntimeWarning, stacklevel=2)
        else:
            survivors.append(r)
    if len(survivors) < config.Sb:
        raise NumericalError(f"only {len(survivors)} of {config.S2} runs converged; need Sb={config.Sb}")
    run_aucs = [float("nan") if isinstance(res, NumericalError) else res.best_auc for res in results]
    ranked = sorted(survivors, key=lambda r: -run_aucs[r])
    retained = ranked[: config.Sb]
    models = [results[r] for r in retained]

    ens = DetectorEnsemble(
        models=models,
        scale_max=np.empty(0),
        scale_min=np.empty(0),
        score_kind=score_kind,
        weights=config.weights,
        k=k,
        chain=chain,
        run_seeds=seeds,
        run_aucs=run_aucs,
        retained=retained,
    )
    raw_val = ens.raw_scores(X_val, val_targets)
    ens.scale_max = raw_val.max(axis=1)
    ens.scale_min = raw_val.min(axis=1)
    return ens


def ensemble_score(ens: DetectorEnsemble, X, return_raw=False):
    """Mean of the retained models' normalized scores."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != ens.models[0].input_dim:
        raise ValueError(f"X shape {X.shape} does not match model width {ens.models[0].input_dim}")
    raw = ens.raw_scores(X)
    score = normalize_scores(raw, ens.scale_max, ens.scale_min).mean(axis=0)
    return (score, raw) if return_raw else score


@dataclass
class BenchmarkResult:
    report: dict
    test_scores: np.ndarray
    test_raw: np.ndarray
    test_labels: np.ndarray
    ensemble: DetectorEnsemble
    selection: Optional[KSelection] = None

    def roc(self):
        return roc_points(self.test_scores, self.test_labels)


def prepare_splits(data: Dataset, seed: int):
    """Split, then normalize all three parts with training-set statistics."""
    raw = stratified_split(data, seed)
    stats = fit_normalizer(raw.train)
    splits = Splits(
        apply_normalizer(stats, raw.train),
        apply_normalizer(stats, raw.validation),
        apply_normalizer(stats, raw.test),
        raw.seed,
        raw.indices,
    )
    return splits, stats


def run_benchmark(cfg) -> BenchmarkResult:
    """load -> split -> normalize -> (select k) -> ensemble -> test AUC.

    ``cfg`` is a :class:`aeod.config.RunConfig`; the data split uses the
    master seed directly.
    """
    t0 = time.perf_counter()
    cfg.validate()
    data = cfg.dataset if isinstance(cfg.dataset, Dataset) else load_csv(cfg.dataset, cfg.label_column)
    splits, stats = prepare_splits(data, cfg.seed)
    ens_cfg = cfg.ensemble_config()

    selection = None
    k = None
    if cfg.scorer.startswith("mss-"):
        if cfg.k == "auto":
            selection = select_k(ens_cfg, splits, cfg.detector)
            k = selection.k
        else:
            k = int(cfg.k)
    ens = train_ensemble(ens_cfg, splits, cfg.detector, cfg.scorer, k)
    scores, raw = ensemble_score(ens, splits.test.values, return_raw=True)
    test_auc = auc(scores, splits.test.labels)

    report = {
        "metadata": {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "wall_clock_seconds": round(time.perf_counter() - t0, 3),
            "version": __version__,
        },
        "config": cfg.to_dict(),
        "dataset": {
            "n_samples": data.n_samples,
            "n_features": data.n_features,
            "n_outliers": int(data.labels.sum()),
        },
        "splits": {
            "seed": splits.seed,
            "train": splits.train.n_samples,
            "validation": splits.validation.n_samples,
            "test": splits.test.n_samples,
        },
        "normalization": stats.to_dict(),
        "select_k": None
        if selection is None
        else {
            "chosen_k": selection.k,
            "mean_auc_by_k": selection.table(),
            "seeds": selection.seeds,
        },
        "chosen_k": k,
        "ensemble": {
            "seeds": ens.run_seeds,
            "validation_aucs": [None if np.isnan(a) else a for a in ens.run_aucs],
            "retained_runs": ens.retained,
            "best_epochs": [m.best_epoch for m in ens.models],
            "scale_max": ens.scale_max.tolist(),
            "scale_min": ens.scale_min.tolist(),
        },
        "test_auc": test_auc,
    }
    return BenchmarkResult(report, scores, raw, splits.test.labels, ens, selection)
