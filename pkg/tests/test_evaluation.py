import dataclasses
import warnings

import numpy as np
import pytest

from aeod import evaluation
from aeod.config import RunConfig
from aeod.data import Dataset, Splits
from aeod.detector import AE_MSE, PAE_PRE, score_all
from aeod.evaluation import (
    STEP_ENSEMBLE,
    EnsembleConfig,
    child_seed,
    ensemble_score,
    normalize_scores,
    run_benchmark,
    select_k,
    train_ensemble,
)
from aeod.metrics import auc
from aeod.nn import NumericalError
from aeod.synthetic import SyntheticSpec, make_synthetic
from oracles import far_bias_splits, planted

FAST = dict(epochs=30)


@pytest.fixture(scope="module")
def splits():
    return far_bias_splits(1)


def test_child_seeds_are_distinct_and_stable():
    seeds = {child_seed(0, step, r) for step in (1, 2) for r in range(20)}
    assert len(seeds) == 40
    assert child_seed(5, 2, 3) == child_seed(5, 2, 3)
    assert child_seed(5, 2, 3) != child_seed(6, 2, 3)


def test_normalization_arithmetic():
    raw = np.array([[1.0, 3.0, 5.0], [10.0, 10.0, 10.0]])
    out = normalize_scores(raw, [5.0, 10.0], [1.0, 10.0])
    np.testing.assert_array_equal(out[0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(out[1], [0.5, 0.5, 0.5])
    two = normalize_scores(np.array([[0.2], [0.8]]), [1.0, 1.0], [0.0, 0.0])
    assert two.mean(axis=0)[0] == 0.5


def test_validation_scores_hit_both_endpoints(splits):
    ens = train_ensemble(EnsembleConfig(S2=4, Sb=3, **FAST), splits, PAE_PRE, "apre")
    raw = ens.raw_scores(splits.validation.values)
    norm = normalize_scores(raw, ens.scale_max, ens.scale_min)
    assert np.all(norm.min(axis=1) == 0.0) and np.all(norm.max(axis=1) == 1.0)
    s = ensemble_score(ens, splits.validation.values)
    assert s.min() >= 0.0 and s.max() <= 1.0


def test_retained_runs_are_the_best(splits):
    ens = train_ensemble(EnsembleConfig(S2=6, Sb=3, **FAST), splits, AE_MSE, "mse")
    aucs = np.array(ens.run_aucs)
    assert sorted(aucs[ens.retained]) == sorted(np.sort(aucs)[-3:])
    assert [m.best_auc for m in ens.models] == list(aucs[ens.retained])
    assert ens.run_seeds == [child_seed(0, STEP_ENSEMBLE, r) for r in range(6)]


def test_all_runs_kept_when_sb_equals_s2(splits):
    ens = train_ensemble(EnsembleConfig(S2=3, Sb=3, **FAST), splits, AE_MSE, "mse")
    assert sorted(ens.retained) == [0, 1, 2]


def test_single_model_ensemble_is_its_normalized_score(splits):
    ens = train_ensemble(EnsembleConfig(S2=3, Sb=1, **FAST), splits, PAE_PRE, "apre")
    X = splits.test.values
    raw = score_all(ens.models[0], X, "apre", ens.weights)
    a, b = ens.scale_max[0], ens.scale_min[0]
    np.testing.assert_array_equal(ensemble_score(ens, X), (raw - b) / (a - b))


def test_duplicated_models_equal_the_single_model(splits):
    ens = train_ensemble(EnsembleConfig(S2=3, Sb=1, **FAST), splits, PAE_PRE, "apre")
    dup = dataclasses.replace(
        ens,
        models=ens.models * 4,
        scale_max=np.repeat(ens.scale_max, 4),
        scale_min=np.repeat(ens.scale_min, 4),
    )
    X = splits.test.values
    np.testing.assert_allclose(ensemble_score(dup, X), ensemble_score(ens, X), rtol=0, atol=1e-15)


def test_diverged_run_is_dropped_with_warning(splits, monkeypatch):
    real_train = evaluation.train
    bad = child_seed(0, STEP_ENSEMBLE, 1)

    def flaky(kind, X_train, X_val, y_val, scorer, epochs, lr, seed):
        if seed == bad:
            raise NumericalError("non-finite training loss at epoch 3")
        return real_train(kind, X_train, X_val, y_val, scorer, epochs, lr, seed)

    monkeypatch.setattr(evaluation, "train", flaky)
    with pytest.warns(RuntimeWarning, match="run 1"):
        ens = train_ensemble(EnsembleConfig(S2=3, Sb=2, **FAST), splits, AE_MSE, "mse")
    assert 1 not in ens.retained and np.isnan(ens.run_aucs[1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(NumericalError, match="need Sb=3"):
            train_ensemble(EnsembleConfig(S2=3, Sb=3, **FAST), splits, AE_MSE, "mse")


def test_config_rejects_sb_above_s2():
    with pytest.raises(ValueError):
        EnsembleConfig(S2=2, Sb=3)


def test_incompatible_scorer_is_rejected(splits):
    with pytest.raises(ValueError):
        train_ensemble(EnsembleConfig(S2=1, Sb=1, **FAST), splits, AE_MSE, "apre")
    with pytest.raises(ValueError):
        train_ensemble(EnsembleConfig(S2=1, Sb=1, **FAST), splits, AE_MSE, "mss-mse")


def test_mss_ensemble_scores_against_shifted_targets(splits):
    ens = train_ensemble(EnsembleConfig(S2=2, Sb=1, **FAST), splits, PAE_PRE, "mss-apre", k=4)
    assert ens.chain.k == 4
    X = splits.test.values
    raw = score_all(ens.models[0], X, "apre", ens.weights, targets=evaluation.shift_points(X, ens.chain))
    np.testing.assert_array_equal(ens.raw_scores(X)[0], raw)


def test_select_k_single_candidate(splits):
    sel = select_k(EnsembleConfig(S1=2, k_candidates=[5], **FAST), splits, PAE_PRE)
    assert sel.k == 5 and sel.run_aucs.shape == (2, 1)


def test_select_k_picks_dominant_candidate(splits, monkeypatch):
    class Fake:
        best_aucs = np.array([0.6, 0.9, 0.9])

    monkeypatch.setattr(evaluation, "train", lambda *a, **kw: Fake())
    sel = select_k(EnsembleConfig(S1=3, k_candidates=[7, 3, 12], **FAST), splits, AE_MSE)
    # candidates are sorted, and the tie between 7 and 12 goes to the smaller k
    assert sel.candidates == [3, 7, 12] and sel.k == 7
    assert sel.table() == {"3": 0.6, "7": 0.9, "12": 0.9}


def test_select_k_records_per_k_bests(splits):
    sel = select_k(EnsembleConfig(S1=2, k_candidates=[2, 9], **FAST), splits, AE_MSE)
    np.testing.assert_array_equal(sel.mean_aucs, sel.run_aucs.mean(axis=0))
    assert sel.k in (2, 9)


@pytest.mark.xfail(
    strict=False,
    reason="best-over-epochs validation AUC saturates near 1.0 for every candidate on this "
    "scenario, so k=6 does not reliably dominate k=2 or k=40",
)
def test_select_k_prefers_six_on_near_bias_data():
    for seed in range(3):
        X, V = planted("near-low-bias", seed, offset=10_000)
        sp = Splits(Dataset(X.values), V, X, seed)
        sel = select_k(EnsembleConfig(S1=5, k_candidates=[2, 6, 40], epochs=1000, seed=seed), sp, AE_MSE)
        table = sel.table()
        assert table["6"] >= max(table["2"], table["40"])


def test_parallel_runs_match_serial(splits):
    a = train_ensemble(EnsembleConfig(S2=3, Sb=2, **FAST), splits, AE_MSE, "mse")
    b = train_ensemble(EnsembleConfig(S2=3, Sb=2, n_jobs=2, **FAST), splits, AE_MSE, "mse")
    assert a.retained == b.retained
    assert all(p.params == q.params for p, q in zip(a.models, b.models))


def test_benchmark_report_on_synthetic_data():
    data = make_synthetic(SyntheticSpec(n_inliers=60, n_outliers=8, seed=2))
    cfg = RunConfig(dataset=data, detector=AE_MSE, scorer="mse", S2=2, Sb=1, epochs=20)
    res = run_benchmark(cfg)
    rep = res.report
    assert 0.0 <= rep["test_auc"] <= 1.0
    assert rep["test_auc"] == auc(res.test_scores, res.test_labels)
    assert rep["chosen_k"] is None and rep["select_k"] is None
    assert rep["splits"]["train"] + rep["splits"]["validation"] + rep["splits"]["test"] == 68


def test_benchmark_auto_k_records_the_table():
    data = make_synthetic(SyntheticSpec(n_inliers=60, n_outliers=8, seed=2))
    cfg = RunConfig(dataset=data, S1=2, S2=2, Sb=1, epochs=10, k_candidates=[1, 3])
    rep = run_benchmark(cfg).report
    assert rep["chosen_k"] in (1, 3)
    assert set(rep["select_k"]["mean_auc_by_k"]) == {"1", "3"}
