import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeod.data import (
    DataError,
    Dataset,
    NormStats,
    apply_normalizer,
    fit_normalizer,
    invert_normalizer,
    load_csv,
    save_csv,
    save_splits,
    split_counts,
    stratified_split,
    stratified_split_indices,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_with_labels(tmp_path):
    p = write(tmp_path, "a,b,label\n1,2,0\n3.5,-4e-1,1\n")
    d = load_csv(p, "label")
    np.testing.assert_array_equal(d.values, [[1, 2], [3.5, -0.4]])
    np.testing.assert_array_equal(d.labels, [0, 1])
    assert d.feature_names == ("a", "b")


def test_label_column_can_sit_anywhere(tmp_path):
    d = load_csv(write(tmp_path, "y,a\n1,5\n0,6\n"), "y")
    np.testing.assert_array_equal(d.values, [[5], [6]])
    np.testing.assert_array_equal(d.labels, [1, 0])


def test_load_without_labels(tmp_path):
    d = load_csv(write(tmp_path, "a,b\n1,2\n"))
    assert d.labels is None and d.values.shape == (1, 2)


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("a,label\n1,0\nx,1\n", "row 3, column 'a'"),
        ("a,label\n1,0\n2,2\n", "row 3, label column 'label'"),
        ("a,label\n1,0\nnan,1\n", "row 3, column 'a'"),
        ("a,label\n1,0\n2\n", "row 3 has 1 cells"),
        ("a,b\n1,2\n", "label column 'label' not found"),
        ("", "empty file"),
        ("a,label\n", "no data rows"),
    ],
)
def test_load_csv_errors_name_the_location(tmp_path, text, fragment):
    with pytest.raises(DataError, match=fragment):
        load_csv(write(tmp_path, text), "label")


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "nope.csv")


def test_dataset_is_read_only():
    d = Dataset([[1.0, 2.0]], [0])
    with pytest.raises(ValueError):
        d.values[0, 0] = 5.0


def test_dataset_rejects_bad_labels_and_values():
    with pytest.raises(DataError):
        Dataset([[1.0]], [2])
    with pytest.raises(DataError):
        Dataset([[np.inf]])


def test_csv_round_trip(tmp_path, rng):
    d = Dataset(rng.normal(size=(7, 3)), rng.integers(0, 2, 7), ("p", "q", "r"))
    save_csv(tmp_path / "o.csv", d)
    back = load_csv(tmp_path / "o.csv", "label")
    np.testing.assert_array_equal(back.values, d.values)
    np.testing.assert_array_equal(back.labels, d.labels)
    assert back.feature_names == d.feature_names


def test_normalizer_values():
    stats = fit_normalizer(np.array([[1.0], [2.0], [3.0]]))
    assert stats.mean[0] == 2.0
    assert math.isclose(stats.std[0], math.sqrt(2 / 3), rel_tol=1e-15)


def test_constant_column_keeps_unit_scale():
    X = np.array([[5.0, 1.0], [5.0, 3.0]])
    stats = fit_normalizer(X)
    assert stats.std[0] == 1.0
    np.testing.assert_array_equal(apply_normalizer(stats, X)[:, 0], [0.0, 0.0])


def test_normalizer_json_round_trip():
    stats = NormStats(np.array([0.1, 2.0]), np.array([3.0, 1e-3]))
    back = NormStats.from_dict(json.loads(json.dumps(stats.to_dict())))
    np.testing.assert_array_equal(back.mean, stats.mean)
    np.testing.assert_array_equal(back.std, stats.std)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_normalized_training_data_is_standard(n, D, seed):
    X = np.random.default_rng(seed).normal(3.0, 2.0, size=(n, D))
    Z = apply_normalizer(fit_normalizer(X), X)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=0), 1.0, rtol=1e-9)
    np.testing.assert_allclose(invert_normalizer(fit_normalizer(X), Z), X, rtol=1e-12, atol=1e-12)


def test_apply_normalizer_keeps_labels():
    d = Dataset([[1.0], [3.0]], [0, 1])
    out = apply_normalizer(fit_normalizer(d), d)
    np.testing.assert_array_equal(out.labels, [0, 1])
    np.testing.assert_array_equal(out.values.ravel(), [-1.0, 1.0])


def test_split_counts_128():
    assert split_counts(128) == (64, 32, 32)


def test_split_128_rows_with_32_outliers():
    labels = np.r_[np.zeros(96, int), np.ones(32, int)]
    d = Dataset(np.arange(128.0)[:, None], labels)
    s = stratified_split(d, seed=7)
    assert (s.train.n_samples, s.validation.n_samples, s.test.n_samples) == (64, 32, 32)
    assert s.train.labels is None  # training rows carry no labels
    assert labels[s.indices["train"]].sum() == 16
    assert (s.validation.labels.sum(), s.test.labels.sum()) == (8, 8)


@settings(max_examples=60, deadline=None)
@given(st.integers(8, 200), st.floats(0.05, 0.45), st.integers(0, 10_000))
def test_split_partitions_rows_and_preserves_ratio(n, ratio, seed):
    n_out = max(4, int(n * ratio))
    if n_out >= n - 4:
        return
    labels = np.r_[np.zeros(n - n_out, int), np.ones(n_out, int)]
    idx = stratified_split_indices(labels, seed)
    parts = [idx["train"], idx["validation"], idx["test"]]
    joined = np.concatenate(parts)
    assert sorted(joined.tolist()) == list(range(n))
    for p in parts:
        assert 0 < labels[p].sum() < p.size
        # stratification keeps each part's outlier share close to the whole
        assert abs(labels[p].mean() - labels.mean()) <= 1.0 / p.size + 1.0 / min(n_out, n - n_out)


def test_split_is_deterministic(rng):
    labels = rng.integers(0, 2, 60)
    a = stratified_split_indices(labels, 3)
    b = stratified_split_indices(labels, 3)
    c = stratified_split_indices(labels, 4)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


def test_split_rejects_too_few_outliers():
    with pytest.raises(DataError):
        stratified_split(Dataset(np.zeros((10, 1)), np.r_[np.zeros(9, int), 1]), 0)


def test_save_splits_writes_sidecars(tmp_path):
    labels = np.r_[np.zeros(24, int), np.ones(8, int)]
    d = Dataset(np.arange(32.0)[:, None], labels, ("v",))
    s = stratified_split(d, 1)
    save_splits(s, tmp_path, fit_normalizer(s.train))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["normalization.json", "splits.json", "test.csv", "train.csv", "validation.csv"]
    side = json.loads((tmp_path / "splits.json").read_text())
    assert side["seed"] == 1
    idx = side["indices"]
    assert sorted(idx["train"] + idx["validation"] + idx["test"]) == list(range(32))
