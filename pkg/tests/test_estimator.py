import numpy as np
import pytest
from sklearn.base import clone

from aeod.estimator import AutoencoderOutlierDetector, MeanSDScaler, MeanShiftTransformer
from aeod.meanshift import shift_training_set
from aeod.metrics import auc
from aeod.synthetic import SyntheticSpec, make_synthetic


def semi_supervised(seed=0):
    train = make_synthetic(SyntheticSpec(seed=seed))
    val = make_synthetic(SyntheticSpec(seed=seed + 500))
    X = np.vstack([train.values, val.values])
    y = np.r_[np.full(train.n_samples, -1), val.labels]
    return X, y, train


def test_scaler():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = MeanSDScaler().fit(X)
    np.testing.assert_array_equal(s.transform(X), [[-1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_array_equal(s.inverse_transform(s.transform(X)), X)


def test_mean_shift_transformer():
    X = np.array([[0.0], [1.0], [2.0], [100.0]])
    t = MeanShiftTransformer(k=1, m=1)
    np.testing.assert_array_equal(t.fit_transform(X).ravel(), [0.5, 0.5, 1.5, 51.0])
    np.testing.assert_array_equal(t.transform([[3.0]]).ravel(), [2.5])
    assert t.get_params() == {"k": 1, "m": 1}
    np.testing.assert_array_equal(t.chain_.shifted_sets[0], shift_training_set(X, 1, 1).shifted_sets[0])


def test_detector_params_and_clone():
    det = AutoencoderOutlierDetector(k=6, n_runs=4)
    params = det.get_params()
    assert params["k"] == 6 and params["n_runs"] == 4 and params["detector"] == "pae-pre"
    assert clone(det).get_params() == params


def test_fit_and_score():
    X, y, train = semi_supervised()
    det = AutoencoderOutlierDetector(
        scorer="mss-apre", k="auto", k_candidates=[2, 6], n_select_runs=2, n_runs=3, n_best=2, epochs=100
    )
    det.fit(X, y)
    assert det.k_ in (2, 6)
    s = det.decision_function(train.values)
    assert s.shape == (55,)
    np.testing.assert_array_equal(det.score_samples(train.values), -s)
    assert set(np.unique(det.predict(train.values))) <= {0, 1}
    assert auc(s, train.labels) > 0.9


def test_fit_rejects_bad_input():
    X, y, _ = semi_supervised()
    with pytest.raises(ValueError):
        AutoencoderOutlierDetector(detector="ae-mse", scorer="apre").fit(X, y)
    with pytest.raises(ValueError):
        AutoencoderOutlierDetector().fit(X, np.where(y == -1, 0, y))
    with pytest.raises(ValueError):
        AutoencoderOutlierDetector().fit(X, np.full(len(y), 2))
