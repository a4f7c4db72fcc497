"""scikit-learn compatible wrappers.

``AutoencoderOutlierDetector.fit`` follows the semi-supervised label
convention of ``sklearn.semi_supervised``: rows labeled -1 are the
unlabeled training set, rows labeled 0/1 form the validation set used for
epoch, model and k selection. Scores follow the PyOD convention: higher
means more abnormal.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, NormStats, Splits, apply_normalizer, fit_normalizer, invert_normalizer
from .detector import ScoreWeights
from .evaluation import SCORER_KIND, EnsembleConfig, ensemble_score, select_k, train_ensemble
from .meanshift import shift_points, shift_training_set


class MeanSDScaler(TransformerMixin, BaseEstimator):
    """Zero-mean, unit-variance scaling with population SD; constant columns keep scale 1."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.stats_ = fit_normalizer(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        return apply_normalizer(self.stats_, check_array(X, dtype=np.float64))

    def inverse_transform(self, X):
        check_is_fitted(self, "stats_")
        return invert_normalizer(self.stats_, check_array(X, dtype=np.float64))


class MeanShiftTransformer(TransformerMixin, BaseEstimator):
    """k-NN mean-shift against a fitted reference set.

    ``transform`` shifts new rows one at a time against the reference;
    ``fit_transform`` returns the reference's own shifted matrix, where each
    row is excluded from its own neighbour search. The two therefore differ
    on the training rows.
    """

    def __init__(self, k=6, m=1):
        self.k = k
        self.m = m

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.chain_ = shift_training_set(X, self.k, self.m)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).chain_.shifted_sets[-1].copy()

    def transform(self, X):
        check_is_fitted(self, "chain_")
        return shift_points(check_array(X, dtype=np.float64), self.chain_)


class AutoencoderOutlierDetector(OutlierMixin, BaseEstimator):
    """Ensemble of autoencoders scored by reconstruction error, optionally mean-shifted.

    Parameters
    ----------
    detector : {"pae-pre", "ae-mse"}
        Probabilistic autoencoder trained with PRE, or plain MSE autoencoder.
    scorer : {"mss-apre", "apre", "mss-mse", "mse"}
        Must match the detector family.
    k : int or "auto"
        Neighbour count for mean-shift scoring; "auto" runs the selection step
        over ``k_candidates`` (default 1..min(99, n_train - 1)).
    n_select_runs, n_runs, n_best : int
        Runs for k selection, runs trained for the ensemble, models kept.
    """

    def __init__(
        self,
        detector="pae-pre",
        scorer="mss-apre",
        alpha=0.5,
        beta=2.0,
        k="auto",
        m=1,
        k_candidates=None,
        n_select_runs=20,
        n_runs=20,
        n_best=5,
        epochs=5000,
        learning_rate=1e-3,
        normalize=True,
        random_state=0,
        n_jobs=1,
    ):
        self.detector = detector
        self.scorer = scorer
        self.alpha = alpha
        self.beta = beta
        self.k = k
        self.m = m
        self.k_candidates = k_candidates
        self.n_select_runs = n_select_runs
        self.n_runs = n_runs
        self.n_best = n_best
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.normalize = normalize
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        return EnsembleConfig(
            S1=self.n_select_runs,
            S2=self.n_runs,
            Sb=self.n_best,
            k_candidates=self.k_candidates,
            m=self.m,
            weights=ScoreWeights(self.alpha, self.beta),
            epochs=self.epochs,
            lr=self.learning_rate,
            seed=0 if self.random_state is None else int(self.random_state),
            n_jobs=self.n_jobs,
        )

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one entry per row of X")
        if not np.all(np.isin(y, (-1, 0, 1))):
            raise ValueError("y must use -1 (unlabeled training row), 0 (inlier) or 1 (outlier)")
        if SCORER_KIND.get(self.scorer) != self.detector:
            raise ValueError(f"scorer {self.scorer!r} is incompatible with detector {self.detector!r}")
        train_mask = y == -1
        if train_mask.sum() < 2 or train_mask.all():
            raise ValueError("need at least two unlabeled training rows and some labeled validation rows")
        X_train, X_val, y_val = X[train_mask], X[~train_mask], y[~train_mask]

        if self.normalize:
            self.scaler_ = fit_normalizer(X_train)
        else:
            self.scaler_ = NormStats(np.zeros(X.shape[1]), np.ones(X.shape[1]))
        X_train = apply_normalizer(self.scaler_, X_train)
        X_val = apply_normalizer(self.scaler_, X_val)
        validation = Dataset(X_val, y_val)
        splits = Splits(Dataset(X_train), validation, validation, seed=self._config().seed)

        config = self._config()
        self.k_ = None
        self.k_selection_ = None
        if self.scorer.startswith("mss-"):
            if self.k == "auto":
                self.k_selection_ = select_k(config, splits, self.detector)
                self.k_ = self.k_selection_.k
            else:
                self.k_ = int(self.k)
        self.ensemble_ = train_ensemble(config, splits, self.detector, self.scorer, self.k_)
        val_scores = ensemble_score(self.ensemble_, X_val)
        # flag as many validation rows as the validation outlier ratio suggests
        ratio = y_val.mean()
        self.threshold_ = float(np.quantile(val_scores, 1.0 - ratio)) if 0 < ratio < 1 else 0.5
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Ensemble outlier scores; higher is more abnormal."""
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=np.float64)
        return ensemble_score(self.ensemble_, apply_normalizer(self.scaler_, X))

    def score_samples(self, X):
        """Negated outlier scores, so higher means more normal as in scikit-learn."""
        return -self.decision_function(X)

    def predict(self, X):
        """1 for outliers, 0 for inliers."""
        return (self.decision_function(X) >= self.threshold_).astype(int)
