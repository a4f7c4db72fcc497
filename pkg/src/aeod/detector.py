"""Plain (MSE) and probabilistic (PRE-trained) autoencoder detectors.

The probabilistic loss and score use sigma itself as the denominator of the
bias term, not sigma squared:

    PRE  = sum (x - mu)^2 / sigma + sum ln sigma
    APRE = alpha * sum (x - mu)^2 / sigma + beta * sum ln sigma

With sigma fixed at 1 the PRE loss is exactly the summed squared error.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nn
from .metrics import auc_rows

log = logging.getLogger(__name__)

AE_MSE = "ae-mse"
PAE_PRE = "pae-pre"
KINDS = (AE_MSE, PAE_PRE)


@dataclass(frozen=True)
class ReconOutput:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.shape != sigma.shape:
            raise ValueError(f"mu shape {mu.shape} != sigma shape {sigma.shape}")
        if np.any(sigma < nn.SIGMA_FLOOR):
            raise ValueError(f"sigma must be >= {nn.SIGMA_FLOOR}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class ScoreWeights:
    alpha: float = 0.5
    beta: float = 2.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")


# the five (alpha, beta) groups usually compared
WEIGHT_GRID = (
    ScoreWeights(0.5, 2.0),
    ScoreWeights(0.5, 1.0),
    ScoreWeights(1.0, 1.0),
    ScoreWeights(1.0, 0.5),
    ScoreWeights(2.0, 0.5),
)


def _same_shape(*arrays):
    arrays = [np.asarray(a, dtype=float) for a in arrays]
    for a in arrays[1:]:
        if a.shape != arrays[0].shape:
            raise ValueError(f"shape mismatch: {arrays[0].shape} vs {a.shape}")
    return arrays


def _check_sigma(sigma):
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")


def mse_loss(X, Xhat) -> float:
    X, Xhat = _same_shape(X, Xhat)
    return float(np.sum((X - Xhat) ** 2))


def pre_loss(X, mu, sigma) -> float:
    X, mu, sigma = _same_shape(X, mu, sigma)
    _check_sigma(sigma)
    return float(np.sum((X - mu) ** 2 / sigma) + np.sum(np.log(sigma)))


def pre_loss_grad(X, mu, sigma):
    """(dPRE/dmu, dPRE/dsigma), elementwise."""
    X, mu, sigma = _same_shape(X, mu, sigma)
    _check_sigma(sigma)
    r = X - mu
    return -2.0 * r / sigma, -(r**2) / sigma**2 + 1.0 / sigma


def mse_score(x, recon: ReconOutput) -> float:
    x, mu = _same_shape(x, recon.mu)
    return float(np.sum((x - mu) ** 2))


def apre_score(x, recon: ReconOutput, w: ScoreWeights) -> float:
    x, mu = _same_shape(x, recon.mu)
    return float(w.alpha * np.sum((x - mu) ** 2 / recon.sigma) + w.beta * np.sum(np.log(recon.sigma)))


def mse_scores(targets, mu):
    """Row-wise squared error; ``targets`` may carry a leading candidate axis."""
    return np.sum((np.asarray(targets) - mu) ** 2, axis=-1)


def apre_scores(targets, mu, sigma, w: ScoreWeights):
    bias = np.sum((np.asarray(targets) - mu) ** 2 / sigma, axis=-1)
    return w.alpha * bias + w.beta * np.sum(np.log(sigma), axis=-1)


# A validation scorer maps the network's (mu, sigma) on the validation rows
# to scores of shape (N,) or (K, N), one row per candidate target set.
Scorer = Callable[[np.ndarray, np.ndarray], np.ndarray]


def make_scorer(score_kind: str, targets, weights: Optional[ScoreWeights] = None) -> Scorer:
    """Score against fixed targets: the raw rows, or mean-shifted ones (possibly stacked per k)."""
    targets = np.asarray(targets, dtype=float)
    if score_kind == "mse":
        return lambda mu, sigma: mse_scores(targets, mu)
    if score_kind == "apre":
        w = weights or ScoreWeights()
        return lambda mu, sigma: apre_scores(targets, mu, sigma, w)
    raise ValueError(f"unknown score kind {score_kind!r}")


@dataclass
class DetectorModel:
    kind: str
    params: nn.NetworkParams
    seed: int = 0
    best_epoch: int = 0
    best_auc: float = float("nan")
    # per scorer row, when validation scoring produced several candidates
    best_aucs: np.ndarray = field(default_factory=lambda: np.empty(0))
    best_epochs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    losses: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        expected_doubled = self.kind == PAE_PRE
        if self.params.schedule.doubled_output != expected_doubled:
            raise ValueError(f"{self.kind} needs doubled_output={expected_doubled}")

    @property
    def input_dim(self):
        return self.params.schedule.input_dim

    def reconstruct(self, X) -> ReconOutput:
        return ReconOutput(*split_output(self.kind, nn.forward(self.params, X)[0], self.input_dim))


def split_output(kind, out, D):
    if kind == PAE_PRE:
        return out[:, :D], out[:, D:]
    return out, np.ones_like(out)


def loss_and_grad(kind, X, out):
    D = X.shape[1]
    if kind == AE_MSE:
        return mse_loss(X, out), 2.0 * (out - X)
    mu, sigma = out[:, :D], out[:, D:]
    d_mu, d_sigma = pre_loss_grad(X, mu, sigma)
    return pre_loss(X, mu, sigma), np.concatenate([d_mu, d_sigma], axis=1)


def training_loss(model: DetectorModel, X) -> float:
    out = nn.forward(model.params, X)[0]
    return loss_and_grad(model.kind, np.asarray(X, float), out)[0]


def train(
    kind: str,
    X_train,
    X_val=None,
    y_val=None,
    scorer: Optional[Scorer] = None,
    epochs: int = 5000,
    lr: float = 1e-3,
    seed: int = 0,
    select_row: int = 0,
) -> DetectorModel:
    """Full-batch Adam training with best-validation-AUC snapshotting.

    After initialisation and after every epoch the validation rows are scored
    and their AUC recorded. The returned parameters are those of the epoch
    with the highest AUC for scorer row ``select_row`` (earliest epoch on
    ties); ``best_aucs`` holds the per-row bests. Without validation data the
    parameters after the final epoch are returned.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown detector kind {kind!r}")
    X = np.asarray(X_train, dtype=float)
    schedule = nn.build_schedule(X.shape[1], doubled_output=(kind == PAE_PRE))
    params = nn.init_params(schedule, seed)
    state = nn.AdamState.zeros(params)
    D = X.shape[1]

    validating = X_val is not None
    if validating:
        if y_val is None:
            raise ValueError("validation split must be labeled")
        if scorer is None:
            raise ValueError("a validation scorer is required")
        X_val = np.asarray(X_val, dtype=float)
        y_val = np.asarray(y_val)

    def evaluate(p):
        mu, sigma = split_output(kind, nn.forward(p, X_val)[0], D)
        s = np.atleast_2d(scorer(mu, sigma))
        if not np.all(np.isfinite(s)):
            raise nn.NumericalError("non-finite validation scores")
        return auc_rows(s, y_val)

    best_params = params
    best_aucs = best_epochs = None
    if validating:
        best_aucs = evaluate(params)
        best_epochs = np.zeros(best_aucs.size, dtype=int)

    losses = np.empty(epochs)
    for epoch in range(1, epochs + 1):
        out, trace = nn.forward(params, X)
        loss, out_grad = loss_and_grad(kind, X, out)
        if not np.isfinite(loss):
            raise nn.NumericalError(f"{kind}: non-finite training loss at epoch {epoch} (seed {seed})")
        losses[epoch - 1] = loss
        grads = nn.backward(trace, params, out_grad)
        params, state = nn.adam_step(params, grads, state, lr)
        if validating:
            aucs = evaluate(params)
            improved = aucs > best_aucs
            if improved[select_row]:
                best_params = params
            best_aucs = np.where(improved, aucs, best_aucs)
            best_epochs = np.where(improved, epoch, best_epochs)

    if not validating:
        return DetectorModel(kind, params, seed=seed, best_epoch=epochs, losses=losses)
    return DetectorModel(
        kind,
        best_params,
        seed=seed,
        best_epoch=int(best_epochs[select_row]),
        best_auc=float(best_aucs[select_row]),
        best_aucs=best_aucs,
        best_epochs=best_epochs,
        losses=losses,
    )


def score_all(model: DetectorModel, X, score_kind: str = "mse", weights=None, targets=None):
    """Score every row of ``X``; ``targets`` (same shape) replaces X as the comparison point."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"X shape {X.shape} does not match model input width {model.input_dim}")
    recon = model.reconstruct(X)
    targets = X if targets is None else np.asarray(targets, dtype=float)
    if targets.shape != X.shape:
        raise ValueError("targets must have the same shape as X")
    return make_scorer(score_kind, targets, weights)(recon.mu, recon.sigma)
