"""Planted 2-D outlier scenarios: a Gaussian inlier cloud plus a few placed outliers.

``far-bias`` puts outliers well off the cloud across its minor axis, where
any reconstruction is poor. ``near-low-bias`` lines them up beyond the tips
of the major axis, spaced apart, where a one-unit bottleneck autoencoder
extrapolates and reconstructs them almost perfectly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

MODES = ("far-bias", "near-low-bias")


@dataclass(frozen=True)
class SyntheticSpec:
    n_inliers: int = 50
    n_outliers: int = 5
    inlier_cov: tuple = ((1.0, 0.8), (0.8, 1.0))
    mode: str = "far-bias"
    seed: int = 0

    def __post_init__(self):
        if self.n_inliers < 1 or self.n_outliers < 1:
            raise ValueError("inlier and outlier counts must be positive")
        if self.n_outliers >= self.n_inliers:
            raise ValueError("outliers must be fewer than half of all samples")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        cov = np.asarray(self.inlier_cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov)[0] <= 0:
            raise ValueError("inlier_cov must be a symmetric positive-definite 2x2 matrix")


def make_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    cov = np.asarray(spec.inlier_cov, dtype=float)
    L = np.linalg.cholesky(cov)
    inliers = rng.standard_normal((spec.n_inliers, 2)) @ L.T
    center = inliers.mean(axis=0)
    evals, evecs = np.linalg.eigh(cov)
    minor, major = evecs[:, 0], evecs[:, 1]
    sd_major = np.sqrt(evals[1])
    # eigenvector signs are solver-dependent; pin them
    major = major * np.sign(major[np.argmax(np.abs(major))])
    minor = minor * np.sign(minor[np.argmax(np.abs(minor))])

    rel = inliers - center
    j = np.arange(spec.n_outliers)
    side = np.where(j % 2 == 0, 1.0, -1.0)
    if spec.mode == "far-bias":
        radius = max(5.0 * sd_major, 1.25 * np.sqrt((rel**2).sum(axis=1)).max())
        tilt = rng.uniform(-0.35, 0.35, size=spec.n_outliers)  # radians off the minor axis
        r = radius * rng.uniform(1.0, 1.3, size=spec.n_outliers)
        dirs = np.outer(np.cos(tilt), minor) + np.outer(np.sin(tilt), major)
        outliers = center + (side * r)[:, None] * dirs
    else:
        proj = rel @ major
        tip = np.where(side > 0, proj.max(), -proj.min())
        rank = j // 2  # 0, 0, 1, 1, 2, ...
        gap = sd_major * (1.5 + 2.0 * rank + rng.uniform(0.0, 0.3, size=spec.n_outliers))
        along = side * (tip + gap)
        across = rng.normal(0.0, 0.05 * np.sqrt(evals[0]), size=spec.n_outliers)
        outliers = center + np.outer(along, major) + np.outer(across, minor)

    values = np.vstack([inliers, outliers])
    labels = np.r_[np.zeros(spec.n_inliers, dtype=int), np.ones(spec.n_outliers, dtype=int)]
    return Dataset(values, labels, ("x1", "x2"))
