"""Saving and loading trained ensembles (checkpoints, scale factors, shift chain)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import NormStats
from .detector import DetectorModel, ScoreWeights
from .evaluation import DetectorEnsemble
from .meanshift import load_chain, save_chain
from .nn import load_checkpoint, save_checkpoint


def save_ensemble(ens: DetectorEnsemble, outdir, stats: NormStats):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, model in enumerate(ens.models):
        name = f"model_{i}.ckpt"
        save_checkpoint(
            outdir / name,
            model.params,
            seed=model.seed,
            loss=model.kind,
            epoch=model.best_epoch,
            validation_auc=model.best_auc,
        )
        names.append(name)
    if ens.chain is not None:
        np.savetxt(outdir / "reference.csv", ens.chain.base, delimiter=",", fmt="%.17g")
        save_chain(ens.chain, outdir / "shift_chain")
    meta = {
        "detector": ens.kind,
        "scorer": ens.score_kind,
        "alpha": ens.weights.alpha,
        "beta": ens.weights.beta,
        "k": ens.k,
        "checkpoints": names,
        "scale_max": ens.scale_max.tolist(),
        "scale_min": ens.scale_min.tolist(),
        "run_seeds": ens.run_seeds,
        "run_validation_aucs": [None if np.isnan(a) else a for a in ens.run_aucs],
        "retained_runs": ens.retained,
        "normalization": stats.to_dict(),
    }
    (outdir / "ensemble.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_ensemble(indir):
    """Returns (ensemble, normalization stats)."""
    indir = Path(indir)
    meta = json.loads((indir / "ensemble.json").read_text())
    models = []
    for name in meta["checkpoints"]:
        params, header = load_checkpoint(indir / name)
        models.append(
            DetectorModel(
                header["loss"],
                params,
                seed=header["seed"],
                best_epoch=header["epoch"],
                best_auc=header["validation_auc"],
            )
        )
    chain = None
    if meta["scorer"].startswith("mss-"):
        reference = np.loadtxt(indir / "reference.csv", delimiter=",", ndmin=2)
        chain = load_chain(indir / "shift_chain", reference)
    ens = DetectorEnsemble(
        models=models,
        scale_max=np.asarray(meta["scale_max"], float),
        scale_min=np.asarray(meta["scale_min"], float),
        score_kind=meta["scorer"],
        weights=ScoreWeights(meta["alpha"], meta["beta"]),
        k=meta["k"],
        chain=chain,
        run_seeds=meta["run_seeds"],
        run_aucs=[np.nan if a is None else a for a in meta["run_validation_aucs"]],
        retained=meta["retained_runs"],
    )
    return ens, NormStats.from_dict(meta["normalization"])
