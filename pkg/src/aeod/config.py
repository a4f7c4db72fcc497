"""Run configuration shared by the CLI and the benchmark harness."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Union

import jsonschema

from .detector import KINDS, ScoreWeights
from .evaluation import SCORER_KIND, SCORERS, EnsembleConfig

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "RunConfig",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {"type": "string"},
        "label_column": {"type": ["string", "null"]},
        "detector": {"enum": list(KINDS)},
        "scorer": {"enum": list(SCORERS)},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "m": {"type": "integer", "minimum": 1},
        "k": {"oneOf": [{"const": "auto"}, {"type": "integer", "minimum": 1}]},
        "k_candidates": {
            "type": ["array", "null"],
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "S1": {"type": "integer", "minimum": 1},
        "S2": {"type": "integer", "minimum": 1},
        "Sb": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 0},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "outdir": {"type": ["string", "null"]},
        "n_jobs": {"type": "integer"},
    },
    "required": ["dataset"],
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


@dataclass
class RunConfig:
    dataset: Union[str, object] = ""
    label_column: Optional[str] = "label"
    detector: str = "pae-pre"
    scorer: str = "mss-apre"
    alpha: float = 0.5
    beta: float = 2.0
    m: int = 1
    k: Union[int, str] = "auto"
    k_candidates: Optional[list] = None
    S1: int = 20
    S2: int = 20
    Sb: int = 5
    epochs: int = 5000
    lr: float = 0.001
    seed: int = 0
    outdir: Optional[str] = None
    n_jobs: int = 1

    def to_dict(self):
        d = asdict(self)
        if not isinstance(d["dataset"], str):
            d["dataset"] = "<in-memory>"
        return d

    @classmethod
    def from_dict(cls, d):
        problems = [
            f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
            for e in jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA).iter_errors(d)
        ]
        if not isinstance(d, dict):
            raise ConfigError(problems)
        names = {f.name for f in fields(cls)}
        cfg = cls(**{k: v for k, v in d.items() if k in names})
        # cross-field rules the schema cannot express; skipped where types are already wrong
        problems += [p for p in cfg.problems() if p not in problems and not _type_noise(p, problems)]
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from None
        return cls.from_dict(d)

    def with_overrides(self, **kw):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update({k: v for k, v in kw.items() if v is not None})
        return type(self)(**d)

    def problems(self):
        """Every violated constraint, as messages; empty when the config is usable."""
        problems = []

        def num(x):
            return isinstance(x, (int, float)) and not isinstance(x, bool)

        def integer(x):
            return isinstance(x, int) and not isinstance(x, bool)

        if self.detector not in KINDS:
            problems.append(f"detector: {self.detector!r} not one of {KINDS}")
        if self.scorer not in SCORERS:
            problems.append(f"scorer: {self.scorer!r} not one of {SCORERS}")
        elif self.detector in KINDS and SCORER_KIND[self.scorer] != self.detector:
            problems.append(
                f"scorer: {self.scorer!r} requires detector {SCORER_KIND[self.scorer]!r}, got {self.detector!r}"
            )
        for name in ("alpha", "beta", "lr"):
            v = getattr(self, name)
            if not (num(v) and v > 0):
                problems.append(f"{name}: must be a positive number, got {v!r}")
        if not (integer(self.m) and self.m >= 1):
            problems.append(f"m: must be an integer >= 1, got {self.m!r}")
        if self.k != "auto" and not (integer(self.k) and self.k >= 1):
            problems.append(f"k: expected 'auto' or a positive integer, got {self.k!r}")
        for name in ("S1", "S2", "Sb"):
            v = getattr(self, name)
            if not (integer(v) and v >= 1):
                problems.append(f"{name}: must be a positive integer, got {v!r}")
        if integer(self.Sb) and integer(self.S2) and self.Sb > self.S2:
            problems.append(f"Sb: {self.Sb} must not exceed S2 ({self.S2})")
        if not (integer(self.epochs) and self.epochs >= 0):
            problems.append(f"epochs: must be an integer >= 0, got {self.epochs!r}")
        if not (integer(self.seed) and self.seed >= 0):
            problems.append(f"seed: must be a non-negative integer, got {self.seed!r}")
        if isinstance(self.dataset, str) and not self.dataset:
            problems.append("dataset: path required")
        return problems

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def ensemble_config(self) -> EnsembleConfig:
        return EnsembleConfig(
            S1=self.S1,
            S2=self.S2,
            Sb=self.Sb,
            k_candidates=self.k_candidates,
            m=self.m,
            weights=ScoreWeights(self.alpha, self.beta),
            epochs=self.epochs,
            lr=self.lr,
            seed=self.seed,
            n_jobs=self.n_jobs,
        )


def _type_noise(problem, schema_problems):
    """True when a semantic message repeats a field the schema already flagged."""
    field_name = problem.split(":", 1)[0]
    return any(p.split(":", 1)[0] == field_name for p in schema_problems)
