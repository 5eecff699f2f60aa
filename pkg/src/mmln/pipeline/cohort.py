"""Synthetic patient cohorts with known generating parameters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ConfigError, ModelError
from ..extraction import IMAGE_PREFIX
from ..grounding import EvidenceDB, Provenance
from ..inference import exact_marginal
from ..logic import Atom, Model, Role


@dataclass(frozen=True)
class CohortConfig:
    """Generator parameters.

    ``evidence_priors`` maps an evidence predicate to its probability of
    being present given the class, ``{"Fever": {"pos": 0.7, "neg": 0.1}}``.

    Without ``true_weights`` the class *is* the label. With ``true_weights``
    the class only selects the evidence profile, and the label is drawn from
    the model's conditional P(query | evidence) under those weights, so the
    weights are exactly what learning should recover.
    """

    n_cases: int
    positive_rate: float
    evidence_priors: Mapping[str, Mapping[str, float]]
    true_weights: tuple[float, ...] | None = None
    missing_image_rate: float = 0.0
    seed: int = 0
    id_prefix: str = "P"
    id_start: int = 100000

    def __post_init__(self):
        if self.n_cases < 1:
            raise ConfigError("n_cases must be at least 1")
        for name in ("positive_rate", "missing_image_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        for pred, p in self.evidence_priors.items():
            if set(p) != {"pos", "neg"}:
                raise ConfigError(f"prior for {pred} needs exactly 'pos' and 'neg' rates")
            for v in p.values():
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"prior for {pred} outside [0, 1]")
        if self.true_weights is not None:
            tw = tuple(float(w) for w in self.true_weights)
            if not all(math.isfinite(w) for w in tw):
                raise ConfigError("true_weights must be finite")
            object.__setattr__(self, "true_weights", tw)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CohortConfig":
        known = {"n_cases", "positive_rate", "evidence_priors", "true_weights",
                 "missing_image_rate", "seed", "id_prefix", "id_start"}
        return cls(**{k: v for k, v in d.items() if k in known})


def load_cohort_config(path) -> tuple[CohortConfig, dict]:
    """Config plus the raw JSON (which may name a generator ``model`` file)."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return CohortConfig.from_dict(raw), raw


def generate_cohort(model: Model, cfg: CohortConfig) -> tuple[EvidenceDB, dict[str, bool]]:
    """Draw a cohort; returns the evidence database and the labels separately."""
    for pred in cfg.evidence_priors:
        if not model.has_predicate(pred):
            raise ModelError(f"prior given for undeclared predicate {pred}")
        if model.schema(pred).role is not Role.EVIDENCE:
            raise ModelError(f"prior given for non-evidence predicate {pred}")
    if cfg.true_weights is not None and len(cfg.true_weights) != len(model.formulas):
        raise ModelError(f"true_weights has {len(cfg.true_weights)} entries, "
                         f"model has {len(model.formulas)} formulas")

    rng = np.random.default_rng(cfg.seed)
    preds = sorted(cfg.evidence_priors)
    cases, classes, atoms = [], [], []
    for i in range(cfg.n_cases):
        case = f"{cfg.id_prefix}{cfg.id_start + i}"
        cls_ = bool(rng.random() < cfg.positive_rate)
        key = "pos" if cls_ else "neg"
        drawn = [p for p in preds if rng.random() < cfg.evidence_priors[p][key]]
        if rng.random() < cfg.missing_image_rate:
            drawn = [p for p in drawn if not p.startswith(IMAGE_PREFIX)]
        cases.append(case)
        classes.append(cls_)
        atoms.extend(Atom.ground(p, case) for p in drawn)
    db = EvidenceDB.from_atoms(atoms, Provenance.SYNTHETIC, constants=cases)

    if cfg.true_weights is None:
        labels = dict(zip(cases, classes))
    else:
        w = np.array(cfg.true_weights)
        labels = {}
        for case in cases:
            p = exact_marginal(model, w, db, case).probability
            labels[case] = bool(rng.random() < p)
    return db, labels
