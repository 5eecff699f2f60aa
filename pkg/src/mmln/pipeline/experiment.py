"""Declarative experiments: data -> per-arm learn/infer/evaluate -> reports.

An experiment file is JSON::

    {
      "name": "modality",
      "seed": 0,
      "cohort": "../cohorts/modality.json",      # or "evidence" + "labels" files
      "split_ratio": 0.8,
      "threshold": 0.5,
      "learn": {"l2_sigma": 10.0},
      "inference": {"method": "exact"},
      "arms": [
        {"name": "multimodal", "model": "../models/multimodal.mln"},
        {"name": "unimodal", "model": "../models/unimodal.mln", "drop_image": true},
        {"name": "small", "model": "../models/multimodal.mln", "subsample": 0.1}
      ],
      "reference": {...}                          # copied verbatim into the report
    }

Relative paths resolve against the experiment file's directory.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from ..errors import ConfigError, EvidenceError
from ..extraction import IMAGE_PREFIX
from ..grounding import EvidenceDB, format_evidence, format_labels, parse_evidence, parse_labels
from ..inference import InferenceConfig, format_marginals, infer_batch, marginals_json
from ..learning import LearnConfig, build_training_set, learn_weights
from ..logic import DEFAULT_QUERY, format_model, load_model
from .cohort import CohortConfig, generate_cohort
from .metrics import MetricsReport, compute_metrics, roc_csv
from .split import split_dataset, subsample


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class ArmResult:
    name: str
    metrics: MetricsReport
    weights: list[float]
    n_train: int
    n_test: int
    learn: dict


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _require(path: Path) -> Path:
    if not path.exists():
        raise ConfigError(f"referenced file not found: {path}")
    return path


def load_data(spec: Mapping, base: Path, query: str) -> tuple[EvidenceDB, dict[str, bool]]:
    if "cohort" in spec:
        cohort = spec["cohort"]
        cbase = base
        if not isinstance(cohort, Mapping):
            cpath = _require(_resolve(base, cohort))
            cohort = json.loads(cpath.read_text(encoding="utf-8"))
            cbase = cpath.parent
        if "model" not in cohort:
            raise ConfigError("cohort needs a generator 'model' file")
        gen_model = load_model(_require(_resolve(cbase, cohort["model"])), query=query)
        return generate_cohort(gen_model, CohortConfig.from_dict(cohort))
    if "evidence" in spec and "labels" in spec:
        db = parse_evidence(_require(_resolve(base, spec["evidence"])).read_text(encoding="utf-8"))
        labels = parse_labels(_require(_resolve(base, spec["labels"])).read_text(encoding="utf-8"))
        missing = set(labels) - db.constants
        return EvidenceDB(db.atoms, db.constants | missing, db.provenance), labels
    raise ConfigError("experiment needs either 'cohort' or both 'evidence' and 'labels'")


def run_arm(arm: Mapping, db: EvidenceDB, labels: Mapping[str, bool], spec: Mapping,
            base: Path, query: str, outdir: Path | None) -> ArmResult:
    name = arm.get("name")
    if not name:
        raise ConfigError("every arm needs a name")
    seed = int(spec.get("seed", 0))
    model = load_model(_require(_resolve(base, arm["model"])), query=query)
    if arm.get("drop_image"):
        db = db.filter(lambda a: not a.predicate.startswith(IMAGE_PREFIX))
    labels = dict(labels)
    if "subsample" in arm:
        labels = subsample(labels, float(arm["subsample"]), seed)
        db = db.restrict(labels)
    train, test = split_dataset(db, labels, float(spec.get("split_ratio", 0.8)), seed)

    learn_cfg = LearnConfig(**{**spec.get("learn", {}), **arm.get("learn", {})})
    result = learn_weights(model, build_training_set(model, db, labels, train), learn_cfg)
    learned = model.with_weights(result.weights)

    inf_cfg = InferenceConfig(**{"seed": seed, **spec.get("inference", {}), **arm.get("inference", {})})
    marginals = infer_batch(learned, None, db, test, inf_cfg)
    threshold = float(spec.get("threshold", 0.5))
    metrics = compute_metrics([(r.probability, labels[r.case]) for r in marginals], threshold)

    if outdir is not None:
        d = outdir / name
        atomic_write(d / "learned.mln", format_model(learned))
        atomic_write(d / "learn.json", dump_json(result.report(learn_cfg)))
        atomic_write(d / "marginals.txt", format_marginals(marginals))
        atomic_write(d / "marginals.json", marginals_json(marginals))
        atomic_write(d / "metrics.json", dump_json(metrics.to_dict()))
        atomic_write(d / "roc.csv", roc_csv(metrics))
    return ArmResult(name, metrics, [float(w) for w in result.weights], len(train), len(test),
                     result.report(learn_cfg))


def run_experiment(spec_path, outdir=None) -> dict:
    """Run every arm of an experiment file; returns the report dict.

    When ``outdir`` is given, writes ``report.json`` plus one directory per arm
    with the learned rule file, learning diagnostics, marginals, metrics and
    ROC points.
    """
    spec_path = Path(spec_path)
    spec = json.loads(_require(spec_path).read_text(encoding="utf-8"))
    base = spec_path.parent
    query = spec.get("query", DEFAULT_QUERY)
    outdir = Path(outdir) if outdir is not None else None

    db, labels = load_data(spec, base, query)
    if outdir is not None and spec.get("write_data", True):
        atomic_write(outdir / "evidence.db", format_evidence(db))
        atomic_write(outdir / "labels.db", format_labels(labels, query))

    arms = spec.get("arms")
    if not arms:
        raise ConfigError("experiment defines no arms")
    results = []
    for arm in arms:
        try:
            results.append(run_arm(arm, db, labels, spec, base, query, outdir))
        except EvidenceError as exc:
            raise EvidenceError(f"arm {arm.get('name')}: {exc}") from exc

    report = {
        "name": spec.get("name", spec_path.stem),
        "seed": int(spec.get("seed", 0)),
        "n_cases": len(labels),
        "n_positive": sum(labels.values()),
        "arms": {
            r.name: {"metrics": r.metrics.to_dict(), "weights": r.weights,
                     "n_train": r.n_train, "n_test": r.n_test,
                     "learn": {k: r.learn[k] for k in ("final_pll", "iters", "grad_norm", "converged")}}
            for r in results
        },
        "reference": spec.get("reference", {}),
    }
    if outdir is not None:
        atomic_write(outdir / "report.json", dump_json(report))
    return report
