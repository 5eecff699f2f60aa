"""Stratified, seeded train/test splitting and per-class subsampling."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..errors import ConfigError, EvidenceError
from ..grounding import EvidenceDB


def _by_class(labels: Mapping[str, bool]) -> dict[bool, list[str]]:
    groups = {False: [], True: []}
    for case in sorted(labels):
        groups[bool(labels[case])].append(case)
    return groups


def _round(x: float) -> int:
    return math.floor(x + 0.5)


def _allocate(sizes: dict[bool, int], ratio: float) -> dict[bool, int]:
    """Per-class train counts summing to round(ratio * N), largest remainder first."""
    total = _round(ratio * sum(sizes.values()))
    exact = {c: ratio * n for c, n in sizes.items()}
    alloc = {c: math.floor(v) for c, v in exact.items()}
    order = sorted(sizes, key=lambda c: (-(exact[c] - alloc[c]), c))
    for c in order[: max(0, total - sum(alloc.values()))]:
        alloc[c] += 1
    # each class keeps at least one case on both sides
    return {c: min(max(k, 1), sizes[c] - 1) for c, k in alloc.items()}


def split_dataset(db: EvidenceDB | None, labels: Mapping[str, bool], ratio: float = 0.8,
                  seed: int = 0) -> tuple[list[str], list[str]]:
    """Stratified seeded split of the labeled cases into (train, test).

    Both lists come back sorted. Each label class needs at least two cases.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio {ratio} must lie in (0, 1)")
    if db is not None:
        unlabeled = db.constants - set(labels)
        if unlabeled:
            raise EvidenceError(f"unlabeled case(s): {sorted(unlabeled)[:5]}")
    groups = _by_class(labels)
    sizes = {c: len(v) for c, v in groups.items()}
    for c, n in sizes.items():
        if n < 2:
            raise EvidenceError(f"label class {c} has {n} case(s); stratification needs at least 2")
    alloc = _allocate(sizes, ratio)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in (False, True):
        cases = groups[c]
        perm = rng.permutation(len(cases))
        chosen = [cases[i] for i in perm]
        train.extend(chosen[: alloc[c]])
        test.extend(chosen[alloc[c]:])
    return sorted(train), sorted(test)


def subsample(labels: Mapping[str, bool], fraction: float, seed: int = 0) -> dict[str, bool]:
    """Keep ``fraction`` of each label class (at least two cases per class)."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"subsample fraction {fraction} must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    kept = {}
    for c, cases in _by_class(labels).items():
        k = min(len(cases), max(2, _round(fraction * len(cases))))
        for i in sorted(rng.choice(len(cases), size=k, replace=False)):
            kept[cases[i]] = c
    return dict(sorted(kept.items()))
