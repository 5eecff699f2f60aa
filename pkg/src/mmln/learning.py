"""Rule-weight learning by L2-regularized pseudo-log-likelihood ascent."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, EvidenceError, ModelError, NumericalError
from .grounding import (EvidenceDB, World, closed_world_complete, count_true_groundings,
                        ground_formulas, label_world)
from .logic import Model, Role

log = logging.getLogger(__name__)


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class TrainingSet:
    """Complete worlds (closed-world evidence plus the observed label)."""

    cases: tuple[World, ...]
    split: Split = Split.TRAIN

    def __len__(self):
        return len(self.cases)


def build_training_set(model: Model, db: EvidenceDB, labels: Mapping[str, bool],
                       cases: Iterable[str] | None = None, split: Split = Split.TRAIN) -> TrainingSet:
    cases = sorted(db.constants) if cases is None else list(cases)
    worlds = []
    for case in cases:
        if case not in labels:
            raise EvidenceError(f"case {case} has no label")
        worlds.append(label_world(closed_world_complete(db, model, case), model, labels[case]))
    return TrainingSet(tuple(worlds), Split(split))


@dataclass(frozen=True)
class LearnConfig:
    l2_sigma: float = 10.0
    step: float = 0.1
    max_iters: int = 500
    grad_tol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        for name in ("l2_sigma", "step", "grad_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")


@dataclass
class LearnResult:
    weights: np.ndarray
    final_pll: float
    iters: int
    grad_norm: float
    converged: bool
    history: list[float] = field(default_factory=list)

    def report(self, cfg: LearnConfig) -> dict:
        return {"weights": [float(w) for w in self.weights], "final_pll": self.final_pll,
                "iters": self.iters, "grad_norm": self.grad_norm, "converged": self.converged,
                "config": asdict(cfg)}


class PLLStatistics:
    """Grounding counts needed by the pseudo-likelihood, computed once.

    One row per (case, hidden atom): counts in the observed world and in the
    worlds with that atom forced true / false, all else held at observed values.
    """

    def __init__(self, model: Model, cases: TrainingSet | Sequence[World]):
        worlds = cases.cases if isinstance(cases, TrainingSet) else tuple(cases)
        n_f = len(model.formulas)
        obs, t, f = [], [], []
        for world in worlds:
            table = ground_formulas(model, world.case)
            n_obs = count_true_groundings(table, world)
            # evidence is closed-world, so only query atoms are non-evidence
            for atom in world.assignment:
                if model.schema(atom.predicate).role is not Role.QUERY:
                    continue
                obs.append(n_obs)
                t.append(count_true_groundings(table, world.set(atom, True)))
                f.append(count_true_groundings(table, world.set(atom, False)))
        self.n_formulas = n_f
        self.n_cases = len(worlds)
        self.observed = np.array(obs, dtype=float).reshape(-1, n_f)
        self.if_true = np.array(t, dtype=float).reshape(-1, n_f)
        self.if_false = np.array(f, dtype=float).reshape(-1, n_f)


def _check(w, stats: PLLStatistics) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (stats.n_formulas,):
        raise ModelError(f"expected {stats.n_formulas} weights, got shape {w.shape}")
    return w


def _stats(model, cases):
    return cases if isinstance(cases, PLLStatistics) else PLLStatistics(model, cases)


def pseudo_log_likelihood(model: Model, weights, cases, l2_sigma: float | None = 10.0) -> float:
    """Sum of log P(atom = observed | rest) over hidden atoms, minus the L2 penalty.

    ``cases`` is a TrainingSet, a list of labeled worlds or precomputed
    :class:`PLLStatistics`. ``l2_sigma=None`` drops the prior.
    """
    stats = _stats(model, cases)
    w = _check(w=weights, stats=stats)
    s_obs = stats.observed @ w
    s_t = stats.if_true @ w
    s_f = stats.if_false @ w
    ll = float(np.sum(s_obs - np.logaddexp(s_t, s_f)))
    if l2_sigma is not None:
        ll -= float(np.sum(w * w)) / (2.0 * l2_sigma ** 2)
    return ll


def pll_gradient(model: Model, weights, cases, l2_sigma: float | None = 10.0) -> np.ndarray:
    stats = _stats(model, cases)
    w = _check(weights, stats)
    s_t = stats.if_true @ w
    s_f = stats.if_false @ w
    p_t = np.exp(s_t - np.logaddexp(s_t, s_f))
    p_f = 1.0 - p_t
    per_row = stats.observed - p_t[:, None] * stats.if_true - p_f[:, None] * stats.if_false
    grad = per_row.sum(axis=0)
    if l2_sigma is not None:
        grad = grad - w / l2_sigma ** 2
    return grad


def ascend(stats: PLLStatistics, w0, cfg: LearnConfig) -> LearnResult:
    """Maximize the regularized PLL from ``w0``.

    Gradient ascent with an Armijo backtracking line search. The trial step
    starts at ``cfg.step`` and afterwards at the Barzilai-Borwein estimate
    from the last accepted move.
    """
    def objective(w):
        v = pseudo_log_likelihood(None, w, stats, cfg.l2_sigma)
        if not math.isfinite(v):
            raise NumericalError(f"objective became non-finite at weights {w}")
        return v

    w = np.array(w0, dtype=float)
    f = objective(w)
    g = pll_gradient(None, w, stats, cfg.l2_sigma)
    history = [f]
    alpha = cfg.step
    converged = False
    it = 0
    while it < cfg.max_iters:
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < cfg.grad_tol:
            converged = True
            break
        it += 1
        gg = float(g @ g)
        step = alpha
        for _ in range(60):
            w_new = w + step * g
            f_new = objective(w_new)
            if f_new >= f + 1e-4 * step * gg:
                break
            step *= 0.5
        else:
            # no ascent possible at floating-point resolution
            log.debug("line search stalled at iteration %d", it)
            break
        g_new = pll_gradient(None, w_new, stats, cfg.l2_sigma)
        s, y = w_new - w, g_new - g
        sy = float(s @ y)
        # concave objective: s.y < 0 along ascent; BB step = s.s / -s.y
        alpha = float(s @ s) / -sy if sy < 0 else step * 2.0
        w, f, g = w_new, f_new, g_new
        history.append(f)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return LearnResult(w, f, it, gnorm, converged or gnorm < cfg.grad_tol, history)


def learn_weights(model: Model, train: TrainingSet, cfg: LearnConfig = LearnConfig()) -> LearnResult:
    """Learn rule weights from zero-initialized gradient ascent on the PLL."""
    if len(train) == 0:
        raise EvidenceError("training set is empty")
    order = np.random.default_rng(cfg.seed).permutation(len(train))
    stats = PLLStatistics(model, [train.cases[i] for i in order])
    result = ascend(stats, np.zeros(len(model.formulas)), cfg)
    log.info("learned %d weights in %d iterations (pll=%.6f, |grad|=%.2e)",
             len(model.formulas), result.iters, result.final_pll, result.grad_norm)
    return result
