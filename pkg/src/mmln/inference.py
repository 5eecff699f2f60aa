"""Marginal probability of the query atom: exact enumeration and Gibbs sampling."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EvidenceError, ModelError, NumericalError
from .grounding import (EvidenceDB, GroundAtom, World, closed_world_complete,
                        count_true_groundings, ground_formulas)
from .logic import Atom, Model, Role


class Method(str, Enum):
    EXACT = "exact"
    GIBBS = "gibbs"


@dataclass(frozen=True)
class InferenceConfig:
    method: Method = Method.EXACT
    burn_in: int = 1000
    samples: int = 50000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.samples <= 0:
            raise ConfigError("samples must be positive")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")


@dataclass(frozen=True)
class MarginalResult:
    query: GroundAtom
    probability: float
    method: Method
    samples_used: int = 0

    @property
    def case(self) -> str:
        return self.query.args[0].name

    def to_line(self) -> str:
        return f"{str(self.query).replace(', ', ',')} {self.probability:.5f}"

    def to_dict(self) -> dict:
        return {"query": str(self.query), "case": self.case, "probability": self.probability,
                "method": self.method.value, "samples_used": self.samples_used}


def _weights(model: Model, weights) -> np.ndarray:
    w = model.weights if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(model.formulas),):
        raise ModelError(f"expected {len(model.formulas)} weights, got shape {w.shape}")
    return w


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def hidden_atoms(model: Model, world: World, db: EvidenceDB,
                 open_world: Iterable[str] = ()) -> list[GroundAtom]:
    """Atoms not fixed by evidence: the query atom(s), plus unasserted atoms
    of any predicate declared open-world."""
    open_world = set(open_world)
    asserted = db.atoms_of(world.case)
    out = []
    for atom in world.assignment:
        role = model.schema(atom.predicate).role
        if role is Role.QUERY or (atom.predicate in open_world and atom not in asserted):
            out.append(atom)
    return out


def _query_atom(model: Model, world: World) -> GroundAtom:
    (q,) = [a for a in world.assignment if model.schema(a.predicate).role is Role.QUERY]
    return q


def exact_marginal(model: Model, weights, db: EvidenceDB, case: str,
                   open_world: Iterable[str] = ()) -> MarginalResult:
    """Enumerate every assignment of the hidden atoms of ``case``.

    P(query) = sum over worlds with query true of exp(S) / sum over all worlds,
    S = sum_i w_i n_i, accumulated in log space.
    """
    w = _weights(model, weights)
    base = closed_world_complete(db, model, case)
    hidden = hidden_atoms(model, base, db, open_world)
    query = _query_atom(model, base)
    if len(hidden) > 24:
        raise ConfigError(f"{len(hidden)} hidden atoms is too many to enumerate")
    table = ground_formulas(model, case)
    scores, query_true = [], []
    for values in itertools.product((False, True), repeat=len(hidden)):
        assignment = dict(base.assignment)
        assignment.update(zip(hidden, values))
        world = World(case, assignment)
        scores.append(float(w @ count_true_groundings(table, world)))
        query_true.append(assignment[query])
    scores = np.array(scores)
    if not np.all(np.isfinite(scores)):
        raise NumericalError(f"non-finite world score for {case}")
    m = scores.max()
    mass = np.exp(scores - m)
    qt = np.array(query_true)
    p = float(mass[qt].sum() / mass.sum())
    return MarginalResult(query, p, Method.EXACT, 0)


class _CaseNetwork:
    """Index-based view of one case's ground network for fast resampling."""

    def __init__(self, model: Model, db: EvidenceDB, case: str, open_world=()):
        base = closed_world_complete(db, model, case)
        self.atoms = list(base.assignment)
        index = {a: i for i, a in enumerate(self.atoms)}
        self.state = np.array([base.assignment[a] for a in self.atoms], dtype=bool)
        self.hidden = [index[a] for a in hidden_atoms(model, base, db, open_world)]
        self.query = index[_query_atom(model, base)]
        self.groundings = []  # (formula id, [(atom idx, positive)], head idx)
        for gs in ground_formulas(model, case).groundings:
            for g in gs:
                self.groundings.append((g.formula, [(index[l.atom], l.positive) for l in g.body],
                                        index[g.head]))
        hidden_set = set(self.hidden)
        self.touching = {j: [] for j in self.hidden}
        for k, (_, body, head) in enumerate(self.groundings):
            for j in {i for i, _ in body} | {head}:
                if j in hidden_set:
                    self.touching[j].append(k)
        # uncoupled: no grounding mentions two hidden atoms, so conditionals are fixed
        self.uncoupled = all(
            len(({i for i, _ in body} | {head}) & hidden_set) <= 1
            for _, body, head in self.groundings)

    def _satisfied(self, k: int, state) -> bool:
        _, body, head = self.groundings[k]
        for i, pos in body:
            if state[i] != pos:
                return True
        return bool(state[head])

    def delta_energy(self, j: int, state, w) -> float:
        """Weighted count difference between atom j true and atom j false."""
        old = state[j]
        d = 0.0
        for k in self.touching[j]:
            f = self.groundings[k][0]
            state[j] = True
            t = self._satisfied(k, state)
            state[j] = False
            d += w[f] * (t - self._satisfied(k, state))
        state[j] = old
        return d


def gibbs_marginal(model: Model, weights, db: EvidenceDB, case: str,
                   cfg: InferenceConfig = InferenceConfig(method=Method.GIBBS),
                   open_world: Iterable[str] = (), _shortcut: bool = True) -> MarginalResult:
    """Estimate P(query) by Gibbs sampling the hidden atoms of ``case``.

    Hidden atoms start uniformly at random; every sweep resamples each one
    from sigmoid(delta energy). After ``burn_in`` sweeps the estimate is the
    fraction of sweeps with the query atom true.
    """
    if cfg.method is not Method.GIBBS:
        raise ConfigError("gibbs_marginal needs a Gibbs inference config")
    w = _weights(model, weights)
    net = _CaseNetwork(model, db, case, open_world)
    rng = np.random.default_rng(cfg.seed)
    state = net.state.copy()
    h = len(net.hidden)
    state[net.hidden] = rng.random(h) < 0.5
    sweeps = cfg.burn_in + cfg.samples
    u = rng.random((sweeps, h))
    qpos = net.hidden.index(net.query)

    if net.uncoupled and _shortcut:
        # conditionals never change, so the chain reduces to one comparison per draw
        p = np.array([sigmoid(net.delta_energy(j, state, w)) for j in net.hidden])
        draws = u[cfg.burn_in:, qpos] < p[qpos]
        hits = int(draws.sum())
    else:
        hits = 0
        for t in range(sweeps):
            row = u[t]
            for pos, j in enumerate(net.hidden):
                state[j] = row[pos] < sigmoid(net.delta_energy(j, state, w))
            if t >= cfg.burn_in and state[net.query]:
                hits += 1
    return MarginalResult(net.atoms[net.query], hits / cfg.samples, Method.GIBBS, cfg.samples)


def case_seed(seed: int, case: str) -> int:
    digest = hashlib.blake2b(case.encode("utf-8"), digest_size=8).digest()
    return (seed ^ int.from_bytes(digest, "big")) & 0xFFFFFFFFFFFFFFFF


def infer(model, weights, db, case, cfg: InferenceConfig, open_world=()) -> MarginalResult:
    if cfg.method is Method.EXACT:
        return exact_marginal(model, weights, db, case, open_world)
    return gibbs_marginal(model, weights, db, case, cfg, open_world)


def infer_batch(model: Model, weights, db: EvidenceDB, cases: Sequence[str],
                cfg: InferenceConfig = InferenceConfig(), open_world=()) -> list[MarginalResult]:
    """Per-case marginals in input order; each case gets seed XOR hash(case)."""
    results = []
    for case in cases:
        case_cfg = InferenceConfig(cfg.method, cfg.burn_in, cfg.samples, case_seed(cfg.seed, case))
        try:
            results.append(infer(model, weights, db, case, case_cfg, open_world))
        except EvidenceError as exc:
            raise EvidenceError(f"case {case}: {exc}") from exc
        except NumericalError as exc:
            raise NumericalError(f"case {case}: {exc}") from exc
    return results


# -------------------------------------------------------------- file formats

def format_marginals(results: Iterable[MarginalResult]) -> str:
    return "".join(r.to_line() + "\n" for r in results)


def marginals_json(results: Iterable[MarginalResult]) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2) + "\n"


_MARGINAL_RE = re.compile(r"\s*([A-Za-z][A-Za-z0-9_]*)\(([^()]*)\)\s+([0-9.eE+-]+)\s*\Z")


def parse_marginals(text: str) -> dict[str, float]:
    """Read ``Pneumonia(P1) 0.99895`` lines into {case: probability}."""
    out = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        m = _MARGINAL_RE.match(line)
        if m is None:
            raise EvidenceError(f"line {lineno}: expected 'Query(Case) probability', got {line!r}")
        p = float(m.group(3))
        if not 0.0 <= p <= 1.0:
            raise EvidenceError(f"line {lineno}: probability {p} outside [0, 1]")
        out[m.group(2).strip()] = p
    return out
