"""Evidence databases, closed-world worlds and formula grounding counts.

Every rule has a single case variable, so each case is a disconnected block of
the ground network: grounding substitutes the case constant for every
variable and each formula gets exactly one grounding per case.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import EvidenceError
from .logic import TERM_RE, Atom, GroundAtom, Literal, Model, Role, Term


class Provenance(str, Enum):
    TEXT = "text"
    IMAGE = "image"
    SYNTHETIC = "synthetic"


def atom_case(atom: GroundAtom) -> str:
    """The single constant an atom is about; raises for cross-case atoms."""
    names = {t.name for t in atom.args}
    if len(names) != 1:
        raise EvidenceError(f"{atom} does not refer to exactly one case constant")
    if not atom.is_ground:
        raise EvidenceError(f"{atom} is not ground")
    return next(iter(names))


@dataclass(frozen=True)
class EvidenceDB:
    """Positive ground atoms per case, with the channel each atom came from.

    Constants may exist with no atoms (a case with nothing extracted).
    """

    atoms: frozenset = frozenset()
    constants: frozenset = frozenset()
    provenance: Mapping[GroundAtom, Provenance] = field(default_factory=dict)
    _by_case: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        atoms = frozenset(self.atoms)
        by_case: dict[str, set] = {c: set() for c in self.constants}
        for a in atoms:
            by_case.setdefault(atom_case(a), set()).add(a)
        prov = {a: Provenance(self.provenance.get(a, Provenance.SYNTHETIC)) for a in atoms}
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "constants", frozenset(by_case))
        object.__setattr__(self, "provenance", prov)
        object.__setattr__(self, "_by_case", {c: frozenset(s) for c, s in by_case.items()})

    @classmethod
    def from_atoms(cls, atoms: Iterable[GroundAtom], provenance=Provenance.SYNTHETIC,
                   constants: Iterable[str] = ()) -> "EvidenceDB":
        atoms = list(atoms)
        return cls(frozenset(atoms), frozenset(constants), {a: provenance for a in atoms})

    def atoms_of(self, case: str) -> frozenset:
        try:
            return self._by_case[case]
        except KeyError:
            raise EvidenceError(f"unknown case constant {case!r}") from None

    def cases(self) -> list[str]:
        return sorted(self.constants)

    def union(self, other: "EvidenceDB") -> "EvidenceDB":
        prov = dict(other.provenance)
        prov.update(self.provenance)
        return EvidenceDB(self.atoms | other.atoms, self.constants | other.constants, prov)

    def filter(self, keep) -> "EvidenceDB":
        """Keep atoms for which ``keep(atom)`` holds; constants are preserved."""
        atoms = frozenset(a for a in self.atoms if keep(a))
        return EvidenceDB(atoms, self.constants, {a: self.provenance[a] for a in atoms})

    def restrict(self, cases: Iterable[str]) -> "EvidenceDB":
        cases = frozenset(cases)
        missing = cases - self.constants
        if missing:
            raise EvidenceError(f"unknown case constant(s): {sorted(missing)}")
        atoms = frozenset(a for a in self.atoms if atom_case(a) in cases)
        return EvidenceDB(atoms, cases, {a: self.provenance[a] for a in atoms})

    def __len__(self):
        return len(self.atoms)


def case_atoms(model: Model, case: str) -> list[GroundAtom]:
    """All ground atoms of one case, in declaration order."""
    return [Atom(s.name, (Term(case),) * s.arity) for s in model.schemas]


@dataclass(frozen=True)
class World:
    case: str
    assignment: Mapping[GroundAtom, bool]

    def __getitem__(self, atom: GroundAtom) -> bool:
        try:
            return self.assignment[atom]
        except KeyError:
            raise EvidenceError(f"{atom} is not covered by the world of {self.case}") from None

    def set(self, atom: GroundAtom, value: bool) -> "World":
        if atom not in self.assignment:
            raise EvidenceError(f"{atom} is not covered by the world of {self.case}")
        new = dict(self.assignment)
        new[atom] = bool(value)
        return World(self.case, new)

    def true_atoms(self) -> set[GroundAtom]:
        return {a for a, v in self.assignment.items() if v}


def closed_world_complete(db: EvidenceDB, model: Model, case: str) -> World:
    """Total world for ``case``: asserted evidence true, everything else false.

    Query atoms are set false; inference flips them. Atoms of predicates the
    model does not declare are ignored since no formula can read them.
    """
    evidence = db.atoms_of(case)
    assignment = {}
    for atom in case_atoms(model, case):
        assignment[atom] = atom in evidence
    for a in evidence:
        if model.has_predicate(a.predicate) and model.schema(a.predicate).role is Role.QUERY:
            raise EvidenceError(f"query atom {a} appears as evidence")
        if model.has_predicate(a.predicate) and a not in assignment:
            raise EvidenceError(f"{a} has the wrong arity for {a.predicate}")
    return World(case, assignment)


def label_world(world: World, model: Model, label: bool) -> World:
    """Set the case's query atom to an observed label."""
    (q,) = [a for a in world.assignment if model.schema(a.predicate).role is Role.QUERY]
    return world.set(q, label)


@dataclass(frozen=True)
class GroundFormula:
    formula: int
    binding: tuple[tuple[str, str], ...]
    body: tuple[Literal, ...]
    head: GroundAtom

    def satisfied(self, world: World) -> bool:
        for lit in self.body:
            if world[lit.atom] != lit.positive:
                return True
        return world[self.head]

    def body_true(self, world: World) -> bool:
        return all(world[lit.atom] == lit.positive for lit in self.body)

    def __str__(self):
        return " ^ ".join(str(lit) for lit in self.body) + f" => {self.head}"


@dataclass(frozen=True)
class GroundingTable:
    case: str
    groundings: tuple[tuple[GroundFormula, ...], ...]  # indexed by formula id

    @property
    def n_formulas(self) -> int:
        return len(self.groundings)

    def atoms(self) -> set[GroundAtom]:
        out = set()
        for gs in self.groundings:
            for g in gs:
                out.add(g.head)
                out.update(lit.atom for lit in g.body)
        return out

    def total(self) -> int:
        return sum(len(gs) for gs in self.groundings)


def ground_formulas(model: Model, case: str) -> GroundingTable:
    domain = (case,)
    table = []
    for f in model.formulas:
        variables = sorted(f.variables())
        gs = []
        for values in itertools.product(domain, repeat=len(variables)):
            binding = dict(zip(variables, values))
            gs.append(GroundFormula(
                f.id,
                tuple(sorted(binding.items())),
                tuple(Literal(lit.atom.substitute(binding), lit.positive) for lit in f.body),
                f.head.substitute(binding),
            ))
        table.append(tuple(gs))
    return GroundingTable(case, tuple(table))


def count_true_groundings(table: GroundingTable, world: World) -> np.ndarray:
    """Number of satisfied groundings per formula (the sufficient statistics)."""
    if world.case != table.case:
        raise EvidenceError(f"world of {world.case} used with groundings of {table.case}")
    return np.array([sum(g.satisfied(world) for g in gs) for gs in table.groundings], dtype=float)


# -------------------------------------------------------------- file formats

_LINE_RE = re.compile(r"\s*(!?)\s*([A-Za-z][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*\Z")


def _parse_atom_line(line: str, lineno: int):
    body, _, comment = line.partition("//")
    if not body.strip():
        return None
    m = _LINE_RE.match(body)
    if m is None:
        raise EvidenceError(f"line {lineno}: expected a ground atom such as Cough(P1), got {body.strip()!r}")
    args = [a.strip() for a in m.group(3).split(",")]
    for a in args:
        if not TERM_RE.match(a) or not Term(a).is_constant:
            raise EvidenceError(f"line {lineno}: {a!r} is not a constant")
    return (m.group(1) != "!", Atom.ground(m.group(2), *args)), comment.strip()


def parse_evidence(text: str) -> EvidenceDB:
    """Read the one-atom-per-line evidence format.

    ``!Atom(C)`` lines register ``C`` as a case without asserting anything;
    a trailing ``// text`` or ``// image`` comment records provenance.
    """
    atoms, prov, constants = [], {}, set()
    for lineno, line in enumerate(text.split("\n"), start=1):
        parsed = _parse_atom_line(line, lineno)
        if parsed is None:
            continue
        (positive, atom), comment = parsed
        case = atom_case(atom)
        constants.add(case)
        if positive:
            atoms.append(atom)
            try:
                prov[atom] = Provenance(comment) if comment else Provenance.SYNTHETIC
            except ValueError:
                prov[atom] = Provenance.SYNTHETIC
    return EvidenceDB(frozenset(atoms), frozenset(constants), prov)


def format_evidence(db: EvidenceDB, with_provenance: bool = True) -> str:
    lines = []
    for case in db.cases():
        for a in sorted(db.atoms_of(case), key=str):
            line = str(a).replace(", ", ",")
            if with_provenance:
                line += f"  // {db.provenance[a].value}"
            lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


def parse_labels(text: str) -> dict[str, bool]:
    """``Pneumonia(P1)`` marks a positive case, ``!Pneumonia(P2)`` a negative one."""
    labels: dict[str, bool] = {}
    predicate = None
    for lineno, line in enumerate(text.split("\n"), start=1):
        parsed = _parse_atom_line(line, lineno)
        if parsed is None:
            continue
        (positive, atom), _ = parsed
        if predicate is None:
            predicate = atom.predicate
        elif atom.predicate != predicate:
            raise EvidenceError(f"line {lineno}: mixed label predicates {predicate} and {atom.predicate}")
        case = atom_case(atom)
        if labels.get(case, positive) != positive:
            raise EvidenceError(f"line {lineno}: contradictory labels for {case}")
        labels[case] = positive
    return labels


def format_labels(labels: Mapping[str, bool], query: str = "Pneumonia") -> str:
    return "".join(f"{'' if labels[c] else '!'}{query}({c})\n" for c in sorted(labels))
