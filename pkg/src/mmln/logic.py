"""First-order rule language: predicate schemas, weighted implications, parser.

A rule file holds predicate declarations and weighted rules::

    // clinical knowledge base
    Fever(case)
    Consolidation(case)
    Pneumonia(case)
    2.0 Fever(x) ^ Consolidation(x) => Pneumonia(x)

Every rule is a conjunction of (possibly negated) literals implying a single
positive atom of the query predicate.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError, ParseError

DEFAULT_QUERY = "Pneumonia"

NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
TERM_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9_]*\Z")


class Role(str, Enum):
    EVIDENCE = "Evidence"
    QUERY = "Query"


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    arg_types: tuple[str, ...]
    role: Role = Role.EVIDENCE

    @property
    def arity(self) -> int:
        return len(self.arg_types)

    def __str__(self):
        return f"{self.name}({', '.join(self.arg_types)})"


@dataclass(frozen=True, order=True)
class Term:
    """A variable (lowercase initial) or a constant such as ``P450945``."""

    name: str

    @property
    def is_variable(self) -> bool:
        return self.name[:1].islower()

    @property
    def is_constant(self) -> bool:
        return not self.is_variable

    def __str__(self):
        return self.name


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: tuple[Term, ...]

    @classmethod
    def ground(cls, predicate: str, *constants: str) -> "Atom":
        return cls(predicate, tuple(Term(c) for c in constants))

    @property
    def is_ground(self) -> bool:
        return all(t.is_constant for t in self.args)

    def variables(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.args if t.is_variable)

    def substitute(self, binding: dict[str, str]) -> "Atom":
        return Atom(self.predicate,
                    tuple(Term(binding.get(t.name, t.name)) if t.is_variable else t
                          for t in self.args))

    def __str__(self):
        return f"{self.predicate}({', '.join(t.name for t in self.args)})"


# ground atoms are atoms whose arguments are all constants
GroundAtom = Atom


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True

    def __str__(self):
        return str(self.atom) if self.positive else f"!{self.atom}"


@dataclass(frozen=True)
class WeightedFormula:
    id: int
    weight: float
    body: tuple[Literal, ...]
    head: Atom

    def variables(self) -> tuple[str, ...]:
        """Variables in first-occurrence order, body before head."""
        seen: dict[str, None] = {}
        for lit in self.body:
            for v in lit.atom.variables():
                seen.setdefault(v, None)
        for v in self.head.variables():
            seen.setdefault(v, None)
        return tuple(seen)

    def __str__(self):
        body = " ^ ".join(str(lit) for lit in self.body)
        return f"{format_weight(self.weight)} {body} => {self.head}"


@dataclass(frozen=True)
class Model:
    schemas: tuple[PredicateSchema, ...]
    formulas: tuple[WeightedFormula, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "schemas", tuple(self.schemas))
        object.__setattr__(self, "formulas", tuple(self.formulas))
        object.__setattr__(self, "_index", {s.name: s for s in self.schemas})

    def schema(self, name: str) -> PredicateSchema:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"undeclared predicate {name!r}") from None

    def has_predicate(self, name: str) -> bool:
        return name in self._index

    @property
    def query_predicates(self) -> tuple[PredicateSchema, ...]:
        return tuple(s for s in self.schemas if s.role is Role.QUERY)

    @property
    def query(self) -> PredicateSchema:
        (q,) = self.query_predicates
        return q

    @property
    def evidence_predicates(self) -> tuple[PredicateSchema, ...]:
        return tuple(s for s in self.schemas if s.role is Role.EVIDENCE)

    @property
    def weights(self) -> np.ndarray:
        return np.array([f.weight for f in self.formulas], dtype=float)

    def with_weights(self, weights: Sequence[float]) -> "Model":
        weights = list(weights)
        if len(weights) != len(self.formulas):
            raise ModelError(
                f"expected {len(self.formulas)} weights, got {len(weights)}")
        return Model(self.schemas,
                     tuple(replace(f, weight=float(w)) for f, w in zip(self.formulas, weights)))

    def without_predicates(self, names: Iterable[str]) -> "Model":
        drop = set(names)
        return Model(tuple(s for s in self.schemas if s.name not in drop), self.formulas)


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    formula: int | None = None
    predicate: str | None = None


def validate_model(model: Model) -> list[Violation]:
    """Every invariant violation in ``model``; an empty list means valid."""
    out: list[Violation] = []
    seen: set[str] = set()
    for s in model.schemas:
        if not isinstance(s.name, str) or not NAME_RE.match(s.name):
            out.append(Violation("InvalidName", f"bad predicate name {s.name!r}", predicate=s.name))
        if s.name in seen:
            out.append(Violation("DuplicatePredicate", f"{s.name} declared twice", predicate=s.name))
        seen.add(s.name)
        if s.arity < 1:
            out.append(Violation("InvalidArity", f"{s.name} has arity 0", predicate=s.name))
        for t in s.arg_types:
            if not NAME_RE.match(t):
                out.append(Violation("InvalidName", f"bad argument type {t!r}", predicate=s.name))
    n_query = len(model.query_predicates)
    if n_query != 1:
        out.append(Violation("QueryCount", f"expected exactly one query predicate, found {n_query}"))

    schemas = {s.name: s for s in model.schemas}
    for pos, f in enumerate(model.formulas):
        if f.id != pos:
            out.append(Violation("FormulaOrder", f"formula at position {pos} has id {f.id}", formula=pos))
        if not math.isfinite(f.weight):
            out.append(Violation("NonFiniteWeight", f"weight {f.weight} is not finite", formula=f.id))
        if not f.body:
            out.append(Violation("EmptyBody", "rule body is empty", formula=f.id))
        for atom in [lit.atom for lit in f.body] + [f.head]:
            s = schemas.get(atom.predicate)
            if s is None:
                out.append(Violation("UndeclaredPredicate", f"{atom.predicate} is not declared",
                                     formula=f.id, predicate=atom.predicate))
                continue
            if len(atom.args) != s.arity:
                out.append(Violation("ArityMismatch",
                                     f"{atom.predicate} takes {s.arity} argument(s), got {len(atom.args)}",
                                     formula=f.id, predicate=atom.predicate))
            for t in atom.args:
                if not TERM_RE.match(t.name):
                    out.append(Violation("InvalidName", f"bad term {t.name!r}", formula=f.id))
                elif t.is_constant:
                    out.append(Violation("ConstantInFormula",
                                         f"constant {t.name} in rule; rules range over the case variable",
                                         formula=f.id, predicate=atom.predicate))
        head_schema = schemas.get(f.head.predicate)
        if head_schema is not None and head_schema.role is not Role.QUERY:
            out.append(Violation("HeadNotQuery", f"head {f.head.predicate} is not the query predicate",
                                 formula=f.id, predicate=f.head.predicate))
        body_vars = {v for lit in f.body for v in lit.atom.variables()}
        for v in f.head.variables():
            if v not in body_vars:
                out.append(Violation("UnsafeVariable", f"head variable {v} does not occur in the body",
                                     formula=f.id))
    return out


def check_model(model: Model) -> Model:
    problems = validate_model(model)
    if problems:
        raise ModelError("; ".join(f"{p.code}: {p.message}" for p in problems))
    return model


# ------------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<number>[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+))
  | (?P<name>[A-Za-z0-9][A-Za-z0-9_]*)
  | (?P<implies>=>)
  | (?P<op>[()\^,!])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int  # 1-based


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind if kind != "op" else m.group(), m.group(), pos + 1))
        pos = m.end()
    return toks


class _LineParser:
    def __init__(self, toks: list[_Tok], lineno: int, line: str):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.end_col = len(line) + 1

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        col = tok.col if tok is not None else self.end_col
        raise ParseError(msg, self.lineno, col)

    def expect(self, kind, what=None):
        tok = self.peek()
        if tok is None or tok.kind != kind:
            found = "end of line" if tok is None else repr(tok.text)
            self.error(f"expected {what or kind}, found {found}")
        self.i += 1
        return tok

    def at_end(self):
        return self.i >= len(self.toks)

    def atom(self, *, term_check=True) -> tuple[Atom, _Tok, list[_Tok]]:
        name = self.expect("name", "predicate name")
        if not NAME_RE.match(name.text):
            self.error(f"invalid predicate name {name.text!r}", name)
        self.expect("(", "'('")
        args = [self.expect("name", "argument")]
        while self.peek() is not None and self.peek().kind == ",":
            self.i += 1
            args.append(self.expect("name", "argument"))
        self.expect(")", "')' or ','")
        return Atom(name.text, tuple(Term(a.text) for a in args)), name, args


@dataclass
class _RawRule:
    weight: float
    body: list[tuple[Literal, _Tok]]
    head: Atom
    head_tok: _Tok
    lineno: int
    weight_tok: _Tok


def _decode(text: str | bytes) -> str:
    if isinstance(text, str):
        return text
    try:
        return bytes(text).decode("utf-8")
    except UnicodeDecodeError as exc:
        prefix = bytes(text)[: exc.start]
        line = prefix.count(b"\n") + 1
        col = exc.start - (prefix.rfind(b"\n") + 1) + 1
        raise ParseError("input is not valid UTF-8", line, col, code="Encoding") from None


def parse_model(text: str | bytes, query: str = DEFAULT_QUERY) -> Model:
    """Parse a rule file into a validated :class:`Model`.

    ``query`` names the query predicate; every other declared predicate is
    evidence. Raises :class:`ParseError` carrying line and column.
    """
    text = _decode(text)
    decls: dict[str, tuple[PredicateSchema, int, _Tok]] = {}
    rules: list[_RawRule] = []

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("//", 1)[0]
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        p = _LineParser(toks, lineno, line)
        if toks[0].kind == "number":
            wtok = p.expect("number")
            weight = float(wtok.text)
            if not math.isfinite(weight):
                raise ParseError("weight is not finite", lineno, wtok.col, "NonFiniteWeight")
            body = []
            while True:
                lit_tok = p.peek()
                positive = True
                if lit_tok is not None and lit_tok.kind == "!":
                    positive = False
                    p.i += 1
                atom, name_tok, _ = p.atom()
                body.append((Literal(atom, positive), lit_tok if not positive else name_tok))
                nxt = p.peek()
                if nxt is not None and nxt.kind == "^":
                    p.i += 1
                    continue
                break
            p.expect("implies", "'^' or '=>'")
            head_tok = p.peek()
            if head_tok is not None and head_tok.kind == "!":
                raise ParseError("rule head must be a positive atom", lineno, head_tok.col, "NegatedHead")
            head, _, _ = p.atom()
            if not p.at_end():
                p.error(f"unexpected {p.peek().text!r} after rule head")
            rules.append(_RawRule(weight, body, head, head_tok, lineno, wtok))
        else:
            atom, name_tok, arg_toks = p.atom()
            if not p.at_end():
                p.error(f"unexpected {p.peek().text!r} after declaration")
            for a in arg_toks:
                if not NAME_RE.match(a.text):
                    raise ParseError(f"invalid argument type {a.text!r}", lineno, a.col)
            if atom.predicate in decls:
                raise ParseError(f"predicate {atom.predicate} declared twice", lineno, name_tok.col,
                                 "DuplicatePredicate")
            role = Role.QUERY if atom.predicate == query else Role.EVIDENCE
            schema = PredicateSchema(atom.predicate, tuple(t.name for t in atom.args), role)
            decls[atom.predicate] = (schema, lineno, name_tok)

    formulas = []
    for rule in rules:
        lineno = rule.lineno
        for lit, tok in rule.body:
            _check_atom(lit.atom, tok, lineno, decls)
        _check_atom(rule.head, rule.head_tok, lineno, decls)
        if decls[rule.head.predicate][0].role is not Role.QUERY:
            raise ParseError(f"head {rule.head.predicate} is not the query predicate {query}",
                             lineno, rule.head_tok.col, "HeadNotQuery")
        body_vars = {v for lit, _ in rule.body for v in lit.atom.variables()}
        for v in rule.head.variables():
            if v not in body_vars:
                raise ParseError(f"head variable {v} does not occur in the body",
                                 lineno, rule.head_tok.col, "UnsafeVariable")
        formulas.append(WeightedFormula(len(formulas), rule.weight,
                                        tuple(lit for lit, _ in rule.body), rule.head))

    if query not in decls:
        raise ParseError(f"query predicate {query} is not declared", 1, 1, "QueryCount")
    return check_model(Model(tuple(d[0] for d in decls.values()), tuple(formulas)))


def _check_atom(atom: Atom, tok: _Tok, lineno: int, decls) -> None:
    entry = decls.get(atom.predicate)
    if entry is None:
        raise ParseError(f"undeclared predicate {atom.predicate}", lineno, tok.col, "UndeclaredPredicate")
    schema = entry[0]
    if len(atom.args) != schema.arity:
        raise ParseError(f"{atom.predicate} takes {schema.arity} argument(s), got {len(atom.args)}",
                         lineno, tok.col, "ArityMismatch")
    for t in atom.args:
        if t.is_constant:
            raise ParseError(f"constant {t.name} in rule; use a variable", lineno, tok.col,
                             "ConstantInFormula")


# ------------------------------------------------------------- serialization

def format_weight(w: float) -> str:
    """Fixed-point with at least six decimals, more when needed to round-trip."""
    fixed = f"{w:.6f}"
    if float(fixed) == w:
        return fixed
    exact = np.format_float_positional(w, unique=True, trim="-")
    return exact if "." in exact else exact + ".0"


def format_model(model: Model) -> str:
    lines = [str(s) for s in model.schemas]
    if model.formulas:
        lines.append("")
    lines.extend(str(f) for f in model.formulas)
    return "\n".join(lines) + "\n"


def load_model(path, query: str = DEFAULT_QUERY) -> Model:
    with open(path, "rb") as fh:
        return parse_model(fh.read(), query=query)
