"""Evidence extraction from EMR text (lexicon + negation scope) and CXR scores."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ExtractionError
from .grounding import EvidenceDB, Provenance
from .logic import NAME_RE, Atom, GroundAtom, Model, Role

log = logging.getLogger(__name__)

SECTIONS = (
    "chief_complaint",
    "present_illness_history",
    "past_history",
    "physical_examination",
    "auxiliary_examination",
    "diagnosis",
)

DEFAULT_THRESHOLD = 0.6
IMAGE_PREFIX = "CXR_"
PUNCTUATION = frozenset(".;,")

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?|[.;,]")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; ``. ; ,`` kept as tokens since they cut scopes."""
    return _TOKEN_RE.findall(text.lower())


class LabFlag(str, Enum):
    HIGH = "High"
    LOW = "Low"
    NORMAL = "Normal"


@dataclass(frozen=True)
class EmrRecord:
    patient_id: str
    fields: Mapping[str, str] = field(default_factory=dict)
    lab_items: Mapping[str, LabFlag] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.patient_id, str) or not self.patient_id.strip():
            raise ExtractionError("EMR record has an empty patient_id")
        unknown = set(self.fields) - set(SECTIONS)
        if unknown:
            raise ExtractionError(f"{self.patient_id}: unknown section(s) {sorted(unknown)}; "
                                  f"expected one of {SECTIONS}")
        try:
            labs = {k: LabFlag(v) for k, v in self.lab_items.items()}
        except ValueError as exc:
            raise ExtractionError(f"{self.patient_id}: {exc}") from None
        object.__setattr__(self, "fields", dict(self.fields))
        object.__setattr__(self, "lab_items", labs)

    @classmethod
    def from_dict(cls, d: Mapping) -> "EmrRecord":
        if "patient_id" not in d:
            raise ExtractionError("EMR record lacks patient_id")
        return cls(str(d["patient_id"]), d.get("fields", {}), d.get("lab_items", {}))


@dataclass(frozen=True)
class Lexicon:
    """Surface phrases mapped to predicates, plus negation triggers.

    ``sections`` optionally restricts a phrase to some EMR sections (all
    sections otherwise); ``labs`` maps a lab item and flag to a predicate,
    e.g. ``{"WBC": {"High": "White_blood_cells_high"}}``.
    """

    entries: Mapping[str, str]
    negation_pre: tuple[str, ...] = ("no", "not", "denies", "denied", "without", "negative for",
                                    "free of", "absence of", "no evidence of")
    negation_post: tuple[str, ...] = ("ruled out", "was ruled out", "is absent", "absent",
                                     "not seen", "denied")
    scope_window: int = 6
    sections: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    labs: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.scope_window < 1:
            raise ExtractionError("scope_window must be at least 1")
        for trig in (*self.negation_pre, *self.negation_post):
            if trig != trig.lower() or not tokenize(trig):
                raise ExtractionError(f"negation trigger {trig!r} must be non-empty lowercase")
        for phrase, secs in self.sections.items():
            bad = set(secs) - set(SECTIONS)
            if bad:
                raise ExtractionError(f"phrase {phrase!r} names unknown section(s) {sorted(bad)}")
        for phrase in self.entries:
            if not tokenize(phrase):
                raise ExtractionError(f"lexicon phrase {phrase!r} has no tokens")
        object.__setattr__(self, "negation_pre", tuple(self.negation_pre))
        object.__setattr__(self, "negation_post", tuple(self.negation_post))

    def predicates(self) -> set[str]:
        out = set(self.entries.values())
        for flags in self.labs.values():
            out.update(flags.values())
        return out

    def check_against(self, model: Model) -> None:
        for name in sorted(self.predicates()):
            if not model.has_predicate(name):
                raise ExtractionError(f"lexicon targets undeclared predicate {name}")
            if model.schema(name).role is not Role.EVIDENCE:
                raise ExtractionError(f"lexicon targets non-evidence predicate {name}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "Lexicon":
        kwargs = {"entries": dict(d["entries"])}
        for key in ("negation_pre", "negation_post"):
            if key in d:
                kwargs[key] = tuple(d[key])
        if "scope_window" in d:
            kwargs["scope_window"] = int(d["scope_window"])
        if "sections" in d:
            kwargs["sections"] = {k: tuple(v) for k, v in d["sections"].items()}
        if "labs" in d:
            kwargs["labs"] = {k: dict(v) for k, v in d["labs"].items()}
        return cls(**kwargs)


def load_lexicon(path) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        return Lexicon.from_dict(json.load(fh))


def _occurrences(tokens: Sequence[str], phrase: Sequence[str]) -> Iterable[int]:
    k = len(phrase)
    for i in range(len(tokens) - k + 1):
        if list(tokens[i:i + k]) == list(phrase):
            yield i


def detect_negation(tokens: Sequence[str], lex: Lexicon) -> list[bool]:
    """Flag tokens inside a negation scope.

    A pre-trigger negates up to ``scope_window`` tokens after it, a
    post-trigger up to ``scope_window`` tokens before it; either scope stops
    at ``.``, ``;`` or ``,``.
    """
    n = len(tokens)
    negated = [False] * n
    for trig in lex.negation_pre:
        t = tokenize(trig)
        for i in _occurrences(tokens, t):
            j = i + len(t)
            while j < n and j < i + len(t) + lex.scope_window and tokens[j] not in PUNCTUATION:
                negated[j] = True
                j += 1
    for trig in lex.negation_post:
        t = tokenize(trig)
        for i in _occurrences(tokens, t):
            j = i - 1
            while j >= 0 and j >= i - lex.scope_window and tokens[j] not in PUNCTUATION:
                negated[j] = True
                j -= 1
    return negated


def extract_text_evidence(rec: EmrRecord, lex: Lexicon) -> set[GroundAtom]:
    """Predicates mentioned non-negated in the record's sections, plus lab flags."""
    found: set[GroundAtom] = set()
    pid = rec.patient_id
    for section in SECTIONS:
        text = rec.fields.get(section)
        if not text:
            continue
        tokens = tokenize(text)
        negated = detect_negation(tokens, lex)
        for phrase, predicate in lex.entries.items():
            allowed = lex.sections.get(phrase)
            if allowed is not None and section not in allowed:
                continue
            p = tokenize(phrase)
            for i in _occurrences(tokens, p):
                if not any(negated[i:i + len(p)]):
                    found.add(Atom.ground(predicate, pid))
                    break
    for item, flag in rec.lab_items.items():
        mapping = lex.labs.get(item)
        if mapping is None:
            log.warning("%s: unknown lab item %r skipped", pid, item)
            continue
        predicate = mapping.get(flag.value)
        if predicate is not None:
            found.add(Atom.ground(predicate, pid))
    return found


@dataclass(frozen=True)
class PathologyScores:
    patient_id: str
    scores: Mapping[str, float]

    def __post_init__(self):
        if not self.patient_id:
            raise ExtractionError("pathology scores have an empty patient_id")
        for name, s in self.scores.items():
            if not NAME_RE.match(name):
                raise ExtractionError(f"{self.patient_id}: bad pathology name {name!r}")
            if not (isinstance(s, (int, float)) and math.isfinite(s) and 0.0 <= s <= 1.0):
                raise ExtractionError(f"{self.patient_id}: score {s!r} for {name} outside [0, 1]")


def extract_image_evidence(s: PathologyScores, threshold: float = DEFAULT_THRESHOLD) -> set[GroundAtom]:
    """``CXR_<pathology>(patient)`` for every score strictly above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ExtractionError(f"threshold {threshold} must lie in (0, 1)")
    return {Atom.ground(IMAGE_PREFIX + name, s.patient_id)
            for name, score in s.scores.items() if score > threshold}


def pool_scores(scores: Iterable[PathologyScores]) -> list[PathologyScores]:
    """Max-pool several studies of the same patient per pathology."""
    pooled: dict[str, dict[str, float]] = {}
    for s in scores:
        dst = pooled.setdefault(s.patient_id, {})
        for name, v in s.scores.items():
            dst[name] = max(v, dst.get(name, v))
    return [PathologyScores(pid, pooled[pid]) for pid in sorted(pooled)]


def build_evidence_db(records: Iterable[EmrRecord], scores: Iterable[PathologyScores],
                      lex: Lexicon, threshold: float = DEFAULT_THRESHOLD) -> EvidenceDB:
    """Union of the text and image channels, provenance-tagged."""
    by_id: dict[str, EmrRecord] = {}
    for rec in records:
        prev = by_id.get(rec.patient_id)
        if prev is not None and prev != rec:
            raise ExtractionError(f"conflicting EMR records for {rec.patient_id}")
        by_id[rec.patient_id] = rec
    prov: dict[GroundAtom, Provenance] = {}
    for pid in sorted(by_id):
        for a in extract_text_evidence(by_id[pid], lex):
            prov.setdefault(a, Provenance.TEXT)
    pooled = pool_scores(scores)
    for s in pooled:
        for a in extract_image_evidence(s, threshold):
            prov.setdefault(a, Provenance.IMAGE)
    constants = set(by_id) | {s.patient_id for s in pooled}
    return EvidenceDB(frozenset(prov), frozenset(constants), prov)


# ----------------------------------------------------------------- loaders

def load_emr_records(path) -> list[EmrRecord]:
    """Records from a directory of ``*.json`` / ``*.jsonl`` files or a single file."""
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix in (".json", ".jsonl")) if path.is_dir() else [path]
    records = []
    for p in files:
        text = p.read_text(encoding="utf-8")
        try:
            if p.suffix == ".jsonl":
                items = [json.loads(line) for line in text.splitlines() if line.strip()]
            else:
                data = json.loads(text)
                items = data if isinstance(data, list) else [data]
        except json.JSONDecodeError as exc:
            raise ExtractionError(f"{p}: {exc}") from None
        records.extend(EmrRecord.from_dict(d) for d in items)
    return records


def load_scores(path) -> list[PathologyScores]:
    """CSV with header ``patient_id,pathology,score``.

    A pathology repeated for one patient starts a new study; studies are
    max-pooled later by :func:`build_evidence_db`.
    """
    studies: dict[str, list[dict[str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"patient_id", "pathology", "score"} <= set(reader.fieldnames):
            raise ExtractionError(f"{path}: expected columns patient_id,pathology,score")
        for lineno, row in enumerate(reader, start=2):
            try:
                score = float(row["score"])
            except (TypeError, ValueError):
                raise ExtractionError(f"{path}:{lineno}: bad score {row['score']!r}") from None
            pid, name = row["patient_id"].strip(), row["pathology"].strip()
            bucket = studies.setdefault(pid, [])
            for study in bucket:
                if name not in study:
                    study[name] = score
                    break
            else:
                bucket.append({name: score})
    return [PathologyScores(pid, study) for pid in studies for study in studies[pid]]
