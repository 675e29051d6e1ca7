"""
Response ingestion and scoring.

Raw answer sheets hold one option symbol per item. Scoring maps the keyed
option to 1 and everything else (wrong option, "I don't know", blank,
multiple boxes checked) to 0.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from .exceptions import ConfigurationError, ParseError, AnalysisError

OPTIONS = ("A", "B", "C", "D")
NON_ANSWERS = ("IDK", "BLANK", "MULTI")
SYMBOLS = OPTIONS + NON_ANSWERS
PROFILE_CATEGORIES = ("1", "2", "3", "4") + NON_ANSWERS

GRADES = ("G3", "G4", "MIXED")
GENDERS = ("F", "M", "UNDISCLOSED")

_GRADE_TOKENS = {"3": "G3", "g3": "G3", "4": "G4", "g4": "G4", "mixed": "MIXED"}
_GENDER_TOKENS = {"f": "F", "m": "M", "na": "UNDISCLOSED", "undisclosed": "UNDISCLOSED"}
_SYMBOL_TOKENS = {s.lower(): s for s in SYMBOLS}
_SYMBOL_TOKENS[""] = "BLANK"


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RawResponseTable:
    """Unscored answer sheets: one row per student, one option symbol per item."""

    student_ids: tuple
    grades: tuple
    genders: tuple
    answers: np.ndarray  # (N, J) array of symbols from SYMBOLS
    item_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "answers", _frozen(np.asarray(self.answers, dtype=object)))
        n = len(self.student_ids)
        if self.answers.shape != (n, len(self.item_ids)):
            raise ConfigurationError(
                f"answers shape {self.answers.shape} does not match "
                f"{n} students x {len(self.item_ids)} items"
            )
        if len(set(self.student_ids)) != n:
            raise ConfigurationError("student ids are not unique")

    @property
    def n(self):
        return len(self.student_ids)


@dataclass(frozen=True)
class AnswerKey:
    """Keyed option and error-profile map for each item.

    ``profiles[item][option]`` is the error profile (1-4) attached to an
    option; profile 4 always denotes the correct answer.
    """

    correct: dict
    profiles: dict = field(default_factory=dict)

    def __post_init__(self):
        for item, opt in self.correct.items():
            if opt not in OPTIONS:
                raise ConfigurationError(f"item {item}: keyed option {opt!r} is not one of {OPTIONS}")
        for item, pmap in self.profiles.items():
            if sorted(pmap) != list(OPTIONS) or sorted(pmap.values()) != [1, 2, 3, 4]:
                raise ConfigurationError(f"item {item}: profiles must be a permutation of 1..4 over A-D")
            keyed = [o for o, p in pmap.items() if p == 4]
            if keyed != [self.correct.get(item)]:
                raise ConfigurationError(
                    f"item {item}: profile 4 sits on {keyed[0]} but the keyed option is {self.correct.get(item)}"
                )

    @property
    def item_ids(self):
        return tuple(sorted(self.correct))


@dataclass(frozen=True)
class FactorSpec:
    """Ordered partition of the items into latent factors."""

    factors: tuple  # tuple of (name, tuple of item ids)

    def __post_init__(self):
        facs = tuple((str(name), tuple(int(i) for i in items)) for name, items in self.factors)
        object.__setattr__(self, "factors", facs)
        seen = set()
        for name, items in facs:
            for i in items:
                if i in seen:
                    raise ConfigurationError(f"item {i} is assigned to more than one factor")
                seen.add(i)

    @classmethod
    def from_mapping(cls, mapping):
        return cls(tuple((name, tuple(items)) for name, items in mapping.items()))

    @property
    def names(self):
        return tuple(name for name, _ in self.factors)

    @property
    def items(self):
        return tuple(i for _, items in self.factors for i in items)

    @property
    def n_factors(self):
        return len(self.factors)

    def factor_of(self, item):
        for k, (_, items) in enumerate(self.factors):
            if item in items:
                return k
        raise KeyError(item)

    def to_mapping(self):
        return {name: list(items) for name, items in self.factors}

    def without(self, removed):
        """Drop items; factors left empty are dropped entirely."""
        removed = set(removed)
        kept = []
        for name, items in self.factors:
            left = tuple(i for i in items if i not in removed)
            if left:
                kept.append((name, left))
        return FactorSpec(tuple(kept))

    def restricted_to(self, item_ids):
        keep = set(item_ids)
        return self.without([i for i in self.items if i not in keep])

    def check_partition(self, item_ids):
        mine, theirs = set(self.items), set(item_ids)
        if mine != theirs:
            extra = sorted(mine - theirs)
            orphan = sorted(theirs - mine)
            raise ConfigurationError(
                f"factor structure does not partition the items "
                f"(unknown items {extra}, unassigned items {orphan})"
            )

    def check_identified(self):
        small = [name for name, items in self.factors if len(items) < 2]
        if small:
            raise ConfigurationError(f"factors with fewer than 2 items cannot be identified: {small}")


@dataclass(frozen=True, eq=False)
class ScoredMatrix:
    """Binary N x J response matrix with per-row demographics.

    Instances are immutable; the underlying array is read-only.
    """

    data: np.ndarray
    student_ids: tuple
    item_ids: tuple
    grades: tuple = None
    genders: tuple = None
    spec: FactorSpec = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ConfigurationError("response matrix must be 2-dimensional")
        if data.size and not np.isin(data, (0, 1)).all():
            raise ConfigurationError("response matrix must be strictly binary")
        object.__setattr__(self, "data", _frozen(data.astype(np.int8)))
        n, j = data.shape
        object.__setattr__(self, "student_ids", tuple(self.student_ids))
        object.__setattr__(self, "item_ids", tuple(int(i) for i in self.item_ids))
        if len(self.student_ids) != n or len(self.item_ids) != j:
            raise ConfigurationError("row/column labels do not match the matrix shape")
        if self.grades is None:
            object.__setattr__(self, "grades", ("MIXED",) * n)
        if self.genders is None:
            object.__setattr__(self, "genders", ("UNDISCLOSED",) * n)
        object.__setattr__(self, "grades", tuple(self.grades))
        object.__setattr__(self, "genders", tuple(self.genders))
        if self.spec is not None:
            self.spec.check_partition(self.item_ids)

    @classmethod
    def from_array(cls, data, item_ids=None, spec=None, grades=None, genders=None):
        data = np.asarray(data)
        if item_ids is None:
            item_ids = range(1, data.shape[1] + 1)
        ids = tuple(f"s{r + 1}" for r in range(data.shape[0]))
        return cls(data, ids, tuple(item_ids), grades, genders, spec)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def j(self):
        return self.data.shape[1]

    @property
    def totals(self):
        return self.data.sum(axis=1)

    def column(self, item):
        return self.data[:, self.item_ids.index(item)]

    def with_spec(self, spec):
        return ScoredMatrix(self.data, self.student_ids, self.item_ids, self.grades, self.genders, spec)

    def select_items(self, items):
        """Keep the listed items (in the given order); the factor spec is restricted accordingly."""
        items = tuple(int(i) for i in items)
        cols = [self.item_ids.index(i) for i in items]
        spec = self.spec.restricted_to(items) if self.spec is not None else None
        return ScoredMatrix(self.data[:, cols], self.student_ids, items, self.grades, self.genders, spec)

    def take_rows(self, rows):
        rows = np.asarray(rows)
        return ScoredMatrix(
            self.data[rows],
            tuple(self.student_ids[r] for r in rows),
            self.item_ids,
            tuple(self.grades[r] for r in rows),
            tuple(self.genders[r] for r in rows),
            self.spec,
        )

    def require_analyzable(self):
        if self.n < 2 or self.j < 2:
            raise AnalysisError(f"analysis needs N >= 2 and J >= 2, got N={self.n}, J={self.j}")


def score_cell(cell, correct):
    """Score one answer: 1 iff it is the keyed option, 0 for anything else in the alphabet."""
    if cell not in SYMBOLS:
        raise ParseError(f"unrecognized answer symbol {cell!r}")
    return int(cell == correct)


def _normalize(token, table, what, line, column):
    try:
        return table[token.strip().lower()]
    except KeyError:
        raise ParseError(f"invalid {what} {token!r}", line=line, column=column) from None


def parse_responses(stream, mode=None):
    """Read a responses CSV.

    The header is ``student_id,grade,gender,q1,...,qJ``. With
    ``mode="raw_options"`` answer cells are option symbols and a
    :class:`RawResponseTable` is returned; with ``mode="prescored"`` they
    are 0/1 and a :class:`ScoredMatrix` is returned. ``mode=None`` picks
    prescored when every answer cell is 0 or 1. An empty cell in raw mode
    counts as BLANK.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("missing header row", line=1) from None
    if header[:3] != ["student_id", "grade", "gender"] or len(header) < 4:
        raise ParseError("header must start with student_id,grade,gender followed by item columns", line=1)
    item_cols = header[3:]
    item_ids = []
    for col in item_cols:
        if not (col[:1].lower() == "q" and col[1:].isdigit()):
            raise ParseError(f"item column {col!r} must look like q<number>", line=1, column=col)
        item_ids.append(int(col[1:]))
    if len(set(item_ids)) != len(item_ids):
        raise ParseError("duplicate item columns", line=1)

    ids, grades, genders, cells, lines = [], [], [], [], []
    seen = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
        sid = row[0].strip()
        if sid in seen:
            raise ParseError(f"duplicate student id {sid!r} (first seen on line {seen[sid]})", line=lineno)
        seen[sid] = lineno
        ids.append(sid)
        grades.append(_normalize(row[1], _GRADE_TOKENS, "grade", lineno, "grade"))
        genders.append(_normalize(row[2], _GENDER_TOKENS, "gender", lineno, "gender"))
        cells.append([c.strip() for c in row[3:]])
        lines.append(lineno)

    if mode is None:
        flat = [c for r in cells for c in r]
        mode = "prescored" if flat and all(c in ("0", "1") for c in flat) else "raw_options"
    if mode not in ("raw_options", "prescored"):
        raise ConfigurationError(f"unknown parse mode {mode!r}")

    j = len(item_ids)
    if mode == "prescored":
        data = np.zeros((len(cells), j), dtype=np.int8)
        for r, (row, lineno) in enumerate(zip(cells, lines)):
            for c, tok in enumerate(row):
                if tok not in ("0", "1"):
                    raise ParseError(f"prescored cell {tok!r} is not 0 or 1", line=lineno, column=item_cols[c])
                data[r, c] = tok == "1"
        return ScoredMatrix(data, tuple(ids), tuple(item_ids), tuple(grades), tuple(genders))

    answers = np.empty((len(cells), j), dtype=object)
    for r, (row, lineno) in enumerate(zip(cells, lines)):
        for c, tok in enumerate(row):
            answers[r, c] = _normalize(tok, _SYMBOL_TOKENS, "answer symbol", lineno, item_cols[c])
    return RawResponseTable(tuple(ids), tuple(grades), tuple(genders), answers, tuple(item_ids))


def read_responses(path, mode=None):
    with open(path, newline="") as fh:
        return parse_responses(fh, mode)


def parse_key(stream):
    """Read ``item,correct,profile_a,profile_b,profile_c,profile_d``."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    expected = ["item", "correct", "profile_a", "profile_b", "profile_c", "profile_d"]
    if [h.strip() for h in (reader.fieldnames or [])] != expected:
        raise ParseError(f"key header must be {','.join(expected)}", line=1)
    correct, profiles = {}, {}
    for lineno, row in enumerate(reader, start=2):
        try:
            item = int(row["item"])
            pmap = {o: int(row[f"profile_{o.lower()}"]) for o in OPTIONS}
        except (TypeError, ValueError):
            raise ParseError("non-integer item or profile", line=lineno) from None
        if item in correct:
            raise ParseError(f"duplicate item {item}", line=lineno)
        correct[item] = row["correct"].strip().upper()
        profiles[item] = pmap
    return AnswerKey(correct, profiles)


def read_key(path):
    with open(path, newline="") as fh:
        return parse_key(fh)


def read_factors(path):
    """Read a JSON object mapping factor name to a list of item ids (order preserved)."""
    with open(path) as fh:
        mapping = json.load(fh)
    if not isinstance(mapping, dict):
        raise ParseError("factors file must hold a JSON object")
    return FactorSpec.from_mapping(mapping)


def _data_file(name):
    return resources.files("psychfit").joinpath("data", name)


def default_key():
    """Answer key and error profiles of the 25-item test."""
    return parse_key(_data_file("cctt_key.csv").read_text())


def default_factor_spec():
    """Six concept blocks: sequences, simple loops, complex loops, conditionals, while, combinations."""
    mapping = json.loads(_data_file("cctt_factors.json").read_text())
    return FactorSpec.from_mapping(mapping)


def build_dataset(raw, key, spec):
    """Score a raw table against ``key`` and attach ``spec``.

    A :class:`ScoredMatrix` passes through unchanged apart from the spec.
    """
    if isinstance(raw, ScoredMatrix):
        spec.check_partition(raw.item_ids)
        return raw if raw.spec == spec else raw.with_spec(spec)
    missing = [i for i in raw.item_ids if i not in key.correct]
    if missing:
        raise ConfigurationError(f"answer key does not cover items {missing}")
    spec.check_partition(raw.item_ids)
    keyed = np.array([key.correct[i] for i in raw.item_ids], dtype=object)
    data = (raw.answers == keyed[None, :]).astype(np.int8)
    return ScoredMatrix(data, raw.student_ids, raw.item_ids, raw.grades, raw.genders, spec)


def subset(ds, predicate: Callable[[str, str], bool]):
    """Rows whose (grade, gender) satisfy ``predicate``."""
    rows = [r for r, (g, s) in enumerate(zip(ds.grades, ds.genders)) if predicate(g, s)]
    if len(rows) < 2:
        raise AnalysisError(f"subset too small: {len(rows)} rows")
    return ds.take_rows(rows)


def grade_subset(ds, grade):
    """Students of one grade. Mixed-grade classes belong to neither G3 nor G4."""
    if grade not in GRADES:
        raise ConfigurationError(f"unknown grade {grade!r}")
    return subset(ds, lambda g, _: g == grade)


SUBSET_FILTERS = {
    "all": lambda g, s: True,
    "g3": lambda g, s: g == "G3",
    "g4": lambda g, s: g == "G4",
    "mixed": lambda g, s: g == "MIXED",
}


@dataclass(frozen=True, eq=False)
class ProfileCounts:
    item_ids: tuple
    categories: tuple
    counts: np.ndarray  # (J, 7)

    def for_item(self, item):
        row = self.counts[self.item_ids.index(item)]
        return dict(zip(self.categories, (int(v) for v in row)))


def profile_distribution(raw, key):
    """Tally, per item, how many students picked an option of each error profile."""
    counts = np.zeros((len(raw.item_ids), len(PROFILE_CATEGORIES)), dtype=np.int64)
    col_of = {c: k for k, c in enumerate(PROFILE_CATEGORIES)}
    for c, item in enumerate(raw.item_ids):
        pmap = key.profiles.get(item)
        if pmap is None:
            raise ConfigurationError(f"answer key has no profile map for item {item}")
        for sym, n in zip(*np.unique(raw.answers[:, c].astype(str), return_counts=True)):
            cat = str(pmap[sym]) if sym in OPTIONS else sym
            counts[c, col_of[cat]] += n
    return ProfileCounts(raw.item_ids, PROFILE_CATEGORIES, _frozen(counts))
