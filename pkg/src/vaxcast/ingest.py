"""Offline data preparation: clinical exports, search-trend batches, keywords."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .series_core import ONE_DAY, DatedSeries

REFERENCE_QUERY = "Joker"
MAX_BATCH_COLUMNS = 5
CENSORED = "<1"
CENSORED_VALUE = 0.5
CATEGORIES = ("pt", "nt", "ng")
CATEGORY_SIZE = 12


def _data_path(name: str):
    return resources.files("vaxcast").joinpath("data", name)


def parse_clinical_csv(path) -> DatedSeries:
    """Daily first doses from a ``date,first_doses`` file."""
    path = Path(path)
    if not path.is_file():
        raise ParseError("file not found", path)
    s = DatedSeries.from_csv(path, nonnegative=True)
    if s.name != "first_doses":
        raise ParseError(f"expected header 'date,first_doses', got 'date,{s.name}'", path, 1)
    return s


# --------------------------------------------------------------------------
# search-trend batches


@dataclass(frozen=True)
class TrendsBatch:
    """One Trends export: up to five queries, one of them the reference.

    ``cells[i][j]`` is row ``i`` (date ``start_date + i``) of column ``j``;
    a cell is a float or the raw text it was read as (e.g. ``"<1"``).
    """

    start_date: dt.date
    column_names: tuple
    cells: tuple
    reference_name: str = REFERENCE_QUERY
    path: str | None = None
    repairs: int = 0

    def __post_init__(self):
        names = tuple(self.column_names)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "cells", tuple(tuple(r) for r in self.cells))
        if len(names) > MAX_BATCH_COLUMNS:
            raise DomainError(f"a batch holds at most {MAX_BATCH_COLUMNS} queries, got {len(names)}")
        if len(set(names)) != len(names):
            raise DomainError("duplicate query names in batch")
        if names.count(self.reference_name) != 1:
            raise DomainError(f"batch must contain exactly one {self.reference_name!r} column")
        if not self.cells:
            raise DomainError("batch has no rows")
        if any(len(r) != len(names) for r in self.cells):
            raise DomainError("ragged batch rows")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def dates(self) -> list:
        return [self.start_date + i * ONE_DAY for i in range(len(self.cells))]

    @property
    def queries(self) -> tuple:
        return tuple(n for n in self.column_names if n != self.reference_name)

    @property
    def values(self) -> np.ndarray:
        bad = [(i, j) for i, r in enumerate(self.cells) for j, c in enumerate(r) if isinstance(c, str)]
        if bad:
            i, j = bad[0]
            raise DomainError(
                f"{len(bad)} unrepaired cells, first {self.cells[i][j]!r} in column "
                f"{self.column_names[j]!r} on {self.start_date + i * ONE_DAY}"
            )
        return np.array(self.cells, dtype=float).reshape(len(self.cells), len(self.column_names))

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]


def _cell(text: str):
    t = text.strip()
    try:
        v = float(t)
    except ValueError:
        return t
    return v if math.isfinite(v) else t


def parse_trends_csv(path, reference_name: str = REFERENCE_QUERY) -> TrendsBatch:
    """Read ``date,<q1>,...,<qk>,Joker``; censored cells are kept as text."""
    path = Path(path)
    if not path.is_file():
        raise ParseError("file not found", path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip().lower() != "date":
        raise ParseError("expected header starting with 'date'", path, 1)
    names = tuple(c.strip() for c in rows[0][1:])
    start, prev, cells = None, None, []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(names) + 1:
            raise ParseError(f"expected {len(names) + 1} fields, got {len(row)}", path, lineno)
        try:
            d = dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise ParseError(f"bad date {row[0]!r}", path, lineno) from None
        if prev is not None:
            step = (d - prev).days
            if step < 1:
                raise ParseError(f"date {d} duplicated or out of order", path, lineno)
            if step > 1:
                raise DomainError(f"{path}: missing date {prev + ONE_DAY} (line {lineno})")
        start = start or d
        prev = d
        cells.append(tuple(_cell(c) for c in row[1:]))
    if not cells:
        raise ParseError("no data rows", path, 2)
    try:
        return TrendsBatch(start, names, tuple(cells), reference_name, str(path))
    except DomainError as exc:
        raise ParseError(str(exc), path, 1) from None


def repair_censoring(batch: TrendsBatch) -> TrendsBatch:
    """Replace every ``"<1"`` cell with 0.5; the count goes to ``repairs``."""
    out, n = [], 0
    for i, row in enumerate(batch.cells):
        new = []
        for j, c in enumerate(row):
            if isinstance(c, str):
                if c != CENSORED:
                    raise ParseError(
                        f"unparseable cell {c!r} in column {batch.column_names[j]!r}", batch.path, i + 2
                    )
                c = CENSORED_VALUE
                n += 1
            elif c < 0:
                raise ParseError(f"negative cell {c!r} in column {batch.column_names[j]!r}", batch.path, i + 2)
            new.append(c)
        out.append(tuple(new))
    return replace(batch, cells=tuple(out), repairs=batch.repairs + n)


def standardize_batches(batches) -> dict:
    """Put every batch on the scale of the first via the reference query.

    Batch ``b`` is multiplied by ``mean(ref in batch 1) / mean(ref in b)``;
    reference columns are dropped.  Returns query label -> series, in batch
    and column order.
    """
    batches = list(batches)
    if not batches:
        raise DomainError("no trend batches given")
    first = batches[0]
    anchor = None
    out = {}
    for k, b in enumerate(batches, start=1):
        if b.start_date != first.start_date or len(b) != len(first):
            raise DomainError(f"batch {k} covers {b.dates[0]}..{b.dates[-1]}, batch 1 covers {first.dates[0]}..{first.dates[-1]}")
        vals = b.values
        ref = float(np.mean(vals[:, b.column_names.index(b.reference_name)]))
        if not ref > 0:
            raise DomainError(f"batch {k}: reference {b.reference_name!r} has zero mean")
        if anchor is None:
            anchor = ref
        factor = anchor / ref
        for j, name in enumerate(b.column_names):
            if name == b.reference_name:
                continue
            if name in out:
                raise DomainError(f"query {name!r} appears in more than one batch")
            out[name] = DatedSeries(b.start_date, vals[:, j] * factor, name)
    return out


# --------------------------------------------------------------------------
# attitude categories


@dataclass(frozen=True)
class CategoryMap:
    """Attitude category -> the twelve query labels summed into it."""

    categories: dict = field(default_factory=dict)

    def __post_init__(self):
        cats = {k: tuple(v) for k, v in self.categories.items()}
        object.__setattr__(self, "categories", cats)
        if tuple(cats) != CATEGORIES:
            raise DomainError(f"categories must be {', '.join(CATEGORIES)} in that order")
        seen = {}
        for k, labels in cats.items():
            if len(labels) != CATEGORY_SIZE:
                raise DomainError(f"category {k!r} has {len(labels)} labels, expected {CATEGORY_SIZE}")
            for lab in labels:
                if lab in seen:
                    raise DomainError(f"label {lab!r} is in both {seen[lab]!r} and {k!r}")
                seen[lab] = k

    @property
    def labels(self) -> list:
        return [lab for v in self.categories.values() for lab in v]

    def to_dict(self) -> dict:
        return {"version": 1, "categories": {k: list(v) for k, v in self.categories.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "CategoryMap":
        return cls(d["categories"])

    @classmethod
    def load(cls, path=None) -> "CategoryMap":
        """Read a JSON map; without ``path`` the bundled default is used."""
        try:
            if path is None:
                text = _data_path("category_map.json").read_text(encoding="utf-8")
            else:
                text = Path(path).read_text(encoding="utf-8")
            return cls.from_dict(json.loads(text))
        except FileNotFoundError:
            raise ParseError("file not found", path) from None
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad category map: {exc}", path) from None


def aggregate_categories(standardized: dict, cat_map: CategoryMap):
    """Per-date sums of each category's members, returned as (pt, nt, ng)."""
    missing = [lab for lab in cat_map.labels if lab not in standardized]
    if missing:
        raise DomainError(f"query {missing[0]!r} missing from the standardized data")
    out = []
    for cat, labels in cat_map.categories.items():
        first = standardized[labels[0]]
        acc = first.values.copy()
        for lab in labels[1:]:
            s = standardized[lab]
            if not s.same_dates(first):
                raise DomainError(f"query {lab!r} covers different dates than {labels[0]!r}")
            acc = acc + s.values
        out.append(DatedSeries(first.start_date, acc, cat))
    return tuple(out)


# --------------------------------------------------------------------------
# corpus keywords

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_TOKEN = re.compile(r"[^\W_]+")


def load_stopwords(path=None) -> frozenset:
    if path is None:
        text = _data_path("stopwords_en.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def tokenize(text: str) -> list:
    """Lowercase alphanumeric runs; URLs removed, sigils fall away."""
    text = unicodedata.normalize("NFC", _URL.sub(" ", text)).lower()
    return _TOKEN.findall(text)


def _is_number(tok: str) -> bool:
    return all(unicodedata.category(ch).startswith("N") for ch in tok)


@dataclass(frozen=True)
class KeywordTable:
    rows: tuple
    total_tokens: int = 0
    invalid_documents: int = 0

    def __post_init__(self):
        rows = tuple((str(t), int(f)) for t, f in self.rows)
        object.__setattr__(self, "rows", rows)
        if any(f < 2 for _, f in rows):
            raise DomainError("keyword frequencies must be at least 2")
        if list(rows) != sorted(rows, key=lambda r: (-r[1], r[0])):
            raise DomainError("keyword rows must be sorted by frequency then token")

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv_text(self) -> str:
        buf = ["token,frequency"]
        buf += [f"{t},{f}" for t, f in self.rows]
        return "\n".join(buf) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())


def _decode(doc):
    if isinstance(doc, bytes):
        try:
            return doc.decode("utf-8"), False
        except UnicodeDecodeError:
            return doc.decode("utf-8", errors="replace"), True
    try:
        doc.encode("utf-8")
        return doc, False
    except UnicodeEncodeError:
        return doc.encode("utf-8", errors="replace").decode("utf-8"), True


def corpus_keywords(documents, stopwords=None, min_count: int = 2) -> KeywordTable:
    """Frequency table of content words mentioned at least twice.

    Documents may be ``str`` or ``bytes``; invalid UTF-8 is replaced and
    counted in ``invalid_documents``.
    """
    stop = load_stopwords() if stopwords is None else frozenset(w.lower() for w in stopwords)
    counts, total, invalid = Counter(), 0, 0
    for doc in documents:
        text, bad = _decode(doc)
        invalid += bad
        toks = tokenize(text)
        total += len(toks)
        counts.update(t for t in toks if t not in stop and not _is_number(t))
    rows = sorted(((t, c) for t, c in counts.items() if c >= min_count), key=lambda r: (-r[1], r[0]))
    return KeywordTable(tuple(rows), total, invalid)


def read_corpus(path) -> list:
    """One document per line, read as bytes so bad encodings can be counted."""
    path = Path(path)
    if not path.is_file():
        raise ParseError("file not found", path)
    return [line.rstrip(b"\r\n") for line in path.read_bytes().splitlines()]
