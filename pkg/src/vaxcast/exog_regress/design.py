"""Lagged design matrices built from the attitude signals."""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import DomainError, ParseError
from ..series_core import ONE_DAY, DatedSeries


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows of named regressors, one row per (not necessarily dense) date."""

    dates: tuple
    column_names: tuple
    rows: np.ndarray

    def __post_init__(self):
        dates = tuple(self.dates)
        names = tuple(self.column_names)
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2:
            raise DomainError("rows must be a 2-D array")
        if rows.shape[0] != len(dates):
            raise DomainError(f"{rows.shape[0]} rows but {len(dates)} dates")
        if rows.shape[1] != len(names) or not names:
            raise DomainError("column count must match column_names and be at least 1")
        if len(set(names)) != len(names):
            raise DomainError("duplicate column names")
        if not np.all(np.isfinite(rows)):
            raise DomainError("feature matrix has missing or non-finite cells")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise DomainError("dates must be strictly increasing")
        rows.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "rows", rows)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cols(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.n_rows

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.column_names == other.column_names
            and np.array_equal(self.rows, other.rows)
        )

    @property
    def is_dense(self) -> bool:
        return all((b - a).days == 1 for a, b in zip(self.dates, self.dates[1:]))

    def take(self, index) -> "FeatureMatrix":
        index = np.asarray(index)
        return FeatureMatrix(tuple(self.dates[i] for i in index), self.column_names, self.rows[index])

    def window(self, start=None, end=None) -> "FeatureMatrix":
        """Rows whose date lies in ``[start, end]``."""
        start = dt.date.fromisoformat(str(start)) if start is not None else None
        end = dt.date.fromisoformat(str(end)) if end is not None else None
        keep = [
            i for i, d in enumerate(self.dates)
            if (start is None or d >= start) and (end is None or d <= end)
        ]
        if not keep:
            raise DomainError(f"no feature rows between {start} and {end}")
        return self.take(keep)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.column_names.index(name)]

    def to_csv_text(self) -> str:
        lines = [",".join(("date",) + self.column_names)]
        for d, row in zip(self.dates, self.rows):
            lines.append(",".join([d.isoformat()] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0].strip().lower() != "date":
            raise ParseError("expected header starting with 'date'", path, 1)
        names = tuple(c.strip() for c in rows[0][1:])
        dates, data = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise ParseError(f"expected {len(names) + 1} fields, got {len(row)}", path, lineno)
            try:
                dates.append(dt.date.fromisoformat(row[0].strip()))
                data.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
        return cls(tuple(dates), names, np.array(data, dtype=float).reshape(len(dates), len(names)))


def _named(attitudes) -> list[DatedSeries]:
    if isinstance(attitudes, Mapping):
        return [s.rename(k) for k, s in attitudes.items()]
    return list(attitudes)


def build_features(attitudes: Sequence[DatedSeries] | Mapping, lag: int = 1, start=None, end=None) -> FeatureMatrix:
    """Each attitude at ``t`` followed by each attitude at ``t - lag``.

    Rows cover every date where all inputs are available, optionally
    clipped to ``[start, end]``.
    """
    series = _named(attitudes)
    if not series:
        raise DomainError("at least one attitude series is required")
    if lag < 0:
        raise DomainError("lag must be nonnegative")
    lo = max(s.start_date for s in series) + lag * ONE_DAY
    hi = min(s.end_date for s in series)
    if start is not None:
        lo = max(lo, dt.date.fromisoformat(str(start)))
    if end is not None:
        hi = min(hi, dt.date.fromisoformat(str(end)))
    if hi < lo:
        raise DomainError("attitude series do not overlap after lagging")
    n = (hi - lo).days + 1
    cols, names = [], []
    for s in series:
        i = s.index_of(lo)
        cols.append(s.values[i : i + n])
        names.append(s.name)
    if lag > 0:
        for s in series:
            i = s.index_of(lo) - lag
            cols.append(s.values[i : i + n])
            names.append(f"{s.name}_lag{lag}")
    dates = tuple(lo + k * ONE_DAY for k in range(n))
    rows = np.column_stack(cols)
    const = [nm for nm, c in zip(names, rows.T) if np.all(c == c[0])]
    if const:
        warnings.warn(f"constant feature columns: {', '.join(const)}", stacklevel=2)
    return FeatureMatrix(dates, tuple(names), rows)


def build_design(attitudes, target: DatedSeries, lag: int = 1) -> tuple[FeatureMatrix, DatedSeries]:
    """Design matrix and the target restricted to the same dates."""
    series = _named(attitudes)
    lo = max([s.start_date for s in series]) + lag * ONE_DAY
    lo = max(lo, target.start_date)
    hi = min([s.end_date for s in series] + [target.end_date])
    if hi < lo:
        raise DomainError("attitudes and target do not overlap after lagging")
    X = build_features(series, lag, lo, hi)
    return X, target.window(lo, hi)


def as_targets(y, X: FeatureMatrix) -> np.ndarray:
    """Target values aligned with ``X``; date-checked when ``y`` is a series."""
    if isinstance(y, DatedSeries):
        if len(y) != X.n_rows or (X.n_rows and y.start_date != X.dates[0]) or not X.is_dense:
            raise DomainError("target dates do not match the feature matrix")
        return y.values
    arr = np.asarray(y, dtype=float).reshape(-1)
    if arr.size != X.n_rows:
        raise DomainError(f"{arr.size} targets for {X.n_rows} feature rows")
    if not np.all(np.isfinite(arr)):
        raise DomainError("targets must be finite")
    return arr
