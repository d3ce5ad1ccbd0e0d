"""Daily series container, the dose-to-ratio transform and diagnostics.

The diagnostics here (ACF, PACF, ADF, Kendall's tau) are small enough to
write directly on numpy; each has an independent oracle in the test suite.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParseError

ONE_DAY = dt.timedelta(days=1)


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value))


@dataclass(frozen=True, eq=False)
class DatedSeries:
    """Dense daily series: ``values[i]`` is observed on ``start_date + i days``."""

    start_date: dt.date
    values: np.ndarray
    name: str = "value"

    def __post_init__(self):
        start = _as_date(self.start_date)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size < 1:
            raise DomainError(f"series {self.name!r} is empty")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise DomainError(
                f"series {self.name!r} has a non-finite value on {start + bad * ONE_DAY}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "start_date", start)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatedSeries):
            return NotImplemented
        return (
            self.start_date == other.start_date
            and self.name == other.name
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"DatedSeries({self.name!r}, {self.start_date}..{self.end_date}, n={len(self)})"

    @property
    def end_date(self) -> dt.date:
        return self.start_date + (len(self) - 1) * ONE_DAY

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + i * ONE_DAY for i in range(len(self))]

    def index_of(self, date) -> int:
        return (_as_date(date) - self.start_date).days

    def with_values(self, values, name: str | None = None) -> "DatedSeries":
        return DatedSeries(self.start_date, values, self.name if name is None else name)

    def rename(self, name: str) -> "DatedSeries":
        return DatedSeries(self.start_date, self.values, name)

    def window(self, start=None, end=None) -> "DatedSeries":
        """Sub-series between two dates, both inclusive."""
        lo = 0 if start is None else self.index_of(start)
        hi = len(self) - 1 if end is None else self.index_of(end)
        if lo < 0 or hi >= len(self) or lo > hi:
            raise DomainError(
                f"window {start}..{end} outside {self.start_date}..{self.end_date}"
            )
        return DatedSeries(self.start_date + lo * ONE_DAY, self.values[lo : hi + 1], self.name)

    def same_dates(self, other: "DatedSeries") -> bool:
        return self.start_date == other.start_date and len(self) == len(other)

    # CSV layout: header ``date,<name>``, one ISO date and decimal per row.
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())

    def to_csv_text(self) -> str:
        lines = [f"date,{self.name}"]
        for d, v in zip(self.dates, self.values):
            lines.append(f"{d.isoformat()},{float(v)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path, nonnegative: bool = False) -> "DatedSeries":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls.from_rows(rows, path=path, nonnegative=nonnegative)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[str]], path=None, nonnegative=False):
        if not rows:
            raise ParseError("empty file, header row expected", path, 1)
        header = [c.strip() for c in rows[0]]
        if len(header) != 2 or header[0].lower() != "date":
            raise ParseError(f"expected header 'date,<value>', got {','.join(header)!r}", path, 1)
        dates: list[dt.date] = []
        values: list[float] = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", path, lineno)
            try:
                d = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"bad date {row[0]!r}", path, lineno) from None
            try:
                v = float(row[1])
            except ValueError:
                raise ParseError(f"bad value {row[1]!r}", path, lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {row[1]!r}", path, lineno)
            if nonnegative and v < 0:
                raise ParseError(f"negative value {row[1]!r}", path, lineno)
            if dates:
                step = (d - dates[-1]).days
                if step == 0:
                    raise ParseError(f"duplicate date {d}", path, lineno)
                if step < 0:
                    raise ParseError(f"date {d} out of order", path, lineno)
                if step > 1:
                    raise DomainError(
                        f"{path or 'series'}: missing date {dates[-1] + ONE_DAY} (line {lineno})"
                    )
            dates.append(d)
            values.append(v)
        if not dates:
            raise ParseError("no data rows", path, 2)
        return cls(dates[0], values, header[1])


# --------------------------------------------------------------------------
# dose counts -> vaccination-to-expectation ratio


@dataclass(frozen=True)
class PopulationParams:
    """Population used to size the not-yet-vaccinated pool.

    ``adjustment`` selects how the temporary-resident share is applied:
    ``"divide"`` gives ``base / (1 - share)``, ``"multiply"`` gives
    ``base * (1 + share)``.
    """

    base_population: float
    temp_resident_share: float = 0.071
    cumulative_prior_doses: float = 0.0
    adjustment: str = "divide"

    def __post_init__(self):
        if not self.base_population > 0:
            raise DomainError("base_population must be positive")
        if not 0 <= self.temp_resident_share < 1:
            raise DomainError("temp_resident_share must lie in [0, 1)")
        if self.adjustment not in ("divide", "multiply"):
            raise DomainError(f"unknown adjustment {self.adjustment!r}")

    @property
    def eligible(self) -> float:
        if self.adjustment == "divide":
            return self.base_population / (1.0 - self.temp_resident_share)
        return self.base_population * (1.0 + self.temp_resident_share)


def _expected_pool(doses: np.ndarray, params: PopulationParams) -> np.ndarray:
    before = np.concatenate(([0.0], np.cumsum(doses)[:-1]))
    return params.eligible - params.cumulative_prior_doses - before


def to_ratio(doses: DatedSeries, params: PopulationParams) -> DatedSeries:
    """Daily first doses per hundred people still expected to be vaccinated."""
    d = doses.values
    if np.any(d < 0):
        raise DomainError("dose counts must be nonnegative")
    pool = _expected_pool(d, params)
    bad = np.flatnonzero(pool <= 0)
    if bad.size:
        day = doses.start_date + int(bad[0]) * ONE_DAY
        raise DomainError(f"expected pool exhausted on {day}")
    return doses.with_values(d / (pool / 100.0), name="ratio")


def from_ratio(ratio: DatedSeries, params: PopulationParams, name: str = "first_doses") -> DatedSeries:
    """Inverse of :func:`to_ratio`: rebuild dose counts from the ratio."""
    pool = params.eligible - params.cumulative_prior_doses
    out = np.empty(len(ratio))
    for i, r in enumerate(ratio.values):
        if pool <= 0:
            raise DomainError(f"expected pool exhausted on {ratio.start_date + i * ONE_DAY}")
        out[i] = r * pool / 100.0
        pool -= out[i]
    return ratio.with_values(out, name=name)


# --------------------------------------------------------------------------
# correlograms


def _centered(series) -> np.ndarray:
    x = np.asarray(series.values if isinstance(series, DatedSeries) else series, dtype=float)
    x = x - x.mean()
    if not np.any(x):
        raise DomainError("series is constant; autocorrelation undefined")
    return x


def autocovariance(series, max_lag: int) -> np.ndarray:
    x = _centered(series)
    n = x.size
    return np.array([x[k:] @ x[: n - k] / n for k in range(max_lag + 1)])


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations for lags ``0..max_lag`` (divide-by-n)."""
    if max_lag < 1:
        raise DomainError("max_lag must be positive")
    if len(series) <= max_lag:
        raise DomainError(f"need more than {max_lag} observations, got {len(series)}")
    x = _centered(series)
    # rescale first so tiny-valued series cannot underflow the variance
    g = autocovariance(x / np.abs(x).max(), max_lag)
    return g / g[0]


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelations for lags ``1..max_lag`` by Durbin-Levinson.

    Element ``k - 1`` of the result is the lag-``k`` coefficient.
    """
    if max_lag < 1:
        raise DomainError("max_lag must be positive")
    if len(series) <= max_lag + 1:
        raise DomainError(f"need more than {max_lag + 1} observations, got {len(series)}")
    r = acf(series, max_lag)
    out = np.empty(max_lag)
    phi = np.zeros(0)
    v = 1.0
    for k in range(1, max_lag + 1):
        a = (r[k] - phi @ r[k - 1 : 0 : -1]) / v if k > 1 else r[1]
        phi = np.concatenate((phi - a * phi[::-1], [a]))
        v *= 1.0 - a * a
        out[k - 1] = a
    return out


def significance_band(n: int, z: float = 1.96) -> float:
    """Half-width of the white-noise band for correlogram bars."""
    return z / math.sqrt(n)


# --------------------------------------------------------------------------
# augmented Dickey-Fuller


# Response-surface coefficients (MacKinnon 2010, constant, no trend, one
# regressor): crit(T) = b0 + b1/T + b2/T^2 + b3/T^3.
ADF_CONSTANT_CRITICAL = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.040),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}


def adf_critical_values(nobs: int) -> dict[str, float]:
    return {
        level: b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3
        for level, (b0, b1, b2, b3) in ADF_CONSTANT_CRITICAL.items()
    }


@dataclass(frozen=True)
class DiagnosticReport:
    statistic: float
    critical_values: dict
    level: str
    reject_unit_root: bool
    lag_order: int
    n_obs: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "critical_values": dict(self.critical_values),
            "level": self.level,
            "reject_unit_root": self.reject_unit_root,
            "lag_order": self.lag_order,
            "n_obs": self.n_obs,
        }


def adf_design(y: np.ndarray, lag_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressand and design of the ADF regression with a constant.

    Columns are ``[y_{t-1}, 1, dy_{t-1}, ..., dy_{t-k}]``.
    """
    y = np.asarray(y, dtype=float)
    dy = np.diff(y)
    k = lag_order
    target = dy[k:]
    cols = [y[k:-1], np.ones(target.size)]
    for i in range(1, k + 1):
        cols.append(dy[k - i : dy.size - i])
    return target, np.column_stack(cols)


def adf_test(series, lag_order: int = 0, level: str = "5%") -> DiagnosticReport:
    """Left-tailed unit-root test; the null is a unit root."""
    if level not in ADF_CONSTANT_CRITICAL:
        raise DomainError(f"level must be one of {sorted(ADF_CONSTANT_CRITICAL)}")
    if lag_order < 0:
        raise DomainError("lag_order must be nonnegative")
    y = np.asarray(series.values if isinstance(series, DatedSeries) else series, dtype=float)
    if y.size <= lag_order + 2:
        raise DomainError(f"series too short for lag order {lag_order}")
    target, X = adf_design(y, lag_order)
    n, k = X.shape
    if n <= k:
        raise DomainError("ADF regression has no residual degrees of freedom")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise DomainError("ADF regression is singular (constant series?)")
    beta = np.linalg.solve(R, Q.T @ target)
    resid = target - X @ beta
    s2 = resid @ resid / (n - k)
    Rinv = np.linalg.inv(R)
    se = math.sqrt(s2 * (Rinv[0] @ Rinv[0]))
    stat = beta[0] / se
    crit = adf_critical_values(n)
    return DiagnosticReport(
        statistic=float(stat),
        critical_values=crit,
        level=level,
        reject_unit_root=bool(stat < crit[level]),
        lag_order=lag_order,
        n_obs=n,
    )


# --------------------------------------------------------------------------
# Kendall's tau and trend segments


def kendall_tau(series) -> float:
    """Tau-b between time order and value (ties in value corrected)."""
    y = np.asarray(series.values if isinstance(series, DatedSeries) else series, dtype=float)
    n = y.size
    if n < 2:
        raise DomainError("kendall_tau needs at least two observations")
    # time index has no ties, so only the value ties enter the denominator
    s = np.sign(y[None, :] - y[:, None])
    iu = np.triu_indices(n, k=1)
    score = float(s[iu].sum())
    n0 = n * (n - 1) / 2
    _, counts = np.unique(y, return_counts=True)
    n1 = float((counts * (counts - 1) / 2).sum())
    if n1 == n0:
        raise DomainError("all values tied; tau undefined")
    return score / math.sqrt(n0 * (n0 - n1))


RISING, STEADY, FALLING = "Rising", "Steady", "Falling"


def trend_label(tau: float, steady_threshold: float = 0.1) -> str:
    if tau > steady_threshold:
        return RISING
    if tau < -steady_threshold:
        return FALLING
    return STEADY


@dataclass(frozen=True)
class TrendSegment:
    start: dt.date
    end: dt.date
    tau: float
    label: str


@dataclass(frozen=True)
class TrendReport:
    segments: list = field(default_factory=list)

    def rows(self) -> list[tuple]:
        return [(s.start, s.end, s.tau, s.label) for s in self.segments]


def segment_trend(series: DatedSeries, breakpoints: Iterable = (), steady_threshold: float = 0.1) -> TrendReport:
    """Kendall's tau per segment; each breakpoint date opens a new segment."""
    bps = [_as_date(b) for b in breakpoints]
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise DomainError("breakpoints must be strictly increasing")
    for b in bps:
        if not series.start_date < b <= series.end_date:
            raise DomainError(f"breakpoint {b} not inside {series.start_date}..{series.end_date}")
    starts = [series.start_date] + bps
    ends = [b - ONE_DAY for b in bps] + [series.end_date]
    segments = []
    for lo, hi in zip(starts, ends):
        part = series.window(lo, hi)
        if len(part) < 2:
            raise DomainError(f"segment {lo}..{hi} has fewer than two observations")
        tau = kendall_tau(part)
        segments.append(TrendSegment(lo, hi, tau, trend_label(tau, steady_threshold)))
    return TrendReport(segments)
