import datetime as dt
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.tsa.stattools import acf as sm_acf
from statsmodels.tsa.stattools import pacf as sm_pacf

from vaxcast.errors import DomainError, ParseError
from vaxcast.series_core import (
    FALLING,
    RISING,
    STEADY,
    DatedSeries,
    PopulationParams,
    acf,
    adf_design,
    adf_test,
    from_ratio,
    kendall_tau,
    pacf,
    segment_trend,
    significance_band,
    to_ratio,
    trend_label,
)

from conftest import series, simulate_arma

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_dated_series_rejects_nan_and_empty():
    with pytest.raises(DomainError):
        series([1.0, float("nan")])
    with pytest.raises(DomainError):
        series([])


def test_dates_are_dense():
    s = series([1, 2, 3])
    assert s.dates == [dt.date(2021, 1, 1), dt.date(2021, 1, 2), dt.date(2021, 1, 3)]
    assert s.end_date == dt.date(2021, 1, 3)


def test_csv_round_trip(tmp_path):
    s = series([0.1, 2.0 / 3.0, 1e-17], name="x")
    p = tmp_path / "s.csv"
    s.to_csv(p)
    assert DatedSeries.from_csv(p) == s


def test_csv_gap_names_missing_date(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("date,x\n2021-01-01,1\n2021-01-03,2\n")
    with pytest.raises(DomainError, match="2021-01-02"):
        DatedSeries.from_csv(p)


def test_csv_bad_row_cites_line(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("date,x\n2021-01-01,1\n2021-01-02,abc\n")
    with pytest.raises(ParseError, match=":3:"):
        DatedSeries.from_csv(p)


# ---- ratio


def test_ratio_single_day():
    params = PopulationParams(10_000 * (1 - 0.071))
    r = to_ratio(series([100.0]), params)
    assert r.values[0] == pytest.approx(1.0, abs=1e-12)


def test_ratio_zero_doses():
    r = to_ratio(series([0, 0, 0]), PopulationParams(1e6))
    assert np.all(r.values == 0)


def test_ratio_running_denominator():
    params = PopulationParams(10_000, temp_resident_share=0.0)
    r = to_ratio(series([50, 50]), params)
    assert r.values[0] == pytest.approx(0.5, abs=1e-12)
    assert r.values[1] == pytest.approx(50 / 99.5, abs=1e-12)


def test_ratio_adjustments():
    assert PopulationParams(1000, 0.071).eligible == pytest.approx(1000 / 0.929)
    assert PopulationParams(1000, 0.071, adjustment="multiply").eligible == pytest.approx(1071)


def test_ratio_exhausted_pool_names_date():
    with pytest.raises(DomainError, match="2021-01-02"):
        to_ratio(series([100, 100]), PopulationParams(100, 0.0))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1e5), min_size=1, max_size=60))
def test_ratio_inverse_round_trip(doses):
    params = PopulationParams(1e8, cumulative_prior_doses=1e6)
    s = series(doses, name="first_doses")
    back = from_ratio(to_ratio(s, params), params)
    assert np.allclose(back.values, s.values, rtol=1e-9, atol=1e-9 * max(1.0, max(doses)))


# ---- correlograms


def test_acf_lag0_is_one():
    rng = np.random.default_rng(1)
    assert acf(series(rng.standard_normal(50)), 5)[0] == 1.0


def test_acf_white_noise():
    rng = np.random.default_rng(7)
    n = 5000
    a = acf(series(rng.standard_normal(n)), 20)
    assert np.all(np.abs(a[1:]) < 3 / math.sqrt(n))


def test_acf_pacf_ar1():
    rng = np.random.default_rng(11)
    x = series(simulate_arma([0.5], [], 10_000, rng))
    a = acf(x, 5)
    for k in range(1, 6):
        assert abs(a[k] - 0.5**k) < 0.03
    p = pacf(x, 6)
    assert abs(p[0] - 0.5) < 0.03
    assert np.all(np.abs(p[1:]) < 0.03)


def test_pacf_ar2():
    rng = np.random.default_rng(12)
    p = pacf(series(simulate_arma([0.4, 0.3], [], 10_000, rng)), 3)
    assert abs(p[1] - 0.3) < 0.03


def test_correlograms_match_statsmodels():
    rng = np.random.default_rng(3)
    x = simulate_arma([0.6, -0.2], [0.3], 400, rng)
    assert np.allclose(acf(series(x), 15), sm_acf(x, nlags=15, fft=False), atol=1e-12)
    assert np.allclose(pacf(series(x), 15), sm_pacf(x, nlags=15, method="ldb")[1:], atol=1e-10)


def test_significance_band():
    assert significance_band(400) == pytest.approx(1.96 / 20)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(finite, min_size=8, max_size=40),
    st.floats(0.01, 100) | st.floats(-100, -0.01),
    st.floats(-100, 100),
)
def test_correlograms_affine_invariant(vals, a, b):
    x = np.array(vals)
    if np.ptp(x) < 1e-3 * max(1.0, np.abs(x).max()):
        return
    s, t = series(x), series(a * x + b)
    assert np.allclose(acf(s, 5), acf(t, 5), atol=1e-10)
    assert np.allclose(pacf(s, 5), pacf(t, 5), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.lists(finite, min_size=4, max_size=40))
def test_pacf1_equals_acf1(vals):
    x = np.array(vals)
    if np.ptp(x) == 0:
        return
    s = series(x)
    assert pacf(s, 1)[0] == acf(s, 1)[1]


# ---- ADF


def _ols_t(y, X):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    s2 = r @ r / (len(y) - X.shape[1])
    cov = s2 * np.linalg.inv(X.T @ X)
    return beta[0] / math.sqrt(cov[0, 0])


@pytest.mark.parametrize("lag", [0, 1, 3])
def test_adf_statistic_matches_ols_oracle(lag):
    rng = np.random.default_rng(5)
    x = np.cumsum(rng.standard_normal(300)) * 0.3 + simulate_arma([0.4], [], 300, rng)
    y, X = adf_design(x, lag)
    rep = adf_test(series(x), lag)
    assert rep.statistic == pytest.approx(_ols_t(y, X), abs=1e-8)


def test_adf_matches_statsmodels():
    from statsmodels.tsa.stattools import adfuller

    rng = np.random.default_rng(9)
    x = simulate_arma([0.7], [], 250, rng)
    ref = adfuller(x, maxlag=2, regression="c", autolag=None)
    rep = adf_test(series(x), 2)
    assert rep.statistic == pytest.approx(ref[0], abs=1e-9)
    for k in ("1%", "5%", "10%"):
        assert rep.critical_values[k] == pytest.approx(ref[4][k], abs=1e-3)


def test_adf_report_fields():
    rng = np.random.default_rng(0)
    rep = adf_test(series(rng.standard_normal(200)), level="1%")
    assert rep.reject_unit_root
    assert rep.level == "1%"
    assert set(rep.to_dict()) >= {"statistic", "critical_values", "reject_unit_root"}


# ---- Kendall / trends


def _brute_tau_b(x):
    nc = nd = tx = 0
    n = len(x)
    for i, j in itertools.combinations(range(n), 2):
        s = np.sign(x[j] - x[i])
        if s > 0:
            nc += 1
        elif s < 0:
            nd += 1
        else:
            tx += 1
    n0 = n * (n - 1) / 2
    return (nc - nd) / math.sqrt(n0 * (n0 - tx))


def test_kendall_examples():
    assert kendall_tau(series([1, 2, 3, 4])) == 1.0
    assert kendall_tau(series([4, 3, 2, 1])) == -1.0
    assert kendall_tau(series([1, 3, 2, 4])) == pytest.approx(4 / 6, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=2, max_size=30))
def test_kendall_matches_brute_force_with_ties(vals):
    x = np.array(vals, dtype=float)
    if np.ptp(x) == 0:
        return
    assert kendall_tau(series(x)) == pytest.approx(_brute_tau_b(x), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(finite, min_size=2, max_size=30, unique=True))
def test_kendall_monotone_transform_invariant(vals):
    x = np.array(vals)
    y = np.arctan(x / 300.0) * 7 + 3
    if len(np.unique(y)) != len(y):
        return
    assert kendall_tau(series(x)) == kendall_tau(series(y))


def test_trend_labels_with_injected_tau():
    assert [trend_label(t) for t in (0.6960, -0.0326, 0.4530)] == [RISING, STEADY, RISING]
    assert trend_label(-0.5) == FALLING


def test_segment_trend_rise_then_flat():
    rng = np.random.default_rng(2)
    x = np.concatenate([np.linspace(0, 5, 30), 5 + 0.01 * rng.standard_normal(30)])
    s = series(x)
    rep = segment_trend(s, [s.dates[30]])
    assert [seg.label for seg in rep.segments] == [RISING, STEADY]
    assert rep.segments[0].end == s.dates[29]


def test_segment_trend_no_breakpoints():
    s = series(np.arange(10.0))
    rep = segment_trend(s)
    assert len(rep.segments) == 1
    assert (rep.segments[0].start, rep.segments[0].end) == (s.start_date, s.end_date)
