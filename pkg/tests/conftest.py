import datetime as dt
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from vaxcast.series_core import DatedSeries

START = dt.date(2021, 1, 1)


def series(values, name="value", start=START):
    return DatedSeries(start, np.asarray(values, dtype=float), name)


def simulate_arma(phi, theta, n, rng, mean=0.0, burn=500):
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    e = rng.standard_normal(n + burn)
    x = np.zeros(n + burn)
    for t in range(n + burn):
        acc = e[t]
        for i, f in enumerate(phi, start=1):
            if t - i >= 0:
                acc += f * x[t - i]
        for k, th in enumerate(theta, start=1):
            if t - k >= 0:
                acc += th * e[t - k]
        x[t] = acc
    return x[burn:] + mean


@pytest.fixture(scope="session")
def bundle_dir():
    return Path(str(resources.files("vaxcast").joinpath("data", "synthetic")))


@pytest.fixture(scope="session")
def golden_dir():
    return Path(__file__).parent / "golden"
