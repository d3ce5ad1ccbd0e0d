"""Generator for the bundled synthetic 219-day dataset.

Writes a clinical dose file, nine search-trend batches (four queries plus
the reference each, integer-rounded with ``<1`` censoring), the category
map and a pipeline config.  Run ``python3 -m vaxcast.synthetic OUTDIR``.
"""

from __future__ import annotations

import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from .ingest import REFERENCE_QUERY, CategoryMap
from .series_core import ONE_DAY, DatedSeries, PopulationParams, from_ratio

START = dt.date(2020, 12, 21)
N_DAYS = 219
BREAKS = (dt.date(2021, 4, 6), dt.date(2021, 7, 1))
POPULATION = PopulationParams(base_population=332_000_000.0)
QUERIES_PER_BATCH = 4


def ratio_path(rng: np.random.Generator) -> np.ndarray:
    """Rising, steady, rising level with weekly swings and AR(1) noise."""
    t = np.arange(N_DAYS)
    b1 = (BREAKS[0] - START).days
    b2 = (BREAKS[1] - START).days
    level = np.empty(N_DAYS)
    level[:b1] = np.linspace(0.40, 0.70, b1)
    level[b1:b2] = 0.70
    level[b2:] = 0.70 + 0.004 * np.arange(1, N_DAYS - b2 + 1)
    weekly = 0.06 * np.sin(2 * np.pi * t / 7) + 0.02 * np.cos(4 * np.pi * t / 7)
    e = rng.normal(0, 0.02, N_DAYS)
    noise = np.empty(N_DAYS)
    noise[0] = e[0]
    for i in range(1, N_DAYS):
        noise[i] = 0.5 * noise[i - 1] + e[i]
    return level + weekly + noise


def attitude_totals(ratio: np.ndarray, rng: np.random.Generator) -> dict:
    """Category totals on the common scale; positive interest tracks uptake."""
    pt = 2.0 + 10.0 * ratio + rng.normal(0, 0.4, N_DAYS)
    nt = 9.0 + 4.0 * np.sin(np.arange(N_DAYS) / 20.0) + 3.0 * (ratio - 0.6) + rng.normal(0, 0.5, N_DAYS)
    ng = 1.4 - 0.8 * (ratio - 0.6) + rng.normal(0, 0.1, N_DAYS)
    return {"pt": np.maximum(pt, 0.2), "nt": np.maximum(nt, 0.2), "ng": np.maximum(ng, 0.05)}


def trend_batches(totals: dict, cat_map: CategoryMap, rng: np.random.Generator) -> list:
    """Split totals over member queries, batch them, rescale each to max 100."""
    series = {}
    for cat, labels in cat_map.categories.items():
        share = rng.dirichlet(np.full(len(labels), 8.0))
        for lab, s in zip(labels, share):
            series[lab] = totals[cat] * s * rng.lognormal(0, 0.05, N_DAYS)
    joker = 6.0 + 1.5 * np.sin(np.arange(N_DAYS) / 9.0) + rng.normal(0, 0.3, N_DAYS)
    labels = list(series)
    order = rng.permutation(len(labels))
    batches = []
    for b in range(len(labels) // QUERIES_PER_BATCH):
        names = [labels[i] for i in order[b * QUERIES_PER_BATCH : (b + 1) * QUERIES_PER_BATCH]]
        block = np.column_stack([series[n] for n in names] + [joker])
        # each export is relative to its own peak, as Trends reports it
        block = np.rint(block * (100.0 / block.max()))
        batches.append((names + [REFERENCE_QUERY], block))
    return batches


def _cell(v: float) -> str:
    return "<1" if v < 1 else str(int(v))


def default_config() -> dict:
    return {
        "seed": 42,
        "inputs": {
            "clinical": "clinical.csv",
            "trends": [f"trends_{b:02d}.csv" for b in range(1, 10)],
            "category_map": "category_map.json",
        },
        "population": {
            "base_population": POPULATION.base_population,
            "temp_resident_share": POPULATION.temp_resident_share,
            "cumulative_prior_doses": 0.0,
            "adjustment": "divide",
        },
        "lag": 1,
        "split": {"train_len": 212, "test_len": 7},
        "arima": {"ar_order": 7, "p_candidates": [1, 3, 5, 6, 7], "q_candidates": [8, 15, 21, 28], "criterion": "parsimony"},
        "lasso": {"n_lambdas": 50, "ratio": 1e-4},
        "boost_grid": [{"max_depth": 1}, {"max_depth": 2}, {"max_depth": 3}],
        "forest_grid": [{"min_leaf": 10}, {"min_leaf": 5}],
        "cv": {"folds": 10, "shuffle": False},
        "svr": {"epsilon": 0.01, "lambda": 1.0, "penalize_intercept": True},
        "trend_breakpoints": [d.isoformat() for d in BREAKS],
        "forecast": {"horizon": 7, "stack": "best"},
        "roster": None,
        "n_jobs": 1,
    }


def generate(outdir, seed: int = 42) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    cat_map = CategoryMap.load()
    ratio = DatedSeries(START, ratio_path(rng), "ratio")
    doses = from_ratio(ratio, POPULATION)
    doses = doses.with_values(np.rint(doses.values))
    doses.to_csv(out / "clinical.csv")
    for k, (names, block) in enumerate(trend_batches(attitude_totals(ratio.values, rng), cat_map, rng), start=1):
        lines = ["date," + ",".join(names)]
        for i, row in enumerate(block):
            lines.append((START + i * ONE_DAY).isoformat() + "," + ",".join(_cell(v) for v in row))
        (out / f"trends_{k:02d}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "category_map.json").write_text(json.dumps(cat_map.to_dict(), indent=2) + "\n", encoding="utf-8")
    cfg = default_config()
    cfg["seed"] = seed
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    generate(sys.argv[1] if len(sys.argv) > 1 else ".", int(sys.argv[2]) if len(sys.argv) > 2 else 42)
