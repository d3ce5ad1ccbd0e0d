"""Pipeline configuration: one JSON file plus ``--set key=value`` overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from ..arima import DEFAULT_P_CANDIDATES, DEFAULT_Q_CANDIDATES
from ..errors import DomainError, ParseError
from ..evaluate import RosterConfig, SplitSpec, full_roster, parse_label
from ..series_core import PopulationParams
from ..stacker import SvrParams

DEFAULTS = {
    "seed": None,
    "inputs": {"clinical": None, "trends": [], "category_map": None, "corpus": None},
    "population": {"base_population": 332_000_000.0, "temp_resident_share": 0.071,
                   "cumulative_prior_doses": 0.0, "adjustment": "divide"},
    "lag": 1,
    "split": {"train_len": 212, "test_len": 7},
    "arima": {"ar_order": 7, "p_candidates": list(DEFAULT_P_CANDIDATES),
              "q_candidates": list(DEFAULT_Q_CANDIDATES), "criterion": "parsimony"},
    "lasso": {"n_lambdas": 50, "ratio": 1e-4},
    "boost_grid": [{}],
    "forest_grid": [{}],
    "cv": {"folds": 10, "shuffle": False},
    "svr": {"epsilon": 0.1, "lambda": 1.0, "penalize_intercept": True},
    "trend_breakpoints": [],
    "forecast": {"horizon": 7, "stack": "best"},
    "roster": None,
    "n_jobs": 1,
    "out": "out",
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(raw: dict, assignment: str) -> None:
    """``a.b.c=value``; the value is read as JSON, else kept as a string."""
    key, sep, text = assignment.partition("=")
    if not sep or not key.strip():
        raise DomainError(f"--set expects key=value, got {assignment!r}")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = raw
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path=None, overrides=(), seed=None, out=None) -> "PipelineConfig":
        raw, base = {}, Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ParseError("config file not found", path)
            try:
                raw = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc.msg}", path, exc.lineno) from None
            base = path.resolve().parent
        raw = _merge(DEFAULTS, raw)
        for a in overrides:
            apply_override(raw, a)
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            raw["out"] = str(Path(out).resolve())
        cfg = cls(raw, base)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        seed = self.raw.get("seed")
        if seed is None:
            raise DomainError("a seed is required (config 'seed' or --seed)")
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        # constructing these runs their own checks
        self.population, self.split, self.roster_config()
        if self.roster is not None:
            if not self.roster:
                raise DomainError("model roster is empty")
            for label in self.roster:
                parse_label(label)

    def path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def input_path(self, key: str) -> Path:
        value = self.raw["inputs"].get(key)
        if not value:
            raise DomainError(f"config inputs.{key} is not set")
        p = self.path(value)
        if not p.is_file():
            raise ParseError("file not found", p)
        return p

    def trend_paths(self) -> list:
        paths = [self.path(v) for v in self.raw["inputs"].get("trends") or []]
        if not paths:
            raise DomainError("config inputs.trends is empty")
        for p in paths:
            if not p.is_file():
                raise ParseError("file not found", p)
        return paths

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out_dir(self) -> Path:
        return self.path(self.raw["out"])

    @property
    def population(self) -> PopulationParams:
        return PopulationParams(**self.raw["population"])

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(**self.raw["split"])

    @property
    def lag(self) -> int:
        return int(self.raw["lag"])

    @property
    def roster(self):
        r = self.raw.get("roster")
        return None if r is None else list(r)

    @property
    def labels(self) -> list:
        return self.roster if self.roster is not None else full_roster()

    def svr_params(self) -> SvrParams:
        return SvrParams.from_dict(self.raw["svr"])

    def roster_config(self) -> RosterConfig:
        a, lasso, cv = self.raw["arima"], self.raw["lasso"], self.raw["cv"]
        return RosterConfig(
            ar_order=int(a["ar_order"]),
            p_candidates=tuple(a["p_candidates"]),
            q_candidates=tuple(a["q_candidates"]),
            criterion=a["criterion"],
            lasso_n_lambdas=int(lasso["n_lambdas"]),
            lasso_ratio=float(lasso["ratio"]),
            boost_grid=list(self.raw["boost_grid"]),
            forest_grid=list(self.raw["forest_grid"]),
            svr=self.svr_params(),
            cv_folds=int(cv["folds"]),
            cv_shuffle=bool(cv["shuffle"]),
            seed=self.seed,
            n_jobs=int(self.raw["n_jobs"]),
        )
