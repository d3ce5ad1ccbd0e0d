"""Train/holdout protocol, RMSE scoring and the model comparison tables."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import arima
from .errors import DomainError, VaxcastError
from .exog_regress import (
    BOOST_DEFAULTS,
    FOREST_DEFAULTS,
    FeatureMatrix,
    cross_validate,
    fit_boost,
    fit_lasso,
    fit_ols,
    fit_rf,
    lasso_lambda_grid,
    model_from_dict,
    predict,
)
from .exog_regress.validation import CvReport
from .series_core import DatedSeries
from .stacker import StackWeights, SvrParams, stack_ols, stack_predict, stack_svr

CLINICAL_MODELS = ("AR", "ARIMA")
WEB_MODELS = ("OLS", "LASSO", "Boost", "RandomForest")
STACKERS = ("OLS", "SVR")


def stack_label(stacker: str, clinical: str, web: str) -> str:
    return f"{stacker} [{clinical} + {web}]"


def combination_label(clinical: str, web: str) -> str:
    return f"{clinical} + {web}"


def combinations() -> list[tuple[str, str]]:
    """Clinical/web pairs in table order: web model outer, clinical inner."""
    return [(c, w) for w in WEB_MODELS for c in CLINICAL_MODELS]


def full_roster() -> list[str]:
    labels = list(CLINICAL_MODELS) + list(WEB_MODELS)
    for c, w in combinations():
        labels += [stack_label(s, c, w) for s in STACKERS]
    return labels


def parse_label(label: str):
    """``("base", name)`` or ``("stack", stacker, clinical, web)``."""
    if label in CLINICAL_MODELS or label in WEB_MODELS:
        return ("base", label)
    for s in STACKERS:
        for c, w in combinations():
            if label == stack_label(s, c, w):
                return ("stack", s, c, w)
    raise DomainError(f"unknown model label {label!r}")


# --------------------------------------------------------------------------
# scoring and splitting


def rmse(pred: DatedSeries, actual: DatedSeries) -> float:
    """Root-mean-square error over identical dates."""
    if not pred.same_dates(actual):
        raise DomainError(
            f"date mismatch: {pred.start_date}..{pred.end_date} vs {actual.start_date}..{actual.end_date}"
        )
    d = pred.values - actual.values
    return math.sqrt(float(d @ d) / d.size)


@dataclass(frozen=True)
class SplitSpec:
    train_len: int = 212
    test_len: int = 7

    def __post_init__(self):
        if self.train_len < 1 or self.test_len < 1:
            raise DomainError("train_len and test_len must be at least 1")


def holdout_split(obj, spec: SplitSpec = SplitSpec()):
    """First ``train_len`` rows for training, the next ``test_len`` for testing."""
    n = len(obj)
    if spec.train_len + spec.test_len > n:
        raise DomainError(f"{n} rows cannot hold a {spec.train_len}/{spec.test_len} split")
    a, b = spec.train_len, spec.train_len + spec.test_len
    if isinstance(obj, DatedSeries):
        return obj.window(obj.dates[0], obj.dates[a - 1]), obj.window(obj.dates[a], obj.dates[b - 1])
    if isinstance(obj, FeatureMatrix):
        return obj.take(np.arange(a)), obj.take(np.arange(a, b))
    raise DomainError(f"cannot split {type(obj).__name__}")


# --------------------------------------------------------------------------
# roster configuration and fitting


@dataclass
class RosterConfig:
    ar_order: int = 7
    p_candidates: tuple = arima.DEFAULT_P_CANDIDATES
    q_candidates: tuple = arima.DEFAULT_Q_CANDIDATES
    criterion: str = "parsimony"
    lasso_n_lambdas: int = 50
    lasso_ratio: float = 1e-4
    boost_grid: list = field(default_factory=lambda: [{}])
    forest_grid: list = field(default_factory=lambda: [{}])
    svr: SvrParams = field(default_factory=SvrParams)
    cv_folds: int = 10
    cv_shuffle: bool = False
    seed: int = 42
    n_jobs: int = 1


@dataclass
class FittedRoster:
    """Everything fitted on the training window."""

    train_target: DatedSeries
    clinical: dict = field(default_factory=dict)
    model_scores: list = field(default_factory=list)
    web: dict = field(default_factory=dict)
    cv: dict = field(default_factory=dict)
    stacks: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    labels: list = field(default_factory=list)

    def to_dict(self) -> dict:
        t = self.train_target
        return {
            "labels": list(self.labels),
            "train_target": {"start_date": t.start_date.isoformat(), "name": t.name,
                             "values": [float(v) for v in t.values]},
            "clinical": {k: f.to_dict() for k, f in self.clinical.items()},
            "web": {k: m.to_dict() for k, m in self.web.items()},
            "cv": {k: r.to_dict() for k, r in self.cv.items()},
            "stacks": {k: w.to_dict() for k, w in self.stacks.items()},
            "failures": dict(self.failures),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedRoster":
        t = d["train_target"]
        cv = {}
        for k, r in d.get("cv", {}).items():
            cv[k] = CvReport(r["grid"], np.array(r["fold_errors"], dtype=float), r["chosen"], r["folds"])
        return cls(
            train_target=DatedSeries(t["start_date"], t["values"], t["name"]),
            clinical={k: arima.ArimaFit.from_dict(v) for k, v in d.get("clinical", {}).items()},
            web={k: model_from_dict(v) for k, v in d.get("web", {}).items()},
            cv=cv,
            stacks={k: StackWeights.from_dict(v) for k, v in d.get("stacks", {}).items()},
            failures=dict(d.get("failures", {})),
            labels=list(d.get("labels", [])),
        )


def _needed(labels):
    clin, web, stacks = [], [], []
    for label in labels:
        kind = parse_label(label)
        if kind[0] == "base":
            (clin if kind[1] in CLINICAL_MODELS else web).append(kind[1])
        else:
            stacks.append(kind[1:])
            clin.append(kind[2])
            web.append(kind[3])
    order = lambda names, ref: [n for n in ref if n in names]
    return order(set(clin), CLINICAL_MODELS), order(set(web), WEB_MODELS), stacks


def _fit_clinical(name, target, cfg: RosterConfig):
    if name == "AR":
        return arima.fit_ar(target, cfg.ar_order), None
    fit, scores = arima.select_model(target, cfg.p_candidates, cfg.q_candidates, cfg.criterion, n_jobs=cfg.n_jobs)
    return fit, scores


def _fit_web(name, X, y, cfg: RosterConfig):
    seed = cfg.seed
    if name == "OLS":
        return fit_ols(X, y), None
    if name == "LASSO":
        grid = [{"lam": lam} for lam in lasso_lambda_grid(X, y, cfg.lasso_n_lambdas, cfg.lasso_ratio)]
        rep = cross_validate(X, y, fit_lasso, grid, cfg.cv_folds, seed, cfg.cv_shuffle)
        return fit_lasso(X, y, **rep.best_params), rep
    if name == "Boost":
        grid = [{**BOOST_DEFAULTS, **g, "seed": seed} for g in cfg.boost_grid]
        rep = cross_validate(X, y, fit_boost, grid, cfg.cv_folds, seed, cfg.cv_shuffle)
        return fit_boost(X, y, **rep.best_params), rep
    if name == "RandomForest":
        grid = [{**FOREST_DEFAULTS, **g, "seed": seed} for g in cfg.forest_grid]
        learner = lambda X_, y_, **kw: fit_rf(X_, y_, n_jobs=cfg.n_jobs, **kw)
        rep = cross_validate(X, y, learner, grid, cfg.cv_folds, seed, cfg.cv_shuffle)
        return fit_rf(X, y, n_jobs=cfg.n_jobs, **rep.best_params), rep
    raise DomainError(f"unknown web model {name!r}")


def _common_window(a: DatedSeries, b: DatedSeries):
    lo = max(a.start_date, b.start_date)
    hi = min(a.end_date, b.end_date)
    if hi < lo:
        raise DomainError("prediction streams do not overlap")
    return a.window(lo, hi), b.window(lo, hi)


def _failure(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def in_sample_streams(roster: FittedRoster, features: FeatureMatrix):
    """One-step clinical fits and web fits over the training window."""
    t = roster.train_target
    clin = {k: f.fitted() for k, f in roster.clinical.items()}
    Xtr = features.window(t.start_date, t.end_date)
    web = {k: predict(m, Xtr) for k, m in roster.web.items()}
    return clin, web


def fit_roster(train_target: DatedSeries, features: FeatureMatrix, cfg: RosterConfig = RosterConfig(), roster=None) -> FittedRoster:
    """Fit base models and stackers on the training window.

    Stackers are trained on the base models' in-sample predictions.  A
    failing model is recorded in ``failures`` and its dependants skipped.
    """
    labels = list(roster) if roster is not None else full_roster()
    if not labels:
        raise DomainError("model roster is empty")
    clin_names, web_names, stack_specs = _needed(labels)
    out = FittedRoster(train_target=train_target, labels=labels)

    for name in clin_names:
        try:
            fit, scores = _fit_clinical(name, train_target, cfg)
            out.clinical[name] = fit
            if scores is not None:
                out.model_scores = scores
        except (VaxcastError, np.linalg.LinAlgError, ValueError) as exc:
            out.failures[name] = _failure(exc)

    if web_names:
        try:
            Xtr = features.window(train_target.start_date, train_target.end_date)
            ytr = train_target.window(Xtr.dates[0], Xtr.dates[-1])
        except VaxcastError as exc:
            Xtr = None
            for name in web_names:
                out.failures[name] = _failure(exc)
        if Xtr is not None:
            for name in web_names:
                try:
                    model, rep = _fit_web(name, Xtr, ytr, cfg)
                    out.web[name] = model
                    if rep is not None:
                        out.cv[name] = rep
                except (VaxcastError, np.linalg.LinAlgError, ValueError) as exc:
                    out.failures[name] = _failure(exc)

    if stack_specs:
        clin_pred, web_pred = in_sample_streams(out, features)
        for stacker, c, w in stack_specs:
            label = stack_label(stacker, c, w)
            missing = [m for m in (c, w) if m in out.failures]
            if missing:
                out.failures[label] = f"base model failed: {', '.join(missing)}"
                continue
            try:
                cp, wp = _common_window(clin_pred[c], web_pred[w])
                act = train_target.window(cp.start_date, cp.end_date)
                if stacker == "OLS":
                    out.stacks[label] = stack_ols(act, cp, wp)
                else:
                    out.stacks[label] = stack_svr(act, cp, wp, cfg.svr)
            except (VaxcastError, np.linalg.LinAlgError, ValueError) as exc:
                out.failures[label] = _failure(exc)
    return out


# --------------------------------------------------------------------------
# evaluation


@dataclass
class EvalRow:
    label: str
    kind: str
    rmse: float
    status: str = "ok"


@dataclass
class EvalReport:
    rows: list
    best: str | None
    dates: list
    actual: np.ndarray
    predictions: dict
    roster: FittedRoster | None = None

    def row(self, label: str) -> EvalRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def best_of(self, kind: str) -> str | None:
        ok = [r for r in self.rows if r.kind == kind and r.status == "ok"]
        return min(ok, key=lambda r: r.rmse).label if ok else None

    # ---- machine-readable

    def rows_csv(self) -> str:
        buf = ["label,kind,rmse,status"]
        for r in self.rows:
            buf.append(f"{_csv(r.label)},{r.kind},{_num(r.rmse)},{_csv(r.status)}")
        return "\n".join(buf) + "\n"

    def single_csv(self) -> str:
        """Base models: one row each, RMSE under the data source column."""
        buf = ["model,clinical_data,web_data"]
        for r in self.rows:
            if r.kind == "clinical":
                buf.append(f"{r.label},{_num(r.rmse)},")
            elif r.kind == "web":
                buf.append(f"{r.label},,{_num(r.rmse)}")
        return "\n".join(buf) + "\n"

    def stacked_csv(self) -> str:
        """Stacked models: one row per pair, one column per stacker."""
        buf = ["combination," + ",".join(STACKERS)]
        present = {r.label: r for r in self.rows}
        for c, w in combinations():
            cells = []
            any_row = False
            for s in STACKERS:
                r = present.get(stack_label(s, c, w))
                any_row |= r is not None
                cells.append(_num(r.rmse) if r is not None else "")
            if any_row:
                buf.append(combination_label(c, w) + "," + ",".join(cells))
        return "\n".join(buf) + "\n"

    def forecast_csv(self, clinical_label: str = "ARIMA", stack: str | None = None) -> str:
        stack = stack if stack is not None else self.best_of("stacked")
        buf = ["date,actual,clinical,best_stack"]
        cp = self.predictions.get(clinical_label)
        sp = self.predictions.get(stack) if stack else None
        for i, d in enumerate(self.dates):
            cells = [d.isoformat(), _num(self.actual[i]),
                     _num(cp[i]) if cp is not None else "", _num(sp[i]) if sp is not None else ""]
            buf.append(",".join(cells))
        return "\n".join(buf) + "\n"

    def to_dict(self) -> dict:
        return {
            "best": self.best,
            "best_stack": self.best_of("stacked"),
            "rows": [{"label": r.label, "kind": r.kind, "rmse": _jnum(r.rmse), "status": r.status} for r in self.rows],
            "holdout": {
                "dates": [d.isoformat() for d in self.dates],
                "actual": [float(v) for v in self.actual],
                "predictions": {k: [float(v) for v in p] for k, p in self.predictions.items()},
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    # ---- human-readable

    def to_text(self) -> str:
        buf = io.StringIO()
        base = [r for r in self.rows if r.kind in ("clinical", "web")]
        if base:
            buf.write(f"{'':<14}{'Clinical Data':>15}{'Web Data':>12}\n")
            for r in base:
                val = _fmt(r)
                left, right = (val, "") if r.kind == "clinical" else ("", val)
                buf.write(f"{r.label:<14}{left:>15}{right:>12}\n")
            buf.write("\n")
        stacked = {r.label: r for r in self.rows if r.kind == "stacked"}
        if stacked:
            buf.write(f"{'':<24}" + "".join(f"{s:>10}" for s in STACKERS) + "\n")
            for c, w in combinations():
                cells = [stacked.get(stack_label(s, c, w)) for s in STACKERS]
                if any(cells):
                    buf.write(f"{combination_label(c, w):<24}" + "".join(f"{_fmt(x) if x else '':>10}" for x in cells) + "\n")
            buf.write("\n")
        buf.write(f"best: {self.best}\n")
        return buf.getvalue()


def _num(x) -> str:
    return "" if x is None or not math.isfinite(x) else repr(float(x))


def _jnum(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _csv(s: str) -> str:
    return '"' + s.replace('"', '""') + '"' if ("," in s or '"' in s) else s


def _fmt(r: EvalRow) -> str:
    return f"{r.rmse:.4f}" if r.status == "ok" else "failed"


def holdout_predictions(roster: FittedRoster, test_target: DatedSeries, features: FeatureMatrix | None):
    """Holdout predictions per label, plus a failure message per label."""
    h = len(test_target)
    preds, failures = {}, {}
    clin, web = {}, {}
    for name, fit in roster.clinical.items():
        try:
            fc = arima.forecast(fit, h)
            if not fc.same_dates(test_target):
                raise DomainError("holdout does not directly follow the training window")
            clin[name] = fc
        except VaxcastError as exc:
            failures[name] = _failure(exc)
    for name, model in roster.web.items():
        try:
            X = features.window(test_target.start_date, test_target.end_date)
            p = predict(model, X)
            if not p.same_dates(test_target):
                raise DomainError("web features do not cover every holdout date")
            web[name] = p
        except (VaxcastError, AttributeError) as exc:
            failures[name] = _failure(exc)
    for label in roster.labels:
        kind = parse_label(label)
        if label in roster.failures:
            failures.setdefault(label, roster.failures[label])
            continue
        if kind[0] == "base":
            src = clin if kind[1] in CLINICAL_MODELS else web
            if kind[1] in src:
                preds[label] = src[kind[1]]
            continue
        _, s, c, w = kind
        if c in clin and w in web and label in roster.stacks:
            preds[label] = stack_predict(roster.stacks[label], clin[c], web[w])
        else:
            failures.setdefault(label, "base model prediction unavailable")
    return preds, failures


def evaluate_roster(roster: FittedRoster, test_target: DatedSeries, features: FeatureMatrix | None) -> EvalReport:
    preds, failures = holdout_predictions(roster, test_target, features)
    rows = []
    for label in roster.labels:
        kind = parse_label(label)
        k = "stacked" if kind[0] == "stack" else ("clinical" if kind[1] in CLINICAL_MODELS else "web")
        if label in preds:
            rows.append(EvalRow(label, k, rmse(preds[label], test_target)))
        else:
            rows.append(EvalRow(label, k, float("nan"), "failed: " + failures.get(label, "unknown")))
    ok = [r for r in rows if r.status == "ok"]
    best = min(ok, key=lambda r: r.rmse).label if ok else None
    return EvalReport(
        rows=rows,
        best=best,
        dates=test_target.dates,
        actual=test_target.values.copy(),
        predictions={k: v.values.copy() for k, v in preds.items()},
        roster=roster,
    )


def compare_models(series: DatedSeries, features: FeatureMatrix, roster=None, spec: SplitSpec = SplitSpec(), cfg: RosterConfig = RosterConfig()) -> EvalReport:
    """Fit on the training window, forecast the holdout, score every model."""
    train, test = holdout_split(series, spec)
    fitted = fit_roster(train, features, cfg, roster)
    return evaluate_roster(fitted, test, features)
