"""Pipeline stages.  Each returns an exit code: 0 ok, 1 partial failure."""

from __future__ import annotations

import json
import re
from pathlib import Path

from .. import arima, ingest
from ..errors import DomainError, ParseError
from ..evaluate import (
    CLINICAL_MODELS,
    FittedRoster,
    evaluate_roster,
    fit_roster,
    holdout_split,
    parse_label,
)
from ..exog_regress import FeatureMatrix, build_features, predict
from ..series_core import DatedSeries, segment_trend, to_ratio
from ..stacker import CLINICAL_ONLY, stack_predict
from .config import PipelineConfig

RATIO_FILE = "ratio.csv"
FEATURES_FILE = "features.csv"
ROSTER_FILE = "roster.json"
EVAL_FILE = "evaluation.json"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _num(x) -> str:
    return repr(float(x)) if x == x else ""


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


def _require(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise ParseError(f"missing, run '{stage}' first", path)
    return path


def _inputs(cfg: PipelineConfig):
    out = cfg.out_dir
    ratio = DatedSeries.from_csv(_require(out / RATIO_FILE, "prep"))
    features = FeatureMatrix.from_csv(_require(out / FEATURES_FILE, "prep"))
    return ratio, features


def cmd_prep(cfg: PipelineConfig, log=print) -> int:
    doses = ingest.parse_clinical_csv(cfg.input_path("clinical"))
    ratio = to_ratio(doses, cfg.population)
    batches = [ingest.repair_censoring(ingest.parse_trends_csv(p)) for p in cfg.trend_paths()]
    cat_map = ingest.CategoryMap.load(cfg.input_path("category_map") if cfg.raw["inputs"].get("category_map") else None)
    attitudes = ingest.aggregate_categories(ingest.standardize_batches(batches), cat_map)
    features = build_features(attitudes, cfg.lag)
    out = cfg.out_dir
    _write(out / RATIO_FILE, ratio.to_csv_text())
    _write(out / FEATURES_FILE, features.to_csv_text())
    log(f"censored cells repaired: {sum(b.repairs for b in batches)}")
    log(f"ratio: {len(ratio)} days {ratio.start_date}..{ratio.end_date}")
    log(f"features: {features.n_rows} rows {features.dates[0]}..{features.dates[-1]} (lag {cfg.lag})")
    return 0


def _score_rows(scores) -> str:
    buf = ["model,dof,log_likelihood,aic,bic,status"]
    for s in scores:
        status = "ok" if s.ok else "failed: " + s.error.replace(",", ";").replace("\n", " ")
        buf.append(f"{s.spec},{s.dof},{_num(s.log_likelihood)},{_num(s.aic)},{_num(s.bic)},{status}")
    return "\n".join(buf) + "\n"


WHICH = {
    "clinical": lambda label: parse_label(label) in [("base", c) for c in CLINICAL_MODELS],
    "web": lambda label: parse_label(label)[0] == "base" and parse_label(label)[1] not in CLINICAL_MODELS,
    "all": lambda label: True,
}


def cmd_fit(cfg: PipelineConfig, which: str = "all", log=print) -> int:
    ratio, features = _inputs(cfg)
    labels = [lab for lab in cfg.labels if WHICH[which](lab)]
    if not labels:
        raise DomainError(f"no roster members selected by '{which}'")
    train, _ = holdout_split(ratio, cfg.split)
    rc = cfg.roster_config()
    roster = fit_roster(train, features, rc, labels)
    out = cfg.out_dir
    _write(out / ROSTER_FILE, _dump(roster.to_dict()))
    for name, fit in roster.clinical.items():
        _write(out / "models" / f"{_slug(name)}.json", _dump(fit.to_dict()))
    for name, model in roster.web.items():
        _write(out / "models" / f"{_slug(name)}.json", _dump(model.to_dict()))
    for label, w in roster.stacks.items():
        _write(out / "models" / f"{_slug(label)}.json", _dump(w.to_dict()))
    if "ARIMA" in labels:
        if not roster.model_scores:
            # selection failed outright; still list the grid
            roster.model_scores = [arima.ModelScore(arima.ArimaSpec(p, 0, q), float("nan"), float("nan"), p + q + 2,
                                                    error="not fitted")
                                   for p in rc.p_candidates for q in rc.q_candidates]
        _write(out / "model_scores.csv", _score_rows(roster.model_scores))
    _write(out / "fit_failures.json", _dump(roster.failures))
    n_ok = len(labels) - len(roster.failures)
    log(f"fitted {n_ok}/{len(labels)} models")
    if "ARIMA" in roster.clinical:
        log(f"selected {roster.clinical['ARIMA'].spec}")
    for label, msg in roster.failures.items():
        log(f"failed {label}: {msg}")
    return 1 if roster.failures else 0


def _load_roster(cfg: PipelineConfig) -> FittedRoster:
    path = _require(cfg.out_dir / ROSTER_FILE, "fit")
    return FittedRoster.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _trend_csv(report) -> str:
    buf = ["start,end,tau,label"]
    for start, end, tau, label in report.rows():
        buf.append(f"{start.isoformat()},{end.isoformat()},{_num(tau)},{label}")
    return "\n".join(buf) + "\n"


def cmd_evaluate(cfg: PipelineConfig, log=print) -> int:
    ratio, features = _inputs(cfg)
    roster = _load_roster(cfg)
    train, test = holdout_split(ratio, cfg.split)
    if train != roster.train_target:
        raise DomainError("fitted models were trained on a different window; rerun 'fit'")
    report = evaluate_roster(roster, test, features)
    out = cfg.out_dir
    _write(out / "rmse_single.csv", report.single_csv())
    _write(out / "rmse_stacked.csv", report.stacked_csv())
    _write(out / "rmse_all.csv", report.rows_csv())
    clinical = "ARIMA" if "ARIMA" in report.predictions else next(
        (c for c in CLINICAL_MODELS if c in report.predictions), "ARIMA")
    _write(out / "forecast_7day.csv", report.forecast_csv(clinical))
    _write(out / "trend_segments.csv", _trend_csv(segment_trend(ratio, cfg.raw.get("trend_breakpoints") or ())))
    _write(out / EVAL_FILE, report.to_json())
    log(report.to_text().rstrip())
    failed = [r for r in report.rows if r.status != "ok"]
    return 1 if failed else 0


def _stack_label(cfg: PipelineConfig) -> str:
    label = cfg.raw["forecast"].get("stack", "best")
    if label != "best":
        return label
    path = _require(cfg.out_dir / EVAL_FILE, "evaluate")
    best = json.loads(path.read_text(encoding="utf-8")).get("best_stack")
    if best is None:
        raise DomainError("evaluation has no successful stacked model")
    return best


def cmd_forecast(cfg: PipelineConfig, horizon=None, clinical_only: bool = False, log=print) -> int:
    h = int(cfg.raw["forecast"].get("horizon", 7) if horizon is None else horizon)
    if h < 0:
        raise DomainError("horizon must be nonnegative")
    out = cfg.out_dir / "forecast.csv"
    header = "date,clinical,web,forecast\n"
    if h == 0:
        _write(out, header)
        log("horizon 0: nothing to forecast")
        return 0
    roster = _load_roster(cfg)
    if clinical_only:
        clin_name, web_name, weights = "ARIMA", None, CLINICAL_ONLY
    else:
        label = _stack_label(cfg)
        kind = parse_label(label)
        if kind[0] != "stack":
            raise DomainError(f"{label!r} is not a stacked model")
        _, _, clin_name, web_name = kind
        if label not in roster.stacks:
            raise DomainError(f"no fitted weights for {label!r}")
        weights = roster.stacks[label]
    if clin_name not in roster.clinical:
        raise DomainError(f"no fitted {clin_name} model")
    clin = arima.forecast(roster.clinical[clin_name], h)
    if web_name is None:
        web = None
        stacked = stack_predict(weights, clin, clin.with_values(clin.values * 0.0))
    else:
        _, features = _inputs(cfg)
        have = set(features.dates)
        missing = [d for d in clin.dates if d not in have]
        if missing:
            raise DomainError("web features missing for " + ", ".join(d.isoformat() for d in missing))
        web = predict(roster.web[web_name], features.window(clin.start_date, clin.end_date))
        stacked = stack_predict(weights, clin, web)
    buf = [header.rstrip("\n")]
    for i, d in enumerate(clin.dates):
        w = _num(web.values[i]) if web is not None else ""
        buf.append(f"{d.isoformat()},{_num(clin.values[i])},{w},{_num(stacked.values[i])}")
    _write(out, "\n".join(buf) + "\n")
    log(f"{h}-day forecast written to {out}")
    return 0


def cmd_keywords(cfg: PipelineConfig, corpus=None, log=print) -> int:
    path = Path(corpus) if corpus is not None else cfg.input_path("corpus")
    table = ingest.corpus_keywords(ingest.read_corpus(path))
    out = cfg.out_dir / "keywords.csv"
    _write(out, table.to_csv_text())
    log(f"{len(table)} keywords from {table.total_tokens} tokens; {table.invalid_documents} documents had invalid encoding")
    return 0
