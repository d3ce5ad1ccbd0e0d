"""Command-line entry point: ``vaxcast {prep,fit,evaluate,forecast,keywords}``.

Exit codes: 0 success, 1 partial (some models failed), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import EstimationError, VaxcastError
from .commands import cmd_evaluate, cmd_fit, cmd_forecast, cmd_keywords, cmd_prep
from .config import PipelineConfig

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT = 0, 1, 2


def _global_flags(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--config", default=s, help="pipeline JSON config")
    p.add_argument("--seed", type=int, default=s, help="random seed (overrides config)")
    p.add_argument("--out", default=s, help="output directory (overrides config)")
    p.add_argument("--set", action="append", default=s, metavar="KEY=VALUE",
                   help="override a config entry, dotted keys, JSON values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vaxcast", description="Clinical + web-search vaccination forecasting pipeline.")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("prep", help="build ratio.csv and features.csv")
    _global_flags(p)
    p = sub.add_parser("fit", help="fit base models and stackers")
    _global_flags(p)
    p.add_argument("--which", choices=("clinical", "web", "all"), default="all")
    p = sub.add_parser("evaluate", help="score the roster on the holdout")
    _global_flags(p)
    p = sub.add_parser("forecast", help="stacked point forecasts")
    _global_flags(p)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--clinical-only", action="store_true", help="ARIMA forecast without web features")
    p = sub.add_parser("keywords", help="keyword frequency table of a corpus")
    _global_flags(p)
    p.add_argument("--corpus", default=None, help="text file, one document per line")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.load(
            getattr(args, "config", None),
            getattr(args, "set", None) or (),
            getattr(args, "seed", None),
            getattr(args, "out", None),
        )
        if args.command == "prep":
            return cmd_prep(cfg)
        if args.command == "fit":
            return cmd_fit(cfg, args.which)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "forecast":
            return cmd_forecast(cfg, args.horizon, args.clinical_only)
        return cmd_keywords(cfg, args.corpus)
    except EstimationError as exc:
        print(f"vaxcast: error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except (VaxcastError, OSError, KeyError, TypeError) as exc:
        print(f"vaxcast: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
