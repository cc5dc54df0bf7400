"""Command line entry point: ``nemforecast <stage> [--config PATH] [overrides]``.

Exit codes: 0 success, 1 some cells failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import date

from .errors import ConfigError, NemForecastError
from .experiment import STAGES, Experiment, ExperimentConfig

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("nemforecast")


def _csv(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _seeds(value: str) -> list[int]:
    try:
        return [int(v) for v in _csv(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nemforecast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults apply when omitted")
    common.add_argument("--setting", help="comma-separated settings, e.g. 24h,48h")
    common.add_argument("--regions", help="comma-separated regions, e.g. QLD,NSW")
    common.add_argument("--families", help="comma-separated model families")
    common.add_argument("--budget", type=int, help="cap on grid combinations per search")
    common.add_argument("--seeds", type=_seeds, help="comma-separated training seeds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="rerun stages even if up to date")

    fetch = sub.add_parser("fetch", parents=[common], help="download or generate raw prices")
    fetch.add_argument("--region", help="single region for a standalone fetch into the cache")
    fetch.add_argument("--start", type=date.fromisoformat)
    fetch.add_argument("--end", type=date.fromisoformat)
    fetch.add_argument("--cache", help="cache root (overrides NEMFORECAST_CACHE)")

    for stage in STAGES[1:]:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    sub.add_parser("run", parents=[common], help="run every stage end to end")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.setting:
        changes["settings"] = _csv(args.setting)
    if args.regions:
        changes["regions"] = _csv(args.regions)
    if args.families:
        changes["families"] = _csv(args.families)
    if args.budget is not None:
        changes["budget"] = args.budget
    if args.seeds:
        changes["training"] = {**cfg.training, "seeds": args.seeds}
    if args.out:
        changes["output_dir"] = args.out
    if getattr(args, "cache", None):
        changes["cache_dir"] = args.cache
    return cfg.with_(**changes) if changes else cfg


def _standalone_fetch(args) -> int:
    from .aemo import fetch_rrp

    if not (args.start and args.end):
        raise ConfigError("--region needs --start and --end")
    series = fetch_rrp(args.region, args.start, args.end, args.cache)
    print(f"{series.region.value}: {len(series)} intervals from {series.start.isoformat()}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fetch" and args.region:
            return _standalone_fetch(args)
        exp = Experiment(load_config(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NemForecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL

    stages = STAGES if args.command == "run" else (args.command,)
    exp.run(stages, force=args.force)
    failed = exp.ledger.failed(exp.hash)
    for r in failed:
        print(f"failed {r.stage} {r.key}: {r.error}", file=sys.stderr)
    print(f"config {exp.hash}: {len(failed)} failed cell(s); outputs in {exp.root}")
    return EXIT_PARTIAL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
