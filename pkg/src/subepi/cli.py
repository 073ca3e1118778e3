"""Command-line entry point: ``subepi <command> [options]``."""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from pathlib import Path

from . import __version__
from .bootstrap import BootstrapConfig
from .errors import ParameterError, SubepiError
from .harness import ALL_MODELS, HarnessConfig, forecast_origin, run_protocol
from .io import emit_reports, file_checksum, fmt, ingest, load_artifact, parse_week, save_artifact, write_series_csv
from .synthetic import simulate_regions

log = logging.getLogger("subepi")

DEFAULT_ORIGIN_START = "2022-03-05"
DEFAULT_ORIGIN_END = "2024-09-14"


def _add_run_options(p: argparse.ArgumentParser, seed_required: bool) -> None:
    p.add_argument("--data", required=True, help="snapshot CSV (week_ending,region,wval|sd_above_baseline)")
    p.add_argument("--regions", nargs="+", help="subset of regions (default: all in the file)")
    p.add_argument("--models", nargs="+", default=list(ALL_MODELS), help="model ids, e.g. EM3UW SLR ARIMA")
    p.add_argument("--window", type=int, default=10, help="calibration window length in weeks")
    p.add_argument("--horizons", type=int, default=4, help="forecast weeks ahead (1..H)")
    p.add_argument("--bootstrap", type=int, default=300, help="bootstrap realizations per ranked fit")
    p.add_argument("--refit-starts", type=int, default=1, help="multistarts per bootstrap refit")
    p.add_argument("--starts", type=int, default=30, help="multistarts per candidate fit")
    p.add_argument("--steps-per-week", type=int, default=8, help="RK4 steps per week")
    p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: SUBEPI_THREADS or CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subepi", description="Sub-epidemic wastewater forecasting and backtesting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest-check", help="validate a snapshot CSV")
    p.add_argument("data")

    p = sub.add_parser("forecast", help="forecast from a single origin")
    _add_run_options(p, seed_required=False)
    p.add_argument("--origin", required=True, help="origin week-ending date (Saturday)")

    p = sub.add_parser("backtest", help="run the rolling-origin protocol and write reports")
    _add_run_options(p, seed_required=True)
    p.add_argument("--origin-start", default=DEFAULT_ORIGIN_START)
    p.add_argument("--origin-end", default=DEFAULT_ORIGIN_END)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--provenance", help="free-text data provenance recorded in the manifest")

    p = sub.add_parser("report", help="re-emit reports from a stored run artifact")
    p.add_argument("artifact", help="artifact.json written by backtest")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="write a synthetic multi-region snapshot CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--start", default="2022-01-01")
    p.add_argument("--end", default=DEFAULT_ORIGIN_END)
    p.add_argument("--seed", type=int, required=True)
    return parser


def _config(args, origin_start, origin_end) -> HarnessConfig:
    if args.bootstrap < 1 or args.horizons < 1:
        raise ParameterError("--bootstrap and --horizons must be positive")
    return HarnessConfig(
        origin_start=origin_start, origin_end=origin_end, window_len=args.window,
        horizons=tuple(range(1, args.horizons + 1)),
        bootstrap=BootstrapConfig(B=args.bootstrap, refit_starts=args.refit_starts),
        multistarts=args.starts, models=tuple(args.models), master_seed=args.seed,
        steps_per_week=args.steps_per_week, workers=args.threads,
    )


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ParameterError(f"bad date {text!r}") from None


def cmd_ingest_check(args) -> int:
    series = ingest(args.data)
    print(f"{'region':<10} {'weeks':>5}  first       last")
    for region, s in series.items():
        print(f"{region:<10} {len(s):>5}  {s.start.end_date}  {s.end.end_date}")
    return 0


def cmd_forecast(args) -> int:
    series = ingest(args.data, args.regions)
    origin = parse_week(args.origin)
    cfg = _config(args, origin, origin)
    print("model,region,origin,horizon,target,median,lower95,upper95")
    status = 0
    for region, s in series.items():
        fcs, errs = forecast_origin(s, origin, cfg)
        for m in cfg.models:
            if m in errs:
                print(f"# {m} {region}: {errs[m]}", file=sys.stderr)
                status = 4
                continue
            fd = fcs[m]
            lo, hi = fd.interval(0.05)
            for k, h in enumerate(fd.horizons):
                print(f"{m},{region},{origin.end_date},{h},{fd.target(h).end_date},"
                      f"{fmt(fd.median[k])},{fmt(lo[k])},{fmt(hi[k])}")
    return status


def cmd_backtest(args) -> int:
    series = ingest(args.data, args.regions)
    cfg = _config(args, parse_week(args.origin_start), parse_week(args.origin_end))
    log.info("backtest: %d regions x %d origins x %d models", len(series), len(cfg.origins), len(cfg.models))
    artifact = run_protocol(series, cfg)
    out = Path(args.out)
    emit_reports(artifact, out, file_checksum(args.data), args.provenance)
    save_artifact(artifact, out / "artifact.json")
    print(f"wrote {out} ({len(artifact.scores)} scores, {len(artifact.failures)} failures)")
    return 0


def cmd_report(args) -> int:
    artifact = load_artifact(args.artifact)
    emit_reports(artifact, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    series = simulate_regions(_date(args.start), _date(args.end), args.seed)
    write_series_csv(series, args.out)
    print(f"wrote {args.out}")
    return 0


COMMANDS = {
    "ingest-check": cmd_ingest_check, "forecast": cmd_forecast, "backtest": cmd_backtest,
    "report": cmd_report, "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SubepiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
