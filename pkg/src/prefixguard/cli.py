"""Command-line entry point.

Exit codes: 0 when no hijack was seen, 2 when at least one was, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from contextlib import ExitStack
from pathlib import Path

from .config import ConfigInvalid, EngineConfig, apply_env, load_config
from .engine import Engine, EventLog, dumps, replay
from .feeds import TraceMalformed
from .live import run_live
from .monitor import export_timeline, parse_geo_table
from .report import LogMalformed, alert_rows, load_events, render_table
from .sim import ScenarioError, ScenarioStalled, load_scenario, run_scenario

EXIT_CLEAN, EXIT_ERROR, EXIT_HIJACK = 0, 1, 2

log = logging.getLogger("prefixguard")


def _write_jsonl(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in records:
            f.write(dumps(rec) + "\n")


def _write_outputs(cfg: EngineConfig, records, geo_table: str | None = None) -> None:
    timeline_path = cfg.resolve(cfg.timeline)
    if timeline_path is not None:
        geo = parse_geo_table(Path(geo_table).read_text()) if geo_table else None
        timeline, geojson = export_timeline(records, geo)
        _write_jsonl(timeline_path, timeline)
        if geojson is not None:
            timeline_path.with_suffix(".geojson").write_text(json.dumps(geojson, indent=1) + "\n")


def _load(path: str) -> EngineConfig:
    return apply_env(load_config(path))


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if not cfg.sources:
        raise ConfigInvalid("no monitor sources configured", field_path="sources")
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    with ExitStack() as stack:
        log_path = cfg.resolve(cfg.event_log)
        stream = stack.enter_context(open(log_path, "w")) if log_path is not None else None
        engine = run_live(cfg, stream, stop)
    _write_outputs(cfg, engine.log.records, args.geo_table)
    summary = engine.summary()
    print(dumps({"summary": summary}))
    return EXIT_HIJACK if summary["hijacks"] else EXIT_CLEAN


def cmd_replay(args) -> int:
    cfg = _load(args.config)
    log_path = Path(args.event_log) if args.event_log else cfg.resolve(cfg.event_log)
    with ExitStack() as stack:
        stream = stack.enter_context(open(log_path, "w")) if log_path is not None else None
        engine = Engine(cfg, log=EventLog(stream))
        with open(args.trace) as trace:
            replay(cfg, trace, engine=engine, paced=args.paced, source=args.source)
    _write_outputs(cfg, engine.log.records, args.geo_table)
    summary = engine.summary()
    for row in summary["alerts"]:
        print(dumps({"alert": row}))
    print(dumps({"hijacks": summary["hijacks"], "metrics": summary["metrics"]}))
    return EXIT_HIJACK if summary["hijacks"] else EXIT_CLEAN


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario, seed=args.seed)
    result = run_scenario(scenario)
    out = result.summary()
    if result.status == "unmitigable":
        out["note"] = "unmitigable: the hijacked prefix cannot be de-aggregated below the length limit"
    print(dumps(out))
    records = result.event_log
    if args.event_log:
        _write_jsonl(Path(args.event_log), records)
    if args.timeline:
        geo = parse_geo_table(Path(args.geo_table).read_text()) if args.geo_table else None
        timeline, geojson = export_timeline(records, geo)
        _write_jsonl(Path(args.timeline), timeline)
        if geojson is not None:
            Path(args.geojson or Path(args.timeline).with_suffix(".geojson")).write_text(
                json.dumps(geojson, indent=1) + "\n")
    return EXIT_CLEAN


def cmd_report(args) -> int:
    with open(args.event_log) as f:
        rows = alert_rows(load_events(f))
    sys.stdout.write(render_table(rows))
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefixguard", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the live pipeline until interrupted")
    p.add_argument("config")
    p.add_argument("--geo-table", help="vantage_point latitude longitude table for GeoJSON export")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="replay a recorded trace through the pipeline")
    p.add_argument("config")
    p.add_argument("trace")
    pace = p.add_mutually_exclusive_group()
    pace.add_argument("--paced", action="store_true", help="sleep for the gaps between message timestamps")
    pace.add_argument("--instant", dest="paced", action="store_false", help="replay as fast as possible (default)")
    p.add_argument("--source", default="trace", help="source id to label observations with")
    p.add_argument("--event-log", help="override the configured event log path")
    p.add_argument("--geo-table")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("simulate", help="run a simulated hijack/detect/mitigate scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--event-log")
    p.add_argument("--timeline")
    p.add_argument("--geo-table")
    p.add_argument("--geojson")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="summarize an event log")
    p.add_argument("event_log")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigInvalid, TraceMalformed, LogMalformed, ScenarioError, ScenarioStalled) as exc:
        print(f"prefixguard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"prefixguard: {exc}", file=sys.stderr)
        return EXIT_ERROR
