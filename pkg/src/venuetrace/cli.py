"""Command-line interface: run, validate, replay.

Exit codes: 0 success, 1 scenario-validation failure, 2 runtime failure
(including trace integrity errors). Flags mirror the scenario file's
``params`` keys one-to-one; flags win on conflict. The default output
directory comes from $VENUETRACE_OUT (falling back to ./runs).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from .metrics import ExposurePolicy, MetricsReport, collect_metrics, comparison_rows
from .scenario import Scenario, validate_scenario
from .sim import PROTOCOLS, SimulationTrace
from .sim import run as run_simulation

TRACE_FORMAT = "venuetrace-trace"
TRACE_VERSION = 1
_SECTIONS = ("config", "presence", "broadcasts", "events", "outcomes")


class IntegrityError(RuntimeError):
    """Trace file is truncated or has been modified."""


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_trace(trace: SimulationTrace, path: Path) -> None:
    """Newline-delimited sections followed by a SHA-256 trailer line."""
    lines = [_canonical({"format": TRACE_FORMAT, "version": TRACE_VERSION})]
    for section in _SECTIONS:
        lines.append(_canonical({"section": section, "data": trace.data[section]}))
    body = ("\n".join(lines) + "\n").encode("utf-8")
    trailer = _canonical({"sha256": hashlib.sha256(body).hexdigest()})
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(trailer.encode("utf-8"))
        fh.write(b"\n")


def read_trace(path: Path) -> dict[str, Any]:
    """Parse and integrity-check a trace file; raises IntegrityError."""
    raw = Path(path).read_bytes()
    lines = raw.decode("utf-8").splitlines()
    if len(lines) < 2:
        raise IntegrityError("trace file too short")
    try:
        trailer = json.loads(lines[-1])
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"trailer is not valid JSON: {exc}") from exc
    if "sha256" not in trailer:
        raise IntegrityError("trace file has no integrity trailer (truncated?)")
    body = ("\n".join(lines[:-1]) + "\n").encode("utf-8")
    if hashlib.sha256(body).hexdigest() != trailer["sha256"]:
        raise IntegrityError("trace integrity hash mismatch")
    header = json.loads(lines[0])
    if header.get("format") != TRACE_FORMAT:
        raise IntegrityError(f"unknown trace format {header.get('format')!r}")
    data: dict[str, Any] = {}
    for line in lines[1:-1]:
        section = json.loads(line)
        data[section["section"]] = section["data"]
    missing = [s for s in _SECTIONS if s not in data]
    if missing:
        raise IntegrityError(f"trace is missing sections: {missing}")
    return data


def _overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if args.epoch_seconds is not None:
        overrides["epoch_seconds"] = args.epoch_seconds
    if args.window_seconds is not None:
        overrides["window_seconds"] = args.window_seconds
    if args.bloom_fpr is not None:
        overrides["bloom_fpr"] = args.bloom_fpr
    if args.retention_days is not None:
        overrides["retention_days"] = args.retention_days
    if args.exposure_minutes is not None:
        overrides["exposure_seconds"] = args.exposure_minutes * 60
    if args.proximity_meters is not None:
        overrides["proximity_meters"] = args.proximity_meters
    if args.arrival_time_extension:
        overrides["arrival_time_extension"] = True
    return overrides


def _run_one(
    scenario_dict: dict[str, Any], protocol: str, seed: int, overrides: dict[str, Any]
) -> dict[str, Any]:
    scenario = Scenario.from_dict(scenario_dict)
    return run_simulation(scenario, protocol, seed, overrides).data


def _write_outputs(trace_data: dict[str, Any], out_dir: Path) -> MetricsReport:
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = SimulationTrace(data=trace_data)
    write_trace(trace, out_dir / "trace.ndjson")
    with open(out_dir / "events.ndjson", "w", encoding="utf-8") as fh:
        for entry in trace_data["events"]:
            fh.write(_canonical(entry) + "\n")
    report = collect_metrics(trace_data)
    (out_dir / "metrics.json").write_text(
        _canonical(report.to_dict()) + "\n", encoding="utf-8"
    )
    at_risk = set(report.at_risk_users)
    leaks = set(report.leak_users)
    with open(out_dir / "users.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "duty_cycle", "at_risk", "leak"])
        for user, duty in report.duty_cycle.items():
            writer.writerow([user, f"{duty:.6f}", int(user in at_risk), int(user in leaks)])
    return report


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = Scenario.from_json_file(args.scenario)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: cannot load scenario: {exc}", file=sys.stderr)
        return 1
    diags = validate_scenario(scenario)
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return 1

    protocols = list(PROTOCOLS) if args.protocol == "all" else [args.protocol]
    overrides = _overrides_from_args(args)
    out_root = Path(args.out)

    try:
        if args.jobs > 1 and len(protocols) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [
                    pool.submit(_run_one, scenario.to_dict(), p, args.seed, overrides)
                    for p in protocols
                ]
                traces = [f.result() for f in futures]
        else:
            traces = [
                _run_one(scenario.to_dict(), p, args.seed, overrides) for p in protocols
            ]
    except Exception as exc:  # noqa: BLE001 - surface as runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2

    reports = []
    for protocol, trace_data in zip(protocols, traces):
        out_dir = out_root / protocol if len(protocols) > 1 else out_root
        report = _write_outputs(trace_data, out_dir)
        reports.append(report)
        print(
            f"{protocol}: recall={report.recall:.3f} "
            f"precision={report.precision:.3f} "
            f"at_risk={len(report.at_risk_users)} "
            f"-> {out_dir / 'metrics.json'}"
        )

    if len(reports) > 1:
        rows = comparison_rows(reports)
        (out_root / "comparison.json").write_text(_canonical(rows) + "\n", encoding="utf-8")
        with open(out_root / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"comparison table -> {out_root / 'comparison.csv'}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = Scenario.from_json_file(args.scenario)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: cannot load scenario: {exc}", file=sys.stderr)
        return 1
    diags = validate_scenario(scenario)
    if diags:
        for d in diags:
            print(d)
        return 1
    print("ok")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        trace_data = read_trace(Path(args.trace))
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read trace: {exc}", file=sys.stderr)
        return 2
    policy = None
    if args.gt_distance_meters is not None or args.gt_duration_minutes is not None:
        policy = ExposurePolicy(
            distance_m=args.gt_distance_meters if args.gt_distance_meters is not None else 2.0,
            duration_seconds=(
                args.gt_duration_minutes * 60 if args.gt_duration_minutes is not None else 900
            ),
        )
    exposure_seconds = (
        args.exposure_minutes * 60 if args.exposure_minutes is not None else None
    )
    report = collect_metrics(trace_data, policy, exposure_seconds)
    payload = _canonical(report.to_dict())
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(payload + "\n", encoding="utf-8")
        print(f"metrics -> {out}")
    else:
        print(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="venuetrace",
        description="Venue-based contact-tracing protocol simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write reports")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--protocol", default="venue", choices=[*PROTOCOLS, "all"])
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument(
        "--out", default=os.environ.get("VENUETRACE_OUT", "runs"),
        help="output directory (default $VENUETRACE_OUT or ./runs)",
    )
    p_run.add_argument("--jobs", type=int, default=1, help="parallel protocol runs")
    p_run.add_argument("--epoch-seconds", type=int, default=None)
    p_run.add_argument("--window-seconds", type=int, default=None)
    p_run.add_argument("--bloom-fpr", type=float, default=None)
    p_run.add_argument("--retention-days", type=int, default=None)
    p_run.add_argument("--exposure-minutes", type=int, default=None)
    p_run.add_argument("--proximity-meters", type=float, default=None)
    p_run.add_argument("--arrival-time-extension", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("--scenario", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_rep = sub.add_parser("replay", help="recompute metrics from a trace log")
    p_rep.add_argument("--trace", required=True)
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--exposure-minutes", type=int, default=None)
    p_rep.add_argument("--gt-distance-meters", type=float, default=None)
    p_rep.add_argument("--gt-duration-minutes", type=int, default=None)
    p_rep.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
