"""Command-line front end for running scenarios and sweeps."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .engine import MetricsReport, SimResult
from .errors import ReportIoError, SimulatorError
from .gpu import Policy
from .presets import SCENARIO_PRESETS, get_scenario_preset
from .report import emit_report
from .scenario import ScenarioConfig, build_simulation, load_scenario, scenario_from_dict
from .scheduler import AblationFlags
from .sweep import load_sweep, run_sweep

_ABLATION_CHOICES = ("no-staging", "no-last", "no-prior", "no-fixed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stagesim",
        description="Discrete-event simulator for staged DNN inference "
                    "scheduling on a partitioned GPU.",
    )
    source = parser.add_argument_group("scenario source")
    source.add_argument("--scenario", metavar="PATH",
                        help="JSON scenario file to run")
    source.add_argument("--preset", choices=sorted(SCENARIO_PRESETS),
                        help="built-in scenario to run instead of a file")
    source.add_argument("--sweep", metavar="PATH",
                        help="JSON sweep file; runs the scenario across "
                             "every configuration cell")

    over = parser.add_argument_group("scenario overrides")
    over.add_argument("--policy", choices=[p.value for p in Policy],
                      help="partitioning policy")
    over.add_argument("--nc", type=int, metavar="N",
                      help="number of GPU contexts")
    over.add_argument("--ns", type=int, metavar="N",
                      help="streams per context")
    over.add_argument("--os", type=float, dest="oversubscription", metavar="X",
                      help="context oversubscription factor")
    over.add_argument("--duration", type=float, metavar="SECONDS",
                      help="simulated time span")
    over.add_argument("--seed", type=int, help="random seed")
    over.add_argument("--overload", type=float, metavar="FACTOR",
                      help="scale request rates to this multiple of "
                           "modeled capacity")
    over.add_argument("--hpa", action="store_true",
                      help="admission-test high-priority jobs too")
    over.add_argument("--ablation", action="append", choices=_ABLATION_CHOICES,
                      default=None, metavar="NAME",
                      help="disable one scheduler feature; repeatable "
                           f"(choices: {', '.join(_ABLATION_CHOICES)})")
    over.add_argument("--ws", type=int, metavar="N",
                      help="samples kept per stage for execution estimates")
    over.add_argument("--full-load-reps", type=int, metavar="N",
                      help="repetitions of the offline full-load measurement")

    out = parser.add_argument_group("output")
    out.add_argument("--format", choices=("csv", "json"), default="csv",
                     help="report format when --out is given (default csv)")
    out.add_argument("--out", metavar="PATH", help="write the report here")
    out.add_argument("--emit-event-log", metavar="PATH",
                     help="write the event log as JSON lines")
    return parser


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    gpu_fields = {}
    if args.policy is not None:
        gpu_fields["policy"] = Policy(args.policy)
    if args.nc is not None:
        gpu_fields["n_contexts"] = args.nc
    if args.ns is not None:
        gpu_fields["n_streams"] = args.ns
    if args.oversubscription is not None:
        gpu_fields["oversubscription"] = args.oversubscription
    if gpu_fields:
        cfg = cfg.with_gpu(**gpu_fields)

    scalar = {}
    if args.duration is not None:
        scalar["duration"] = args.duration
    if args.seed is not None:
        scalar["seed"] = args.seed
    if args.overload is not None:
        scalar["overload_factor"] = args.overload
    if args.hpa:
        scalar["hpa"] = True
    if args.ablation:
        scalar["flags"] = AblationFlags.from_names(args.ablation)
    if args.ws is not None:
        scalar["window_size"] = args.ws
    if args.full_load_reps is not None:
        scalar["full_load_reps"] = args.full_load_reps
    if args.out is not None:
        scalar["out"] = args.out
    if args.emit_event_log is not None:
        scalar["event_log"] = args.emit_event_log
    if scalar:
        cfg = dataclasses.replace(cfg, **scalar)
    return cfg


def _load_base(args: argparse.Namespace) -> ScenarioConfig:
    if args.scenario and args.preset:
        raise SimulatorError("give either --scenario or --preset, not both")
    if args.scenario:
        return load_scenario(args.scenario)
    if args.preset:
        return scenario_from_dict(get_scenario_preset(args.preset))
    raise SimulatorError("nothing to run: give --scenario, --preset or --sweep "
                         "with a base scenario")


def _write_event_log(path: str, results: list[SimResult]) -> None:
    try:
        with Path(path).open("w") as fh:
            for result in results:
                for record in result.records:
                    fh.write(json.dumps(record.to_dict()) + "\n")
    except OSError as exc:
        raise ReportIoError(f"cannot write event log to {path}: {exc}") from exc


def _summary_line(report: MetricsReport) -> str:
    return (f"{report.label} {report.policy} seed={report.seed} "
            f"jps={report.jps:.1f} dmr_hp={report.dmr_hp:.4f} "
            f"dmr_lp={report.dmr_lp:.4f} "
            f"resp_hp_mean={report.response_hp.mean * 1e3:.2f}ms "
            f"resp_lp_mean={report.response_lp.mean * 1e3:.2f}ms "
            f"accepted={report.accepted_hp + report.accepted_lp} "
            f"rejected={report.rejected_hp + report.rejected_lp}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.sweep and (args.policy or args.nc or args.ns
                           or args.oversubscription is not None):
            raise SimulatorError("--policy/--nc/--ns/--os conflict with --sweep; "
                                 "the sweep file owns the configuration grid")
        base = _load_base(args)
        base = _apply_overrides(base, args)
        collect_log = base.event_log is not None

        if args.sweep:
            spec = load_sweep(args.sweep)
            outcome = run_sweep(spec, base, collect_log=collect_log)
            for note in outcome.skipped:
                print(f"skipped: {note}", file=sys.stderr)
            reports = outcome.reports
            results = outcome.results
        else:
            sim = build_simulation(base, collect_log=True)
            result = sim.run()
            reports = [result.report]
            results = [result]

        if base.event_log:
            _write_event_log(base.event_log, results)
        if base.out:
            emit_report(reports, fmt=args.format, path=base.out)
            print(f"wrote {len(reports)} report row(s) to {base.out}")
        else:
            for report in reports:
                print(_summary_line(report))
        return 0
    except SimulatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
