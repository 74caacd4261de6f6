"""Command-line entry point: generate, simulate, sweep, classify and validate.

Exit codes: 0 success, 1 validation or input failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .brakes import BRAKE_TYPES, brake_preset
from .causes import classify
from .engine import SimulationOutcome, run, write_trace_csv
from .generator import GeneratorError, generate_corpus
from .harness import ExperimentConfig, default_config_path, emit_report, run_experiment
from .perception import sensor_set
from .scenario import ScenarioError, load_scenario, save_scenario

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2
log = logging.getLogger("crashsim")


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _override(text: str) -> tuple:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _format_for(path: str | None, fmt: str | None) -> str:
    if fmt:
        return fmt
    suffix = Path(path).suffix.lower() if path else ""
    return {".csv": "csv", ".md": "markdown", ".markdown": "markdown"}.get(suffix, "json")


# ------------------------------------------------------------------------ commands


def cmd_generate(args) -> int:
    try:
        corpus = generate_corpus(args.n, args.profile, args.seed)
    except GeneratorError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in corpus:
        save_scenario(s, out / f"{s.id}.json")
    print(f"wrote {len(corpus)} scenarios to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        brake = brake_preset(args.brake, args.ttc, dict(args.override))
        sensors = sensor_set(args.sensor_set)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        scenario = load_scenario(args.scenario, strict=not args.lenient)
    except ScenarioError as exc:
        print(f"invalid scenario {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    outcome = run(scenario, brake, sensors, args.friction_known, record_trace=args.trace is not None)
    rec = outcome.to_record()
    rec["scenario_path"] = str(Path(args.scenario).resolve())
    rec["overrides"] = dict(args.override)
    if args.classify and outcome.crashed:
        rec["causes"] = classify(outcome, scenario, brake).to_record()
    if args.trace:
        write_trace_csv(outcome.trace, args.trace)
    text = json.dumps(rec, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_classify(args) -> int:
    code = EXIT_OK
    results = []
    for path in args.outcomes:
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
            outcome = SimulationOutcome.from_record(rec)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            print(f"unreadable outcome {path}: {exc}", file=sys.stderr)
            code = EXIT_INVALID
            continue
        scen_path = args.scenario or rec.get("scenario_path")
        if not scen_path:
            raise UsageError(f"{path} names no scenario; pass --scenario")
        try:
            scenario = load_scenario(scen_path, strict=not args.lenient)
        except ScenarioError as exc:
            print(f"invalid scenario {scen_path}: {exc}", file=sys.stderr)
            code = EXIT_INVALID
            continue
        if not outcome.crashed:
            results.append({"scenario_id": outcome.scenario_id, "result": "avoided"})
            continue
        brake = brake_preset(outcome.brake, outcome.ttc_threshold, rec.get("overrides") or None)
        results.append(classify(outcome, scenario, brake).to_record())
    text = json.dumps(results if len(args.outcomes) > 1 else (results[0] if results else None), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return code


def cmd_validate(args) -> int:
    paths = []
    for p in map(Path, args.paths):
        paths.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    if not paths:
        raise UsageError("no scenario files given")
    bad = 0
    for p in paths:
        try:
            load_scenario(p, strict=not args.lenient)
        except (ScenarioError, OSError) as exc:
            bad += 1
            print(f"FAIL {p}: {exc}")
        else:
            if args.verbose:
                print(f"ok   {p}")
    print(f"{len(paths) - bad}/{len(paths)} valid")
    return EXIT_INVALID if bad else EXIT_OK


def build_config(args) -> ExperimentConfig:
    """Config file (``--config`` or the environment default) overlaid with explicit flags."""
    cfg_path = args.config or default_config_path()
    base: dict = {}
    if cfg_path:
        try:
            base = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {cfg_path}: {exc}") from None
    if args.scenarios:
        base["scenarios"], base["generator"] = args.scenarios, None
    if args.generate is not None:
        base["generator"] = {"n": args.generate, "profile": args.profile, "seed": args.seed if args.seed is not None else 0}
        base["scenarios"] = None
    flags = {
        "brake_types": args.brakes,
        "sensor_sets": args.sensor_sets,
        "ttc_thresholds": args.ttc,
        "jobs": args.jobs,
        "seed": args.seed,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    if args.friction_known:
        base["friction_known"] = True
    if args.override:
        base["overrides"] = {**base.get("overrides", {}), **dict(args.override)}
    if args.lenient:
        base["lenient"] = True
    try:
        return ExperimentConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment config: {exc}") from None


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    try:
        report = run_experiment(cfg)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    fmt = _format_for(args.out, args.format)
    text = emit_report(report, fmt, args.out)
    if args.out:
        print(emit_report(report, "markdown"), end="")
        print(f"{len(report.cells)} cells written to {args.out}")
    else:
        print(text, end="")
    for src, msg in report.skipped:
        print(f"skipped {src}: {msg}", file=sys.stderr)
    return EXIT_OK


# -------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crashsim", description="Counterfactual brake simulation on crossing-path crash scenarios.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scenario corpus")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--profile", default="mixed", help="mixed, constant-velocity, low-friction or cause-targeted:<cause>")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="run one scenario with one brake")
    s.add_argument("--scenario", required=True)
    s.add_argument("--brake", default="aeb", choices=BRAKE_TYPES)
    s.add_argument("--sensor-set", default="1R1V")
    s.add_argument("--ttc", type=float, default=None, help="V2X stage TTC threshold [s]")
    s.add_argument("--friction-known", action="store_true")
    s.add_argument("--override", action="append", type=_override, default=[], metavar="KEY=VALUE")
    s.add_argument("--trace", help="write the per-tick trace as CSV")
    s.add_argument("--out", help="write the outcome record as JSON")
    s.add_argument("--classify", action="store_true", help="attach the crash-cause report")
    s.add_argument("--lenient", action="store_true")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run a brake x sensor-set x threshold experiment")
    w.add_argument("--config", help="experiment config JSON (default from $CRASHSIM_CONFIG)")
    w.add_argument("--scenarios", help="directory of scenario files")
    w.add_argument("--generate", type=int, metavar="N", help="use N generated scenarios instead of a directory")
    w.add_argument("--profile", default="mixed")
    w.add_argument("--brakes", type=_csv_list)
    w.add_argument("--sensor-sets", type=_csv_list)
    w.add_argument("--ttc", type=_floats)
    w.add_argument("--friction-known", action="store_true")
    w.add_argument("--override", action="append", type=_override, default=[], metavar="KEY=VALUE")
    w.add_argument("--jobs", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--lenient", action="store_true")
    w.add_argument("--out")
    w.add_argument("--format", choices=("json", "csv", "markdown"))
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("classify", help="re-classify stored simulate outcomes")
    c.add_argument("outcomes", nargs="+", help="outcome JSON files written by simulate --out")
    c.add_argument("--scenario", help="scenario file (default: the path stored in the outcome)")
    c.add_argument("--out")
    c.add_argument("--lenient", action="store_true")
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("validate", help="check scenario files")
    v.add_argument("paths", nargs="+", help="files or directories")
    v.add_argument("--lenient", action="store_true")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crashsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
