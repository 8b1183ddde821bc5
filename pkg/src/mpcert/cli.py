"""Command-line entry point: ``simulate``, ``sweep`` and ``repro``.

Exit codes: 0 on success, 1 for configuration errors, 2 for I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Any, List, Optional, Sequence, Tuple

from .experiment import (
    AXES,
    FIGURES,
    MetricsRecord,
    ScenarioConfig,
    SweepSpec,
    csv_text,
    default_workers,
    emit_csv,
    figure_sweeps,
    load_config,
    run_scenario,
    run_sweep,
    scenario_from_mapping,
    write_trace,
)
from .netsim.world import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2

log = logging.getLogger("mpcert")


def _parse_overrides(pairs: Sequence[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (p.strip() for p in item.split("=", 1))
        out[key] = value
    return out


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    base = ScenarioConfig()
    if getattr(args, "config", None):
        try:
            base = load_config(args.config)
        except OSError as exc:
            raise OSError(exc.errno, f"cannot read config {args.config}: {exc.strerror}") from exc
    overrides = _parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.runs is not None:
        overrides["runs"] = args.runs
    return scenario_from_mapping(overrides, base) if overrides else base


def _write_results(results: List[Tuple[Any, MetricsRecord]], out: Optional[str]) -> None:
    if out:
        emit_csv(results, out)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(csv_text(results))


def _parse_values(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"--values must be a comma list of numbers: {exc}") from exc


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _scenario(args)
    sink: Optional[List[str]] = [] if args.trace else None
    record = run_scenario(config, workers=args.workers, trace_sink=sink)
    _write_results([("scenario", record)], args.out)
    if args.trace:
        write_trace(sink or [], args.trace)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = SweepSpec(args.axis, _parse_values(args.values), _scenario(args))
    sink: Optional[List[str]] = [] if args.trace else None
    results = run_sweep(spec, workers=args.workers, trace_sink=sink)
    _write_results(results, args.out)
    if args.trace:
        write_trace(sink or [], args.trace)
    return EXIT_OK


def cmd_repro(args: argparse.Namespace) -> int:
    base = _scenario(args)
    sweeps = figure_sweeps(args.figure, base)
    for _, spec in sweeps:
        spec.validate()
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {args.out}: {exc.strerror}") from exc
    sink: Optional[List[str]] = [] if args.trace else None
    for label, spec in sweeps:
        if sink is not None:
            sink.append(f'{{"series":"{label}"}}')
        results = run_sweep(spec, workers=args.workers, trace_sink=sink)
        path = os.path.join(args.out, f"{label}.csv")
        emit_csv(results, path)
        log.info("wrote %s", path)
    if args.trace:
        write_trace(sink or [], args.trace)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpcert", description="Multi-path certification experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_help: str) -> None:
        p.add_argument("--config", help="flat 'key = value' scenario file")
        p.add_argument("--seed", type=int, help="base seed (run i uses seed + i)")
        p.add_argument("--runs", type=int, help="seeded runs per point")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", help=out_help)
        p.add_argument("--trace", help="write the JSON-lines event trace here")
        p.add_argument("--workers", type=int, default=1,
                       help=f"worker processes (this machine suggests {default_workers()})")

    sim = sub.add_parser("simulate", help="run one scenario")
    common(sim, "CSV path (stdout when omitted)")
    sim.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="vary one parameter")
    sweep.add_argument("--axis", required=True, choices=AXES)
    sweep.add_argument("--values", required=True, help="comma list, e.g. 0,0.1,0.2")
    common(sweep, "CSV path (stdout when omitted)")
    sweep.set_defaults(func=cmd_sweep)

    repro = sub.add_parser("repro", help="canned sweeps for one figure")
    repro.add_argument("--figure", required=True, choices=FIGURES)
    common(repro, "output directory, one CSV per series")
    repro.set_defaults(func=cmd_repro)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "repro" and not args.out:
        parser.error("repro needs --out <dir>")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
