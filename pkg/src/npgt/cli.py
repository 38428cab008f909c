"""Command-line front end: ``npgt {simulate,experiment,spectral-check,eta-bar}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .dynamics import DivergenceError
from .graph import build_laplacian, graph_at
from .harness import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    admissible_eta,
    build_schedule,
    build_suite,
    check_graphs,
    default_config,
    run_custom,
    run_experiment,
    spectral_at_start,
    write_outputs,
)
from .spectral import SpectralReport

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3


def _load(path) -> ExperimentConfig:
    try:
        return ExperimentConfig.load(path)
    except (OSError, json.JSONDecodeError, TypeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err


def _print_result(result):
    for label, s in result.summaries.items():
        rate = "n/a" if s.fitted_rate is None else f"{s.fitted_rate:.4g}"
        print(f"{label:>14}: final gap {s.final_gap:.4e}  consensus {s.final_consensus_error:.3e}  "
              f"rate {rate}")
    for row in result.table:
        print(json.dumps(row))


def _finish(result, out):
    _print_result(result)
    if out:
        files = write_outputs(result, out)
        print(f"wrote {', '.join(files)} to {out}")


def cmd_simulate(args):
    cfg = _load(args.config)
    problems = check_graphs(cfg)
    if problems:
        raise ConfigError(f"initial topology fails: {', '.join(problems)}")
    _finish(run_custom(cfg) if cfg.experiment == "custom" else run_experiment(cfg), args.out or cfg.out)
    return EXIT_OK


def cmd_experiment(args):
    cfg = default_config(args.name)
    if args.config:
        cfg = _load(args.config)
        if cfg.experiment != args.name:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.name!r}")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.horizon is not None:
        cfg = replace(cfg, horizon=args.horizon)
    _finish(run_experiment(cfg, workers=args.workers), args.out or cfg.out)
    return EXIT_OK


def cmd_spectral_check(args):
    cfg = _load(args.config)
    suite, _ = build_suite(cfg)
    schedule = build_schedule(cfg)
    h = cfg.nonlinearity()
    eta = admissible_eta(cfg, suite, schedule, h) if cfg.eta == "auto" else float(cfg.eta)
    doc = spectral_at_start(suite, schedule, h, eta)
    report = SpectralReport(**{k: v for k, v in doc.items() if k != "zero_structure_holds"})
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(report.summary())
    return EXIT_OK if doc["zero_structure_holds"] else EXIT_CHECK_FAILED


def cmd_eta_bar(args):
    cfg = _load(args.config)
    suite, _ = build_suite(cfg)
    schedule = build_schedule(cfg)
    value = admissible_eta(cfg, suite, schedule, cfg.nonlinearity())
    L = build_laplacian(graph_at(schedule, 0.0))
    print(json.dumps({"eta_bar": value, "n": suite.n, "p": suite.p,
                      "initial_laplacian_trace": float(L.trace())}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npgt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the experiment described by a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the config's 'out')")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a shipped experiment")
    p.add_argument("name", choices=EXPERIMENTS[:-1])
    p.add_argument("--seed", type=int, help="derive graph, data and x0 seeds from this base seed")
    p.add_argument("--out")
    p.add_argument("--config", help="start from this config instead of the shipped defaults")
    p.add_argument("--horizon", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("spectral-check", help="eigenstructure of the system matrix on the initial topology")
    p.add_argument("--config", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_spectral_check)

    p = sub.add_parser("eta-bar", help="admissible step-rate for a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_eta_bar)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
