"""Command-line entry point: ``thzfmtl --experiment nmse --profile desk --out results.csv``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import ConfigError, EXPERIMENTS, emit_results, render_csv, render_json, \
    run_experiment, spec_from_sections
from .system import PROFILES, load_config

log = logging.getLogger("thzfmtl")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="thzfmtl",
        description="Wideband THz channel and DoA estimation experiments.")
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--profile", default="desk", choices=sorted(PROFILES),
                   help="base scenario and training profile (default: desk)")
    p.add_argument("--config", help="YAML file overriding profile values")
    p.add_argument("--seed", type=int, help="root seed (overrides config)")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per cell")
    p.add_argument("--workers", type=int, help="worker processes for trials")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", default="csv", choices=("csv", "json"))
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING - 10 * min(args.verbose, 2))
    try:
        return _run(args)
    finally:
        log.removeHandler(handler)


def _run(args) -> int:
    try:
        scenario = PROFILES[args.profile]
        sections = {}
        if args.config:
            scenario, sections = load_config(args.config, base=scenario)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            scenario = scenario.replace(seed=args.seed)
        spec = spec_from_sections(args.experiment, args.profile, scenario, sections,
                                  trials=args.trials, workers=args.workers)
        log.info("running %s (%s profile, seed %d)", spec.experiment, spec.profile,
                 spec.scenario.seed)
        table = run_experiment(spec)
        if args.out:
            emit_results(table, args.out, args.format, spec.manifest())
        else:
            sys.stdout.write(render_csv(table) if args.format == "csv"
                             else render_json(table, spec.manifest()))
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"thzfmtl: configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ArithmeticError, RuntimeError) as exc:
        print(f"thzfmtl: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
