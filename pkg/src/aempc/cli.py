"""Command line entry point: ``aempc --preset building --seeds 0,1,2 --out results``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import AUDITS
from .config import ConfigError, build_experiment, load_config
from .experiment import run_experiment


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _audits(text: str) -> list[str]:
    if text == "all":
        return list(AUDITS)
    if text == "none":
        return []
    names = [t for t in text.replace(" ", "").split(",") if t]
    unknown = sorted(set(names) - set(AUDITS))
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown audits {unknown}; choose from {', '.join(AUDITS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aempc", description="Adaptive economic MPC experiment runner")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="YAML experiment configuration")
    src.add_argument("--preset", help="built-in preset name (e.g. building)")
    p.add_argument("--steps", type=int, help="override the number of simulation steps")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds, e.g. 0,1,2,3,4")
    p.add_argument("--no-adapt", action="store_true", help="run the fixed-model E-MPC only")
    p.add_argument("--no-baseline", action="store_true", help="skip the E-MPC comparison runs")
    p.add_argument("--mu", type=float, help="override the LMS gain (audit-failure injection)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--audit", type=_audits, default=None, help="all | none | comma-separated list of " + ",".join(AUDITS))
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config) if args.config else build_experiment({"preset": args.preset})
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    scenario = config.scenario
    if args.steps is not None:
        if args.steps < 1:
            print("--steps must be positive", file=sys.stderr)
            return 2
        scenario = replace(scenario, T_steps=args.steps)
    if args.no_adapt:
        scenario = replace(scenario, adapt=False)
    if args.mu is not None:
        scenario = replace(scenario, mu=args.mu)
    config = replace(config, scenario=scenario)
    if args.seeds:
        config = replace(config, seeds=args.seeds)
    if args.audit is not None:
        config = replace(config, audits=args.audit)
    if args.no_baseline:
        config = replace(config, baseline=False)
    if args.workers:
        config = replace(config, workers=args.workers)
    if args.out:
        config = replace(config, output_dir=args.out)
    raw = dict(config.raw)
    raw["simulation"] = dict(raw["simulation"], steps=scenario.T_steps, adapt=scenario.adapt, baseline=config.baseline)
    raw["estimator"] = {"mu": scenario.mu}
    raw["experiment"] = dict(raw["experiment"], seeds=config.seeds, audits=config.audits,
                             output=str(config.output_dir), workers=config.workers)
    config = replace(config, raw=raw)

    status = run_experiment(config)
    print((config.output_dir / "summary.txt").read_text(), end="")
    if status:
        print("one or more audits FAILED; see runs/*.audit.txt", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
