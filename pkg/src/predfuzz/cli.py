"""Command-line entry point: run one campaign or compare two report sets.

Configuration merges three layers, lowest precedence first: built-in
defaults, an optional JSON config file, then command-line flags. The
merged config is validated before anything runs, so range errors come
back with distinct messages instead of mid-campaign surprises.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Optional, Sequence

from .engine import CampaignConfig, run_campaign
from .program import GenerationConfig
from .reporting import compare_campaigns, gather_reports

# Spec'd ablation tokens mapped onto config switches.
ABLATIONS = {
    "vee": ("ablate_dynamics",),
    "rlf": ("ablate_policy",),
    "fo": ("ablate_optimizer",),
    "all": ("ablate_dynamics", "ablate_policy", "ablate_optimizer"),
}

# flag destination -> config field, for flags whose names differ.
_FLAG_FIELDS = {
    "program": "program_path",
    "target": "target_block",
    "budget_execs": "budget_execs",
    "cycle_execs": "cycle_execs",
    "gamma": "gamma",
    "k": "k",
    "ensemble": "ensemble_size",
    "seed": "rng_seed",
    "out": "out_dir",
}


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so errors are testable."""

    def error(self, message: str):
        raise ValueError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="predfuzz", description=__doc__.splitlines()[0])
    p.add_argument("--program", metavar="FILE",
                   help="program description JSON to fuzz")
    p.add_argument("--generate", metavar="PARAMS",
                   help="generate a program: comma list like "
                        "blocks=16,gates=2,hardness=1.0,seed=0")
    p.add_argument("--target", type=int, metavar="BLOCK",
                   help="override the target basic block id")
    p.add_argument("--budget-execs", type=int, dest="budget_execs", metavar="N")
    p.add_argument("--cycle-execs", type=int, dest="cycle_execs", metavar="N")
    p.add_argument("--gamma", type=float, metavar="F",
                   help="discount factor in (0, 1]")
    p.add_argument("--k", type=int, metavar="N", help="rollout horizon")
    p.add_argument("--ensemble", type=int, metavar="N",
                   help="number of transition-model members")
    p.add_argument("--seed", type=int, metavar="N", help="campaign rng seed")
    p.add_argument("--ablate", choices=sorted(ABLATIONS), action="append",
                   default=None, help="disable a component (repeatable)")
    p.add_argument("--out", metavar="DIR", help="report/corpus directory")
    p.add_argument("--compare", nargs=2, metavar=("DIR_A", "DIR_B"),
                   help="compare two directories of campaign reports")
    p.add_argument("--config", metavar="FILE", help="JSON config file")
    return p


def _parse_generate(text: str) -> GenerationConfig:
    fields = {f.name: f.type for f in dataclasses.fields(GenerationConfig)}
    kwargs = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"bad --generate item {item!r}, expected key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in fields:
            raise ValueError(f"unknown --generate key {key!r}")
        if key == "hardness":
            kwargs[key] = float(value)
        elif key in ("two_byte_gates", "loop_arms"):
            kwargs[key] = value.strip().lower() in ("1", "true", "yes")
        else:
            kwargs[key] = int(value)
    return GenerationConfig(**kwargs)


def parse_config(argv: Optional[Sequence[str]] = None) -> CampaignConfig:
    """Flags plus optional JSON file -> validated CampaignConfig.

    Flag values override file values; file values override defaults.
    Raises ValueError with a distinct message per problem.
    """
    args = build_parser().parse_args(argv)
    known = {f.name for f in dataclasses.fields(CampaignConfig)}
    merged: dict = {}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in loaded.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            merged[key] = value
    if isinstance(merged.get("generate"), dict):
        merged["generate"] = GenerationConfig(**merged["generate"])
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            merged[name] = value
    if args.generate is not None:
        merged["generate"] = _parse_generate(args.generate)
    for token in args.ablate or ():
        for field in ABLATIONS[token]:
            merged[field] = True
    config = CampaignConfig(**merged)
    config.validate()
    return config


def _print_comparison(dir_a: str, dir_b: str) -> None:
    reports_a = gather_reports(dir_a)
    reports_b = gather_reports(dir_b)
    cmp = compare_campaigns(reports_a, reports_b)
    print(f"comparing {dir_a} (n={cmp.n_a}) vs {dir_b} (n={cmp.n_b})")
    print(f"  speedup (mean ETR b/a): {cmp.speedup!r}")
    print(f"  A12 (a better):         {cmp.a12!r}")
    print(f"  Mann-Whitney U:         {cmp.u_statistic!r}")
    print(f"  p-value:                {cmp.p_value!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.compare:
            _print_comparison(*args.compare)
            return 0
        config = parse_config(argv)
        report = run_campaign(config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    reached = "yes" if report.reached else "no"
    ttr = report.ttr_execs if report.reached else "T.O."
    print(f"cycles={len(report.cycles)} execs={report.total_execs} "
          f"paths={report.queue_size} reached={reached} ttr_execs={ttr}")
    if config.out_dir:
        print(f"report written to {config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
