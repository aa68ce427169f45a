"""Command line front-end: run sweeps, check inequality suites, generate
adversarial instances, and print window-scale profiles."""

from __future__ import annotations

import argparse
import sys

from .adversaries import GeneratorSpec
from .algorithms import RealizabilityError
from .core import read_instance, write_instance
from .harness import (
    CHECK_SUITES,
    ConfigError,
    ExperimentConfig,
    check_suite,
    format_profile,
    parse_config_file,
    run,
)
from .oracle import EnumerationTooLarge

_RUN_FLAGS = ("alg", "adversary", "n", "m", "delta", "eta", "alpha", "mode", "trials", "seed", "out")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selective-bench")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute a sweep and write CSV + JSON sidecar")
    p_run.add_argument("--config", help="plain-text config file (key = value); flags override it")
    for flag in _RUN_FLAGS:
        p_run.add_argument(f"--{flag}")

    p_check = sub.add_parser("check", help="run one verification suite")
    p_check.add_argument("suite", choices=CHECK_SUITES)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--max-witnesses", type=int, default=10)

    p_gen = sub.add_parser("gen", help="write a generated instance to a file")
    p_gen.add_argument("--adversary", required=True, help='full tag, e.g. "block:n=32:m=4:l=8"')
    p_gen.add_argument("--n", type=int)
    p_gen.add_argument("--m", type=int)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)

    p_prof = sub.add_parser("profile", help="print the window-scale profile of an instance file")
    p_prof.add_argument("instance")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    values: dict[str, str] = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for flag in _RUN_FLAGS:
        given = getattr(args, flag)
        if given is not None:
            values[flag] = given
    config = ExperimentConfig.from_strings(values)
    result = run(config, config_echo=values)
    print(f"wrote {len(result.rows)} rows to {result.csv_path} (sidecar {result.sidecar_path})")
    bad = [v for v in result.verdicts if not v["holds"]]
    for v in bad:
        print(f"verdict failed: {v}", file=sys.stderr)
    return 1 if bad else 0


def _cmd_check(args: argparse.Namespace) -> int:
    report = check_suite(args.suite, seed=args.seed)
    print(report.summary())
    for witness in report.failures[: args.max_witnesses]:
        print(f"  {witness}")
    if len(report.failures) > args.max_witnesses:
        print(f"  ... and {len(report.failures) - args.max_witnesses} more")
    return 0 if report.ok else 1


def _cmd_gen(args: argparse.Namespace) -> int:
    tag = args.adversary
    if args.n is not None:
        tag += f":n={args.n}"
    if args.m is not None:
        tag += f":m={args.m}"
    inst = GeneratorSpec.from_tag(tag, args.seed).build()
    write_instance(inst, args.out)
    print(f"wrote {inst.m} x {inst.n} instance to {args.out}")
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    print(format_profile(read_instance(args.instance)))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "check":
            return _cmd_check(args)
        if args.verb == "gen":
            return _cmd_gen(args)
        return _cmd_profile(args)
    except (ConfigError, RealizabilityError, EnumerationTooLarge, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
