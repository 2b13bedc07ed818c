"""Command-line interface.

Subcommands: simulate (generate one domain dataset), run (one variant/trial),
suite (all variants x trials), report (summarize persisted results), check
(run the verification suites).  Exit codes: 0 ok, 2 config error, 3 numerical
failure, 4 acceptance check failed.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, persist, sim
from .train import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILED = 4


def _scene_from_file(path: str | None, scene_seed: int = 0) -> sim.SceneConfig:
    overrides = {}
    if path:
        overrides = harness._load_mapping(path)
        if not isinstance(overrides, dict):
            raise harness.ConfigError("scene file must contain a table/object")
    overrides.setdefault("scene_seed", scene_seed)
    try:
        return sim.desk_scene(**overrides)
    except TypeError as exc:
        raise harness.ConfigError(f"bad scene file {path}: {exc}") from exc


def cmd_simulate(args) -> int:
    scene = _scene_from_file(args.scene)
    profile = sim.build_user_profile(args.user, args.seed, duration=scene.duration)
    dataset = sim.generate_domain(scene, profile, args.per_class, args.seed)
    persist.save_domain(dataset, args.out, seed=args.seed, scene=scene)
    print(f"wrote {len(dataset)} sequences "
          f"({dataset.n_classes} classes x {args.per_class}) to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = harness.load_experiment_config(args.config)
    result = harness.run_sequential(cfg, args.variant, args.trial)
    bundle = harness.assemble_bundle(
        cfg, [args.variant], [args.trial],
        {(args.variant, args.trial): (result.matrix, result.metrics)}, {})
    out_dir = args.out or os.path.join(cfg.workdir, "results",
                                       f"{args.variant}_trial{args.trial:02d}")
    harness.export_results(bundle, out_dir)
    print(harness.format_summary(bundle))
    print(f"results in {out_dir}")
    return EXIT_OK


def cmd_suite(args) -> int:
    cfg = harness.load_experiment_config(args.config)
    bundle = harness.run_benchmark_suite(cfg)
    out_dir = args.out or os.path.join(cfg.workdir, "results", "suite")
    harness.export_results(bundle, out_dir)
    print(harness.format_summary(bundle))
    print(f"results in {out_dir}")
    failed = [v for v, rec in bundle["variants"].items() if rec.get("error")]
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_report(args) -> int:
    bundle = harness.load_results(args.in_dir)
    problems = harness.verify_results(bundle)
    print(harness.format_summary(bundle))
    if problems:
        for p in problems:
            print(f"metric mismatch: {p}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print("persisted matrices agree with the recorded metrics")
    return EXIT_OK


_CHECK_MARKERS = {
    "unit": "not oracle and not endtoend and not scaling",
    "oracle": "oracle",
    "endtoend": "endtoend",
}


def cmd_check(args) -> int:
    try:
        import pytest
    except ModuleNotFoundError:
        print("the check command needs pytest (pip install csicl[test])", file=sys.stderr)
        return EXIT_CONFIG
    tests_dir = args.tests or os.path.join(os.path.dirname(__file__), "..", "..", "tests")
    tests_dir = os.path.abspath(tests_dir)
    if not os.path.isdir(tests_dir):
        print(f"test directory {tests_dir} not found; pass --tests", file=sys.stderr)
        return EXIT_CONFIG
    code = pytest.main(["-q", tests_dir, "-m", _CHECK_MARKERS[args.level]])
    return EXIT_OK if code == 0 else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csicl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate one synthetic domain dataset")
    p.add_argument("--scene", help="scene config file (toml or json)")
    p.add_argument("--user", type=int, required=True, help="user id (domain identity)")
    p.add_argument("--per-class", type=int, required=True, dest="per_class")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="one sequential run for a variant and trial")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", required=True)
    p.add_argument("--trial", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="all configured variants and trials")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("report", help="summarize and verify persisted results")
    p.add_argument("--in", dest="in_dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("check", help="run the verification suites")
    p.add_argument("--level", choices=sorted(_CHECK_MARKERS), required=True)
    p.add_argument("--tests", help="test directory (defaults to the repo checkout)")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
