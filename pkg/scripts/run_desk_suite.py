#!/usr/bin/env python3
"""Run the desk-scale benchmark suite and print the summary table.

Equivalent to `csicl suite --config configs/desk.toml`; kept as a script so
the experiment entry point survives without an installed console script.
"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from csicl import harness as hz  # noqa: E402


def main():
    config = sys.argv[1] if len(sys.argv) > 1 else \
        os.path.join(os.path.dirname(__file__), "..", "configs", "desk.toml")
    cfg = hz.load_experiment_config(config)
    bundle = hz.run_benchmark_suite(cfg)
    out_dir = os.path.join(cfg.workdir, "results", "suite")
    hz.export_results(bundle, out_dir)
    print(hz.format_summary(bundle))
    print(f"results in {out_dir}")


if __name__ == "__main__":
    main()
