#!/usr/bin/env python3
"""Plot per-domain accuracy trajectories from an exported curves.csv.

Usage: plot_curves.py <results-dir> [out.png]

Lays the domains side by side on a shared x-axis of training periods, one
line per method variant averaged over trials (the layout used to read
retention at a glance).  Needs matplotlib.
"""
import csv
import sys
from collections import defaultdict


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    in_dir = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else "curves.png"
    acc = defaultdict(list)        # (variant, domain, period) -> [accuracy]
    with open(f"{in_dir}/curves.csv", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["variant"], int(row["domain"]), int(row["period"]))
            acc[key].append(float(row["accuracy"]))
    variants = sorted({v for v, _, _ in acc})
    domains = sorted({d for _, d, _ in acc})
    fig, axes = plt.subplots(1, len(domains), figsize=(3 * len(domains), 3),
                             sharey=True)
    axes = [axes] if len(domains) == 1 else list(axes)
    for ax, domain in zip(axes, domains):
        for variant in variants:
            periods = sorted({p for v, d, p in acc if v == variant and d == domain})
            means = [sum(acc[(variant, domain, p)]) / len(acc[(variant, domain, p)])
                     for p in periods]
            ax.plot(periods, means, marker="o", markersize=3, label=variant)
        ax.set_title(f"domain {domain}")
        ax.set_xlabel("period")
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("accuracy")
    axes[-1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
