"""Figures rendered from bench CSV output.

Plotting stays downstream of the delimited results: the bench command
writes CSV only, and this module turns an existing per-instance CSV into
PNG figures saved alongside it.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SOLVED = ("sat", "unsat")


def read_bench_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cactus_plot(rows: list[dict], out_png: str) -> str:
    """Solved-instance count against per-instance time budget, per config."""
    by_config = defaultdict(list)
    for row in rows:
        if row["verdict"] in SOLVED:
            by_config[row["config"]].append(float(row["wall_time_s"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for config in sorted(by_config):
        times = sorted(by_config[config])
        ax.plot(times, range(1, len(times) + 1), drawstyle="steps-post",
                marker=".", label=config)
    ax.set_xlabel("time budget per instance (s)")
    ax.set_ylabel("instances solved")
    ax.set_xscale("log")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def scatter_plot(rows: list[dict], config_a: str, config_b: str, out_png: str,
                 timeout_mark: float | None = None) -> str:
    """Per-instance runtime of one config against another."""
    times = defaultdict(dict)
    for row in rows:
        if row["verdict"] in SOLVED:
            times[row["instance"]][row["config"]] = float(row["wall_time_s"])
    cap = timeout_mark
    if cap is None:
        solved = [t for per in times.values() for t in per.values()]
        cap = 2 * max(solved) if solved else 1.0
    xs, ys = [], []
    for per in times.values():
        xs.append(per.get(config_a, cap))
        ys.append(per.get(config_b, cap))
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(xs, ys, s=14, alpha=0.7)
    lim = max([cap, *xs, *ys]) * 1.1 + 1e-6
    lo = min(x for x in xs + ys if x > 0) * 0.5 if xs else 1e-3
    ax.plot([lo, lim], [lo, lim], "k--", linewidth=0.8)
    ax.set_xlim(lo, lim)
    ax.set_ylim(lo, lim)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(f"{config_a} (s)")
    ax.set_ylabel(f"{config_b} (s)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def render_report(csv_path: str, out_dir: str | None = None) -> list[str]:
    """Render all applicable figures next to the CSV; returns their paths."""
    rows = read_bench_csv(csv_path)
    if out_dir is None:
        out_dir = os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(csv_path))[0]
    written = []
    if rows:
        written.append(
            cactus_plot(rows, os.path.join(out_dir, f"{stem}_cactus.png"))
        )
        configs = sorted({row["config"] for row in rows})
        if len(configs) == 2:
            written.append(
                scatter_plot(
                    rows,
                    configs[0],
                    configs[1],
                    os.path.join(out_dir, f"{stem}_scatter.png"),
                )
            )
    return written
