"""Experiment reports: aggregate tables, markdown summary, learning-curve plots."""

from __future__ import annotations

import csv
import glob
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .orchestrator import RoundReport, SeedRound

CSV_SCHEMA = {
    "rounds_<sampler>.csv": {
        "round": "acquisition round, 0 = pre-acquisition baseline",
        "budget": "labeled-set size after this round's acquisition",
        "sampler": "acquisition strategy (random | vaal | mvaal | mvaal_g<value>)",
        "seed": "experiment seed",
        "metric": "task metric on the held-out test split",
        "wall_time": "seconds spent on this round (sampler + task training)",
    },
    "aggregate.csv": {
        "round": "acquisition round",
        "budget": "labeled-set size",
        "sampler": "acquisition strategy",
        "metric_mean": "mean task metric across seeds",
        "metric_std": "population std of the task metric across seeds",
    },
}


class ReportError(ValueError):
    pass


def read_rounds_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(SeedRound(
                round=int(rec["round"]), budget=int(rec["budget"]),
                sampler=rec["sampler"], seed=int(rec["seed"]),
                metric=float(rec["metric"]), wall_time=float(rec["wall_time"])))
    return rows


def load_run_dir(run_dir):
    paths = sorted(glob.glob(os.path.join(run_dir, "rounds_*.csv")))
    if not paths:
        raise ReportError(f"no per-seed round CSVs in {run_dir}")
    rows = []
    for p in paths:
        rows.extend(read_rounds_csv(p))
    seed_cover = {}
    for r in rows:
        seed_cover.setdefault(r.sampler, set()).add(r.seed)
    covers = set(map(frozenset, seed_cover.values()))
    if len(covers) > 1:
        raise ReportError(f"inconsistent seed coverage across samplers: {seed_cover}")
    return rows


def aggregate(rows):
    keys = sorted({(r.sampler, r.round, r.budget) for r in rows})
    out = []
    for sampler, rnd, budget in keys:
        vals = [r.metric for r in rows
                if r.sampler == sampler and r.round == rnd and r.budget == budget]
        out.append(RoundReport(rnd, budget, sampler,
                               float(np.mean(vals)), float(np.std(vals))))
    return out


def markdown_table(reports, metric_name="metric"):
    samplers = sorted({r.sampler for r in reports})
    budgets = sorted({(r.round, r.budget) for r in reports})
    cell = {(r.sampler, r.round): r for r in reports}
    lines = ["| budget | " + " | ".join(samplers) + " |",
             "|---" * (len(samplers) + 1) + "|"]
    for rnd, budget in budgets:
        vals = []
        for s in samplers:
            r = cell.get((s, rnd))
            vals.append(f"{r.metric_mean:.3f} ± {r.metric_std:.3f}" if r else "n/a")
        lines.append(f"| {budget} | " + " | ".join(vals) + " |")
    return f"### {metric_name} by annotation budget\n\n" + "\n".join(lines) + "\n"


def plot_learning_curves(rows, path, metric_name="metric"):
    """Budget on x, per-sampler mean with a ±1 std band, written as SVG."""
    reports = aggregate(rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    for sampler in sorted({r.sampler for r in reports}):
        pts = sorted([r for r in reports if r.sampler == sampler],
                     key=lambda r: r.budget)
        x = [r.budget for r in pts]
        mean = np.array([r.metric_mean for r in pts])
        std = np.array([r.metric_std for r in pts])
        ax.plot(x, mean, marker="o", label=sampler)
        ax.fill_between(x, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("annotation budget (labeled samples)")
    ax.set_ylabel(metric_name)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_aggregate_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "budget", "sampler", "metric_mean", "metric_std"])
        for r in reports:
            w.writerow([r.round, r.budget, r.sampler,
                        f"{r.metric_mean:.10f}", f"{r.metric_std:.10f}"])


def emit_reports(run_dir, metric_name="metric"):
    """Write aggregate.csv, report.md, learning_curve_<metric>.svg, schema.json."""
    rows = load_run_dir(run_dir)
    reports = aggregate(rows)
    agg_path = os.path.join(run_dir, "aggregate.csv")
    write_aggregate_csv(reports, agg_path)
    md_path = os.path.join(run_dir, "report.md")
    with open(md_path, "w") as fh:
        fh.write(markdown_table(reports, metric_name))
    svg_path = os.path.join(run_dir, f"learning_curve_{metric_name}.svg")
    plot_learning_curves(rows, svg_path, metric_name)
    schema_path = os.path.join(run_dir, "schema.json")
    with open(schema_path, "w") as fh:
        json.dump(CSV_SCHEMA, fh, indent=1, sort_keys=True)
    return [agg_path, md_path, svg_path, schema_path]
