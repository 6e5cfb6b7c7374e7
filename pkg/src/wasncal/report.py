"""Figure rendering for the CLI report paths (written next to the CSVs)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (7.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
})


def plot_run(rows, out_path):
    """Calibration errors and pairing accuracy over time for one run."""
    ts = [r.timestamp for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 5.5))
    ax1.plot(ts, [r.orientation_error_deg for r in rows],
             label="orientation error [deg]", color="tab:blue")
    ax1b = ax1.twinx()
    ax1b.plot(ts, [r.position_error_m for r in rows],
              label="position error [m]", color="tab:orange")
    ax1.set_ylabel("orientation error [deg]", color="tab:blue")
    ax1b.set_ylabel("position error [m]", color="tab:orange")
    ax2.plot(ts, [r.setup_accuracy for r in rows], color="tab:green")
    ax2.set_ylim(-0.05, 1.05)
    ax2.set_ylabel("setup accuracy")
    ax2.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def plot_sweep(axis_name, records, out_path):
    """Median with interquartile band for every metric along one sweep axis.

    `records` is a list of dicts holding the axis value plus
    <metric>_median / <metric>_q25 / <metric>_q75 columns.
    """
    metrics = sorted({
        key[: -len("_median")] for rec in records for key in rec
        if key.endswith("_median")
    })
    ncols = len(metrics)
    fig, axes = plt.subplots(1, ncols, figsize=(4.0 * ncols, 3.6), squeeze=False)
    xs = list(range(len(records)))
    labels = [str(rec["value"]) for rec in records]
    for ax, metric in zip(axes[0], metrics):
        med = [rec.get(f"{metric}_median", math.nan) for rec in records]
        q25 = [rec.get(f"{metric}_q25", math.nan) for rec in records]
        q75 = [rec.get(f"{metric}_q75", math.nan) for rec in records]
        ax.plot(xs, med, marker="o")
        ax.fill_between(xs, q25, q75, alpha=0.25)
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, rotation=30)
        ax.set_xlabel(axis_name)
        ax.set_title(metric)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
