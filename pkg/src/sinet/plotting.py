"""Report figures rendered straight to files (no interactive backend)."""

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

STYLE = {"dpi": 120}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **STYLE)
    return path


def plot_summary(summary, path, title=None):
    """Per-layer parameters and MACs as horizontal bars."""
    layers = summary.layers
    names = [l.name for l in layers]
    y = np.arange(len(layers))
    fig = Figure(figsize=(9, 0.28 * len(layers) + 1.6), layout="constrained")
    ax_p, ax_m = fig.subplots(1, 2, sharey=True)
    ax_p.barh(y, [l.params for l in layers], color="tab:blue")
    ax_m.barh(y, [l.macs / 1e6 for l in layers], color="tab:orange")
    ax_p.set_yticks(y, names, fontsize=7)
    ax_p.invert_yaxis()
    ax_p.set_xlabel("parameters")
    ax_m.set_xlabel("MMACs @ %dx%d" % tuple(summary.input_hw))
    fig.suptitle(title or f"{summary.total_params:,} params, {summary.total_macs / 1e9:.4f} GMACs")
    return _save(fig, path)


def plot_training(records, path):
    """Loss and training mIoU per epoch, one colour per stage."""
    fig = Figure(figsize=(8, 3.2), layout="constrained")
    ax_l, ax_m = fig.subplots(1, 2)
    step = np.arange(1, len(records) + 1)
    stages = np.array([r["stage"] for r in records])
    for stage, colour in ((1, "tab:gray"), (2, "tab:blue")):
        sel = stages == stage
        if sel.any():
            ax_l.plot(step[sel], [r["loss"] for r, s in zip(records, sel) if s], color=colour,
                      label=f"stage {stage}")
            ax_m.plot(step[sel], [r["miou"] for r, s in zip(records, sel) if s], color=colour)
    ax_l.set_xlabel("epoch (both stages)")
    ax_l.set_ylabel("loss")
    ax_l.legend(frameon=False)
    ax_m.set_xlabel("epoch (both stages)")
    ax_m.set_ylabel("training mIoU")
    ax_m.set_ylim(0, 1)
    return _save(fig, path)


def plot_ablation(result, path):
    """Median mIoU against rotation range, one line per decoder kind; the
    shaded band spans the per-seed minimum and maximum."""
    fig = Figure(figsize=(5, 3.6), layout="constrained")
    ax = fig.subplots()
    med = result.table()
    for i, kind in enumerate(result.kinds):
        per = np.array([result.per_seed[(kind, s)] for s in result.seeds])
        line, = ax.plot(result.angles, med[i], marker="o", label=kind.value)
        ax.fill_between(result.angles, per.min(axis=0), per.max(axis=0), color=line.get_color(), alpha=0.15)
    ax.set_xlabel("max rotation (degrees)")
    ax.set_ylabel("mIoU")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_bench(report, path):
    """Mean latency against dilation rate for each (channels, size) pair."""
    fig = Figure(figsize=(5, 3.6), layout="constrained")
    ax = fig.subplots()
    groups = {}
    for r in report.rows:
        groups.setdefault((r.channels, r.size), []).append(r)
    for (c, s), rows in groups.items():
        ax.errorbar([r.dilation for r in rows], [r.mean_ms for r in rows],
                    yerr=[[r.mean_ms - r.min_ms for r in rows], [r.max_ms - r.mean_ms for r in rows]],
                    marker="o", capsize=3, label=f"{c}x{s}x{s}")
    ax.set_xlabel("dilation")
    ax.set_ylabel("ms per pass")
    ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)
