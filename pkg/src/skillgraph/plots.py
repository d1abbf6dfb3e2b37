"""Figure rendering for the report paths: every bench/trace report can drop
matplotlib PNGs next to its CSV/JSON output. All functions take already
aggregated rows and return the written path."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

MODE_COLORS = {
    "grasp": "#2b6cb0",
    "flat": "#c05621",
    "monolithic": "#975a16",
    "fallback": "#4a5568",
}

LAYERS = ("direct", "local_repair", "replan", "fallback", "fail")
LAYER_COLORS = ("#2f855a", "#68d391", "#ecc94b", "#ed8936", "#c53030")


def _fig(width=6.0, height=4.0):
    return plt.subplots(figsize=(width, height), dpi=120)


def save_mode_bars(table: dict[str, dict], path, metric="success_rate", ylabel="success rate (%)") -> Path:
    fig, ax = _fig()
    modes = sorted(table)
    values = [table[m][metric] for m in modes]
    colors = [MODE_COLORS.get(m, "#718096") for m in modes]
    ax.bar(modes, values, color=colors)
    ax.set_ylabel(ylabel)
    ax.set_title(f"{metric} by mode")
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.1f}", ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def save_sweep_curve(rows: list[dict], path, x_key="M", title="retrieved-skill budget sweep") -> Path:
    fig, ax = _fig()
    modes = sorted({r["mode"] for r in rows})
    for mode in modes:
        pts = sorted((r[x_key], r["success_rate"]) for r in rows if r["mode"] == mode)
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=mode,
            color=MODE_COLORS.get(mode, None),
        )
    ax.set_xlabel(x_key)
    ax.set_ylabel("success rate (%)")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def save_locality_scatter(points: list[dict], path) -> Path:
    """points: {mode, plan_length, re_executed} per failure event."""
    fig, ax = _fig()
    modes = sorted({p["mode"] for p in points})
    for mode in modes:
        xs = [p["plan_length"] for p in points if p["mode"] == mode]
        ys = [p["re_executed"] for p in points if p["mode"] == mode]
        ax.scatter(xs, ys, alpha=0.45, label=mode, color=MODE_COLORS.get(mode, None), s=24)
    ax.set_xlabel("plan length (skill nodes)")
    ax.set_ylabel("nodes invalidated per failure")
    ax.set_title("failure locality")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def save_escalation_stack(table: dict[str, dict], path) -> Path:
    """Stacked per-mode distribution over the fault-tolerance layers."""
    fig, ax = _fig()
    modes = sorted(table)
    bottoms = [0.0] * len(modes)
    for layer, color in zip(LAYERS, LAYER_COLORS):
        values = []
        for m in modes:
            hist = table[m]["escalation"]
            total = max(1, sum(hist.values()))
            values.append(100.0 * hist.get(layer, 0) / total)
        ax.bar(modes, values, bottom=bottoms, label=layer, color=color)
        bottoms = [b + v for b, v in zip(bottoms, values)]
    ax.set_ylabel("episodes (%)")
    ax.set_title("outcome escalation layers")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path
