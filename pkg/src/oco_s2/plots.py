"""Minimal SVG plots of sweep summaries (optional; needs matplotlib)."""

from __future__ import annotations

import io

from .metrics import comm_blk


def sweep_svg(plan, rows):
    """Line plot of mean final regret with one-std error bars; returns SVG text."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # Fixed ids and no timestamp so the same data gives the same bytes.
    matplotlib.rcParams["svg.hashsalt"] = "oco-s2"
    stats = {r.setting: (r.mean, r.std) for r in rows if r.metric == "final_regret"}
    xs, ys, es = [], [], []
    for v in plan.grid:
        label, cfg = plan.setting(v)
        mean, std = stats[label]
        xs.append(comm_blk(cfg.T, cfg.K, cfg.m, plan.model.n_u) if plan.kind == "K" else v)
        ys.append(mean)
        es.append(std)
    xlabel = {
        "K": "communication scalars",
        "H": "memory H",
        "participation": "participating clients m",
        "horizon-scaling": "horizon T",
        "prediction-mismatch": "prediction noise scale",
    }[plan.kind]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3)
    if plan.kind in ("K", "horizon-scaling"):
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("final dynamic regret")
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()
