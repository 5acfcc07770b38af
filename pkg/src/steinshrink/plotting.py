"""PNG figures for sweep and table outputs.

Figures are built on :class:`matplotlib.figure.Figure` with the Agg canvas
directly, so no global pyplot state is touched and plotting is safe to call
from any thread.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {"figsize": (6.0, 4.0), "dpi": 120}


def _new():
    fig = Figure(figsize=STYLE["figsize"], dpi=STYLE["dpi"])
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path) -> str:
    fig.tight_layout()
    # no Software/version tag, so reruns produce identical files
    fig.savefig(path, format="png", metadata={"Software": None})
    return str(path)


def _xscale(ax, xs):
    if len(xs) and max(xs) > 20 * max(min((x for x in xs if x > 0), default=1.0), 1.0):
        ax.set_xscale("symlog", linthresh=1.0)


def plot_risk_sweep(rows: Sequence[dict], path, title: str = "") -> str:
    """Risk against |theta|, one line per estimator, with 3 SE error bars."""
    fig, ax = _new()
    series = defaultdict(list)
    for row in rows:
        series[row["estimator"]].append((row["theta_norm"], row["mean"], row["se"]))
    xs = []
    for label, pts in series.items():
        pts.sort()
        x, y, se = (np.array(c) for c in zip(*pts))
        ax.errorbar(x, y, yerr=3 * se, marker="o", ms=3, capsize=2, label=label)
        xs.extend(x.tolist())
    _xscale(ax, xs)
    ax.set_xlabel(r"$\|\theta\|$")
    ax.set_ylabel("risk")
    ax.set_title(title or "Monte Carlo risk")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_rw_table(w, r, bound: float | None, path, title: str = "") -> str:
    fig, ax = _new()
    ax.semilogx(w, r, lw=1.5, label="r(w)")
    if bound is not None and np.isfinite(bound):
        ax.axhline(bound, ls="--", color="0.4", lw=1, label=f"limit {bound:.4g}")
    ax.set_xlabel("w")
    ax.set_ylabel("r(w)")
    ax.set_title(title or "generalized Bayes shrinkage function")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_orthant_sweep(rows: Sequence[dict], path, title: str = "") -> str:
    """Paired risk difference against |theta| with a +-3 SE band."""
    fig, ax = _new()
    pts = sorted((row["theta_norm"], row["mean"], row["se"]) for row in rows)
    x, y, se = (np.array(c) for c in zip(*pts))
    ax.plot(x, y, marker="o", ms=3, label="difference")
    ax.fill_between(x, y - 3 * se, y + 3 * se, alpha=0.25, label="3 SE")
    ax.axhline(0.0, color="k", lw=0.8)
    _xscale(ax, x.tolist())
    ax.set_xlabel(r"$\|\theta\|$")
    ax.set_ylabel(r"$R(\delta) - R(X_+)$")
    ax.set_title(title or "orthant-restricted shrinkage")
    ax.legend(fontsize=8)
    return _save(fig, path)
