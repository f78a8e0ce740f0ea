"""Panel renderers over harness summary files.

Strictly read-only: every plotted curve is taken verbatim from the summary
document (means, bands, histograms, slopes are all precomputed upstream), so
figures are reproducible from the JSON alone and identical bytes come out of
identical inputs.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SUPPORTED_SCHEMA = "1"
PANELS = (
    "regret-curves",
    "selection-hist",
    "budget-hist",
    "coverage",
    "slope",
    "three-panel",
)

# fixed style so two renders of the same summary emit identical bytes
matplotlib.rcParams.update(
    {
        "figure.dpi": 110,
        "savefig.dpi": 150,
        "svg.hashsalt": "mlcb-plots",
        "font.family": "DejaVu Sans",
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)

_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


class SchemaMismatchError(RuntimeError):
    pass


class EmptySummaryError(RuntimeError):
    pass


def load_summary(path: str) -> dict:
    with open(path) as fh:
        summary = json.load(fh)
    version = summary.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise SchemaMismatchError(
            f"summary schema {version!r} but this plotter supports {SUPPORTED_SCHEMA!r}"
        )
    if not summary.get("cells"):
        raise EmptySummaryError("summary contains no run cells")
    return summary


def _cell_label(cell: dict) -> str:
    return f"{cell['procedure']} M={cell['M']}"


def _style(i: int) -> dict:
    return {"color": _COLORS[i % len(_COLORS)], "linewidth": 1.6}


def draw_regret(ax, summary: dict) -> None:
    for i, cell in enumerate(summary["cells"]):
        series = cell.get("realized_regret")
        if series is None:
            continue
        t = cell["checkpoints"]
        style = _style(i)
        ax.plot(t, series["mean"], label=_cell_label(cell), **style)
        ax.fill_between(
            t, series["band_lower"], series["band_upper"],
            color=style["color"], alpha=0.2, linewidth=0,
        )
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative regret")
    ax.set_title("Cumulative regret (mean ± 0.5 std)")
    ax.legend(fontsize=8)


def _grouped_bars(ax, summary: dict, field: str, normalize: bool) -> None:
    cells = summary["cells"]
    K = len(cells[0][field])
    width = 0.8 / len(cells)
    xs = np.arange(K)
    for i, cell in enumerate(cells):
        vals = np.asarray(cell[field], dtype=float)
        if normalize and vals.sum() > 0:
            vals = vals / vals.sum()
        ax.bar(xs + i * width, vals, width, label=_cell_label(cell),
               color=_style(i)["color"])
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels([str(k) for k in range(K)])
    ax.set_xlabel("expert")
    ax.legend(fontsize=8)


def draw_selection(ax, summary: dict) -> None:
    _grouped_bars(ax, summary, "advisor_histogram", normalize=True)
    ax.set_ylabel("share of rounds as advisor")
    ax.set_title("Final distribution of advisor selection")


def draw_budget(ax, summary: dict) -> None:
    _grouped_bars(ax, summary, "budget_histogram", normalize=True)
    ax.set_ylabel("share of training updates")
    ax.set_title("Allocation of training budget")


def draw_coverage(ax, summary: dict) -> None:
    cells = [c for c in summary["cells"] if "coverage" in c]
    if not cells:
        raise EmptySummaryError("summary has no coverage statistics")
    labels = [_cell_label(c) for c in cells]
    rates = [c["coverage"]["rate"] for c in cells]
    ax.bar(np.arange(len(cells)), rates, color=_COLORS[0])
    delta = summary.get("delta")
    if delta is not None:
        ax.axhline(delta, color="red", linestyle="--", label=f"delta = {delta}")
        ax.legend(fontsize=8)
    ax.set_xticks(np.arange(len(cells)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("run-level violation rate")
    ax.set_title("Bracket coverage")


def draw_slope(ax, summary: dict) -> None:
    drew = False
    for i, cell in enumerate(summary["cells"]):
        series = cell.get("realized_regret")
        slope = cell.get("realized_slope")
        if series is None or slope is None:
            continue
        t = np.asarray(cell["checkpoints"], dtype=float)
        mean = np.asarray(series["mean"], dtype=float)
        mask = (t > 0) & (mean > 0)
        style = _style(i)
        ax.loglog(t[mask], mean[mask],
                  label=f"{_cell_label(cell)} (slope {slope:.2f})", **style)
        drew = True
    if not drew:
        raise EmptySummaryError("summary has no positive regret curves")
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative regret")
    ax.set_title("Regret growth rate (log-log)")
    ax.legend(fontsize=8)


_DRAWERS = {
    "regret-curves": draw_regret,
    "selection-hist": draw_selection,
    "budget-hist": draw_budget,
    "coverage": draw_coverage,
    "slope": draw_slope,
}


def build_figure(summary: dict, panel: str):
    """Figure for one panel kind (or the combined three-panel layout)."""
    if panel == "three-panel":
        fig, axes = plt.subplots(1, 3, figsize=(15, 4.2))
        draw_regret(axes[0], summary)
        draw_selection(axes[1], summary)
        draw_budget(axes[2], summary)
        fig.suptitle(summary.get("name", ""))
        fig.tight_layout()
        return fig
    if panel not in _DRAWERS:
        raise ValueError(f"unknown panel {panel!r}; choose from {PANELS}")
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    _DRAWERS[panel](ax, summary)
    fig.tight_layout()
    return fig


def render(summary_path: str, panel: str, out_path: str) -> str:
    """Render one panel of a summary to an image file; returns the path."""
    summary = load_summary(summary_path)
    fig = build_figure(summary, panel)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    fig.savefig(out_path, metadata=_fixed_metadata(out_path))
    plt.close(fig)
    return out_path


def _fixed_metadata(out_path: str) -> dict:
    # strip volatile metadata so identical inputs give identical bytes
    if out_path.endswith(".svg"):
        return {"Date": None}
    if out_path.endswith(".png"):
        return {"Software": "mlcb-plots"}
    return {}
