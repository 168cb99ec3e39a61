"""Figure rendering.

Four figure kinds, all derived from the simulator's CSV outputs:

  risk_curve      one line per method, stderr band, log2 context-length axis
  dim_sweep       per-method lines overlaid across ambient dimensions
  alignment_hist  histogram of per-neuron subspace mass with chance line
  concentration   log-log error decay with fitted power law

Rendering is deterministic: fixed style, fixed ordering, and no timestamps
embedded in the output image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
# Fixed hash salt so SVG element ids do not vary between runs.
matplotlib.rcParams["svg.hashsalt"] = "plot-emitter"

import matplotlib.pyplot as plt

from .reader import (ALIGNMENT_COLUMNS, CONCENTRATION_COLUMNS,
                     EmptySelectionError, SchemaError, Table, read_table,
                     read_risk_tables)

KINDS = ("risk_curve", "dim_sweep", "alignment_hist", "concentration")

# Fixed per-method styling so that the same data always renders identically.
_METHOD_ORDER = ("transformer", "krr", "nn_one_step", "nn_adam")
_COLORS = {"transformer": "#d62728", "krr": "#1f77b4",
           "nn_one_step": "#2ca02c", "nn_adam": "#9467bd"}
_FALLBACK_COLOR = "#7f7f7f"


@dataclass(frozen=True)
class PlotSpec:
    inputs: tuple[str, ...]
    kind: str
    out: str
    title: str | None = None
    excess: bool = False  # plot excess risk instead of raw risk
    filters: dict = field(default_factory=dict)  # column -> required value

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def _method_sort_key(method: str):
    try:
        return (0, _METHOD_ORDER.index(method))
    except ValueError:
        return (1, method)


def _require_rows(table: Table, what: str) -> Table:
    if not table.rows:
        raise EmptySelectionError(f"no rows to plot for {what}")
    return table


def _save(fig, out: str) -> None:
    # Strip the metadata that would otherwise vary between runs.
    meta = {"Date": None} if out.endswith(".svg") else None
    fig.savefig(out, dpi=150, metadata=meta)
    plt.close(fig)


def _risk_value(row, excess: bool) -> float:
    return row["excess_risk"] if excess else row["risk_mean"]


def _plot_curve(ax, rows, label, color, excess):
    rows = sorted(rows, key=lambda r: r["context_length"])
    x = [r["context_length"] for r in rows]
    y = [_risk_value(r, excess) for r in rows]
    se = [r["risk_stderr"] for r in rows]
    ax.plot(x, y, marker="o", markersize=3.5, label=label, color=color)
    ax.fill_between(x, [a - b for a, b in zip(y, se)],
                    [a + b for a, b in zip(y, se)], alpha=0.2, color=color,
                    linewidth=0)


def _context_axis(ax, lengths):
    ax.set_xscale("log", base=2)
    ax.set_xticks(sorted(set(lengths)))
    ax.get_xaxis().set_major_formatter(matplotlib.ticker.ScalarFormatter())
    ax.set_xlabel("context length $N_*$")


def _render_risk_curve(spec: PlotSpec):
    table = read_risk_tables(spec.inputs).filtered(**spec.filters)
    _require_rows(table, "risk_curve")
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    for method in sorted(table.distinct("method"), key=_method_sort_key):
        sub = table.filtered(method=method)
        _plot_curve(ax, sub.rows, method,
                    _COLORS.get(method, _FALLBACK_COLOR), spec.excess)
    _context_axis(ax, table.column("context_length"))
    ax.set_ylabel("excess ICL risk" if spec.excess else "ICL risk")
    ax.legend(frameon=False)
    if spec.title:
        ax.set_title(spec.title)
    _save(fig, spec.out)


def _render_dim_sweep(spec: PlotSpec):
    table = read_risk_tables(spec.inputs).filtered(**spec.filters)
    _require_rows(table, "dim_sweep")
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    dims = sorted(table.distinct("d"))
    for method in sorted(table.distinct("method"), key=_method_sort_key):
        color = _COLORS.get(method, _FALLBACK_COLOR)
        for k, d in enumerate(dims):
            sub = table.filtered(method=method, d=d)
            if not sub.rows:
                continue
            rows = sorted(sub.rows, key=lambda r: r["context_length"])
            x = [r["context_length"] for r in rows]
            y = [_risk_value(r, spec.excess) for r in rows]
            style = ["-", "--", ":", "-."][k % 4]
            ax.plot(x, y, style, marker="o", markersize=3, color=color,
                    label=f"{method} d={d}")
    _context_axis(ax, table.column("context_length"))
    ax.set_ylabel("excess ICL risk" if spec.excess else "ICL risk")
    ax.legend(frameon=False, fontsize=8)
    if spec.title:
        ax.set_title(spec.title)
    _save(fig, spec.out)


def _render_alignment_hist(spec: PlotSpec):
    if len(spec.inputs) != 1:
        raise SchemaError("alignment_hist takes exactly one input CSV")
    table = read_table(spec.inputs[0], ALIGNMENT_COLUMNS)
    _require_rows(table, "alignment_hist")
    ratios = table.column("mass_ratio")
    baseline = table.rows[0]["baseline"]
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    ax.hist(ratios, bins=40, range=(0.0, 1.0), color="#d62728", alpha=0.75)
    ax.axvline(baseline, color="black", linestyle="--",
               label=f"chance level {baseline:.3g}")
    ax.set_xlabel("subspace mass ratio per neuron")
    ax.set_ylabel("count")
    ax.legend(frameon=False)
    if spec.title:
        ax.set_title(spec.title)
    _save(fig, spec.out)


def _render_concentration(spec: PlotSpec):
    if len(spec.inputs) != 1:
        raise SchemaError("concentration takes exactly one input CSV")
    table = read_table(spec.inputs[0], CONCENTRATION_COLUMNS)
    _require_rows(table, "concentration")
    rows = sorted(table.rows, key=lambda r: r["context_length"])
    x = [r["context_length"] for r in rows]
    y = [r["abs_error_mean"] for r in rows]
    se = [r["abs_error_stderr"] for r in rows]
    # Least-squares power-law fit in log space.
    lx = [math.log(v) for v in x]
    ly = [math.log(v) for v in y]
    n = len(x)
    mx, my = sum(lx) / n, sum(ly) / n
    slope = sum((a - mx) * (b - my) for a, b in zip(lx, ly)) / \
        sum((a - mx) ** 2 for a in lx)
    intercept = my - slope * mx
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    ax.errorbar(x, y, yerr=se, fmt="o", markersize=4, color="#1f77b4",
                capsize=2, label="measured")
    ax.plot(x, [math.exp(intercept + slope * v) for v in lx], "--",
            color="black", label=f"fit slope {slope:.2f}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("context length $N$")
    ax.set_ylabel("mean absolute correlation error")
    ax.legend(frameon=False)
    if spec.title:
        ax.set_title(spec.title)
    _save(fig, spec.out)


_RENDERERS = {"risk_curve": _render_risk_curve,
              "dim_sweep": _render_dim_sweep,
              "alignment_hist": _render_alignment_hist,
              "concentration": _render_concentration}


def render(spec: PlotSpec) -> str:
    """Render the figure described by `spec` and return the output path."""
    _RENDERERS[spec.kind](spec)
    return spec.out
