"""Deterministic figure rendering for the five plot kinds.

loss-curves    mean loss vs time with +-1 std bands, oracle rows dashed
moments        per-coordinate mean and variance curves vs oracle overlays
sigma-sweep    log-log asymptotic loss vs sigma with oracle limit lines
phase-timeline majority phase label per coordinate over time
scaling-panel  loss curves of baseline / rescaled / unrescaled runs
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from sde_lab_figures.schema import read_phases, read_stats  # noqa: E402

PLOT_KINDS = ("loss-curves", "moments", "sigma-sweep", "phase-timeline", "scaling-panel")

# fixed fonts and hash salt keep renders pixel-identical across invocations
matplotlib.rcParams.update({
    "font.family": "DejaVu Sans",
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "svg.hashsalt": "sde-lab-figures",
})


@dataclass(frozen=True)
class Series:
    path: str
    label: str | None = None


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    series: tuple
    output: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xscale: str | None = None
    yscale: str | None = None

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")
        if not self.series:
            raise ValueError("plot spec lists no input CSVs")


def load_plot_spec(path) -> PlotSpec:
    import tomli

    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    series = tuple(Series(path=s["path"], label=s.get("label")) for s in raw.get("series", []))
    return PlotSpec(
        kind=raw["kind"],
        series=series,
        output=raw["output"],
        title=raw.get("title", ""),
        xlabel=raw.get("xlabel", ""),
        ylabel=raw.get("ylabel", ""),
        xscale=raw.get("xscale"),
        yscale=raw.get("yscale"),
    )


def _label(series: Series, table) -> str:
    return series.label or f"{table.experiment_id} ({table.engine})"


def _plot_loss(ax, spec: PlotSpec, with_bands: bool = True):
    for series in spec.series:
        table = read_stats(series.path)
        if table.is_oracle:
            ax.plot(table.time, table.loss_mean, linestyle="--", label=_label(series, table))
        else:
            (line,) = ax.plot(table.time, table.loss_mean, label=_label(series, table))
            if with_bands:
                ax.fill_between(table.time, table.loss_mean - table.loss_std,
                                table.loss_mean + table.loss_std,
                                alpha=0.25, color=line.get_color(), linewidth=0)


def _plot_moments(axes, spec: PlotSpec):
    ax_mean, ax_cov = axes
    for series in spec.series:
        table = read_stats(series.path)
        style = {"linestyle": "--"} if table.is_oracle else {}
        for i in range(table.dim):
            ax_mean.plot(table.time, table.mean[:, i],
                         label=f"{_label(series, table)} mean_{i}", **style)
            ax_cov.plot(table.time, table.cov[:, i],
                        label=f"{_label(series, table)} cov_{i}{i}", **style)
    ax_mean.set_title("mean")
    ax_cov.set_title("variance")


def _plot_sweep(ax, spec: PlotSpec):
    # sweep summaries reuse the stats schema with time = sigma
    for series in spec.series:
        table = read_stats(series.path)
        if table.is_oracle:
            ax.plot(table.time, table.loss_mean, linestyle="--", marker="x",
                    label=_label(series, table))
        else:
            ax.plot(table.time, table.loss_mean, marker="o", label=_label(series, table))
    ax.set_xscale(spec.xscale or "log")
    ax.set_yscale(spec.yscale or "log")


def _plot_phases(ax, spec: PlotSpec):
    for series in spec.series:
        table = read_phases(series.path)
        for i in range(table.dim):
            ax.step(table.time, table.majority[:, i], where="post",
                    label=f"{series.label or table.experiment_id} coord {i}")
    ax.set_yticks([1, 2, 3])
    ax.set_ylim(0.5, 3.5)


def render(spec: PlotSpec):
    """Render the spec; returns (figure, [written paths]) after writing
    SVG and PNG next to the requested output stem."""
    if spec.kind == "moments":
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
        _plot_moments(axes, spec)
        main_ax = axes[0]
        for ax in axes:
            ax.legend(fontsize=7)
    else:
        fig, ax = plt.subplots(figsize=(5.4, 3.6))
        main_ax = ax
        if spec.kind in ("loss-curves", "scaling-panel"):
            _plot_loss(ax, spec, with_bands=True)
        elif spec.kind == "sigma-sweep":
            _plot_sweep(ax, spec)
        elif spec.kind == "phase-timeline":
            _plot_phases(ax, spec)
        ax.legend(fontsize=8)
    if spec.xscale and spec.kind != "sigma-sweep":
        main_ax.set_xscale(spec.xscale)
    if spec.yscale and spec.kind != "sigma-sweep":
        main_ax.set_yscale(spec.yscale)
    if spec.title:
        fig.suptitle(spec.title)
    if spec.xlabel:
        main_ax.set_xlabel(spec.xlabel)
    if spec.ylabel:
        main_ax.set_ylabel(spec.ylabel)
    fig.tight_layout()

    stem = Path(spec.output)
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for ext, meta in (("svg", {"Date": None}), ("png", {})):
        out = stem.with_suffix(f".{ext}")
        fig.savefig(out, metadata=meta)
        written.append(out)
    return fig, written
