"""Static SVG line charts.  Output is byte-stable for identical inputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "svg.hashsalt": "rcfair",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def line_chart(
    path: str | Path,
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    markers: Mapping[str, tuple[float, float]] | None = None,
) -> Path:
    path = Path(path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for name, ys in series.items():
            ax.plot(x, ys, label=name, linewidth=1.4)
        for name, (mx, my) in (markers or {}).items():
            ax.plot([mx], [my], marker="o", linestyle="none", label=name)
        ax.axhline(0.0, color="0.5", linewidth=0.6)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def cost_sweep_charts(report, out_dir: str | Path, stem: str = "cost") -> list[Path]:
    """One chart per metric: loss of each notion against the selection rate."""
    out_dir = Path(out_dir)
    rates = [row.rate for row in report.rows]
    paths = []
    for metric in ("precision", "recall", "accuracy"):
        series = {n: [row.loss[n][metric] for row in report.rows] for n in report.notions}
        paths.append(
            line_chart(out_dir / f"{stem}_{metric}.svg", rates, series, "selection rate", f"{metric} loss")
        )
    return paths


def allocation_curve_chart(curve, path: str | Path) -> Path:
    alphas = [p.alpha for p in curve.points]
    marks = {k: (m.alpha, m.precision) for k, m in curve.markers.items() if k not in ("all_advantaged", "all_disadvantaged")}
    return line_chart(
        path,
        alphas,
        {"precision": [p.precision for p in curve.points]},
        f"share of budget to {curve.advantaged}",
        "precision",
        title=f"K = {curve.budget}",
        markers=marks,
    )


def trend_chart(table, path: str | Path) -> Path:
    means = table.level_means
    return line_chart(path, table.levels, means, table.param, f"mean {table.metric} loss")
