"""Standalone SVG bar chart of mean IoU per fusion configuration, plus the plotted numbers as CSV."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..errors import UsageError
from .experiments import FUSION_CONFIGS, fmt, to_csv

PLOT_HEIGHT = 200.0  # pixels for an IoU of 1.0
BAR_WIDTH = 28.0
GAP = 12.0
MARGIN = 40.0


def bar_data(rows) -> list[dict]:
    """Seed-averaged bars from fusion-grid rows; ``pc`` rows get a ``+PC`` label."""
    groups: dict = {}
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        value = float(r["mean_iou"])
        if np.isnan(value):
            continue
        label = r["config"] + ("+PC" if r.get("regime") == "pc" else "")
        groups.setdefault((r["config"], r.get("regime", "baseline"), label), []).append(value)
    order = {name: i for i, name in enumerate(FUSION_CONFIGS)}
    keys = sorted(groups, key=lambda k: (order.get(k[0], len(order)), k[0], k[1] != "baseline"))
    return [{"label": k[2], "config": k[0], "regime": k[1], "n": len(groups[k]),
             "mean_iou": float(np.mean(groups[k]))} for k in keys]


def render_svg(bars: list[dict], title: str = "Mean voxel IoU per fusion configuration") -> str:
    if not bars:
        raise UsageError("nothing to plot")
    width = 2 * MARGIN + len(bars) * (BAR_WIDTH + GAP)
    height = PLOT_HEIGHT + 2 * MARGIN + 40
    base = MARGIN + PLOT_HEIGHT
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.1f} {height:.1f}" data-scale="{PLOT_HEIGHT!r}">',
        f'<text x="{MARGIN:.1f}" y="{MARGIN / 2:.1f}" font-family="sans-serif" font-size="12">{escape(title)}</text>',
        f'<line x1="{MARGIN:.1f}" y1="{base:.1f}" x2="{width - MARGIN:.1f}" y2="{base:.1f}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = base - tick * PLOT_HEIGHT
        out.append(f'<text x="{MARGIN - 4:.1f}" y="{y + 3:.1f}" font-family="sans-serif" font-size="8" '
                   f'text-anchor="end">{tick:.2f}</text>')
    for i, bar in enumerate(bars):
        x = MARGIN + GAP / 2 + i * (BAR_WIDTH + GAP)
        h = bar["mean_iou"] * PLOT_HEIGHT
        color = "#d95f02" if bar["regime"] == "pc" else "#1b9e77"
        out.append(f'<rect x="{x:.3f}" y="{base - h!r}" width="{BAR_WIDTH:.1f}" height="{h!r}" fill="{color}" '
                   f'data-label="{escape(bar["label"])}" data-value="{fmt(bar["mean_iou"])}"/>')
        cx, ly = x + BAR_WIDTH / 2, base + 10
        out.append(f'<text x="{cx:.3f}" y="{ly:.1f}" font-family="sans-serif" font-size="8" text-anchor="end" '
                   f'transform="rotate(-45 {cx:.3f} {ly:.1f})">{escape(bar["label"])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plotdata(rows, out_dir) -> tuple[Path, Path]:
    """Write ``fusion_iou.svg`` and ``fusion_iou.csv``; byte-identical for identical input."""
    bars = bar_data(rows)
    if not bars:
        raise UsageError("no successful rows to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    svg_path, csv_path = out / "fusion_iou.svg", out / "fusion_iou.csv"
    svg_path.write_text(render_svg(bars), encoding="utf-8")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(bars, ["label", "config", "regime", "n", "mean_iou"]))
    return svg_path, csv_path
