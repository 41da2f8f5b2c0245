"""Metrics CSV output and dependency-free SVG charts.

All numbers are written with fixed 6-decimal formatting so reruns with the
same seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .learning import EpisodeMetrics

PER_TICK_COLUMNS = ["episode", "tick", "welfare", "opt_welfare", "cum_ratio", "revenue", "loss"]
SUMMARY_COLUMNS = ["policy", "daily_welfare", "daily_revenue", "mean_grad_norm"]
SVG_WIDTH = 800
SVG_HEIGHT = 500
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{float(x):.6f}"


def write_metrics(metrics: list, out_dir) -> tuple:
    """Write per_tick.csv and summary.csv under out_dir.

    per_tick holds one row per (episode, tick) in input order. summary holds
    one row per policy with daily welfare and revenue averaged over that
    policy's episodes. Returns the two paths.
    """
    if not metrics:
        raise ValueError("no metrics to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_tick_path = out / "per_tick.csv"
    summary_path = out / "summary.csv"

    with open(per_tick_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PER_TICK_COLUMNS)
        for em in metrics:
            for t in range(len(em.welfare)):
                writer.writerow([
                    em.episode, t,
                    _fmt(em.welfare[t]), _fmt(em.opt_welfare[t]),
                    _fmt(em.cum_ratio[t]), _fmt(em.revenue[t]), _fmt(em.loss[t]),
                ])

    by_policy: dict = {}
    for em in metrics:
        by_policy.setdefault(em.policy, []).append(em)
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for policy, ems in by_policy.items():
            writer.writerow([
                policy,
                _fmt(np.mean([e.daily_welfare for e in ems])),
                _fmt(np.mean([e.daily_revenue for e in ems])),
                _fmt(np.mean([e.mean_grad_norm for e in ems])),
            ])
    return per_tick_path, summary_path


def read_per_tick(path) -> dict:
    """Parse a per_tick.csv back into column arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PER_TICK_COLUMNS:
            raise ValueError(f"{path}: expected columns {PER_TICK_COLUMNS}, got {reader.fieldnames}")
        cols = {k: [] for k in PER_TICK_COLUMNS}
        for row in reader:
            for k in PER_TICK_COLUMNS:
                cols[k].append(float(row[k]))
    if not cols["tick"]:
        raise ValueError(f"{path}: no data rows")
    return {k: np.asarray(vs) for k, vs in cols.items()}


def _mean_by(key_vals: np.ndarray, values: np.ndarray):
    keys = np.unique(key_vals)
    return keys, np.array([values[key_vals == k].mean() for k in keys])


def _padded(lo: float, hi: float) -> tuple:
    span = hi - lo
    if span <= 0:
        span = max(abs(hi), 1.0)
    return lo - 0.05 * span, hi + 0.05 * span


def _svg_chart(series: list, labels: list, title: str, x_label: str, y_label: str) -> str:
    """One multi-series line chart as an SVG string.

    series is a list of (x, y) array pairs. Axis ranges are the data min and
    max padded by 5 percent on both sides.
    """
    if not series or any(len(x) == 0 for x, _ in series):
        raise ValueError("cannot chart empty series")
    x_lo, x_hi = _padded(min(x.min() for x, _ in series), max(x.max() for x, _ in series))
    y_lo, y_hi = _padded(min(y.min() for _, y in series), max(y.max() for _, y in series))
    left, right, top, bottom = 70.0, 780.0, 40.0, 450.0

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

    def sy(y):
        return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{(left + right) / 2:.2f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
        f'<line x1="{left:.2f}" y1="{bottom:.2f}" x2="{right:.2f}" y2="{bottom:.2f}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{left:.2f}" y1="{top:.2f}" x2="{left:.2f}" y2="{bottom:.2f}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(f'<line x1="{sx(xv):.2f}" y1="{bottom:.2f}" x2="{sx(xv):.2f}" '
                     f'y2="{bottom + 5:.2f}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{sx(xv):.2f}" y="{bottom + 20:.2f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{xv:.2f}</text>')
        parts.append(f'<line x1="{left - 5:.2f}" y1="{sy(yv):.2f}" x2="{left:.2f}" '
                     f'y2="{sy(yv):.2f}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{left - 8:.2f}" y="{sy(yv) + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{yv:.4f}</text>')
    parts.append(f'<text x="{(left + right) / 2:.2f}" y="{SVG_HEIGHT - 8}" '
                 f'text-anchor="middle" font-family="sans-serif" font-size="13">{x_label}</text>')
    parts.append(f'<text x="16" y="{(top + bottom) / 2:.2f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 16 {(top + bottom) / 2:.2f})">{y_label}</text>')
    for idx, ((x, y), label) in enumerate(zip(series, labels)):
        color = PALETTE[idx % len(PALETTE)]
        points = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        ly = top + 16 + 16 * idx
        parts.append(f'<line x1="{right - 150:.2f}" y1="{ly:.2f}" x2="{right - 126:.2f}" '
                     f'y2="{ly:.2f}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{right - 120:.2f}" y="{ly + 4:.2f}" '
                     f'font-family="sans-serif" font-size="12">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_svg(per_tick_paths: list, labels: list, out_dir) -> list:
    """Render the two standard charts from per_tick CSVs, one series per file.

    cumulative_ratio.svg plots the per-tick cumulative welfare ratio (mean
    across episodes when a file holds several) and loss_curve.svg plots the
    mean loss per episode. Series must share their tick axis. Returns the
    written paths; raises on empty or inconsistent inputs.
    """
    if len(per_tick_paths) != len(labels):
        raise ValueError("need one label per per_tick csv")
    if not per_tick_paths:
        raise ValueError("no per_tick csvs given")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ratio_series = []
    loss_series = []
    tick_axis = None
    for path in per_tick_paths:
        cols = read_per_tick(path)
        ticks, ratio = _mean_by(cols["tick"], cols["cum_ratio"])
        if tick_axis is None:
            tick_axis = ticks
        elif len(ticks) != len(tick_axis) or np.any(ticks != tick_axis):
            raise ValueError(f"{path}: tick axis does not match the other series")
        ratio_series.append((ticks, ratio))
        episodes, loss = _mean_by(cols["episode"], cols["loss"])
        loss_series.append((episodes, loss))

    ratio_path = out / "cumulative_ratio.svg"
    with open(ratio_path, "w", encoding="utf-8") as fh:
        fh.write(_svg_chart(ratio_series, labels, "Cumulative welfare ratio",
                            "tick", "cumulative ratio"))
    loss_path = out / "loss_curve.svg"
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write(_svg_chart(loss_series, labels, "Loss per episode",
                            "episode", "mean loss"))
    return [ratio_path, loss_path]
