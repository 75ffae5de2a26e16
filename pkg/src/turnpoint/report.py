"""Report emission: aggregate CSV, per-metric SVG curves, and a summary
with the turning-point readout per category."""

from __future__ import annotations

import csv
import os

from .harness import METRIC_FIELDS, AggregateRow
from .svgchart import line_chart

__all__ = ["PLOT_METRICS", "turning_point", "emit_report"]

PLOT_METRICS = ("ta1", "ta2", "ta_mean", "ic", "bc", "occupancy2")

AGGREGATES_CSV_COLUMNS = ("mode", "category", "x", "setting", "n") + tuple(
    f"{m}_{suffix}" for m in METRIC_FIELDS for suffix in ("mean", "std")
)


def turning_point(points: list[tuple[float, float]], threshold: float = 0.9) -> float | None:
    """Largest grid ratio whose mean stays within ``threshold`` of the
    value at the smallest ratio (the pure-second-event control).

    ``points`` holds (x, mean) pairs; returns None when fewer than two
    ratios are present.
    """
    if len(points) < 2:
        return None
    points = sorted(points)
    reference = points[0][1]
    kept = [x for x, mean in points if mean >= threshold * reference]
    return max(kept) if kept else points[0][0]


def _write_aggregates_csv(aggregates: list[AggregateRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATES_CSV_COLUMNS)
        for row in aggregates:
            cells = [
                row.mode,
                row.category,
                repr(row.x),
                "" if row.setting is None else str(row.setting),
                str(row.n),
            ]
            for metric in METRIC_FIELDS:
                pair = row.stats.get(metric)
                if pair is None:
                    cells.extend(["", ""])
                else:
                    cells.extend([repr(pair[0]), repr(pair[1])])
            writer.writerow(cells)


def _series_label(category: str, setting: int | None) -> str:
    return category if setting is None else f"{category} / setting {setting}"


def emit_report(aggregates: list[AggregateRow], out_dir: str, threshold: float = 0.9) -> None:
    """Write ``aggregates.csv``, one SVG per (metric, mode), and
    ``summary.md`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    aggregates = list(aggregates)
    _write_aggregates_csv(aggregates, os.path.join(out_dir, "aggregates.csv"))

    summary = ["# Sweep summary", ""]
    if not aggregates:
        summary.append("No data: the sweep produced no successful runs.")
        with open(os.path.join(out_dir, "summary.md"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(summary) + "\n")
        return

    modes = sorted({row.mode for row in aggregates})
    for mode in modes:
        mode_rows = [row for row in aggregates if row.mode == mode]
        curve_keys = sorted(
            {(row.category, row.setting) for row in mode_rows},
            key=lambda k: (k[0], k[1] if k[1] is not None else -1),
        )
        for metric in PLOT_METRICS:
            series = []
            for category, setting in curve_keys:
                pts = [
                    (row.x, row.stats[metric][0])
                    for row in mode_rows
                    if row.category == category
                    and row.setting == setting
                    and row.stats.get(metric) is not None
                ]
                if pts:
                    series.append((_series_label(category, setting), sorted(pts)))
            if not series:
                continue
            svg = line_chart(
                title=f"{metric} vs split ratio ({mode})",
                series=series,
                x_label="split ratio x",
                y_label=metric,
                y_range=(0.0, 1.05),
            )
            with open(
                os.path.join(out_dir, f"{metric}_{mode}.svg"), "w", encoding="utf-8"
            ) as fh:
                fh.write(svg)

        summary.append(f"## Mode: {mode}")
        summary.append("")
        summary.append(
            f"Turning point = largest ratio x whose mean ta2 stays within "
            f"{threshold:.0%} of its value at the smallest ratio."
        )
        summary.append("")
        summary.append("| category | setting | runs | turning point (ta2) |")
        summary.append("| --- | --- | --- | --- |")
        for category, setting in curve_keys:
            rows = [
                row
                for row in mode_rows
                if row.category == category and row.setting == setting
            ]
            n_runs = sum(row.n for row in rows)
            pts = [
                (row.x, row.stats["ta2"][0])
                for row in rows
                if row.stats.get("ta2") is not None
            ]
            tp = turning_point(pts, threshold)
            tp_text = "n/a" if tp is None else f"{tp:g}"
            setting_text = "-" if setting is None else str(setting)
            summary.append(
                f"| {category} | {setting_text} | {n_runs} | {tp_text} |"
            )
        summary.append("")

    with open(os.path.join(out_dir, "summary.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary) + "\n")
