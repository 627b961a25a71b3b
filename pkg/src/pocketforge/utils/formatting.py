"""Formatting utilities for metrics, tables and the loss curve"""

from typing import Dict, Optional, Sequence

import asciichartpy as acp
from rich.table import Table

# Pass/fail colors for threshold checks
COLOR_GOOD = "#00ff00"
COLOR_BAD = "#ff0000"


def format_metric(value: Optional[float], decimals: int = 4) -> str:
    """Format a metric value; None renders as N/A"""
    if value is None:
        return "N/A"
    return f"{value:.{decimals}f}"


def loss_chart(values: Sequence[float], height: int = 12, width: int = 72) -> str:
    """ASCII plot of a loss curve, downsampled to at most ``width`` points"""
    if not values:
        return "No data"
    stride = max(1, (len(values) + width - 1) // width)
    points = [float(v) for v in values[::stride]]
    config = {
        "height": height,
        "format": "{:10.4f}",
    }
    try:
        return acp.plot(points, config)
    except Exception as e:
        return f"Error rendering chart: {e}"


def stats_table(rows: Sequence[Dict[str, object]], title: str = "Curated dataset") -> Table:
    """One row per homology threshold, columns in row order"""
    table = Table(title=title)
    if not rows:
        return table
    for column in rows[0]:
        table.add_column(column, justify="right" if column != "homology" else "left")
    for row in rows:
        table.add_row(*(str(v) for v in row.values()))
    return table


def loss_table(components: Dict[str, Optional[float]], title: str = "Final losses") -> Table:
    table = Table(title=title)
    table.add_column("component")
    table.add_column("value", justify="right")
    for name, value in components.items():
        table.add_row(name, format_metric(value, 5) if value is not None else "-")
    return table


def report_table(rows: Sequence[Dict[str, object]], title: str = "Evaluation") -> Table:
    table = Table(title=title)
    for column in ("metric", "top1", "topk", "median", "reactions"):
        table.add_column(column, justify="left" if column == "metric" else "right")
    for row in rows:
        table.add_row(
            str(row["metric"]),
            format_metric(row.get("top1")),
            format_metric(row.get("topk")),
            format_metric(row.get("median")),
            str(row.get("reactions") or "-"),
        )
    return table


def gradcheck_table(entries, threshold: float, limit: int = 15) -> Table:
    """Worst ``limit`` entries of a gradient check, colored against the threshold"""
    table = Table(title=f"Gradient check (threshold {threshold:g})")
    table.add_column("parameter")
    table.add_column("shape", justify="right")
    table.add_column("max rel. error", justify="right")
    for entry in list(entries)[:limit]:
        color = COLOR_BAD if entry.max_rel_error >= threshold else COLOR_GOOD
        table.add_row(
            entry.name,
            "x".join(str(s) for s in entry.shape) or "scalar",
            f"[{color}]{entry.max_rel_error:.3e}[/]",
        )
    return table
