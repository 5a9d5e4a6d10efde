"""
Deterministic SVG charts for analysis reports: line curves (ROC, PR), bars,
per-class histogram panels and heatmaps. Numbers are written with 6
significant digits so equal inputs give equal bytes.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd

from models.exceptions import RadgateValidationError
from models.feature_models import CurveSeries
from storage.atomic_writer import atomic_write

logger = logging.getLogger(__name__)

HIGHLIGHT = "#7b3294"
PLAIN = "#f1c232"
MISSING = "#bdbdbd"
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
HEAT_LOW = (255, 255, 255)
HEAT_HIGH = (123, 50, 148)
COLORBAR_STEPS = 10

MARGIN_LEFT = 80
MARGIN_RIGHT = 220
MARGIN_TOP = 50
MARGIN_BOTTOM = 110


def fmt(value: float) -> str:
    """Six significant digits, no exponent noise for integers."""
    text = f"{float(value):.6g}"
    return "0" if text == "-0" else text


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("'", "&#39;")
    )


def _heat_color(value: float) -> str:
    if math.isnan(value):
        return MISSING
    t = min(max(value, 0.0), 1.0)
    rgb = [round(lo + (hi - lo) * t) for lo, hi in zip(HEAT_LOW, HEAT_HIGH)]
    return "#" + "".join(f"{c:02x}" for c in rgb)


@dataclass
class SvgPlot:
    """
    One chart. `threshold` draws a reference line on bar charts. Curves use
    their own highlight flag, or without one are highlighted when their
    summary reaches `threshold`.
    """
    kind: str
    title: str
    series: List[CurveSeries] = field(default_factory=list)
    x_label: str = ""
    y_label: str = ""
    threshold: Optional[float] = None
    width: int = 800
    height: int = 600

    def __post_init__(self) -> None:
        if self.kind not in CurveSeries.KINDS:
            raise RadgateValidationError(f"Unknown plot kind '{self.kind}'")
        wrong = [s.name for s in self.series if s.kind != self.kind]
        if wrong:
            raise RadgateValidationError(f"Series {wrong} do not match plot kind '{self.kind}'")

    def to_frame(self) -> pd.DataFrame:
        """The plotted numbers, one row per point (a square matrix for heatmaps)."""
        if self.kind == "heatmap" and self.series:
            series = self.series[0]
            n = len(series.labels)
            values = [list(series.y[i * n:(i + 1) * n]) for i in range(n)]
            frame = pd.DataFrame(values, index=list(series.labels), columns=list(series.labels))
            return frame.rename_axis("feature").reset_index()
        if not self.series:
            return pd.DataFrame(columns=["group", "series", "x", "y"])
        frame = pd.concat([s.to_frame() for s in self.series], ignore_index=True)
        if self.kind in ("roc", "pr"):
            frame["summary"] = [s.summary for s in self.series for _ in s.x]
        return frame

    def render(self) -> str:
        lines = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">',
            '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
            f'<text x="{fmt(self.width / 2)}" y="30" text-anchor="middle" font-size="20" '
            f'font-family="Arial">{_escape(self.title)}</text>',
        ]
        box = (MARGIN_LEFT, MARGIN_TOP, self.width - MARGIN_RIGHT, self.height - MARGIN_BOTTOM)
        if self.kind in ("roc", "pr"):
            lines += self._curves(box)
        elif self.kind == "bar":
            lines += self._bars(box)
        elif self.kind == "histogram":
            lines += self._histograms(box)
        else:
            lines += self._heatmap(box)
        lines.append("</svg>")
        return "\n".join(lines) + "\n"

    def _axes(self, box: Tuple[float, float, float, float], x_label: str, y_label: str) -> List[str]:
        left, top, right, bottom = box
        middle = (top + bottom) / 2
        return [
            f'<line x1="{fmt(left)}" y1="{fmt(bottom)}" x2="{fmt(right)}" y2="{fmt(bottom)}" stroke="#000000" stroke-width="1"/>',
            f'<line x1="{fmt(left)}" y1="{fmt(top)}" x2="{fmt(left)}" y2="{fmt(bottom)}" stroke="#000000" stroke-width="1"/>',
            f'<text x="{fmt((left + right) / 2)}" y="{fmt(self.height - 12)}" text-anchor="middle" font-size="14" '
            f'font-family="Arial">{_escape(x_label)}</text>',
            f'<text x="20" y="{fmt(middle)}" text-anchor="middle" font-size="14" font-family="Arial" '
            f'transform="rotate(-90 20 {fmt(middle)})">{_escape(y_label)}</text>',
        ]

    def _y_ticks(self, box: Tuple[float, float, float, float], y_max: float, count: int = 5) -> List[str]:
        left, top, right, bottom = box
        lines = []
        for i in range(count + 1):
            value = y_max * i / count
            y = bottom - (bottom - top) * i / count
            lines.append(f'<line x1="{fmt(left)}" y1="{fmt(y)}" x2="{fmt(right)}" y2="{fmt(y)}" stroke="#e0e0e0" stroke-width="1"/>')
            lines.append(
                f'<text x="{fmt(left - 6)}" y="{fmt(y + 4)}" text-anchor="end" font-size="11" font-family="Arial">{fmt(value)}</text>'
            )
        return lines

    def _curves(self, box: Tuple[float, float, float, float]) -> List[str]:
        left, top, right, bottom = box

        def px(x: float, y: float) -> str:
            return f"{fmt(left + x * (right - left))},{fmt(bottom - y * (bottom - top))}"

        lines = self._y_ticks(box, 1.0) + self._axes(box, self.x_label, self.y_label)
        if self.kind == "roc":
            lines.append(f'<polyline class="chance" fill="none" stroke="#9e9e9e" stroke-dasharray="4 4" points="{px(0, 0)} {px(1, 1)}"/>')
        for index, series in enumerate(self.series):
            if series.highlight:
                strong = series.highlight[0]
            else:
                strong = self.threshold is not None and series.summary is not None and series.summary >= self.threshold
            color = HIGHLIGHT if strong else (PLAIN if self.threshold is not None else PALETTE[index % len(PALETTE)])
            points = " ".join(px(x, y) for x, y in zip(series.x, series.y))
            css = "curve highlight" if strong else "curve"
            lines.append(f'<polyline class="{css}" fill="none" stroke="{color}" stroke-width="2" points="{points}"/>')
            label = series.name if series.summary is None else f"{series.name} ({'AUC' if self.kind == 'roc' else 'AP'} {fmt(series.summary)})"
            ly = top + 14 + index * 18
            lines.append(f'<line x1="{fmt(right + 10)}" y1="{fmt(ly)}" x2="{fmt(right + 30)}" y2="{fmt(ly)}" stroke="{color}" stroke-width="2"/>')
            lines.append(
                f'<text x="{fmt(right + 36)}" y="{fmt(ly + 4)}" font-size="11" font-family="Arial">{_escape(label)}</text>'
            )
        return lines

    def _bars(self, box: Tuple[float, float, float, float]) -> List[str]:
        left, top, right, bottom = box
        bars = [(label, y, flag) for s in self.series for label, y, flag in zip(
            s.labels or [fmt(x) for x in s.x], s.y, s.highlight or [False] * len(s.y)
        )]
        finite = [y for _, y, _ in bars if not math.isnan(y)]
        y_max = max([1.0] + finite)
        lines = self._y_ticks(box, y_max) + self._axes(box, self.x_label, self.y_label)
        slot = (right - left) / max(len(bars), 1)
        for index, (label, value, flag) in enumerate(bars):
            x = left + index * slot + slot * 0.1
            height = 0.0 if math.isnan(value) else (bottom - top) * value / y_max
            css = "bar highlight" if flag else "bar"
            lines.append(
                f'<rect class="{css}" x="{fmt(x)}" y="{fmt(bottom - height)}" width="{fmt(slot * 0.8)}" '
                f'height="{fmt(height)}" fill="{HIGHLIGHT if flag else PLAIN}"/>'
            )
            cx = x + slot * 0.4
            lines.append(
                f'<text x="{fmt(cx)}" y="{fmt(bottom + 10)}" font-size="9" font-family="Arial" text-anchor="end" '
                f'transform="rotate(-45 {fmt(cx)} {fmt(bottom + 10)})">{_escape(label)}</text>'
            )
        if self.threshold is not None:
            y = bottom - (bottom - top) * self.threshold / y_max
            lines.append(
                f'<line class="threshold" x1="{fmt(left)}" y1="{fmt(y)}" x2="{fmt(right)}" y2="{fmt(y)}" '
                f'stroke="#000000" stroke-dasharray="6 3" stroke-width="1"/>'
            )
        return lines

    def _histograms(self, box: Tuple[float, float, float, float]) -> List[str]:
        left, top, right, bottom = box
        groups: Dict[str, List[CurveSeries]] = {}
        for series in self.series:
            groups.setdefault(series.group, []).append(series)
        classes = sorted({s.name for s in self.series})
        colors = {name: PALETTE[i % len(PALETTE)] for i, name in enumerate(classes)}
        columns = max(1, math.ceil(math.sqrt(len(groups))))
        rows = max(1, math.ceil(len(groups) / columns))
        cell_w = (right - left) / columns
        cell_h = (bottom - top) / rows
        lines = self._axes(box, self.x_label, self.y_label)
        for index, (group, members) in enumerate(groups.items()):
            gx = left + (index % columns) * cell_w
            gy = top + (index // columns) * cell_h
            p_left, p_top, p_right, p_bottom = gx + 8, gy + 16, gx + cell_w - 8, gy + cell_h - 8
            lines.append(
                f'<text x="{fmt((p_left + p_right) / 2)}" y="{fmt(gy + 12)}" text-anchor="middle" font-size="10" '
                f'font-family="Arial">{_escape(group)}</text>'
            )
            edges = members[0].x
            lo, hi = edges[0], edges[-1]
            span = (hi - lo) or 1.0
            peak = max([1.0] + [c for s in members for c in s.y])
            for series in members:
                for start, end, count in zip(series.x[:-1], series.x[1:], series.y):
                    x0 = p_left + (start - lo) / span * (p_right - p_left)
                    x1 = p_left + (end - lo) / span * (p_right - p_left)
                    height = (p_bottom - p_top) * count / peak
                    lines.append(
                        f'<rect class="bin" x="{fmt(x0)}" y="{fmt(p_bottom - height)}" width="{fmt(x1 - x0)}" '
                        f'height="{fmt(height)}" fill="{colors[series.name]}" fill-opacity="0.5"/>'
                    )
            lines.append(
                f'<line x1="{fmt(p_left)}" y1="{fmt(p_bottom)}" x2="{fmt(p_right)}" y2="{fmt(p_bottom)}" stroke="#000000" stroke-width="1"/>'
            )
        for index, name in enumerate(classes):
            ly = top + 14 + index * 18
            lines.append(f'<rect x="{fmt(right + 10)}" y="{fmt(ly - 6)}" width="12" height="12" fill="{colors[name]}" fill-opacity="0.5"/>')
            lines.append(
                f'<text x="{fmt(right + 28)}" y="{fmt(ly + 4)}" font-size="11" font-family="Arial">'
                f'{_escape(name if name else "(missing)")}</text>'
            )
        return lines

    def _heatmap(self, box: Tuple[float, float, float, float]) -> List[str]:
        left, top, right, bottom = box
        lines: List[str] = []
        if not self.series:
            return lines
        series = self.series[0]
        n = len(series.labels)
        if n * n != len(series.y):
            raise RadgateValidationError(f"Heatmap needs {n}x{n} values, got {len(series.y)}")
        side = min(right - left, bottom - top)
        cell = side / max(n, 1)
        for i in range(n):
            for j in range(n):
                value = series.y[i * n + j]
                lines.append(
                    f'<rect class="cell" x="{fmt(left + j * cell)}" y="{fmt(top + i * cell)}" width="{fmt(cell)}" '
                    f'height="{fmt(cell)}" fill="{_heat_color(value)}"/>'
                )
            lines.append(
                f'<text x="{fmt(left - 4)}" y="{fmt(top + (i + 0.5) * cell + 3)}" text-anchor="end" font-size="8" '
                f'font-family="Arial">{_escape(series.labels[i])}</text>'
            )
        lines.append('<g class="colorbar">')
        bar_x = left + side + 20
        step = side / COLORBAR_STEPS
        for k in range(COLORBAR_STEPS):
            value = 1.0 - (k + 0.5) / COLORBAR_STEPS
            lines.append(
                f'<rect x="{fmt(bar_x)}" y="{fmt(top + k * step)}" width="16" height="{fmt(step)}" fill="{_heat_color(value)}"/>'
            )
        lines.append(f'<text x="{fmt(bar_x + 20)}" y="{fmt(top + 8)}" font-size="10" font-family="Arial">1</text>')
        lines.append(f'<text x="{fmt(bar_x + 20)}" y="{fmt(top + side)}" font-size="10" font-family="Arial">0</text>')
        lines.append("</g>")
        return lines


def emit_svg(plot: SvgPlot, path: Union[str, Path]) -> Path:
    """Render and write atomically; raises IoFailure on write errors."""
    target = atomic_write(path, plot.render())
    logger.info("Wrote %s plot '%s' to %s", plot.kind, plot.title, target)
    return target
