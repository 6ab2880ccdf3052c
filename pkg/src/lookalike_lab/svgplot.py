"""Minimal static SVG emission for report figures.

String-built SVG with fixed number formatting: a rerun with the same
inputs produces byte-identical files, which third-party plotting backends
do not guarantee (embedded ids, creation dates).  Line plots, scatter
plots with an optional fitted line, and step histograms cover every report
figure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 36, 48
PLOT_W = WIDTH - MARGIN_L - MARGIN_R
PLOT_H = HEIGHT - MARGIN_T - MARGIN_B

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".")


@dataclass(frozen=True)
class Series:
    label: str
    x: "list[float]"
    y: "list[float]"
    kind: str = "line"        # "line" | "scatter"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


class SvgPlot:
    """One cartesian panel with axes, ticks, series, and a legend."""

    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series: list[Series] = []
        self.hlines: list[tuple[float, str]] = []
        self.vlines: list[tuple[float, str]] = []

    def add_line(self, label: str, x, y) -> None:
        self.series.append(Series(label, [float(v) for v in x], [float(v) for v in y], "line"))

    def add_scatter(self, label: str, x, y) -> None:
        self.series.append(Series(label, [float(v) for v in x], [float(v) for v in y], "scatter"))

    def add_hline(self, y: float, label: str = "") -> None:
        self.hlines.append((float(y), label))

    def add_vline(self, x: float, label: str = "") -> None:
        self.vlines.append((float(x), label))

    def _bounds(self) -> tuple[float, float, float, float]:
        xs = [v for s in self.series for v in s.x] + [x for x, _ in self.vlines]
        ys = [v for s in self.series for v in s.y] + [y for y, _ in self.hlines]
        if not xs:
            xs, ys = [0.0, 1.0], [0.0, 1.0]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        pad_x = 0.04 * (x_hi - x_lo)
        pad_y = 0.06 * (y_hi - y_lo)
        return x_lo - pad_x, x_hi + pad_x, y_lo - pad_y, y_hi + pad_y

    def render(self) -> str:
        x_lo, x_hi, y_lo, y_hi = self._bounds()

        def sx(x: float) -> float:
            return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * PLOT_W

        def sy(y: float) -> float:
            return MARGIN_T + PLOT_H - (y - y_lo) / (y_hi - y_lo) * PLOT_H

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="14">{_esc(self.title)}</text>',
            f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{PLOT_W}" height="{PLOT_H}" '
            f'fill="none" stroke="#333"/>',
        ]
        for t in _nice_ticks(x_lo, x_hi):
            if not x_lo <= t <= x_hi:
                continue
            px = sx(t)
            parts.append(f'<line x1="{px:.2f}" y1="{MARGIN_T + PLOT_H}" x2="{px:.2f}" '
                         f'y2="{MARGIN_T + PLOT_H + 5}" stroke="#333"/>')
            parts.append(f'<text x="{px:.2f}" y="{MARGIN_T + PLOT_H + 18}" '
                         f'text-anchor="middle">{_fmt(t)}</text>')
        for t in _nice_ticks(y_lo, y_hi):
            if not y_lo <= t <= y_hi:
                continue
            py = sy(t)
            parts.append(f'<line x1="{MARGIN_L - 5}" y1="{py:.2f}" x2="{MARGIN_L}" '
                         f'y2="{py:.2f}" stroke="#333"/>')
            parts.append(f'<text x="{MARGIN_L - 8}" y="{py + 4:.2f}" '
                         f'text-anchor="end">{_fmt(t)}</text>')
        parts.append(f'<text x="{MARGIN_L + PLOT_W / 2:.0f}" y="{HEIGHT - 10}" '
                     f'text-anchor="middle">{_esc(self.xlabel)}</text>')
        parts.append(f'<text x="16" y="{MARGIN_T + PLOT_H / 2:.0f}" text-anchor="middle" '
                     f'transform="rotate(-90 16 {MARGIN_T + PLOT_H / 2:.0f})">{_esc(self.ylabel)}</text>')

        for y, label in self.hlines:
            py = sy(y)
            parts.append(f'<line x1="{MARGIN_L}" y1="{py:.2f}" x2="{MARGIN_L + PLOT_W}" '
                         f'y2="{py:.2f}" stroke="#888" stroke-dasharray="4 3"/>')
            if label:
                parts.append(f'<text x="{MARGIN_L + PLOT_W - 4}" y="{py - 4:.2f}" '
                             f'text-anchor="end" fill="#555">{_esc(label)}</text>')
        for x, label in self.vlines:
            px = sx(x)
            parts.append(f'<line x1="{px:.2f}" y1="{MARGIN_T}" x2="{px:.2f}" '
                         f'y2="{MARGIN_T + PLOT_H}" stroke="#888" stroke-dasharray="4 3"/>')
            if label:
                parts.append(f'<text x="{px + 4:.2f}" y="{MARGIN_T + 14}" fill="#555">{_esc(label)}</text>')

        for k, s in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            if s.kind == "line":
                pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(s.x, s.y))
                parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            else:
                for x, y in zip(s.x, s.y):
                    parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" '
                                 f'fill="{color}" fill-opacity="0.6"/>')
        legend_y = MARGIN_T + 14
        for k, s in enumerate(self.series):
            if not s.label:
                continue
            color = PALETTE[k % len(PALETTE)]
            parts.append(f'<rect x="{MARGIN_L + 10}" y="{legend_y - 9}" width="12" height="12" '
                         f'fill="{color}"/>')
            parts.append(f'<text x="{MARGIN_L + 26}" y="{legend_y + 1}">{_esc(s.label)}</text>')
            legend_y += 16
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.render())


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def histogram_steps(edges, counts) -> tuple[list[float], list[float]]:
    """Bin edges/counts as step-plot coordinates."""
    xs: list[float] = []
    ys: list[float] = []
    for b, c in enumerate(counts):
        xs.extend((float(edges[b]), float(edges[b + 1])))
        ys.extend((float(c), float(c)))
    return xs, ys
