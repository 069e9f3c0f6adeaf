"""Minimal line-plot writer producing deterministic SVG text."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22")

WIDTH, HEIGHT = 640, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 170, 40, 55


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    markers: bool = False
    dashed: bool = False
    yerr: Sequence[float] | None = None


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)

    def add(self, *args, **kw) -> Plot:
        self.series.append(Series(*args, **kw))
        return self


def _num(v: float) -> str:
    return f"{v:.2f}"


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    if ticks[0] > lo:
        ticks.insert(0, round(ticks[0] - step, 12))
    if ticks[-1] < hi:
        ticks.append(round(ticks[-1] + step, 12))
    return ticks


def render(plot: Plot) -> str:
    xs = [v for s in plot.series for v in s.x if math.isfinite(v)]
    ys = [v for s in plot.series for v in s.y if math.isfinite(v)]
    for s in plot.series:
        if s.yerr is not None:
            ys += [y + e for y, e in zip(s.y, s.yerr)] + [y - e for y, e in zip(s.y, s.yerr)]
    xt = nice_ticks(min(xs, default=0.0), max(xs, default=1.0))
    yt = nice_ticks(min(ys, default=0.0), max(ys, default=1.0))
    x0, x1, y0, y1 = xt[0], xt[-1], yt[0], yt[-1]
    pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(v):
        return MARGIN_LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN_TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2 - MARGIN_RIGHT / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(plot.title)}</text>',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in xt:
        out.append(f'<line x1="{_num(px(t))}" y1="{MARGIN_TOP + ph}" x2="{_num(px(t))}" y2="{MARGIN_TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(px(t))}" y="{MARGIN_TOP + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in yt:
        out.append(f'<line x1="{MARGIN_LEFT - 5}" y1="{_num(py(t))}" x2="{MARGIN_LEFT}" y2="{_num(py(t))}" stroke="black"/>')
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{_num(py(t) + 4)}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{MARGIN_LEFT + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(plot.xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MARGIN_TOP + ph / 2:.2f}" text-anchor="middle" transform="rotate(-90 16 {MARGIN_TOP + ph / 2:.2f})">{escape(plot.ylabel)}</text>'
    )
    for i, s in enumerate(plot.series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(x), py(y)) for x, y in zip(s.x, s.y) if math.isfinite(x) and math.isfinite(y)]
        dash = ' stroke-dasharray="6 3"' if s.dashed else ""
        if len(pts) > 1:
            path = " ".join(f"{_num(a)},{_num(b)}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if s.markers or len(pts) == 1:
            out += [f'<circle cx="{_num(a)}" cy="{_num(b)}" r="3" fill="{color}"/>' for a, b in pts]
        if s.yerr is not None:
            for x, y, e in zip(s.x, s.y, s.yerr):
                out.append(f'<line x1="{_num(px(x))}" y1="{_num(py(y - e))}" x2="{_num(px(x))}" y2="{_num(py(y + e))}" stroke="{color}"/>')
        ly = MARGIN_TOP + 10 + 16 * i
        lx = MARGIN_LEFT + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 25}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
