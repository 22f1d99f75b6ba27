"""Minimal native SVG line charts with a log-scale y axis.

Output depends only on the data: no timestamps, no random ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#000000", "#d62728", "#2ca02c", "#1f77b4", "#9467bd")


@dataclass
class Curve:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    color: str | None = None
    markers: bool = False


@dataclass
class Panel:
    title: str
    curves: list[Curve] = field(default_factory=list)
    xlabel: str = "k"
    ylabel: str = "number of strings"
    log_y: bool = True


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        exp = int(round(math.log10(abs(v))))
        if math.isclose(abs(v), 10.0**exp):
            return f"1e{exp}"
        return f"{v:.0e}"
    return f"{v:g}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


class _Frame:
    def __init__(self, panel: Panel, x0: float, y0: float, w: float, h: float):
        self.panel = panel
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        xs = [float(v) for c in panel.curves for v in c.x]
        ys = [float(v) for c in panel.curves for v in c.y if (v > 0 or not panel.log_y)]
        self.xmin, self.xmax = (min(xs), max(xs)) if xs else (0.0, 1.0)
        if self.xmax == self.xmin:
            self.xmax = self.xmin + 1.0
        if panel.log_y:
            lo = min(ys) if ys else 1.0
            hi = max(ys) if ys else 10.0
            self.ymin = 10.0 ** math.floor(math.log10(lo))
            self.ymax = 10.0 ** math.ceil(math.log10(hi))
            if self.ymax <= self.ymin:
                self.ymax = self.ymin * 10
        else:
            self.ymin = min(0.0, min(ys)) if ys else 0.0
            self.ymax = max(ys) if ys else 1.0
            if self.ymax <= self.ymin:
                self.ymax = self.ymin + 1.0

    def px(self, x: float) -> float:
        return self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w

    def py(self, y: float) -> float:
        if self.panel.log_y:
            t = (math.log10(y) - math.log10(self.ymin)) / (math.log10(self.ymax) - math.log10(self.ymin))
        else:
            t = (y - self.ymin) / (self.ymax - self.ymin)
        return self.y0 + self.h - t * self.h

    def yticks(self) -> list[float]:
        if not self.panel.log_y:
            return _nice_ticks(self.ymin, self.ymax)
        lo, hi = int(round(math.log10(self.ymin))), int(round(math.log10(self.ymax)))
        stride = max(1, math.ceil((hi - lo) / 8))
        return [10.0**e for e in range(lo, hi + 1, stride)]


def _panel_svg(frame: _Frame) -> list[str]:
    p = frame.panel
    x0, y0, w, h = frame.x0, frame.y0, frame.w, frame.h
    out = [f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" height="{_fmt(h)}" fill="none" stroke="#444"/>']
    for t in _nice_ticks(frame.xmin, frame.xmax):
        X = frame.px(t)
        out.append(f'<line x1="{_fmt(X)}" y1="{_fmt(y0 + h)}" x2="{_fmt(X)}" y2="{_fmt(y0 + h + 4)}" stroke="#444"/>')
        out.append(f'<text x="{_fmt(X)}" y="{_fmt(y0 + h + 16)}" text-anchor="middle">{escape(_tick_label(t))}</text>')
    for t in frame.yticks():
        Y = frame.py(t)
        out.append(f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(Y)}" x2="{_fmt(x0)}" y2="{_fmt(Y)}" stroke="#444"/>')
        out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(Y)}" x2="{_fmt(x0 + w)}" y2="{_fmt(Y)}" stroke="#ddd"/>')
        out.append(f'<text x="{_fmt(x0 - 6)}" y="{_fmt(Y + 4)}" text-anchor="end">{escape(_tick_label(t))}</text>')
    out.append(f'<text x="{_fmt(x0 + w / 2)}" y="{_fmt(y0 - 8)}" text-anchor="middle" font-weight="bold">{escape(p.title)}</text>')
    out.append(f'<text x="{_fmt(x0 + w / 2)}" y="{_fmt(y0 + h + 32)}" text-anchor="middle">{escape(p.xlabel)}</text>')
    out.append(f'<text transform="translate({_fmt(x0 - 46)},{_fmt(y0 + h / 2)}) rotate(-90)" text-anchor="middle">{escape(p.ylabel)}</text>')
    for i, c in enumerate(p.curves):
        color = c.color or PALETTE[i % len(PALETTE)]
        pts = [(float(a), float(b)) for a, b in zip(c.x, c.y) if (b > 0 or not p.log_y)]
        if pts:
            path = " ".join(f"{_fmt(frame.px(a))},{_fmt(frame.py(b))}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            if c.markers:
                out.extend(f'<circle cx="{_fmt(frame.px(a))}" cy="{_fmt(frame.py(b))}" r="1.8" fill="{color}"/>' for a, b in pts)
        ly = y0 + 14 + 16 * i
        lx = x0 + w - 150
        out.append(f'<line x1="{_fmt(lx)}" y1="{_fmt(ly - 4)}" x2="{_fmt(lx + 20)}" y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_fmt(lx + 26)}" y="{_fmt(ly)}">{escape(c.label)}</text>')
    return out


def render(panels: Sequence[Panel], columns: int = 2, panel_size: tuple[int, int] = (420, 300)) -> str:
    """Render panels on a grid and return the SVG document text."""
    n = len(panels)
    cols = max(1, min(columns, n))
    rows = math.ceil(n / cols)
    pw, ph = panel_size
    ml, mr, mt, mb = 70, 20, 36, 48
    width = cols * (pw + ml + mr)
    height = rows * (ph + mt + mb)
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, panel in enumerate(panels):
        r, c = divmod(i, cols)
        frame = _Frame(panel, c * (pw + ml + mr) + ml, r * (ph + mt + mb) + mt, pw, ph)
        body.append("<g>")
        body.extend(_panel_svg(frame))
        body.append("</g>")
    body.append("</svg>")
    return "\n".join(body) + "\n"
