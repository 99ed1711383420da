"""Deterministic SVG line plots with log or linear axes and slope guides."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

from .csvio import read_rows

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


@dataclass
class PlotSpec:
    x: str
    y: str
    group: str | None = None
    logx: bool = True
    logy: bool = True
    title: str = ""
    guides: tuple = (1, 2, 3, 4)
    width: int = 640
    height: int = 480
    margin: tuple = (70, 30, 40, 60)  # left, right, top, bottom
    skip_flag: str | None = "failed"
    extra: dict = field(default_factory=dict)


class PlotError(ValueError):
    pass


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, log: bool) -> list:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        return [float(k) for k in range(a, b + 1)]
    if hi == lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / 5))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step) + 1)]


class Axes:
    def __init__(self, spec: PlotSpec, xs: list, ys: list):
        self.spec = spec
        tx = [self.tx(v) for v in xs]
        ty = [self.ty(v) for v in ys]
        self.xlo, self.xhi = (min(tx), max(tx)) if tx else (0.0, 1.0)
        self.ylo, self.yhi = (min(ty), max(ty)) if ty else (0.0, 1.0)
        if self.xhi == self.xlo:
            self.xlo, self.xhi = self.xlo - 0.5, self.xhi + 0.5
        if self.yhi == self.ylo:
            self.ylo, self.yhi = self.ylo - 0.5, self.yhi + 0.5
        left, right, top, bottom = spec.margin
        self.px0, self.px1 = left, spec.width - right
        self.py0, self.py1 = spec.height - bottom, top

    def tx(self, v):
        return math.log10(v) if self.spec.logx else v

    def ty(self, v):
        return math.log10(v) if self.spec.logy else v

    def px(self, t):
        return self.px0 + (t - self.xlo) / (self.xhi - self.xlo) * (self.px1 - self.px0)

    def py(self, t):
        return self.py0 + (t - self.ylo) / (self.yhi - self.ylo) * (self.py1 - self.py0)


def _usable(v, log):
    return isinstance(v, (int, float)) and math.isfinite(v) and (v > 0 or not log)


def series_from_rows(rows: list, spec: PlotSpec) -> dict:
    out = {}
    for r in rows:
        if spec.skip_flag and r.get(spec.skip_flag) in (1, "1", True):
            continue
        x, y = r[spec.x], r[spec.y]
        if not (_usable(x, spec.logx) and _usable(y, spec.logy)):
            continue
        key = r[spec.group] if spec.group else spec.y
        out.setdefault(key, []).append((float(x), float(y)))
    return {k: sorted(v) for k, v in out.items()}


def render_svg(series: dict, spec: PlotSpec) -> str:
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    ax = Axes(spec, xs, ys)
    W, H = spec.width, spec.height
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<g id="axes" stroke="black" fill="none">'
        f'<line x1="{_fmt(ax.px0)}" y1="{_fmt(ax.py0)}" x2="{_fmt(ax.px1)}" y2="{_fmt(ax.py0)}"/>'
        f'<line x1="{_fmt(ax.px0)}" y1="{_fmt(ax.py0)}" x2="{_fmt(ax.px0)}" y2="{_fmt(ax.py1)}"/></g>',
    ]
    ticks = ['<g id="ticks" font-family="sans-serif" font-size="11">']
    for t in _nice_ticks(ax.xlo, ax.xhi, spec.logx):
        if ax.xlo - 1e-12 <= t <= ax.xhi + 1e-12:
            label = f"1e{int(t)}" if spec.logx else f"{t:g}"
            ticks.append(f'<line x1="{_fmt(ax.px(t))}" y1="{_fmt(ax.py0)}" x2="{_fmt(ax.px(t))}" '
                         f'y2="{_fmt(ax.py0 + 5)}" stroke="black"/>'
                         f'<text x="{_fmt(ax.px(t))}" y="{_fmt(ax.py0 + 18)}" text-anchor="middle">{label}</text>')
    for t in _nice_ticks(ax.ylo, ax.yhi, spec.logy):
        if ax.ylo - 1e-12 <= t <= ax.yhi + 1e-12:
            label = f"1e{int(t)}" if spec.logy else f"{t:g}"
            ticks.append(f'<line x1="{_fmt(ax.px0 - 5)}" y1="{_fmt(ax.py(t))}" x2="{_fmt(ax.px0)}" '
                         f'y2="{_fmt(ax.py(t))}" stroke="black"/>'
                         f'<text x="{_fmt(ax.px0 - 8)}" y="{_fmt(ax.py(t) + 4)}" text-anchor="end">{label}</text>')
    ticks.append("</g>")
    out.extend(ticks)
    out.append(f'<text x="{_fmt((ax.px0 + ax.px1) / 2)}" y="{H - 12}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13">{escape(spec.x)}</text>')
    out.append(f'<text x="16" y="{_fmt((ax.py0 + ax.py1) / 2)}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13" transform="rotate(-90 16 {_fmt((ax.py0 + ax.py1) / 2)})">{escape(spec.y)}</text>')
    if spec.title:
        out.append(f'<text x="{W / 2:.2f}" y="20" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="14">{escape(spec.title)}</text>')
    if series and spec.logx and spec.logy and spec.guides:
        # guides anchored at the lower-right data corner, spanning one decade of x
        x1 = ax.xhi
        x0 = max(ax.xlo, x1 - 1.0)
        g = ['<g id="guides" stroke="#888888" stroke-dasharray="4 3" fill="none" font-family="sans-serif" '
             'font-size="10">']
        for p in spec.guides:
            y1 = ax.ylo
            y0 = y1 - p * (x1 - x0)
            g.append(f'<line class="guide" data-order="{p}" x1="{_fmt(ax.px(x0))}" y1="{_fmt(ax.py(y0))}" '
                     f'x2="{_fmt(ax.px(x1))}" y2="{_fmt(ax.py(y1))}"/>')
        g.append("</g>")
        out.extend(g)
    legend = ['<g id="legend" font-family="sans-serif" font-size="11">']
    for i, (key, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(ax.px(ax.tx(x)))},{_fmt(ax.py(ax.ty(y)))}" for x, y in pts)
        label = f"{spec.group}={key}" if spec.group else str(key)
        out.append(f'<polyline class="series" data-label="{escape(label)}" points="{coords}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            out.append(f'<circle cx="{_fmt(ax.px(ax.tx(x)))}" cy="{_fmt(ax.py(ax.ty(y)))}" r="2.5" fill="{color}"/>')
        ly = spec.margin[2] + 14 * (i + 1)
        legend.append(f'<line x1="{_fmt(ax.px1 - 120)}" y1="{ly - 4}" x2="{_fmt(ax.px1 - 100)}" y2="{ly - 4}" '
                      f'stroke="{color}" stroke-width="2"/>'
                      f'<text x="{_fmt(ax.px1 - 95)}" y="{ly}">{escape(label)}</text>')
    legend.append("</g>")
    out.extend(legend)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_path: str, spec: PlotSpec, out_path: str | None = None) -> str:
    """Render ``spec.y`` against ``spec.x`` from a CSV file; returns the SVG text."""
    columns, rows = read_rows(csv_path)
    need = [spec.x, spec.y] + ([spec.group] if spec.group else [])
    missing = [c for c in need if c not in columns]
    if missing:
        raise PlotError(f"{csv_path}: missing columns {missing}")
    svg = render_svg(series_from_rows(rows, spec), spec)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    return svg
