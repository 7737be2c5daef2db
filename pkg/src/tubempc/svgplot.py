"""Minimal self-contained SVG line charts.

CSV files are the ground truth for every experiment; these charts are
convenience renderings with no plotting dependency.  Output is fully
deterministic (no timestamps, fixed float formatting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list:
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


@dataclass
class Series:
    label: str
    xs: list
    ys: list
    color: str | None = None
    dashed: bool = False


@dataclass
class LineChart:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    width: int = 720
    height: int = 460
    hspan: tuple | None = None     # horizontal shaded band (y_lo, y_hi)

    def add(self, label, xs, ys, color=None, dashed=False):
        self.series.append(Series(label, list(xs), list(ys), color, dashed))

    def render(self) -> str:
        ml, mr, mt, mb = 64, 160, 42, 48
        pw = self.width - ml - mr
        ph = self.height - mt - mb
        xs_all = [x for s in self.series for x in s.xs]
        ys_all = [y for s in self.series for y in s.ys]
        if self.hspan is not None:
            ys_all = ys_all + [self.hspan[0], self.hspan[1]]
        if not xs_all:
            xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
        x_lo, x_hi = min(xs_all), max(xs_all)
        y_lo, y_hi = min(ys_all), max(ys_all)
        if x_hi == x_lo:
            x_hi = x_lo + 1.0
        if y_hi == y_lo:
            y_hi = y_lo + 1.0
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad

        def px(x):
            return ml + (x - x_lo) / (x_hi - x_lo) * pw

        def py(y):
            return mt + (y_hi - y) / (y_hi - y_lo) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
            f'<text x="{ml + pw / 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{self.title}</text>',
        ]
        if self.hspan is not None:
            top = py(self.hspan[1])
            out.append(
                f'<rect x="{ml}" y="{_fmt(top)}" width="{pw}" '
                f'height="{_fmt(py(self.hspan[0]) - top)}" fill="#dff0d8"/>'
            )
        for t in _nice_ticks(x_lo, x_hi):
            out.append(f'<line x1="{_fmt(px(t))}" y1="{mt}" x2="{_fmt(px(t))}" '
                       f'y2="{mt + ph}" stroke="#eeeeee"/>')
            out.append(f'<text x="{_fmt(px(t))}" y="{mt + ph + 18}" '
                       f'text-anchor="middle" font-family="sans-serif" '
                       f'font-size="11">{_fmt(t)}</text>')
        for t in _nice_ticks(y_lo, y_hi):
            out.append(f'<line x1="{ml}" y1="{_fmt(py(t))}" x2="{ml + pw}" '
                       f'y2="{_fmt(py(t))}" stroke="#eeeeee"/>')
            out.append(f'<text x="{ml - 8}" y="{_fmt(py(t) + 4)}" '
                       f'text-anchor="end" font-family="sans-serif" '
                       f'font-size="11">{_fmt(t)}</text>')
        out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
                   f'fill="none" stroke="#333333"/>')
        out.append(f'<text x="{ml + pw / 2}" y="{self.height - 10}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="13">{self.xlabel}</text>')
        out.append(f'<text x="18" y="{mt + ph / 2}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="13" '
                   f'transform="rotate(-90 18 {mt + ph / 2})">{self.ylabel}</text>')

        seen_labels = []
        for i, s in enumerate(self.series):
            color = s.color or _PALETTE[i % len(_PALETTE)]
            pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}"
                           for x, y in zip(s.xs, s.ys))
            dash = ' stroke-dasharray="6 4"' if s.dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" '
                       f'stroke="{color}" stroke-width="1.6"{dash}/>')
            if s.label and s.label not in [l for l, _ in seen_labels]:
                seen_labels.append((s.label, color))
        for j, (label, color) in enumerate(seen_labels):
            y = mt + 14 + 18 * j
            out.append(f'<line x1="{ml + pw + 10}" y1="{y - 4}" '
                       f'x2="{ml + pw + 34}" y2="{y - 4}" stroke="{color}" '
                       f'stroke-width="2"/>')
            out.append(f'<text x="{ml + pw + 40}" y="{y}" '
                       f'font-family="sans-serif" font-size="11">{label}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())
