"""Minimal deterministic SVG charts: log-log rate plots, depth curves, exponent bars.

Coordinates are printed with two decimals and nothing depends on the
clock or locale, so identical data gives identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=80, right=150, top=40, bottom=60)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    log: bool
    pixel_lo: float
    pixel_hi: float

    def __call__(self, v: float) -> float:
        a, b, x = (math.log10(self.lo), math.log10(self.hi), math.log10(v)) if self.log else (self.lo, self.hi, v)
        frac = 0.5 if b == a else (x - a) / (b - a)
        return self.pixel_lo + frac * (self.pixel_hi - self.pixel_lo)

    def ticks(self) -> list[float]:
        if self.log:
            lo, hi = math.floor(math.log10(self.lo)), math.ceil(math.log10(self.hi))
            ticks = [10.0**k for k in range(lo, hi + 1) if self.lo <= 10.0**k <= self.hi]
            return ticks or [self.lo, self.hi]
        if self.hi == self.lo:
            return [self.lo]
        step = 10 ** math.floor(math.log10((self.hi - self.lo) / 4))
        for mult in (1, 2, 5, 10):
            if (self.hi - self.lo) / (step * mult) <= 6:
                step *= mult
                break
        start = math.ceil(self.lo / step) * step
        count = int(math.floor((self.hi - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(count)]


def _f(x: float) -> str:
    return f"{x:.2f}"


def _label(v: float, log: bool) -> str:
    if log:
        k = math.log10(v)
        return f"1e{int(round(k))}" if abs(k - round(k)) < 1e-9 else f"{v:.3g}"
    return f"{v:.4g}"


def _padded(lo: float, hi: float, log: bool) -> tuple[float, float]:
    if log:
        if lo == hi:
            return lo / 2, hi * 2
        f = (hi / lo) ** 0.05
        return lo / f, hi * f
    if lo == hi:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class Chart:
    def __init__(self, title: str, xlabel: str, ylabel: str, x_range, y_range, xlog: bool, ylog: bool):
        x0, x1 = _padded(*x_range, xlog)
        y0, y1 = _padded(*y_range, ylog)
        self.x = Axis(x0, x1, xlog, MARGIN["left"], WIDTH - MARGIN["right"])
        self.y = Axis(y0, y1, ylog, HEIGHT - MARGIN["bottom"], MARGIN["top"])
        self.parts: list[str] = []
        self.legend: list[tuple[str, str]] = []
        self._frame(title, xlabel, ylabel)

    def _frame(self, title, xlabel, ylabel):
        left, right = MARGIN["left"], WIDTH - MARGIN["right"]
        top, bottom = MARGIN["top"], HEIGHT - MARGIN["bottom"]
        p = self.parts
        p.append(f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" fill="none" stroke="#333"/>')
        p.append(f'<text x="{(left + right) / 2:.2f}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>')
        p.append(f'<text x="{(left + right) / 2:.2f}" y="{HEIGHT - 16}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>')
        cy = (top + bottom) / 2
        p.append(f'<text x="20" y="{cy:.2f}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {cy:.2f})">{escape(ylabel)}</text>')
        for t in self.x.ticks():
            px = self.x(t)
            p.append(f'<line x1="{_f(px)}" y1="{bottom}" x2="{_f(px)}" y2="{bottom + 5}" stroke="#333"/>')
            p.append(f'<text x="{_f(px)}" y="{bottom + 18}" text-anchor="middle" font-size="11">{_label(t, self.x.log)}</text>')
        for t in self.y.ticks():
            py = self.y(t)
            p.append(f'<line x1="{left - 5}" y1="{_f(py)}" x2="{left}" y2="{_f(py)}" stroke="#333"/>')
            p.append(f'<text x="{left - 8}" y="{_f(py + 4)}" text-anchor="end" font-size="11">{_label(t, self.y.log)}</text>')

    def polyline(self, xs, ys, color: str, dashed: bool = False, label: str | None = None):
        pts = " ".join(f"{_f(self.x(a))},{_f(self.y(b))}" for a, b in zip(xs, ys))
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if label:
            self.legend.append((label, color))

    def points(self, xs, ys, color: str, label: str | None = None):
        for a, b in zip(xs, ys):
            self.parts.append(f'<circle cx="{_f(self.x(a))}" cy="{_f(self.y(b))}" r="3.5" fill="{color}"/>')
        if label:
            self.legend.append((label, color))

    def error_bars(self, xs, lows, highs, color: str):
        for a, lo, hi in zip(xs, lows, highs):
            px = self.x(a)
            y0, y1 = self.y(lo), self.y(hi)
            self.parts.append(
                f'<path d="M{_f(px)} {_f(y0)}V{_f(y1)}M{_f(px - 4)} {_f(y0)}h8M{_f(px - 4)} {_f(y1)}h8" '
                f'stroke="{color}" fill="none" class="errorbar"/>'
            )

    def star(self, x: float, y: float, color: str, size: float = 9.0):
        cx, cy = self.x(x), self.y(y)
        pts = []
        for k in range(10):
            r = size if k % 2 == 0 else size * 0.45
            ang = -math.pi / 2 + k * math.pi / 5
            pts.append(f"{_f(cx + r * math.cos(ang))},{_f(cy + r * math.sin(ang))}")
        self.parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" stroke="#000" class="minimum"/>')

    def render(self) -> str:
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            *self.parts,
        ]
        lx = WIDTH - MARGIN["right"] + 12
        for i, (label, color) in enumerate(self.legend):
            ly = MARGIN["top"] + 12 + 18 * i
            out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 24}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _error_range(means, ses):
    lows = [m - s if m - s > 0 else m / 2 for m, s in zip(means, ses)]
    highs = [m + s for m, s in zip(means, ses)]
    return lows, highs


def rate_plot(ns: Sequence[float], means: Sequence[float], ses: Sequence[float], exponent: float, intercept: float, title: str = "error against n") -> str:
    """Log-log error against ``n`` with error bars and the fitted power law."""
    lows, highs = _error_range(means, ses)
    fitted = [math.exp(intercept) * n**exponent for n in ns]
    chart = Chart(title, "n (log)", "mean squared L2 error (log)", (min(ns), max(ns)), (min(lows + fitted), max(highs + fitted)), True, True)
    chart.error_bars(ns, lows, highs, COLORS[0])
    chart.points(ns, means, COLORS[0], "mean error")
    chart.polyline(ns, fitted, COLORS[1], dashed=True, label=f"fit slope {exponent:.3f}")
    return chart.render()


def depth_plot(series: dict[str, tuple[list[int], list[float], list[float], int]], title: str = "error against adapter depth") -> str:
    """``series[name] = (depths, means, ses, min_depth)``; minima marked with stars."""
    all_depths = [d for v in series.values() for d in v[0]]
    lows_all, highs_all = [], []
    for _, means, ses, _ in series.values():
        lo, hi = _error_range(means, ses)
        lows_all += lo
        highs_all += hi
    chart = Chart(title, "adapter depth", "mean squared L2 error (log)", (min(all_depths), max(all_depths)), (min(lows_all), max(highs_all)), False, True)
    for i, (name, (depths, means, ses, best)) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        lo, hi = _error_range(means, ses)
        chart.error_bars(depths, lo, hi, color)
        chart.polyline(depths, means, color, label=name)
        chart.points(depths, means, color)
        chart.star(best, means[depths.index(best)], color)
    return chart.render()


def exponent_plot(labels: Sequence[str], exponents: Sequence[float], title: str = "fitted rate exponent against m") -> str:
    """Exponent per source size, one point per label in order."""
    xs = list(range(len(labels)))
    chart = Chart(title, "source sample size m", "fitted exponent", (0, max(len(labels) - 1, 1)), (min(exponents + [0.0]), max(exponents + [0.0])), False, False)
    chart.polyline(xs, exponents, COLORS[0], label="exponent")
    chart.points(xs, exponents, COLORS[0])
    bottom = HEIGHT - MARGIN["bottom"]
    for x, label in zip(xs, labels):
        chart.parts.append(f'<text x="{_f(chart.x(x))}" y="{bottom - 8}" text-anchor="middle" font-size="11">{escape(str(label))}</text>')
    return chart.render()
