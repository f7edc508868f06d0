"""Minimal deterministic SVG charts (bars, lines, scatter, parallel coordinates, heatmap)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _f(v):
    return f"{v:.2f}"


def _num(v):
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, title, width=W, height=H):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{escape(title)}</text>',
        ]

    def add(self, s):
        self.parts.append(s)

    def text(self, x, y, s, anchor="middle", size=11, rotate=None):
        rot = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.add(
            f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" font-size="{size}" font-family="sans-serif"{rot}>{escape(str(s))}</text>'
        )

    def render(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _range(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


class _Axes:
    def __init__(self, canvas, xr, yr):
        self.c = canvas
        self.x0, self.x1 = LEFT, canvas.width - RIGHT
        self.y0, self.y1 = canvas.height - BOTTOM, TOP
        self.xr, self.yr = xr, yr

    def x(self, v):
        lo, hi = self.xr
        return self.x0 + (v - lo) / (hi - lo) * (self.x1 - self.x0)

    def y(self, v):
        lo, hi = self.yr
        return self.y0 + (v - lo) / (hi - lo) * (self.y1 - self.y0)

    def frame(self, xlabel="", ylabel="", xticks=True):
        c = self.c
        c.add(f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}" stroke="black"/>')
        c.add(f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}" stroke="black"/>')
        for t in np.linspace(*self.yr, 5):
            c.text(self.x0 - 6, self.y(t) + 4, _num(t), anchor="end", size=10)
        if xticks:
            for t in np.linspace(*self.xr, 5):
                c.text(self.x(t), self.y0 + 16, _num(t), size=10)
        if xlabel:
            c.text((self.x0 + self.x1) / 2, c.height - 14, xlabel)
        if ylabel:
            c.text(16, (self.y0 + self.y1) / 2, ylabel, rotate=-90)


def bar_chart(labels, values, title, ylabel=""):
    """Vertical bars; negative values hang below the zero line."""
    values = np.asarray(values, dtype=np.float64)
    c = _Canvas(title)
    lo, hi = _range(np.append(values, 0.0))
    ax = _Axes(c, (0.0, 1.0), (lo, hi))
    ax.frame(ylabel=ylabel, xticks=False)
    n = max(len(values), 1)
    slot = (ax.x1 - ax.x0) / n
    zero = ax.y(0.0)
    for i, (lab, v) in enumerate(zip(labels, values)):
        x = ax.x0 + i * slot + 0.15 * slot
        top, bottom = min(ax.y(v), zero), max(ax.y(v), zero)
        c.add(
            f'<rect class="bar" x="{_f(x)}" y="{_f(top)}" width="{_f(0.7 * slot)}" height="{_f(bottom - top)}" fill="{PALETTE[0]}"/>'
        )
        c.text(x + 0.35 * slot, ax.y0 + 14, lab, anchor="end", size=9, rotate=-45)
    return c.render()


def line_chart(series, title, xlabel="", ylabel=""):
    """``series`` is a list of (label, x, y) triples sharing one pair of axes."""
    xs = np.concatenate([np.asarray(s[1], dtype=np.float64) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=np.float64) for s in series])
    c = _Canvas(title)
    ax = _Axes(c, _range(xs), _range(ys))
    ax.frame(xlabel, ylabel)
    for k, (label, x, y) in enumerate(series):
        pts = " ".join(f"{_f(ax.x(a))},{_f(ax.y(b))}" for a, b in zip(x, y))
        color = PALETTE[k % len(PALETTE)]
        c.add(f'<polyline class="series" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        c.text(ax.x1 - 4, TOP + 14 * (k + 1), label, anchor="end", size=10)
    return c.render()


def scatter(x, y, title, xlabel="", ylabel="", groups=None):
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    c = _Canvas(title)
    ax = _Axes(c, _range(x), _range(y))
    ax.frame(xlabel, ylabel)
    names = sorted(set(groups)) if groups is not None else [None]
    for i in range(x.size):
        g = 0 if groups is None else names.index(groups[i])
        c.add(f'<circle cx="{_f(ax.x(x[i]))}" cy="{_f(ax.y(y[i]))}" r="2.5" fill="{PALETTE[g % len(PALETTE)]}"/>')
    if groups is not None:
        for k, name in enumerate(names):
            c.text(ax.x1 - 4, TOP + 14 * (k + 1), name, anchor="end", size=10)
    return c.render()


def parallel_coordinates(features, lines, title):
    """One ``<polyline class="llm">`` per row of ``lines`` over the feature axes."""
    lines = np.asarray(lines, dtype=np.float64).reshape(len(lines), len(features))
    c = _Canvas(title)
    ax = _Axes(c, (0.0, max(len(features) - 1, 1)), _range(lines))
    ax.frame(ylabel="coefficient", xticks=False)
    for j, name in enumerate(features):
        xj = ax.x(j)
        c.add(f'<line x1="{_f(xj)}" y1="{ax.y0}" x2="{_f(xj)}" y2="{ax.y1}" stroke="#cccccc"/>')
        c.text(xj, ax.y0 + 14, name, anchor="end", size=9, rotate=-45)
    for row in lines:
        pts = " ".join(f"{_f(ax.x(j))},{_f(ax.y(v))}" for j, v in enumerate(row))
        c.add(f'<polyline class="llm" points="{pts}" fill="none" stroke="{PALETTE[0]}" stroke-opacity="0.4"/>')
    return c.render()


def heatmap(labels, matrix, title):
    """Square matrix in [-1, 1]; blue negative, red positive."""
    M = np.asarray(matrix, dtype=np.float64)
    n = len(labels)
    c = _Canvas(title, width=W, height=W)
    size = (W - LEFT - RIGHT) / max(n, 1)
    for i in range(n):
        c.text(LEFT - 4, TOP + (i + 0.6) * size, labels[i], anchor="end", size=8)
        for j in range(n):
            v = float(np.clip(M[i, j], -1, 1))
            r, g, b = (255, int(255 * (1 - v)), int(255 * (1 - v))) if v >= 0 else (int(255 * (1 + v)), int(255 * (1 + v)), 255)
            c.add(
                f'<rect x="{_f(LEFT + j * size)}" y="{_f(TOP + i * size)}" width="{_f(size)}" height="{_f(size)}" '
                f'fill="rgb({r},{g},{b})"><title>{escape(labels[i])} / {escape(labels[j])}: {v:.3f}</title></rect>'
            )
    return c.render()
