"""SVG drawings of mechanism states and fitness traces.

Mechanism drawings use world coordinates directly: the viewBox is the union
bounding box of everything drawn plus a 10% margin, and a ``scale(1,-1)``
group turns the y axis upwards.  Link endpoints are therefore written in the
same units as the state they come from.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .model import Mechanism

MARGIN = 0.10
FMT = "%.9g"

STYLES = {
    "deformed": dict(stroke="#1f4e9c", dash=None, width=1.0),
    "pose": dict(stroke="#c05a10", dash="4 3", width=0.8),
    "initial": dict(stroke="#777777", dash="2 2", width=0.6),
}


def _f(v: float) -> str:
    return FMT % v


def _bbox(arrays: Iterable[np.ndarray]):
    pts = np.vstack([np.asarray(a, dtype=float).reshape(-1, 2) for a in arrays])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    size = max(float(span.max()), 1e-9)
    # degenerate extents (all points on a line) get the other axis' span
    span = np.where(span < 1e-9 * size, size, span)
    centre = 0.5 * (lo + hi)
    lo, hi = centre - 0.5 * span, centre + 0.5 * span
    pad = MARGIN * span
    return lo - pad, hi + pad


def mechanism_svg(mechanism: Mechanism, layers: Sequence[tuple[str, np.ndarray]],
                  targets: np.ndarray | None = None, title: str = "", width: int = 480) -> str:
    """Draw ``layers`` (``(style, xy)`` pairs) of one mechanism, plus target crosses.

    Every truss is a ``<line>`` carrying ``class`` (the layer style) and
    ``data-truss`` (the truss id).  Fixed nodes of the first layer get a
    ground triangle.
    """
    arrays = [xy for _, xy in layers]
    if targets is not None and len(targets):
        arrays.append(np.asarray(targets, dtype=float))
    lo, hi = _bbox(arrays)
    w, h = hi - lo
    unit = 0.01 * math.hypot(w, h)
    height = int(round(width * h / w))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="{_f(lo[0])} {_f(-hi[1])} {_f(w)} {_f(h)}">']
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="{_f(lo[0])}" y="{_f(-hi[1])}" width="{_f(w)}" height="{_f(h)}" fill="white"/>')
    out.append('<g transform="scale(1,-1)">')
    ends = mechanism.endpoints()
    fixed = mechanism.fixed_mask()
    for n, (style, xy) in enumerate(layers):
        st = STYLES[style]
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        dash = f' stroke-dasharray="{escape(st["dash"])}"' if st["dash"] else ""
        out.append(f'<g class="{style}" stroke="{st["stroke"]}" stroke-width="{_f(st["width"] * unit * 0.6)}" '
                   f'fill="none"{dash}>')
        if n == 0:
            for i in np.flatnonzero(fixed):
                out.append(_ground(xy[i], unit))
        for truss, (k, l) in zip(mechanism.trusses, ends):
            out.append(f'<line class="{style}" data-truss="{truss.id}" x1="{_f(xy[k, 0])}" y1="{_f(xy[k, 1])}" '
                       f'x2="{_f(xy[l, 0])}" y2="{_f(xy[l, 1])}"/>')
        for x, y in xy:
            out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(0.8 * unit)}" fill="white"/>')
        out.append("</g>")
    if targets is not None:
        s = 1.5 * unit
        out.append(f'<g class="targets" stroke="#b00020" stroke-width="{_f(0.5 * unit)}">')
        for x, y in np.asarray(targets, dtype=float).reshape(-1, 2):
            out.append(f'<path d="M{_f(x - s)} {_f(y - s)}L{_f(x + s)} {_f(y + s)}'
                       f'M{_f(x - s)} {_f(y + s)}L{_f(x + s)} {_f(y - s)}"/>')
        out.append("</g>")
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _ground(p, unit) -> str:
    x, y = p
    s = 2.5 * unit
    tri = (f'<path class="ground" d="M{_f(x)} {_f(y)}L{_f(x - s)} {_f(y - 1.6 * s)}'
           f'L{_f(x + s)} {_f(y - 1.6 * s)}Z" fill="#dddddd"/>')
    hatch = "".join(f"M{_f(x - s + i * s / 2)} {_f(y - 1.6 * s)}l{_f(-s / 2)} {_f(-s / 2)}" for i in range(5))
    return tri + f'<path class="ground" d="{hatch}"/>'


def trace_svg(series: Sequence[tuple[str, Sequence[float]]], title: str = "",
              width: int = 520, height: int = 320) -> str:
    """Line plot of ``log10`` fitness against iteration, one polyline per series."""
    colours = ("#1f4e9c", "#c05a10", "#2e8b57", "#7b3294")
    left, right, top, bottom = 60.0, 20.0, 30.0, 40.0
    vals = [np.asarray(v, dtype=float) for _, v in series]
    pos = np.concatenate([v[v > 0] for v in vals] + [np.zeros(0)])
    if pos.size == 0:
        pos = np.array([1.0])
    ylo, yhi = math.floor(np.log10(pos.min())), math.ceil(np.log10(pos.max()))
    if yhi == ylo:
        yhi += 1
    xmax = max(max((v.size for v in vals), default=1) - 1, 1)
    pw, ph = width - left - right, height - top - bottom

    def px(i):
        return left + pw * i / xmax

    def py(f):
        return top + ph * (yhi - np.log10(max(f, 10.0 ** ylo))) / (yhi - ylo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<path d="M{left} {top}V{top + ph}H{left + pw}" stroke="black" fill="none"/>')
    step = max(1, (yhi - ylo) // 8)
    for e in range(ylo, yhi + 1, step):
        y = py(10.0 ** e)
        out.append(f'<path d="M{left - 4} {_f(y)}H{left}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{_f(y + 4)}" text-anchor="end">1e{e}</text>')
    for i in np.unique(np.linspace(0, xmax, 6).round().astype(int)):
        x = px(i)
        out.append(f'<path d="M{_f(x)} {top + ph}v4" stroke="black"/>')
        out.append(f'<text x="{_f(x)}" y="{top + ph + 16}" text-anchor="middle">{i}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 6}" text-anchor="middle">iteration</text>')
    for n, ((name, _), v) in enumerate(zip(series, vals)):
        c = colours[n % len(colours)]
        pts = " ".join(f"{_f(px(i))},{_f(py(f))}" for i, f in enumerate(v))
        out.append(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" '
                   f'stroke="{c}" fill="none" stroke-width="1.5"/>')
        ly = top + 14 * (n + 1)
        out.append(f'<path d="M{left + pw - 110} {ly - 4}h18" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 86}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
