"""Minimal deterministic SVG line plots.

Constraints the harness relies on: byte-stable output (no timestamps,
no ids, fixed float formatting), exactly one <polyline> per data series,
optional min/max envelope drawn as a <polygon>. Matplotlib can't promise
any of that across versions, hence this ~150-line renderer.
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 640.0, 420.0
ML, MR, MT, MB = 64.0, 16.0, 34.0, 46.0   # margins: left/right/top/bottom

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
)


def _f(v: float) -> str:
    # fixed decimals keep files byte-stable across platforms
    return f"{v:.2f}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo: float, hi: float, max_ticks: int = 8):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max_ticks
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if mag * mult >= raw:
            step = mag * mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9 * step:
        out.append(0.0 if abs(t) < step * 1e-6 else t)
        t += step
    return out


def _tick_label(v: float) -> str:
    if v == int(v):
        return str(int(v))
    return f"{v:g}"


def render_panel(title: str, xlabel: str, ylabel: str, series, path=None) -> str:
    """series: list of {label, x, y, band?: (lo, hi)}; coordinates are taken
    as-is (callers do their own log10). Returns the SVG text; writes it too
    when path is given."""
    if not series:
        raise ValueError("no series to plot")
    xs = [v for s in series for v in s["x"]]
    ys = [v for s in series for v in s["y"]]
    for s in series:
        if len(s["x"]) != len(s["y"]) or not s["x"]:
            raise ValueError(f"series {s.get('label')!r}: x/y length mismatch or empty")
        band = s.get("band")
        if band is not None:
            ys += list(band[0]) + list(band[1])
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    pw, ph = WIDTH - ML - MR, HEIGHT - MT - MB

    def px(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MT + (y1 - y) / (y1 - y0) * ph

    out = []
    out.append('<?xml version="1.0" encoding="UTF-8"?>')
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(WIDTH)}" '
               f'height="{int(HEIGHT)}" viewBox="0 0 {int(WIDTH)} {int(HEIGHT)}">')
    out.append(f'<rect x="0" y="0" width="{int(WIDTH)}" height="{int(HEIGHT)}" fill="#ffffff"/>')
    out.append(f'<text x="{_f(WIDTH / 2)}" y="20" font-family="monospace" font-size="14" '
               f'text-anchor="middle">{_esc(title)}</text>')

    # frame + ticks
    out.append(f'<rect x="{_f(ML)}" y="{_f(MT)}" width="{_f(pw)}" height="{_f(ph)}" '
               'fill="none" stroke="#000000" stroke-width="1"/>')
    for t in _ticks(x0, x1):
        if t < x0 or t > x1:
            continue
        xp = px(t)
        out.append(f'<line x1="{_f(xp)}" y1="{_f(MT + ph)}" x2="{_f(xp)}" '
                   f'y2="{_f(MT + ph + 4)}" stroke="#000000" stroke-width="1"/>')
        out.append(f'<text x="{_f(xp)}" y="{_f(MT + ph + 16)}" font-family="monospace" '
                   f'font-size="10" text-anchor="middle">{_tick_label(t)}</text>')
    for t in _ticks(y0, y1):
        if t < y0 or t > y1:
            continue
        yp = py(t)
        out.append(f'<line x1="{_f(ML - 4)}" y1="{_f(yp)}" x2="{_f(ML)}" '
                   f'y2="{_f(yp)}" stroke="#000000" stroke-width="1"/>')
        out.append(f'<text x="{_f(ML - 7)}" y="{_f(yp + 3)}" font-family="monospace" '
                   f'font-size="10" text-anchor="end">{_tick_label(t)}</text>')
    out.append(f'<text x="{_f(ML + pw / 2)}" y="{_f(HEIGHT - 12)}" font-family="monospace" '
               f'font-size="12" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{_f(MT + ph / 2)}" font-family="monospace" font-size="12" '
               f'text-anchor="middle" transform="rotate(-90 16 {_f(MT + ph / 2)})">'
               f'{_esc(ylabel)}</text>')

    # bands first so every polyline draws on top
    for i, s in enumerate(series):
        band = s.get("band")
        if band is None:
            continue
        color = PALETTE[i % len(PALETTE)]
        lo, hi = band
        pts = [f"{_f(px(x))},{_f(py(v))}" for x, v in zip(s["x"], hi)]
        pts += [f"{_f(px(x))},{_f(py(v))}" for x, v in zip(reversed(s["x"]), reversed(lo))]
        out.append(f'<polygon points="{" ".join(pts)}" fill="{color}" '
                   'fill-opacity="0.15" stroke="none"/>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in zip(s["x"], s["y"]))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   'stroke-width="1.5"/>')

    # legend, top-right inside the frame
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        yp = MT + 14 + 13 * i
        xr = ML + pw - 10
        out.append(f'<line x1="{_f(xr - 18)}" y1="{_f(yp - 3)}" x2="{_f(xr - 4)}" '
                   f'y2="{_f(yp - 3)}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_f(xr - 22)}" y="{_f(yp)}" font-family="monospace" '
                   f'font-size="10" text-anchor="end">{_esc(str(s["label"]))}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
