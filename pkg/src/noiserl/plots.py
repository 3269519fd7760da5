"""Minimal deterministic SVG line plots."""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
W, H = 640, 360
LEFT, RIGHT, TOP, BOTTOM = 60, 170, 40, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_plot(series: dict, title: str, xlabel: str, ylabel: str, y_range=None) -> str:
    """SVG text for ``series``: name -> list of (x, y); None y values break the line."""
    pts = [(x, y) for s in series.values() for x, y in s if y is not None]
    xs = [x for x, _ in pts] or [0, 1]
    ys = [y for _, y in pts] or [0, 1]
    x0, x1 = min(xs), max(xs)
    y0, y1 = y_range if y_range is not None else (min(ys), max(ys))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2 - RIGHT / 2:.1f}" y="22" font-size="14" text-anchor="middle" font-family="sans-serif">{escape(title)}</text>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>']
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        xv = x0 + (x1 - x0) * i / 4
        out.append(f'<text x="{LEFT - 6}" y="{sy(yv) + 4:.1f}" font-size="10" text-anchor="end" '
                   f'font-family="sans-serif">{_fmt(yv)}</text>')
        out.append(f'<text x="{sx(xv):.1f}" y="{TOP + ph + 16}" font-size="10" text-anchor="middle" '
                   f'font-family="sans-serif">{xv:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" font-size="12" text-anchor="middle" '
               f'font-family="sans-serif">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" font-size="12" text-anchor="middle" font-family="sans-serif" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (name, s) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        runs, cur = [], []
        for x, y in s:
            if y is None:
                if cur:
                    runs.append(cur)
                cur = []
            else:
                cur.append(f"{sx(x):.1f},{sy(y):.1f}")
        if cur:
            runs.append(cur)
        for r in runs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(r)}"/>')
        ly = TOP + 14 * i + 6
        out.append(f'<line x1="{W - RIGHT + 10}" y1="{ly}" x2="{W - RIGHT + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 32}" y="{ly + 4}" font-size="10" font-family="sans-serif">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
