"""Self-contained SVG charts (fixed 800x500 canvas, no external assets)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=90, right=170, top=50, bottom=60)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    exp = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * exp >= v:
            return m * exp
    return 10 * exp


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="#333"/>',
        f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="#333"/>',
        f'<text x="{x0 + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="20" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 20 {MARGIN["top"] + ph / 2})">{escape(ylabel)}</text>',
    ]


def _legend(names) -> list[str]:
    out = []
    x = WIDTH - MARGIN["right"] + 15
    for i, name in enumerate(names):
        y = MARGIN["top"] + 10 + 20 * i
        out.append(f'<rect x="{x}" y="{y - 9}" width="12" height="12" fill="{PALETTE[i % len(PALETTE)]}"/>')
        out.append(f'<text x="{x + 18}" y="{y + 1}" font-size="12">{escape(str(name))}</text>')
    return out


def line_chart(title: str, xlabel: str, ylabel: str, xs, series: dict[str, list[float]]) -> str:
    """Lines over categorical x positions; one line per ``series`` entry."""
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    ymax = _nice_max(max((v for vals in series.values() for v in vals), default=1.0))
    n = len(xs)
    px = lambda i: MARGIN["left"] + (pw * (i + 0.5) / n if n else 0)  # noqa: E731
    py = lambda v: MARGIN["top"] + ph - ph * v / ymax  # noqa: E731
    out = _frame(title, xlabel, ylabel)
    for k in range(5):
        v = ymax * k / 4
        out.append(f'<line x1="{MARGIN["left"]}" y1="{_fmt(py(v))}" x2="{MARGIN["left"] + pw}" '
                   f'y2="{_fmt(py(v))}" stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_fmt(py(v) + 4)}" text-anchor="end" font-size="11">{v:.4g}</text>')
    for i, x in enumerate(xs):
        out.append(f'<text x="{_fmt(px(i))}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle" font-size="11">{escape(str(x))}</text>')
    for s, (name, vals) in enumerate(series.items()):
        color = PALETTE[s % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(i))},{_fmt(py(v))}" for i, v in enumerate(vals))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for i, v in enumerate(vals):
            out.append(f'<circle cx="{_fmt(px(i))}" cy="{_fmt(py(v))}" r="3.5" fill="{color}"/>')
    out += _legend(series)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def stacked_bar_chart(title: str, xlabel: str, ylabel: str, xs, stacks: dict[str, list[float]],
                      markers: list[float] | None = None) -> str:
    """Stacked bars; optional dashed markers above each bar (e.g. a baseline's total)."""
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    totals = [sum(col) for col in zip(*stacks.values())] if stacks else []
    ymax = _nice_max(max(totals + list(markers or []), default=1.0))
    n = max(1, len(xs))
    bw = pw / n * 0.6
    py = lambda v: MARGIN["top"] + ph - ph * v / ymax  # noqa: E731
    out = _frame(title, xlabel, ylabel)
    for k in range(5):
        v = ymax * k / 4
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_fmt(py(v) + 4)}" text-anchor="end" font-size="11">{v:.4g}</text>')
    for i, x in enumerate(xs):
        cx = MARGIN["left"] + pw * (i + 0.5) / n
        base = 0.0
        for s, vals in enumerate(stacks.values()):
            h = vals[i]
            if h > 0:
                out.append(f'<rect x="{_fmt(cx - bw / 2)}" y="{_fmt(py(base + h))}" width="{_fmt(bw)}" '
                           f'height="{_fmt(py(base) - py(base + h))}" fill="{PALETTE[s % len(PALETTE)]}"/>')
            base += h
        if markers is not None:
            y = _fmt(py(markers[i]))
            out.append(f'<line x1="{_fmt(cx - bw / 2)}" y1="{y}" x2="{_fmt(cx + bw / 2)}" y2="{y}" '
                       f'stroke="#d62728" stroke-width="2" stroke-dasharray="5,3"/>')
        out.append(f'<text x="{_fmt(cx)}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle" font-size="11">{escape(str(x))}</text>')
    out += _legend(stacks)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def roofline_chart(title: str, roof: list[tuple[float, float]], i_star: float,
                   markers: list[tuple[str, float, float]]) -> str:
    """Log-log roofline with the kink at ``i_star`` and labelled workload markers."""
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    pts = [p for p in roof if p[0] > 0 and p[1] > 0] + [(m[1], m[2]) for m in markers if m[1] > 0 and m[2] > 0]
    lx = [math.log10(p[0]) for p in pts]
    ly = [math.log10(p[1]) for p in pts]
    x_lo, x_hi = math.floor(min(lx)), math.ceil(max(lx))
    y_lo, y_hi = math.floor(min(ly)), math.ceil(max(ly)) + 0.3
    px = lambda x: MARGIN["left"] + pw * (math.log10(x) - x_lo) / max(1e-9, x_hi - x_lo)  # noqa: E731
    py = lambda y: MARGIN["top"] + ph - ph * (math.log10(y) - y_lo) / max(1e-9, y_hi - y_lo)  # noqa: E731
    out = _frame(title, "operational intensity (FLOP/byte)", "attainable (FLOP/s)")
    for e in range(x_lo, x_hi + 1):
        out.append(f'<text x="{_fmt(px(10 ** e))}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle" font-size="11">1e{e}</text>')
    for e in range(y_lo, int(y_hi) + 1):
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_fmt(py(10 ** e) + 4)}" text-anchor="end" font-size="11">1e{e}</text>')
    line = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in roof if x > 0 and y > 0)
    out.append(f'<polyline points="{line}" fill="none" stroke="{PALETTE[0]}" stroke-width="2"/>')
    out.append(f'<line x1="{_fmt(px(i_star))}" y1="{MARGIN["top"]}" x2="{_fmt(px(i_star))}" '
               f'y2="{MARGIN["top"] + ph}" stroke="#999" stroke-dasharray="4,4"/>')
    out.append(f'<text x="{_fmt(px(i_star) + 4)}" y="{MARGIN["top"] + 14}" font-size="11">I* = {i_star:.4g}</text>')
    for k, (label, x, y) in enumerate(markers):
        color = PALETTE[(k + 1) % len(PALETTE)]
        out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="4" fill="{color}"/>')
    out += _legend(["roofline"] + [m[0] for m in markers])
    out.append("</svg>")
    return "\n".join(out) + "\n"
