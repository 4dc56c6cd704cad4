"""Minimal deterministic SVG line charts for run traces.

Charts are plain text built with fixed float formatting, so the same
trace rows always produce byte-identical files and diffs stay readable.
"""

from __future__ import annotations

import math

_W, _H = 640, 360
_ML, _MR, _MT, _MB = 58, 14, 30, 44


def _nice_step(span: float) -> float:
    raw = span / 5.0
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0):
        if raw <= mult * mag:
            return mult * mag
    return 10.0 * mag


def _ticks(lo: float, hi: float) -> list[float]:
    if hi - lo <= 0:
        lo, hi = lo - 1.0, hi + 1.0
    step = _nice_step(hi - lo)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9:
        out.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return out


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def svg_chart(series, *, title: str, x_label: str, y_label: str,
              hlines=()) -> str:
    """One line chart.  ``series`` is a list of (label, color, xs, ys);
    ``hlines`` of (y, color, label) draws reference levels."""
    xs_all = [x for _, _, xs, _ in series for x in xs]
    ys_all = [y for _, _, _, ys in series for y in ys]
    ys_all += [y for y, _, _ in hlines]
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y_lo, y_hi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    iw = _W - _ML - _MR
    ih = _H - _MT - _MB

    def px(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * iw

    def py(y):
        return _MT + (y_hi - y) / (y_hi - y_lo) * ih

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
        f'height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]
    for t in _ticks(x_lo, x_hi):
        x = px(t)
        parts.append(f'<line x1="{x:.2f}" y1="{_MT}" x2="{x:.2f}" '
                     f'y2="{_H - _MB}" stroke="#ddd"/>')
        parts.append(f'<text x="{x:.2f}" y="{_H - _MB + 16}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        y = py(t)
        parts.append(f'<line x1="{_ML}" y1="{y:.2f}" x2="{_W - _MR}" '
                     f'y2="{y:.2f}" stroke="#ddd"/>')
        parts.append(f'<text x="{_ML - 6}" y="{y + 3:.2f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{_fmt(t)}</text>')
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{iw}" height="{ih}" '
                 f'fill="none" stroke="black"/>')
    for y_val, color, label in hlines:
        y = py(y_val)
        parts.append(f'<line x1="{_ML}" y1="{y:.2f}" x2="{_W - _MR}" '
                     f'y2="{y:.2f}" stroke="{color}" '
                     f'stroke-dasharray="6 3"/>')
        if label:
            parts.append(f'<text x="{_W - _MR - 4}" y="{y - 4:.2f}" '
                         f'text-anchor="end" font-family="sans-serif" '
                         f'font-size="10" fill="{color}">{label}</text>')
    legend_y = _MT + 14
    for label, color, xs, ys in series:
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}"
                       for x, y in zip(xs, ys))
        if pts:
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        if label:
            parts.append(f'<text x="{_ML + 8}" y="{legend_y}" '
                         f'font-family="sans-serif" font-size="10" '
                         f'fill="{color}">{label}</text>')
            legend_y += 13
    parts.append(f'<text x="{_ML + iw / 2:.0f}" y="{_H - 8}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="11">{x_label}</text>')
    parts.append(f'<text x="14" y="{_MT + ih / 2:.0f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="11" transform="rotate(-90 14 '
                 f'{_MT + ih / 2:.0f})">{y_label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _limit_segments(rows):
    """Contiguous stretches where a speed limit was active."""
    segs = []
    cur_x, cur_y = [], []
    for r in rows:
        if r["active_limit"] is None:
            if cur_x:
                segs.append((cur_x, cur_y))
                cur_x, cur_y = [], []
        else:
            cur_x.append(r["s"])
            cur_y.append(r["active_limit"])
    if cur_x:
        segs.append((cur_x, cur_y))
    return segs


def velocity_plot(rows, title: str = "velocity along route") -> str:
    s = [r["s"] for r in rows]
    v = [r["v"] for r in rows]
    series = [("v", "#1f5fbf", s, v)]
    for i, (xs, ys) in enumerate(_limit_segments(rows)):
        series.append(("active limit" if i == 0 else "", "#2a9d3a",
                       xs, ys))
    return svg_chart(series, title=title, x_label="s [m]",
                     y_label="v [m/s]")


def acceleration_plot(rows, a_th: float = 4.0,
                      title: str = "acceleration along route") -> str:
    s = [r["s"] for r in rows]
    a = [r["a"] for r in rows]
    return svg_chart([("a", "#222222", s, a)], title=title,
                     x_label="s [m]", y_label="a [m/s^2]",
                     hlines=[(a_th, "magenta", "a_th"),
                             (-a_th, "magenta", "")])


def risk_plot(rows, title: str = "occlusion risk ahead") -> str:
    s = [r["s"] for r in rows]
    risk = [r["risk_ahead"] for r in rows]
    return svg_chart([("risk ahead", "#c0392b", s, risk)], title=title,
                     x_label="s [m]", y_label="total risk")


def trace_plots(rows, a_th: float = 4.0) -> dict[str, str]:
    """All three standard charts keyed by output filename."""
    return {
        "v_s.svg": velocity_plot(rows),
        "a_s.svg": acceleration_plot(rows, a_th),
        "risk_s.svg": risk_plot(rows),
    }
