"""Deterministic SVG emitters: metric heatmaps with a shared color scale,
BLEU curve line charts with optional fitted overlays, and rank-std bars.

Everything is plain-text SVG built from the input data alone (no
timestamps, no external resources), so identical inputs give identical
bytes, which makes golden-file and rerun tests trivial.
"""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

from .metrics import MetricTable
from .ranking import PruneCurve
from .stats import PolyFit

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")

_LOW = (33, 102, 172)
_MID = (247, 247, 247)
_HIGH = (178, 24, 43)


def _f(v: float) -> str:
    return f"{v:.2f}"


def _lerp(a, b, t):
    return tuple(round(a[i] + (b[i] - a[i]) * t) for i in range(3))


def heat_color(value: float, vmin: float, vmax: float) -> str:
    t = (value - vmin) / (vmax - vmin)
    t = min(1.0, max(0.0, t))
    rgb = _lerp(_LOW, _MID, t * 2) if t <= 0.5 else _lerp(_MID, _HIGH, t * 2 - 1)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">')
    style = ('<style>text{font-family:monospace;font-size:11px;fill:#222}'
             '.title{font-size:13px}</style>')
    return "\n".join([head, style, *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="start", cls=None, rotate=None):
    attrs = f'x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"'
    if cls:
        attrs += f' class="{cls}"'
    if rotate is not None:
        attrs += f' transform="rotate({rotate} {_f(x)} {_f(y)})"'
    return f"<text {attrs}>{escape(str(s))}</text>"


# ---------------------------------------------------------------------------
# heatmaps
# ---------------------------------------------------------------------------


def heatmap_svg(tables: Sequence[MetricTable], cell: int = 24) -> str:
    """One panel per table (language pair), layers on the vertical axis,
    heads on the horizontal axis, one color scale shared by every panel
    with its limits printed in the legend."""
    if not tables:
        raise ValueError("no tables to plot")
    metric, attn = tables[0].metric, tables[0].attn
    for t in tables[1:]:
        if t.metric is not metric or t.attn is not attn:
            raise ValueError("heatmap inputs mix metric kinds or attention types")
    layers = max(r.layer for t in tables for r in t.rows) + 1
    heads = max(r.head for t in tables for r in t.rows) + 1
    values = [r.normalized for t in tables for r in t.rows]
    vmin, vmax = min(values), max(values)
    if vmin == vmax:
        vmin, vmax = vmin - 0.5, vmax + 0.5

    left, top, pad = 34, 40, 22
    panel_w = left + heads * cell
    panel_h = top + layers * cell + 18
    legend_w = 70
    width = pad + len(tables) * (panel_w + pad) + legend_w
    height = panel_h + pad

    body = [_text(pad, 16, f"{metric.value} / {attn.value} (normalized)",
                  cls="title")]
    for ti, table in enumerate(tables):
        x0 = pad + ti * (panel_w + pad) + left
        y0 = top
        body.append(_text(x0, y0 - 8, table.pair))
        scores = {(r.layer, r.head): r.normalized for r in table.rows}
        for layer in range(layers):
            body.append(_text(x0 - 6, y0 + layer * cell + cell * 0.65,
                              layer, anchor="end"))
            for head in range(heads):
                color = heat_color(scores[(layer, head)], vmin, vmax)
                body.append(f'<rect class="cell" x="{x0 + head * cell}" '
                            f'y="{y0 + layer * cell}" width="{cell}" '
                            f'height="{cell}" fill="{color}" stroke="#fff"/>')
        for head in range(heads):
            body.append(_text(x0 + head * cell + cell / 2,
                              y0 + layers * cell + 13, head, anchor="middle"))

    # legend: vertical gradient strip, max at top, min at bottom
    lx = width - legend_w + 10
    ly, lh = top, layers * cell
    steps = 24
    for i in range(steps):
        v = vmax - (vmax - vmin) * (i + 0.5) / steps
        body.append(f'<rect x="{lx}" y="{_f(ly + lh * i / steps)}" width="14" '
                    f'height="{_f(lh / steps + 0.5)}" '
                    f'fill="{heat_color(v, vmin, vmax)}"/>')
    body.append(_text(lx + 18, ly + 10, f"{vmax:.4f}"))
    body.append(_text(lx + 18, ly + lh, f"{vmin:.4f}"))
    return _doc(width, height, body)


# ---------------------------------------------------------------------------
# line charts
# ---------------------------------------------------------------------------


def line_chart_svg(curves: Sequence[PruneCurve],
                   fits: Sequence[PolyFit | None] | None = None,
                   title: str = "", width: int = 640, height: int = 400) -> str:
    """BLEU-vs-pruned-heads chart; one colored series per curve, optional
    dashed polynomial overlay per curve."""
    if not curves:
        raise ValueError("no curves to plot")
    if fits is not None and len(fits) != len(curves):
        raise ValueError("fits must align with curves")
    left, right, top, bottom = 52, 14, 30, 36
    plot_w, plot_h = width - left - right, height - top - bottom
    x_max = max(max(c.ks) for c in curves)
    x_max = max(x_max, 1)
    ys = [b for c in curves for b in c.bleus]
    y_min, y_max = min(ys), max(ys)
    if y_min == y_max:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    span = y_max - y_min
    y_min, y_max = y_min - 0.05 * span, y_max + 0.05 * span

    def px(k):
        return left + plot_w * k / x_max

    def py(b):
        return top + plot_h * (1.0 - (b - y_min) / (y_max - y_min))

    body = [_text(left, 18, title or "BLEU vs pruned heads", cls="title"),
            f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
            f'fill="none" stroke="#888"/>']
    for i in range(6):
        yv = y_min + (y_max - y_min) * i / 5
        yy = py(yv)
        body.append(f'<line x1="{left}" y1="{_f(yy)}" x2="{left + plot_w}" '
                    f'y2="{_f(yy)}" stroke="#ddd"/>')
        body.append(_text(left - 6, yy + 4, f"{yv:.1f}", anchor="end"))
    ticks = sorted({k for c in curves for k in c.ks})
    if len(ticks) > 13:
        keep = max(1, len(ticks) // 12)
        ticks = [k for i, k in enumerate(ticks) if i % keep == 0 or k == x_max]
    for k in ticks:
        body.append(_text(px(k), top + plot_h + 14, k, anchor="middle"))
    body.append(_text(left + plot_w / 2, height - 6, "heads pruned (k)",
                      anchor="middle"))

    for ci, curve in enumerate(curves):
        color = PALETTE[ci % len(PALETTE)]
        pts = " ".join(f"{_f(px(k))},{_f(py(b))}" for k, b in curve.points)
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5"/>')
        for k, b in curve.points:
            body.append(f'<circle cx="{_f(px(k))}" cy="{_f(py(b))}" r="2.5" '
                        f'fill="{color}"/>')
        if fits is not None and fits[ci] is not None:
            fit = fits[ci]
            lo, hi = fit.x_range
            xs = [lo + (hi - lo) * i / 99 for i in range(100)]
            fp = " ".join(f"{_f(px(x))},{_f(py(float(y)))}"
                          for x, y in zip(xs, fit.evaluate(xs)))
            body.append(f'<polyline points="{fp}" fill="none" stroke="{color}" '
                        f'stroke-width="1" stroke-dasharray="4 3"/>')
        label = f"{curve.method} {curve.pair}"
        ly = top + 14 + 14 * ci
        body.append(f'<rect x="{left + plot_w - 130}" y="{ly - 8}" width="10" '
                    f'height="10" fill="{color}"/>')
        body.append(_text(left + plot_w - 116, ly, label))
    return _doc(width, height, body)


# ---------------------------------------------------------------------------
# bar charts
# ---------------------------------------------------------------------------


def bar_chart_svg(labels: Sequence[str], values: Sequence[float],
                  title: str = "", y_label: str = "rank std",
                  width: int = 640, height: int = 320) -> str:
    if len(labels) != len(values) or not labels:
        raise ValueError("labels and values must align and be non-empty")
    left, right, top, bottom = 52, 14, 30, 58
    plot_w, plot_h = width - left - right, height - top - bottom
    v_max = max(max(values), 1e-9) * 1.1
    slot = plot_w / len(values)
    bar_w = slot * 0.7

    body = [_text(left, 18, title or y_label, cls="title"),
            f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
            f'y2="{top + plot_h}" stroke="#888"/>']
    for i in range(5):
        yv = v_max * i / 4
        yy = top + plot_h * (1.0 - yv / v_max)
        body.append(f'<line x1="{left}" y1="{_f(yy)}" x2="{left + plot_w}" '
                    f'y2="{_f(yy)}" stroke="#ddd"/>')
        body.append(_text(left - 6, yy + 4, f"{yv:.2f}", anchor="end"))
    for i, (label, v) in enumerate(zip(labels, values)):
        x = left + slot * i + (slot - bar_w) / 2
        h = plot_h * v / v_max
        body.append(f'<rect class="bar" x="{_f(x)}" y="{_f(top + plot_h - h)}" '
                    f'width="{_f(bar_w)}" height="{_f(h)}" fill="{PALETTE[0]}"/>')
        body.append(_text(x + bar_w / 2, top + plot_h + 12, label,
                          anchor="end", rotate=-45))
    body.append(_text(left + plot_w / 2, height - 4, y_label, anchor="middle"))
    return _doc(width, height, body)
