"""Minimal deterministic SVG line plots for sweep reports."""

from __future__ import annotations


def line_plot_svg(xs, ys, title: str, xlabel: str, ylabel: str,
                  width: int = 480, height: int = 320) -> str:
    if len(xs) != len(ys) or not xs:
        raise ValueError("line_plot_svg needs equal-length, non-empty series")
    ml, mr, mt, mb = 56, 16, 28, 40
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.06 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + (1.0 - (y - y0) / (y1 - y0)) * ph

    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    marks = "".join(
        f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#cc3311"/>'
        for x, y in zip(xs, ys))
    xticks = "".join(
        f'<text x="{sx(x):.2f}" y="{height - mb + 16}" font-size="10" '
        f'text-anchor="middle">{x:g}</text>' for x in xs)
    yticks = "".join(
        f'<text x="{ml - 6}" y="{sy(v):.2f}" font-size="10" '
        f'text-anchor="end" dominant-baseline="middle">{v:.3g}</text>'
        for v in (y0 + pad, (y0 + y1) / 2, y1 - pad))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f'<text x="{width / 2}" y="18" font-size="13" text-anchor="middle">{title}</text>'
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>'
        f'<polyline points="{pts}" fill="none" stroke="#0077bb" stroke-width="2"/>'
        f"{marks}{xticks}{yticks}"
        f'<text x="{ml + pw / 2}" y="{height - 8}" font-size="11" '
        f'text-anchor="middle">{xlabel}</text>'
        f'<text x="14" y="{mt + ph / 2}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 14 {mt + ph / 2})">{ylabel}</text>'
        "</svg>"
    )
