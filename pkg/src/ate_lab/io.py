"""CSV and SVG writers with byte-stable formatting."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape


def fmt(value) -> str:
    """17 significant digits for floats (round-trip exact); empty for NaN/None."""
    if value is None:
        return ""
    if isinstance(value, (bool,)):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return ""
    return format(value, ".17g")


def csv_text(header: Sequence[str], rows: Iterable[Sequence], footer: Sequence[str] = ()) -> str:
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else fmt(v) for v in row) for row in rows]
    lines += list(footer)
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows, footer=()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(csv_text(header, rows, footer))
    return path


def curve_svg(thetas, values, title: str = "", width: int = 800, height: int = 500) -> str:
    """A single-polyline plot of ``values`` against theta on ``[0, 2 pi)``.

    Missing (NaN) values are skipped.  Ticks every pi/4 on the theta axis and
    every 0.25 on the value axis, which spans ``[min(0, lo), max(1, hi)]``.
    """
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    pts = [(float(t), float(v)) for t, v in zip(thetas, values) if math.isfinite(v)]
    lo = min([0.0] + [v for _, v in pts])
    hi = max([1.0] + [v for _, v in pts])

    def sx(t):
        return left + pw * t / (2 * math.pi)

    def sy(v):
        return top + ph * (hi - v) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    labels = ["0", "π/4", "π/2", "3π/4", "π", "5π/4", "3π/2", "7π/4", "2π"]
    for k, lab in enumerate(labels):
        x = sx(k * math.pi / 4)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 6}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 22}" text-anchor="middle" font-size="12">{lab}</text>')
    v = math.ceil(lo * 4) / 4
    while v <= hi + 1e-12:
        y = sy(v)
        out.append(f'<line x1="{left - 6}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 10}" y="{y + 4:.2f}" text-anchor="end" font-size="12">{v:g}</text>')
        v += 0.25
    coords = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in pts)
    out.append(f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{coords}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
