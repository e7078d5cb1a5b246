"""Deterministic SVG renderings of benchmark CSVs.

One series per coder, particle count on a log2 x-axis, and a dashed
horizontal line at the oracle entropy.  The output is built by plain string
formatting so identical CSV input yields a byte-identical file.
"""

from __future__ import annotations

import csv
import math

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 150, 36, 48

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")

_Y_LABELS = {
    "net_bps": "net bits/dim",
    "total_bps": "total bits/dim",
    "total_first": "total bits after first symbol",
    "ideal_bps": "ideal bits/dim",
}


class PlotDataError(ValueError):
    """CSV malformed for plotting; message carries the 1-based line number."""


def _parse(csv_path: str, y_field: str):
    series: dict[str, list[tuple[int, float]]] = {}
    order: list[str] = []
    entropy = None
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "coder" not in reader.fieldnames:
            raise PlotDataError("line 1: missing CSV header with 'coder' column")
        if y_field not in reader.fieldnames:
            raise PlotDataError(f"line 1: no column {y_field!r} in header")
        for lineno, row in enumerate(reader, start=2):
            try:
                coder = row["coder"]
                n = int(row["N"])
                raw = row[y_field]
                if raw == "":
                    continue
                y = float(raw)
                entropy = float(row["entropy"])
            except (KeyError, TypeError, ValueError) as exc:
                raise PlotDataError(f"line {lineno}: {exc}") from exc
            if coder not in series:
                series[coder] = []
                order.append(coder)
            series[coder].append((n, y))
    return order, series, entropy


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    mag = 10.0 ** math.floor(math.log10(step))
    for mult in (1, 2, 2.5, 5, 10):
        if mag * mult >= step:
            step = mag * mult
            break
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 0.5 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def emit_plot(csv_path: str, out_path: str, y_field: str = "net_bps",
              title: str = "") -> None:
    """Render one CSV column against N into a deterministic SVG file."""
    order, series, entropy = _parse(csv_path, y_field)

    xs = sorted({n for pts in series.values() for n, _ in pts}) or [1]
    ys = [y for pts in series.values() for _, y in pts] or [0.0]
    if entropy is not None and y_field in ("net_bps", "ideal_bps"):
        ys.append(entropy)
    x_lo, x_hi = math.log2(xs[0]), math.log2(xs[-1]) if xs[-1] > xs[0] else math.log2(xs[0]) + 1
    y_ticks = _ticks(min(ys), max(ys))
    y_lo, y_hi = y_ticks[0], y_ticks[-1]

    inner_w = WIDTH - MARGIN_L - MARGIN_R
    inner_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(n: int) -> float:
        t = 0.5 if x_hi == x_lo else (math.log2(n) - x_lo) / (x_hi - x_lo)
        return MARGIN_L + t * inner_w

    def py(y: float) -> float:
        t = (y - y_lo) / (y_hi - y_lo)
        return MARGIN_T + (1.0 - t) * inner_h

    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
               f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" '
                   f'font-size="14" font-family="sans-serif">{title}</text>')

    ax_b, ax_l = MARGIN_T + inner_h, MARGIN_L
    out.append(f'<line x1="{ax_l}" y1="{ax_b}" x2="{ax_l + inner_w}" y2="{ax_b}" '
               'stroke="black"/>')
    out.append(f'<line x1="{ax_l}" y1="{MARGIN_T}" x2="{ax_l}" y2="{ax_b}" '
               'stroke="black"/>')
    for n in xs:
        x = px(n)
        out.append(f'<line x1="{x:.2f}" y1="{ax_b}" x2="{x:.2f}" y2="{ax_b + 4}" '
                   'stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{ax_b + 16}" text-anchor="middle" '
                   f'font-size="10" font-family="sans-serif">{n}</text>')
    for tick in y_ticks:
        y = py(tick)
        out.append(f'<line x1="{ax_l - 4}" y1="{y:.2f}" x2="{ax_l}" y2="{y:.2f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{ax_l - 8}" y="{y + 3:.2f}" text-anchor="end" '
                   f'font-size="10" font-family="sans-serif">{tick:g}</text>')
    out.append(f'<text x="{ax_l + inner_w / 2:.1f}" y="{HEIGHT - 8}" '
               'text-anchor="middle" font-size="11" font-family="sans-serif">'
               'particles N (log scale)</text>')
    y_label = _Y_LABELS.get(y_field, y_field)
    out.append(f'<text x="16" y="{MARGIN_T + inner_h / 2:.1f}" font-size="11" '
               f'font-family="sans-serif" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN_T + inner_h / 2:.1f})">{y_label}</text>')

    if entropy is not None and y_lo <= entropy <= y_hi:
        y = py(entropy)
        out.append(f'<line x1="{ax_l}" y1="{y:.2f}" x2="{ax_l + inner_w}" '
                   f'y2="{y:.2f}" stroke="black" stroke-dasharray="5,4"/>')
        out.append(f'<text x="{ax_l + inner_w - 4}" y="{y - 4:.2f}" text-anchor="end" '
                   f'font-size="10" font-family="sans-serif">entropy</text>')

    for idx, coder in enumerate(order):
        color = PALETTE[idx % len(PALETTE)]
        pts = series[coder]
        coords = " ".join(f"{px(n):.2f},{py(y):.2f}" for n, y in pts)
        if len(pts) > 1:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                       'stroke-width="1.5"/>')
        for n, y in pts:
            out.append(f'<circle cx="{px(n):.2f}" cy="{py(y):.2f}" r="3" '
                       f'fill="{color}"/>')
        ly = MARGIN_T + 14 + 16 * idx
        lx = MARGIN_L + inner_w + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" font-size="11" '
                   f'font-family="sans-serif">{coder}</text>')

    out.append("</svg>")
    with open(out_path, "w") as fh:
        fh.write("\n".join(out) + "\n")
