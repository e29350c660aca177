"""Deterministic static SVG rendering of trajectory CSV files.

Hand-rolled on purpose: the output must be byte-stable for identical
inputs, which rules out plotting stacks that embed generated ids or
timestamps.  Scalar columns become one shared line chart; column families
named ``label_001, label_002, ...`` (grid components) become heatmaps of
value over (time, cell).
"""

from __future__ import annotations

import csv
import re

import numpy as np

from .errors import DomainError

__all__ = ["read_trajectory_csv", "render_svg"]

_FAMILY = re.compile(r"^(.*)_(\d{3,})$")

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

# five-anchor color ramp for heatmaps (dark violet -> yellow)
_RAMP = (
    (68, 1, 84),
    (59, 82, 139),
    (33, 145, 140),
    (94, 201, 98),
    (253, 231, 37),
)


def read_trajectory_csv(path):
    """Parse a trajectory CSV: returns (times, column labels, value matrix)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError("empty CSV: no header row") from None
        rows = [row for row in reader if row]
    if not header or header[0] != "t" or len(header) < 2:
        raise DomainError("malformed CSV: expected header 't,<labels...>'")
    if not rows:
        raise DomainError("malformed CSV: no data rows")
    try:
        data = np.array([[float(x) for x in row] for row in rows])
    except ValueError as exc:
        raise DomainError(f"malformed CSV: {exc}") from None
    if data.shape[1] != len(header):
        raise DomainError("malformed CSV: ragged rows")
    return data[:, 0], header[1:], data[:, 1:]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _ramp_color(v: float) -> str:
    v = min(max(v, 0.0), 1.0)
    pos = v * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    frac = pos - i
    rgb = tuple(
        int(round(a + frac * (b - a))) for a, b in zip(_RAMP[i], _RAMP[i + 1])
    )
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def _group_columns(labels):
    """Split columns into scalar lines and grid families (>= 4 members)."""
    families: dict = {}
    order = []
    for idx, lab in enumerate(labels):
        m = _FAMILY.match(lab)
        key = m.group(1) if m else None
        if key not in families:
            families[key] = []
            order.append(key)
        families[key].append(idx)
    lines, heats = [], []
    for key in order:
        idxs = families[key]
        if key is not None and len(idxs) >= 4:
            heats.append((key, idxs))
        else:
            lines.extend(idxs)
    return lines, heats


def _line_panel(out, x0, y0, w, h, times, labels, values, line_idx):
    tmin, tmax = float(times.min()), float(times.max())
    tspan = tmax - tmin or 1.0
    vals = values[:, line_idx]
    vmin, vmax = float(vals.min()), float(vals.max())
    pad = 0.05 * ((vmax - vmin) or 1.0)
    vmin, vmax = vmin - pad, vmax + pad
    vspan = vmax - vmin

    out.append(
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444" stroke-width="1"/>'
    )
    for k, idx in enumerate(line_idx):
        xs = x0 + (times - tmin) / tspan * w
        ys = y0 + h - (values[:, idx] - vmin) / vspan * h
        pts = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in zip(xs, ys))
        color = _PALETTE[k % len(_PALETTE)]
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{x0 + 8 + 90 * k}" y="{y0 + 16}" font-size="12" fill="{color}">{labels[idx]}</text>'
        )
    out.append(
        f'<text x="{x0}" y="{y0 + h + 16}" font-size="11" fill="#222">t = {_fmt(tmin)}</text>'
    )
    out.append(
        f'<text x="{x0 + w - 80}" y="{y0 + h + 16}" font-size="11" fill="#222">t = {_fmt(tmax)}</text>'
    )
    out.append(
        f'<text x="{x0 - 6}" y="{y0 + 12}" font-size="11" fill="#222" text-anchor="end">{_fmt(vmax)}</text>'
    )
    out.append(
        f'<text x="{x0 - 6}" y="{y0 + h}" font-size="11" fill="#222" text-anchor="end">{_fmt(vmin)}</text>'
    )


def _heat_panel(out, x0, y0, w, h, times, name, block):
    # cap the rect count; strided subsampling keeps the rendering stable
    t_stride = max(1, block.shape[0] // 200)
    c_stride = max(1, block.shape[1] // 200)
    sub = block[::t_stride, ::c_stride]
    vmin, vmax = float(sub.min()), float(sub.max())
    vspan = (vmax - vmin) or 1.0
    nt, nc = sub.shape
    cw = w / nt
    ch = h / nc
    for i in range(nt):
        for j in range(nc):
            color = _ramp_color((sub[i, j] - vmin) / vspan)
            out.append(
                f'<rect x="{_fmt(x0 + i * cw)}" y="{_fmt(y0 + h - (j + 1) * ch)}" '
                f'width="{_fmt(cw + 0.5)}" height="{_fmt(ch + 0.5)}" fill="{color}"/>'
            )
    out.append(
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444" stroke-width="1"/>'
    )
    out.append(
        f'<text x="{x0 + 8}" y="{y0 - 6}" font-size="12" fill="#222">{name}(t, cell): '
        f"{_fmt(vmin)} .. {_fmt(vmax)}</text>"
    )
    out.append(
        f'<text x="{x0}" y="{y0 + h + 16}" font-size="11" fill="#222">t = {_fmt(float(times.min()))}</text>'
    )
    out.append(
        f'<text x="{x0 + w - 80}" y="{y0 + h + 16}" font-size="11" fill="#222">t = {_fmt(float(times.max()))}</text>'
    )


def render_svg(csv_path, svg_path) -> None:
    """Render a trajectory CSV to a static SVG (lines and/or heatmaps)."""
    times, labels, values = read_trajectory_csv(csv_path)
    line_idx, heats = _group_columns(labels)

    panel_w, panel_h = 640, 260
    margin_x, margin_y, gap = 70, 40, 50
    n_panels = (1 if line_idx else 0) + len(heats)
    width = panel_w + 2 * margin_x
    height = margin_y + n_panels * (panel_h + gap) + 10

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    y = margin_y
    if line_idx:
        _line_panel(out, margin_x, y, panel_w, panel_h, times, labels, values, line_idx)
        y += panel_h + gap
    for name, idxs in heats:
        _heat_panel(out, margin_x, y, panel_w, panel_h, times, name, values[:, idxs])
        y += panel_h + gap
    out.append("</svg>")
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
