"""Learning-curve figures as hand-written SVG.

Output depends only on the input files, so the same CSVs always give the
same bytes.
"""

from __future__ import annotations

import csv
from collections.abc import Mapping
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .config import load_config
from .errors import ArgumentError, FormatError

PLOT_COLUMNS = ("env_steps", "mean_return")
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=30, bottom=50)


def read_curve(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in PLOT_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise FormatError(f"{path}: missing columns {', '.join(missing)}")
            rows = [(float(r["env_steps"]), float(r["mean_return"])) for r in reader]
    except (OSError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: cannot read metrics ({exc})") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")
    xs, ys = zip(*rows)
    return np.array(xs), np.array(ys)


def _label_for(path: Path) -> str:
    cfg = path.parent / "config.txt"
    if cfg.exists():
        return load_config(cfg).policy.variant
    return path.stem


def group_series(csv_paths) -> dict:
    """Group metric files by variant, read from a sibling ``config.txt``
    when present, otherwise by file stem."""
    groups: dict = {}
    for p in csv_paths:
        p = Path(p)
        groups.setdefault(_label_for(p), []).append(p)
    return groups


def _aggregate(paths):
    curves = [read_curve(p) for p in paths]
    xs = curves[0][0]
    for p, (x, _) in zip(paths[1:], curves[1:]):
        if not np.array_equal(x, xs):
            raise FormatError(f"{p}: env_steps column differs from {paths[0]}")
    ys = np.stack([y for _, y in curves])
    return xs, ys.mean(axis=0), ys.min(axis=0), ys.max(axis=0), len(curves)


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(series: Mapping, title: str = "") -> str:
    """SVG text for ``{label: [csv paths]}``."""
    if not series or not any(series.values()):
        raise ArgumentError("no series to plot")
    data = {label: _aggregate([Path(p) for p in paths]) for label, paths in series.items() if paths}
    all_x = np.concatenate([d[0] for d in data.values()])
    all_y = np.concatenate([np.concatenate([d[2], d[3]]) for d in data.values()])
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    def pts(xs, ys):
        return " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444"/>',
    ]
    for x in _ticks(x0, x1):
        out.append(f'<text x="{sx(x):.2f}" y="{HEIGHT - MARGIN["bottom"] + 15}" '
                   f'text-anchor="middle">{x:.3g}</text>')
    for y in _ticks(y0, y1):
        out.append(f'<line x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" y1="{sy(y):.2f}" '
                   f'y2="{sy(y):.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{sy(y) + 4:.2f}" text-anchor="end">{y:.3g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">'
               'environment steps</text>')
    out.append(f'<text transform="translate(16 {MARGIN["top"] + ph / 2:.2f}) rotate(-90)" '
               'text-anchor="middle">mean eval return</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="18" text-anchor="middle">{escape(title)}</text>')

    for i, (label, (xs, mean, lo, hi, n)) in enumerate(data.items()):
        color = COLORS[i % len(COLORS)]
        if n > 1:
            band = pts(xs, hi) + " " + pts(xs[::-1], lo[::-1])
            out.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{pts(xs, mean)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 10
        out.append(f'<line x1="{lx}" x2="{lx + 20}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(str(label))} (n={n})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_curves(csv_paths, output_path, title: str = "") -> Path:
    """Plot metric CSVs to an SVG file.

    ``csv_paths`` is either a list of files, grouped into series by
    :func:`group_series`, or an explicit ``{label: [paths]}`` mapping.
    Nothing is written if rendering fails.
    """
    series = csv_paths if isinstance(csv_paths, Mapping) else group_series(csv_paths)
    svg = render_svg(series, title)
    output_path = Path(output_path)
    output_path.write_text(svg)
    return output_path
