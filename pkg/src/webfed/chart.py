"""Deterministic SVG line chart of accuracy-vs-round series.

Hand-rolled markup (no plotting dependency) so identical inputs yield
byte-identical files.  Data series are the only <polyline> elements;
axes and ticks are <line>s, which keeps golden-file assertions simple.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence, Union

from .errors import RenderError

_WIDTH, _HEIGHT = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 62, 20, 20, 48
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def epsilon_label(value: float) -> str:
    if math.isinf(value):
        return "noise-free"
    return f"ε={value:g}"


def _series_key(label: str) -> tuple:
    # numeric epsilons ascending, noise-free (and other labels) last
    if label.startswith("ε="):
        return (0, float(label[2:]))
    return (1, math.inf, label)


def _read_series(csv_paths: Sequence[Union[str, Path]]) -> dict[str, dict[int, float]]:
    acc: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for path in csv_paths:
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise RenderError(f"{path} holds no data rows")
        for row in rows:
            try:
                round_index = int(row["round"])
                accuracy = float(row["accuracy"])
            except (KeyError, TypeError, ValueError) as exc:
                raise RenderError(f"{path} lacks usable round/accuracy columns: {exc}") from None
            if "epsilon" in row and row["epsilon"] not in (None, ""):
                label = epsilon_label(float(row["epsilon"]))
            else:
                label = path.stem
            acc[label][round_index].append(accuracy)
    return {
        label: {r: sum(vals) / len(vals) for r, vals in points.items()}
        for label, points in acc.items()
    }


def _x(round_index: int, max_round: int) -> float:
    span = _WIDTH - _MARGIN_L - _MARGIN_R
    return _MARGIN_L + span * (round_index / max(max_round, 1))


def _y(accuracy: float) -> float:
    span = _HEIGHT - _MARGIN_T - _MARGIN_B
    return _MARGIN_T + span * (1.0 - accuracy)


def render_chart(csv_paths: Sequence[Union[str, Path]], out_path: Union[str, Path]) -> Path:
    """Render one accuracy line per epsilon series; returns the SVG path."""
    if not csv_paths:
        raise RenderError("no CSV files given")
    series = _read_series(csv_paths)
    max_round = max(r for points in series.values() for r in points)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    x0, y0 = _MARGIN_L, _HEIGHT - _MARGIN_B
    x1, y1 = _WIDTH - _MARGIN_R, _MARGIN_T
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')

    for frac in range(0, 11, 2):
        acc = frac / 10
        y = _y(acc)
        parts.append(f'<line x1="{x0 - 4}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{y + 4:.2f}" text-anchor="end">{acc:.1f}</text>'
        )
    n_ticks = min(max_round, 10)
    for i in range(n_ticks + 1):
        r = round(i * max_round / max(n_ticks, 1))
        x = _x(r, max_round)
        parts.append(f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{y0 + 18}" text-anchor="middle">{r}</text>')
    parts.append(
        f'<text x="{(x0 + x1) / 2:.2f}" y="{_HEIGHT - 10}" text-anchor="middle">round</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.2f})">accuracy</text>'
    )

    labels = sorted(series, key=_series_key)
    for i, label in enumerate(labels):
        color = _PALETTE[i % len(_PALETTE)]
        points = sorted(series[label].items())
        coords = " ".join(f"{_x(r, max_round):.2f},{_y(a):.2f}" for r, a in points)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _MARGIN_T + 8 + 18 * i
        parts.append(
            f'<rect x="{x0 + 10}" y="{ly}" width="14" height="4" fill="{color}"/>'
        )
        parts.append(f'<text x="{x0 + 30}" y="{ly + 6}">{label}</text>')

    parts.append("</svg>")
    out = Path(out_path)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out
