"""Minimal hand-rolled SVG figures.

Plots are emitted as plain SVG text with fixed-precision coordinates, so a
rerun with the same inputs reproduces the file byte for byte. An optional
generation timestamp is the only nondeterministic element and can be
suppressed.
"""

from __future__ import annotations

from datetime import datetime, timezone
from typing import Sequence

import numpy as np

IND_COLOR = "#1f77b4"
OOD_COLOR = "#d95f02"
SINGLE_COLOR = "#2ca02c"
ENSEMBLE_COLOR = "#9467bd"
LINE_COLOR = "#333333"
FONT = "font-family=\"Helvetica, Arial, sans-serif\""

_VIRIDIS = np.array(
    [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
    dtype=np.float64,
)


def value_color(value: float, lo: float, hi: float) -> str:
    """Map a value to a hex color along a dark-to-bright gradient."""
    if hi <= lo:
        t = 0.5
    else:
        t = min(max((value - lo) / (hi - lo), 0.0), 1.0)
    pos = t * (len(_VIRIDIS) - 1)
    i = min(int(pos), len(_VIRIDIS) - 2)
    frac = pos - i
    rgb = _VIRIDIS[i] * (1 - frac) + _VIRIDIS[i + 1] * frac
    return "#{:02x}{:02x}{:02x}".format(*(int(round(v)) for v in rgb))


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


class Panel:
    """One axes rectangle with data-coordinate drawing helpers."""

    def __init__(
        self,
        x0: float,
        y0: float,
        width: float,
        height: float,
        xlim: tuple[float, float],
        ylim: tuple[float, float],
        title: str = "",
        xlabel: str = "",
        ylabel: str = "",
    ) -> None:
        if not (xlim[1] > xlim[0] and ylim[1] > ylim[0]):
            xlim = (xlim[0], xlim[0] + 1.0) if xlim[1] <= xlim[0] else xlim
            ylim = (ylim[0], ylim[0] + 1.0) if ylim[1] <= ylim[0] else ylim
        self.x0, self.y0, self.width, self.height = x0, y0, width, height
        self.xlim, self.ylim = xlim, ylim
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.elements: list[str] = []

    def px(self, x: float) -> float:
        t = (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0])
        return self.x0 + t * self.width

    def py(self, y: float) -> float:
        t = (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0])
        return self.y0 + self.height - t * self.height

    def _inside(self, x: float, y: float) -> bool:
        return self.xlim[0] <= x <= self.xlim[1] and self.ylim[0] <= y <= self.ylim[1]

    def scatter(self, xs: Sequence[float], ys: Sequence[float], color: str, r: float = 2.0, opacity: float = 0.6) -> None:
        for x, y in zip(xs, ys):
            if not (np.isfinite(x) and np.isfinite(y)) or not self._inside(x, y):
                continue
            self.elements.append(
                f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="{r:g}" '
                f'fill="{color}" fill-opacity="{opacity:g}"/>'
            )

    def colored_scatter(self, xs, ys, values, lo: float, hi: float, r: float = 2.0) -> None:
        for x, y, v in zip(xs, ys, values):
            if not (np.isfinite(x) and np.isfinite(y)) or not self._inside(x, y):
                continue
            self.elements.append(
                f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="{r:g}" '
                f'fill="{value_color(float(v), lo, hi)}" fill-opacity="0.7"/>'
            )

    def line(self, xs: Sequence[float], ys: Sequence[float], color: str, width: float = 1.8, dash: str | None = None) -> None:
        pts = [
            f"{_fmt(self.px(x))},{_fmt(self.py(y))}"
            for x, y in zip(xs, ys)
            if np.isfinite(x) and np.isfinite(y)
        ]
        if len(pts) < 2:
            return
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.elements.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="{width:g}"{dash_attr}/>'
        )

    def band(self, xs, lower, upper, color: str, opacity: float = 0.2) -> None:
        fwd = [f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, upper)]
        back = [f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(reversed(list(xs)), reversed(list(lower)))]
        self.elements.append(
            f'<polygon points="{" ".join(fwd + back)}" fill="{color}" fill-opacity="{opacity:g}" stroke="none"/>'
        )

    def label(self, text: str, x: float, y: float, color: str = LINE_COLOR, size: int = 11, anchor: str = "start") -> None:
        self.elements.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" {FONT} font-size="{size}" '
            f'fill="{color}" text-anchor="{anchor}">{text}</text>'
        )

    def render(self) -> list[str]:
        out = [
            f'<rect x="{_fmt(self.x0)}" y="{_fmt(self.y0)}" width="{_fmt(self.width)}" '
            f'height="{_fmt(self.height)}" fill="white" stroke="{LINE_COLOR}" stroke-width="1"/>'
        ]
        for tx in np.linspace(self.xlim[0], self.xlim[1], 5):
            px = self.px(tx)
            out.append(
                f'<line x1="{_fmt(px)}" y1="{_fmt(self.y0 + self.height)}" x2="{_fmt(px)}" '
                f'y2="{_fmt(self.y0 + self.height + 4)}" stroke="{LINE_COLOR}" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{_fmt(px)}" y="{_fmt(self.y0 + self.height + 16)}" {FONT} '
                f'font-size="10" fill="{LINE_COLOR}" text-anchor="middle">{_tick_label(tx)}</text>'
            )
        for ty in np.linspace(self.ylim[0], self.ylim[1], 5):
            py = self.py(ty)
            out.append(
                f'<line x1="{_fmt(self.x0 - 4)}" y1="{_fmt(py)}" x2="{_fmt(self.x0)}" '
                f'y2="{_fmt(py)}" stroke="{LINE_COLOR}" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{_fmt(self.x0 - 7)}" y="{_fmt(py + 3)}" {FONT} '
                f'font-size="10" fill="{LINE_COLOR}" text-anchor="end">{_tick_label(ty)}</text>'
            )
        if self.title:
            out.append(
                f'<text x="{_fmt(self.x0 + self.width / 2)}" y="{_fmt(self.y0 - 8)}" {FONT} '
                f'font-size="12" font-weight="bold" fill="{LINE_COLOR}" text-anchor="middle">{self.title}</text>'
            )
        if self.xlabel:
            out.append(
                f'<text x="{_fmt(self.x0 + self.width / 2)}" y="{_fmt(self.y0 + self.height + 32)}" {FONT} '
                f'font-size="11" fill="{LINE_COLOR}" text-anchor="middle">{self.xlabel}</text>'
            )
        if self.ylabel:
            cx, cy = self.x0 - 38, self.y0 + self.height / 2
            out.append(
                f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" {FONT} font-size="11" fill="{LINE_COLOR}" '
                f'text-anchor="middle" transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{self.ylabel}</text>'
            )
        out.extend(self.elements)
        return out


def document(width: float, height: float, panels: Sequence[Panel], timestamp: bool = False) -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">'
    ]
    if timestamp:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        parts.append(f"<!-- generated {stamp} -->")
    parts.append(f'<rect x="0" y="0" width="{width:g}" height="{height:g}" fill="white"/>')
    for panel in panels:
        parts.extend(panel.render())
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def padded_limits(values: np.ndarray, frac: float = 0.05) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return (0.0, 1.0)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return (lo - 0.5, hi + 0.5)
    pad = (hi - lo) * frac
    return (lo - pad, hi + pad)
