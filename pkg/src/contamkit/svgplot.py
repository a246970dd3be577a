"""Minimal deterministic SVG rendering of ConTAM curves.

Hand-rolled rather than a plotting library so output bytes are a pure
function of the curve data (the curve CSVs stay the contractual artifact;
plots are a flag-gated convenience).
"""

from __future__ import annotations

from pathlib import Path

from .epganalysis import ContamCurve, OptimalThreshold

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 46


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".") or "0"


def render_contam_curve(curve: ContamCurve, optimal: OptimalThreshold | None = None) -> str:
    """EPG against percent-marked-contaminated, dotted line at the chosen threshold."""
    pts = curve.points
    xs = [p.pct_contaminated for p in pts]
    ys = [p.epg for p in pts]
    x_max = max(xs + [1e-9])
    y_lo = min(ys + [0.0])
    y_hi = max(ys + [0.0])
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pw = _W - _ML - _MR
    ph = _H - _MT - _MB

    def sx(x: float) -> float:
        return _ML + pw * (x / x_max)

    def sy(y: float) -> float:
        return _MT + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="16" text-anchor="middle">'
        f"{curve.benchmark_id} / {curve.model_id} / {curve.params.label()}</text>",
    ]
    # axes
    parts.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>'
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x_max * frac
        yv = y_lo + (y_hi - y_lo) * frac
        parts.append(
            f'<text x="{sx(xv):.1f}" y="{_H - _MB + 16}" text-anchor="middle">{_fmt(xv)}</text>'
            f'<text x="{_ML - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{_fmt(yv)}</text>'
        )
    parts.append(
        f'<text x="{_ML + pw / 2:.1f}" y="{_H - 10}" text-anchor="middle">% marked contaminated</text>'
        f'<text x="14" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_MT + ph / 2:.1f})">EPG</text>'
    )
    if sy(0.0) <= _H - _MB:
        parts.append(
            f'<line x1="{_ML}" y1="{sy(0.0):.1f}" x2="{_W - _MR}" y2="{sy(0.0):.1f}" '
            f'stroke="#cccccc" stroke-width="0.8"/>'
        )
    if optimal is not None:
        x_opt = sx(optimal.point.pct_contaminated)
        parts.append(
            f'<line x1="{x_opt:.1f}" y1="{_MT}" x2="{x_opt:.1f}" y2="{_H - _MB}" '
            f'stroke="black" stroke-dasharray="3,3"/>'
            f'<text x="{x_opt + 4:.1f}" y="{_MT + 12}">t*={optimal.t_star!r} z={optimal.z_star:.2f}</text>'
        )
    if pts:
        poly = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{poly}" fill="none" stroke="#c0392b" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.4" fill="#c0392b"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_contam_curve_svg(
    path: str | Path, curve: ContamCurve, optimal: OptimalThreshold | None = None
) -> None:
    Path(path).write_text(render_contam_curve(curve, optimal), encoding="utf-8")
