"""SVG plots: trajectory overview and per-track kinematics.

Hand-assembled SVG keeps the output dependency-free and byte-stable; every
number is formatted through one helper so reruns produce identical files.
"""

from __future__ import annotations

from pathlib import Path

from .bev import BevConfig

CLASS_COLORS = {
    "Vehicle": "#1f77b4",
    "Pedestrian": "#d62728",
}
_FALLBACK_COLOR = "#7f7f7f"
_FONT = 'font-family="Helvetica,Arial,sans-serif"'


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def svg_document(width: float, height: float, body: list[str]) -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" '
        'fill="white"/>',
    ]
    parts.extend(body)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _polyline(points: list[tuple[float, float]], color: str,
              stroke_width: float = 1.5) -> str:
    coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
    return (f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_fmt(stroke_width)}"/>')


def _text(x: float, y: float, s: str, size: int = 11,
          anchor: str = "start", color: str = "#333333") -> str:
    return (f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'text-anchor="{anchor}" fill="{color}" {_FONT}>{_esc(s)}</text>')


def plot_trajectories(track_records, bev: BevConfig, path) -> None:
    """World-frame polylines per track, colored by class, y axis up."""
    margin = 50.0
    plot_w = 720.0
    x0, x1 = bev.x_range
    y0, y1 = bev.y_range
    plot_h = plot_w * (y1 - y0) / (x1 - x0)
    width = plot_w + 2 * margin
    height = plot_h + 2 * margin

    def to_svg(x: float, y: float) -> tuple[float, float]:
        return (
            margin + (x - x0) / (x1 - x0) * plot_w,
            margin + (y1 - y) / (y1 - y0) * plot_h,
        )

    body = [
        f'<rect x="{_fmt(margin)}" y="{_fmt(margin)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="#999999"/>',
        _text(width / 2, margin - 14, "Track trajectories (m)", 14, "middle"),
        _text(margin, height - margin + 16, _fmt(x0), 10),
        _text(margin + plot_w, height - margin + 16, _fmt(x1), 10, "end"),
        _text(margin - 6, margin + 10, _fmt(y1), 10, "end"),
        _text(margin - 6, margin + plot_h, _fmt(y0), 10, "end"),
    ]
    if not track_records:
        body.append(_text(width / 2, height / 2, "no tracks", 14, "middle"))
    for tr in track_records:
        color = CLASS_COLORS.get(tr.label, _FALLBACK_COLOR)
        pts = [to_svg(s.x, s.y) for s in tr.states]
        if len(pts) >= 2:
            body.append(_polyline(pts, color))
        fx, fy = pts[-1]
        body.append(f'<circle cx="{_fmt(fx)}" cy="{_fmt(fy)}" r="2.5" '
                    f'fill="{color}"/>')
        body.append(_text(fx + 4, fy - 4, f"#{tr.track_id}", 10, "start", color))
    legend_y = 20.0
    for i, (label, color) in enumerate(sorted(CLASS_COLORS.items())):
        lx = margin + i * 130.0
        body.append(f'<rect x="{_fmt(lx)}" y="{_fmt(legend_y - 9)}" '
                    f'width="10" height="10" fill="{color}"/>')
        body.append(_text(lx + 16, legend_y, label, 11))
    Path(path).write_text(svg_document(width, height, body))


def _series_panel(fids, values, top: float, title: str,
                  color: str, margin: float, plot_w: float,
                  plot_h: float) -> list[str]:
    lo = min(values)
    hi = max(values)
    if hi - lo < 1e-9:
        pad = max(abs(hi), 1.0) * 0.1
        lo -= pad
        hi += pad
    f0, f1 = fids[0], fids[-1]
    span_f = max(f1 - f0, 1)

    def to_svg(f, v):
        return (
            margin + (f - f0) / span_f * plot_w,
            top + (hi - v) / (hi - lo) * plot_h,
        )

    body = [
        f'<rect x="{_fmt(margin)}" y="{_fmt(top)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="#999999"/>',
        _text(margin, top - 6, title, 12),
        _text(margin - 6, top + 10, _fmt(hi), 10, "end"),
        _text(margin - 6, top + plot_h, _fmt(lo), 10, "end"),
        _text(margin, top + plot_h + 14, str(f0), 10),
        _text(margin + plot_w, top + plot_h + 14, str(f1), 10, "end"),
    ]
    pts = [to_svg(f, v) for f, v in zip(fids, values)]
    if len(pts) >= 2:
        body.append(_polyline(pts, color))
    else:
        x, y = pts[0]
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2" '
                    f'fill="{color}"/>')
    return body


def plot_kinematics(track_id: int, label: str, fids: list[int],
                    speeds_ms: list[float], accels_ms2: list[float],
                    path) -> None:
    """Two stacked panels: speed (m/s) and acceleration (m/s^2) vs frame."""
    margin = 50.0
    plot_w = 640.0
    plot_h = 150.0
    gap = 50.0
    width = plot_w + 2 * margin
    height = 2 * plot_h + gap + 2 * margin
    body = [
        _text(width / 2, 22, f"Track {track_id} ({label})", 14, "middle"),
    ]
    body += _series_panel(fids, speeds_ms, margin, "speed (m/s)",
                          "#1f77b4", margin, plot_w, plot_h)
    body += _series_panel(fids, accels_ms2, margin + plot_h + gap,
                          "acceleration (m/s^2)", "#ff7f0e",
                          margin, plot_w, plot_h)
    Path(path).write_text(svg_document(width, height, body))
