"""Small 2D geometry kit: hulls, minimum-area rectangles, convex clipping."""

from __future__ import annotations

import math

import numpy as np


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise, no repeated last point."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    # unique() sorts lexicographically already
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def min_area_rect(points: np.ndarray) -> tuple[float, float, float, float, float]:
    """Minimum-area enclosing rectangle via rotating calipers over the hull.

    Returns (cx, cy, length, width, yaw) with length >= width and yaw the
    direction of the long side, normalized to (-pi/2, pi/2]. Degenerate
    (collinear) input yields a zero-width rectangle.
    """
    hull = convex_hull(points)
    if len(hull) == 0:
        raise ValueError("no points")
    if len(hull) == 1:
        return float(hull[0, 0]), float(hull[0, 1]), 0.0, 0.0, 0.0
    if len(hull) == 2:
        d = hull[1] - hull[0]
        c = (hull[0] + hull[1]) / 2
        return float(c[0]), float(c[1]), float(np.hypot(*d)), 0.0, _norm_half(math.atan2(d[1], d[0]))

    edges = np.roll(hull, -1, axis=0) - hull
    best = None
    for ex, ey in edges:
        n = math.hypot(ex, ey)
        if n == 0:
            continue
        dx, dy = ex / n, ey / n
        proj_d = hull[:, 0] * dx + hull[:, 1] * dy
        proj_n = -hull[:, 0] * dy + hull[:, 1] * dx
        d0, d1 = proj_d.min(), proj_d.max()
        n0, n1 = proj_n.min(), proj_n.max()
        area = (d1 - d0) * (n1 - n0)
        if best is None or area < best[0]:
            best = (area, dx, dy, d0, d1, n0, n1)

    _, dx, dy, d0, d1, n0, n1 = best
    md, mn = (d0 + d1) / 2, (n0 + n1) / 2
    cx = md * dx - mn * dy
    cy = md * dy + mn * dx
    le, wn = d1 - d0, n1 - n0          # extent along edge dir / its normal
    if le >= wn:
        length, width, ang = le, wn, math.atan2(dy, dx)
    else:
        length, width, ang = wn, le, math.atan2(dx, -dy)
    return float(cx), float(cy), float(length), float(width), _norm_half(ang)


def _norm_half(yaw: float) -> float:
    """Wrap an angle into (-pi/2, pi/2] (boxes are symmetric under pi)."""
    while yaw <= -math.pi / 2:
        yaw += math.pi
    while yaw > math.pi / 2:
        yaw -= math.pi
    return yaw


def rect_corners(cx: float, cy: float, length: float, width: float, yaw: float) -> np.ndarray:
    """CCW corners of an oriented rectangle, (4, 2)."""
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = length / 2, width / 2
    local = np.array([(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + (cx, cy)


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a simple polygon (positive for CCW order)."""
    p = np.asarray(poly, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject by a convex CCW clipper."""
    out = [tuple(p) for p in np.asarray(subject, dtype=np.float64)]
    clip = np.asarray(clipper, dtype=np.float64)
    eps = 1e-12
    for i in range(len(clip)):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % len(clip)]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def inside(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0]) >= -eps

        def intersect(p, q):
            # segment pq with the infinite line through a,b:
            # cross(e, p + t(q-p) - a) = 0  =>  t = cross(e, a-p)/cross(e, q-p)
            dpx, dpy = q[0] - p[0], q[1] - p[1]
            denom = ex * dpy - ey * dpx
            if denom == 0:
                return q
            t = (ex * (a[1] - p[1]) - ey * (a[0] - p[0])) / denom
            return (p[0] + t * dpx, p[1] + t * dpy)

        nxt = []
        for j in range(len(out)):
            p, q = out[j], out[(j + 1) % len(out)]
            pin, qin = inside(p), inside(q)
            if pin:
                nxt.append(p)
                if not qin:
                    nxt.append(intersect(p, q))
            elif qin:
                nxt.append(intersect(p, q))
        out = nxt
    return np.array(out) if out else np.empty((0, 2))


def intersection_area(poly_a: np.ndarray, poly_b: np.ndarray) -> float:
    return abs(polygon_area(clip_convex(poly_a, poly_b)))


def rect_iou(a, b) -> float:
    """IoU of axis-aligned rectangles given as (x0, y0, x1, y1)."""
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = ix1 - ix0, iy1 - iy0
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0
