"""Lift 2D segments to z-rotated 3D cuboids.

Footprint comes from the min-area rectangle around the mask's world cells,
height from a high percentile of in-footprint point z minus the local ground
elevation, plus a small offset for the unseen roofline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bev import BevConfig
from .errors import EmptyMask, NonPositiveDim, TooFewPoints, UnknownGround
from .frames import Frame
from .geom import min_area_rect, rect_corners, _norm_half
from .groundmap import GroundHeightMap

_CELL_CORNERS = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


@dataclass(frozen=True)
class HeightParams:
    percentile: float = 95.0
    offset: float = 0.10
    min_points: int = 5

    def __post_init__(self):
        if not 0.0 < self.percentile <= 100.0:
            raise ValueError("percentile must be in (0, 100]")
        if self.offset < 0 or self.min_points < 1:
            raise ValueError("offset >= 0 and min_points >= 1 required")


@dataclass(frozen=True)
class Footprint:
    """Oriented BEV rectangle: center (m), length >= width (m), yaw (rad)."""

    cx: float
    cy: float
    length: float
    width: float
    yaw: float

    def corners(self) -> np.ndarray:
        return rect_corners(self.cx, self.cy, self.length, self.width, self.yaw)


@dataclass(frozen=True)
class Box3D:
    """z-rotated cuboid: center and extents in meters, yaw in (-pi/2, pi/2]."""

    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float

    def __post_init__(self):
        if min(self.dims) <= 0:
            raise NonPositiveDim(f"dims must be positive, got {self.dims}")
        object.__setattr__(self, "yaw", _norm_half(self.yaw))

    @property
    def z_interval(self) -> tuple[float, float]:
        z, zl = self.center[2], self.dims[2]
        return (z - zl / 2.0, z + zl / 2.0)

    @property
    def volume(self) -> float:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def bev_area(self) -> float:
        return self.dims[0] * self.dims[1]

    def corners_bev(self) -> np.ndarray:
        return rect_corners(self.center[0], self.center[1],
                            self.dims[0], self.dims[1], self.yaw)

    def to_tuple9(self) -> list[float]:
        (x, y, z), (xl, yl, zl) = self.center, self.dims
        return [x, y, z, xl, yl, zl, 0.0, 0.0, self.yaw]

    @classmethod
    def from_tuple9(cls, values) -> "Box3D":
        vals = [float(v) for v in values]
        if len(vals) != 9:
            raise ValueError(f"need 9 values, got {len(vals)}")
        return cls(center=(vals[0], vals[1], vals[2]),
                   dims=(vals[3], vals[4], vals[5]), yaw=vals[8])


def oriented_footprint(
    pixels: np.ndarray, cfg: BevConfig, axis_aligned: bool = False
) -> Footprint:
    """Min-area oriented rectangle over a mask's world cells.

    pixels is (N, 2) of (u, v). Each cell contributes its full res x res
    extent, so a single pixel yields a res-square footprint, not a point.
    """
    px = np.asarray(pixels)
    if px.size == 0:
        raise EmptyMask("footprint of an empty mask")
    cx = cfg.x_range[0] + (px[:, 0] + 0.5) * cfg.resolution
    cy = cfg.y_range[1] - (px[:, 1] + 0.5) * cfg.resolution
    centers = np.column_stack([cx, cy])
    pts = (centers[:, None, :] + _CELL_CORNERS[None, :, :] * cfg.resolution).reshape(-1, 2)

    if axis_aligned:
        x0, y0 = pts.min(axis=0)
        x1, y1 = pts.max(axis=0)
        dx, dy = x1 - x0, y1 - y0
        length, width = max(dx, dy), min(dx, dy)
        yaw = 0.0 if dx >= dy else math.pi / 2
        return Footprint((x0 + x1) / 2, (y0 + y1) / 2, length, width, yaw)

    ctr_x, ctr_y, length, width, yaw = min_area_rect(pts)
    return Footprint(ctr_x, ctr_y, length, width, yaw)


def object_height(
    frame: Frame,
    footprint: Footprint,
    ground: GroundHeightMap,
    hp: HeightParams | None = None,
) -> float:
    """Above-ground height from in-footprint point elevations."""
    hp = hp or HeightParams()
    gz = ground.query_height(footprint.cx, footprint.cy)
    if gz is None:
        raise UnknownGround(
            f"no ground height at ({footprint.cx:.2f}, {footprint.cy:.2f})"
        )
    x = frame.xyz[:, 0] - footprint.cx
    y = frame.xyz[:, 1] - footprint.cy
    c, s = math.cos(footprint.yaw), math.sin(footprint.yaw)
    local_x = x * c + y * s
    local_y = -x * s + y * c
    inside = (np.abs(local_x) <= footprint.length / 2.0) & (
        np.abs(local_y) <= footprint.width / 2.0
    )
    z = frame.xyz[inside, 2]
    if z.size < hp.min_points:
        raise TooFewPoints(f"{z.size} points in footprint, need {hp.min_points}")
    return float(np.percentile(z, hp.percentile)) - gz + hp.offset


def build_box(footprint: Footprint, height: float, ground_z: float) -> Box3D:
    if height <= 0:
        raise NonPositiveDim(f"height must be positive, got {height}")
    return Box3D(
        center=(footprint.cx, footprint.cy, ground_z + height / 2.0),
        dims=(footprint.length, footprint.width, height),
        yaw=footprint.yaw,
    )


def median_smooth_dims(
    dims_seq: list[tuple[float, float, float]], window: int = 5
) -> list[tuple[float, float, float]]:
    """Centered running median per component; the window shrinks at the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    arr = np.asarray(dims_seq, dtype=float)
    n = len(arr)
    half = window // 2
    out = []
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        out.append(tuple(np.median(arr[lo:hi], axis=0)))
    return out
