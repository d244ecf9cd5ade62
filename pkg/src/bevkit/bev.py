"""Birds-eye-view rasterization.

World coordinates are meters in the sensor frame; pixels are (u, v) with u
a column index growing with +x and v a row index growing with -y, so row 0
is the far +y edge. A point maps to u = floor((x - x_min) / res),
v = floor((y_max - y) / res); points exactly on the max boundary clamp into
the last row/column, so the configured ranges are inclusive on all sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutOfGrid
from .frames import Frame


@dataclass(frozen=True)
class BevConfig:
    resolution: float = 0.10          # [m/px]
    x_range: tuple[float, float] = (-40.0, 40.0)
    y_range: tuple[float, float] = (-40.0, 40.0)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ValueError(f"empty range {self.x_range} x {self.y_range}")

    @property
    def width(self) -> int:
        return math.ceil((self.x_range[1] - self.x_range[0]) / self.resolution)

    @property
    def height(self) -> int:
        return math.ceil((self.y_range[1] - self.y_range[0]) / self.resolution)

    def world_to_pixel(self, x, y):
        """Vectorized world->pixel. No range check; see rasterize for gating."""
        u = np.floor((np.asarray(x) - self.x_range[0]) / self.resolution).astype(np.int64)
        v = np.floor((self.y_range[1] - np.asarray(y)) / self.resolution).astype(np.int64)
        return np.minimum(u, self.width - 1), np.minimum(v, self.height - 1)

    def pixel_to_world(self, u: int, v: int) -> tuple[float, float]:
        """Center of cell (u, v) in meters."""
        if not (0 <= u < self.width and 0 <= v < self.height):
            raise OutOfGrid(f"pixel ({u}, {v}) outside {self.width}x{self.height}")
        x = self.x_range[0] + (u + 0.5) * self.resolution
        y = self.y_range[1] - (v + 0.5) * self.resolution
        return x, y

    def pixel_box_to_world_rect(self, u_min: int, v_min: int, u_max: int, v_max: int):
        """Outer world-rect (x0, y0, x1, y1) of a half-open pixel box."""
        if not (0 <= u_min < u_max <= self.width and 0 <= v_min < v_max <= self.height):
            raise OutOfGrid(f"pixel box ({u_min},{v_min},{u_max},{v_max})")
        x0 = self.x_range[0] + u_min * self.resolution
        x1 = self.x_range[0] + u_max * self.resolution
        y1 = self.y_range[1] - v_min * self.resolution
        y0 = self.y_range[1] - v_max * self.resolution
        return x0, y0, x1, y1


@dataclass
class BevImage:
    counts: np.ndarray                # (height, width) int32 points per cell
    config: BevConfig
    frame_id: int = -1

    @property
    def occupancy(self) -> np.ndarray:
        return self.counts > 0


def rasterize(frame: Frame, cfg: BevConfig) -> BevImage:
    """Rasterize a frame; every in-range point increments exactly one cell."""
    x, y = frame.xyz[:, 0], frame.xyz[:, 1]
    keep = (
        (x >= cfg.x_range[0]) & (x <= cfg.x_range[1])
        & (y >= cfg.y_range[0]) & (y <= cfg.y_range[1])
    )
    u, v = cfg.world_to_pixel(x[keep], y[keep])
    lin = v * cfg.width + u
    counts = np.bincount(lin, minlength=cfg.width * cfg.height).astype(np.int32)
    return BevImage(counts=counts.reshape(cfg.height, cfg.width), config=cfg,
                    frame_id=frame.frame_id)


def write_pgm(path, grid: np.ndarray) -> None:
    """Dump a boolean (or 0/1) grid as binary PGM, occupied = 255."""
    g = (np.asarray(grid) > 0).astype(np.uint8) * 255
    h, w = g.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(g.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by write_pgm back into a boolean grid."""
    data = Path(path).read_bytes()
    # header: magic, dims, maxval separated by whitespace; no comment support
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a P5 PGM")
    w, h = (int(t) for t in parts[1].split())
    maxval = int(parts[2])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(parts[3][: w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return (pixels.reshape(h, w) > 0)
