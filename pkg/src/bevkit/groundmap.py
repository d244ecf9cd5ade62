"""Ground elevation estimation from static background returns.

Accumulates z samples per BEV cell (only from cells the background model
claims as static), takes a low percentile per cell to shrug off wall returns
sharing a cell with road, then fills the gaps by inverse-distance weighting.
Heights stay sensor-relative throughout; consumers subtract them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .bev import BevConfig
from .errors import DimensionMismatch, NoSamples, OutOfGrid
from .frames import Frame

VALID_UNKNOWN = 0
VALID_SAMPLED = 1
VALID_INTERPOLATED = 2


@dataclass(frozen=True)
class GroundParams:
    percentile: float = 5.0
    min_samples: int = 3
    idw_power: float = 2.0
    idw_neighbors: int = 8
    max_radius_m: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.percentile <= 100.0:
            raise ValueError("percentile must be in [0, 100]")
        if self.min_samples < 1 or self.idw_neighbors < 1 or self.max_radius_m <= 0:
            raise ValueError("min_samples, idw_neighbors >= 1 and max_radius_m > 0")


class GroundSampler:
    """Streams frames, keeping (cell, z) pairs for points on background cells."""

    def __init__(self, cfg: BevConfig, bg_completed: np.ndarray):
        bg = np.asarray(bg_completed, dtype=bool)
        if bg.shape != (cfg.height, cfg.width):
            raise DimensionMismatch(
                f"background {bg.shape} vs grid {(cfg.height, cfg.width)}"
            )
        self.cfg = cfg
        self.bg_flat = bg.ravel()
        self._cells: list[np.ndarray] = []
        self._zs: list[np.ndarray] = []

    def add_frame(self, frame: Frame) -> None:
        x, y, z = frame.xyz[:, 0], frame.xyz[:, 1], frame.xyz[:, 2]
        cfg = self.cfg
        keep = (
            (x >= cfg.x_range[0]) & (x <= cfg.x_range[1])
            & (y >= cfg.y_range[0]) & (y <= cfg.y_range[1])
        )
        u, v = cfg.world_to_pixel(x[keep], y[keep])
        lin = v * cfg.width + u
        on_bg = self.bg_flat[lin]
        self._cells.append(lin[on_bg])
        self._zs.append(z[keep][on_bg])

    def collect(self) -> tuple[np.ndarray, np.ndarray]:
        """All accumulated (linear cell index, z) pairs."""
        if not self._cells:
            return np.empty(0, dtype=np.int64), np.empty(0)
        return np.concatenate(self._cells), np.concatenate(self._zs)

    def sample_count_grid(self) -> np.ndarray:
        cells, _ = self.collect()
        counts = np.bincount(cells, minlength=self.cfg.width * self.cfg.height)
        return counts.reshape(self.cfg.height, self.cfg.width)


def estimate_cell_ground(
    cells: np.ndarray, zs: np.ndarray, cfg: BevConfig, params: GroundParams
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell percentile over the sample pairs -> (heights, validity).

    Cells with fewer than min_samples samples stay unknown (NaN).
    """
    heights = np.full((cfg.height, cfg.width), np.nan)
    validity = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    if cells.size == 0:
        return heights, validity

    # lexsort by (cell, z): each group comes out pre-sorted, so the linear
    # interpolated percentile is two gathers instead of a per-cell call
    order = np.lexsort((zs, cells))
    c = cells[order]
    z = zs[order]
    starts = np.flatnonzero(np.diff(c)) + 1
    starts = np.concatenate([[0], starts])
    counts = np.diff(np.concatenate([starts, [c.size]]))

    good = counts >= params.min_samples
    if not good.any():
        return heights, validity
    g_start = starts[good]
    g_count = counts[good]
    g_cell = c[g_start]

    pos = (g_count - 1) * (params.percentile / 100.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, g_count - 1)
    frac = pos - lo
    vals = z[g_start + lo] * (1.0 - frac) + z[g_start + hi] * frac

    vr, uc = np.divmod(g_cell, cfg.width)
    heights[vr, uc] = vals
    validity[vr, uc] = VALID_SAMPLED
    return heights, validity


def interpolate(
    heights: np.ndarray, validity: np.ndarray, cfg: BevConfig, params: GroundParams
) -> tuple[np.ndarray, np.ndarray]:
    """IDW-fill unknown cells from nearby sampled cells; returns new grids."""
    sampled = validity == VALID_SAMPLED
    if not sampled.any():
        raise NoSamples("no cell has enough ground samples")
    out_h = heights.copy()
    out_v = validity.copy()

    sv, su = np.nonzero(sampled)
    # cell centers in meters so max_radius means meters
    sx = cfg.x_range[0] + (su + 0.5) * cfg.resolution
    sy = cfg.y_range[1] - (sv + 0.5) * cfg.resolution
    tree = cKDTree(np.column_stack([sx, sy]))
    svals = heights[sv, su]

    uv, uu = np.nonzero(~sampled)
    if uv.size == 0:
        return out_h, out_v
    ux = cfg.x_range[0] + (uu + 0.5) * cfg.resolution
    uy = cfg.y_range[1] - (uv + 0.5) * cfg.resolution

    k = min(params.idw_neighbors, len(svals))
    dist, idx = tree.query(
        np.column_stack([ux, uy]), k=k, distance_upper_bound=params.max_radius_m
    )
    dist = dist.reshape(len(ux), k)
    idx = idx.reshape(len(ux), k)

    hit = np.isfinite(dist)
    any_hit = hit.any(axis=1)
    if not any_hit.any():
        return out_h, out_v

    w = np.zeros_like(dist)
    d = np.where(hit, dist, 1.0)
    w[hit] = 1.0 / np.maximum(d[hit], 1e-12) ** params.idw_power
    safe_idx = np.where(hit, idx, 0)
    num = (w * svals[safe_idx]).sum(axis=1)
    den = w.sum(axis=1)
    vals = np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    fill_v = uv[any_hit]
    fill_u = uu[any_hit]
    out_h[fill_v, fill_u] = vals[any_hit]
    out_v[fill_v, fill_u] = VALID_INTERPOLATED
    return out_h, out_v


@dataclass
class GroundHeightMap:
    heights: np.ndarray           # (H, W) float, NaN where unknown
    validity: np.ndarray          # (H, W) uint8: 0 unknown, 1 sampled, 2 interpolated
    config: BevConfig
    params: GroundParams

    def query_height(self, x: float, y: float) -> float | None:
        cfg = self.config
        if not (cfg.x_range[0] <= x <= cfg.x_range[1]
                and cfg.y_range[0] <= y <= cfg.y_range[1]):
            raise OutOfGrid(f"({x}, {y}) outside {cfg.x_range} x {cfg.y_range}")
        u, v = cfg.world_to_pixel(x, y)
        if self.validity[v, u] == VALID_UNKNOWN:
            return None
        return float(self.heights[v, u])


def build_ground_map(
    cfg: BevConfig,
    bg_completed: np.ndarray,
    frames: list[Frame],
    params: GroundParams | None = None,
) -> GroundHeightMap:
    params = params or GroundParams()
    sampler = GroundSampler(cfg, bg_completed)
    for f in frames:
        sampler.add_frame(f)
    cells, zs = sampler.collect()
    heights, validity = estimate_cell_ground(cells, zs, cfg, params)
    heights, validity = interpolate(heights, validity, cfg, params)
    return GroundHeightMap(heights, validity, cfg, params)


def save_ground_map(gmap: GroundHeightMap, directory) -> None:
    """Write ground.csv (grid, nan for unknown), ground.json, ground.pgm."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "ground.csv", gmap.heights, fmt="%.17g", delimiter=",")
    cfg = gmap.config
    sidecar = {
        "resolution": cfg.resolution,
        "x_range": list(cfg.x_range),
        "y_range": list(cfg.y_range),
        "percentile": gmap.params.percentile,
        "min_samples": gmap.params.min_samples,
        "idw_power": gmap.params.idw_power,
        "idw_neighbors": gmap.params.idw_neighbors,
        "max_radius_m": gmap.params.max_radius_m,
        "cells_sampled": int((gmap.validity == VALID_SAMPLED).sum()),
        "cells_interpolated": int((gmap.validity == VALID_INTERPOLATED).sum()),
        "cells_unknown": int((gmap.validity == VALID_UNKNOWN).sum()),
    }
    with open(directory / "ground.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_height_pgm(directory / "ground.pgm", gmap.heights)
    np.savetxt(directory / "ground_validity.csv", gmap.validity, fmt="%d", delimiter=",")


def load_ground_map(directory) -> GroundHeightMap:
    directory = Path(directory)
    with open(directory / "ground.json") as fh:
        side = json.load(fh)
    cfg = BevConfig(
        resolution=side["resolution"],
        x_range=tuple(side["x_range"]),
        y_range=tuple(side["y_range"]),
    )
    params = GroundParams(
        percentile=side["percentile"],
        min_samples=side["min_samples"],
        idw_power=side["idw_power"],
        idw_neighbors=side["idw_neighbors"],
        max_radius_m=side["max_radius_m"],
    )
    heights = np.loadtxt(directory / "ground.csv", delimiter=",", ndmin=2)
    validity = np.loadtxt(
        directory / "ground_validity.csv", delimiter=",", dtype=np.uint8, ndmin=2
    )
    return GroundHeightMap(heights, validity, cfg, params)


def _write_height_pgm(path, heights: np.ndarray) -> None:
    """Valid heights normalized into 1..255; unknown cells render black."""
    valid = np.isfinite(heights)
    img = np.zeros(heights.shape, dtype=np.uint8)
    if valid.any():
        lo = heights[valid].min()
        hi = heights[valid].max()
        span = hi - lo if hi > lo else 1.0
        img[valid] = (1 + 254 * (heights[valid] - lo) / span).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())
