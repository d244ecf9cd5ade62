"""Stationary-background modelling and point-cloud completion.

The background is the per-cell occupancy frequency over a clip; cells at or
above tau_bg form the background mask. Completion (PCC) scans fixed-size
windows over a grid and, wherever the source window is already dense enough,
sprinkles occupied pixels into the output window at rate alpha. Draws are a
pure function of (seed, window center, offset) so serial, strided and
parallel traversals produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bev import BevImage
from .errors import DimensionMismatch, GridTooSmall, TooFewFrames

# splitmix64 constants
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over uint64 arrays (wrapping arithmetic)."""
    z = (x + _GAMMA).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def window_uniforms(seed: int, i: np.ndarray, j: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Deterministic U[0,1) draws keyed by (seed, window center i,j, offset t)."""
    s = np.uint64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    h = _mix(np.asarray(i, dtype=np.uint64) * np.uint64(0x9E3779B9) ^ s)
    h = _mix(h ^ np.asarray(j, dtype=np.uint64) * np.uint64(0x85EBCA6B))
    h = _mix(h ^ np.asarray(t, dtype=np.uint64))
    return h.astype(np.float64) / 2.0**64


@dataclass(frozen=True)
class PccParams:
    n: int = 3              # half window; the window is 2n x 2n
    rho: float = 0.15       # density threshold fraction
    alpha: float = 0.5      # per-pixel fill probability in qualifying windows
    stride: int = 1
    seed: int = 42

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass
class BackgroundModel:
    frequency: np.ndarray       # (H, W) float64 occupancy frequency
    tau_bg: float = 0.2
    frames_used: int = 0

    @property
    def mask(self) -> np.ndarray:
        return self.frequency >= self.tau_bg


def estimate_background(images: list[BevImage], tau_bg: float = 0.2) -> BackgroundModel:
    """Mean occupancy over >= 2 same-shaped BEV images."""
    if len(images) < 2:
        raise TooFewFrames(f"background needs >= 2 frames, got {len(images)}")
    shape = images[0].counts.shape
    acc = np.zeros(shape, dtype=np.float64)
    for im in images:
        if im.counts.shape != shape:
            raise DimensionMismatch(f"{im.counts.shape} vs {shape}")
        acc += im.occupancy
    return BackgroundModel(frequency=acc / len(images), tau_bg=tau_bg,
                           frames_used=len(images))


def subtract(frame_img: BevImage, bg: BackgroundModel,
             completed_bg: np.ndarray | None = None) -> np.ndarray:
    """Foreground = occupancy minus the (optionally completed) background."""
    mask = bg.mask if completed_bg is None else np.asarray(completed_bg, dtype=bool)
    if mask.shape != frame_img.counts.shape:
        raise DimensionMismatch(f"{mask.shape} vs {frame_img.counts.shape}")
    return frame_img.occupancy & ~mask


def pcc(img: np.ndarray, p: PccParams) -> np.ndarray:
    """Complete a binary grid.

    Window centers (i, j) scan [n, dim-n) with the configured stride; each
    window covers img[i-n:i+n, j-n:j+n]. Density is counted on the original
    input, and a window qualifies when its occupied count strictly exceeds
    (2n)(2n)*rho. Qualifying windows turn output pixels on independently with
    probability alpha; pixels are never turned off.
    """
    src = np.asarray(img) > 0
    rows, cols = src.shape
    n, w = p.n, 2 * p.n
    if rows < 2 * n + 1 or cols < 2 * n + 1:
        raise GridTooSmall(f"grid {rows}x{cols} needs at least {2*n+1} per side")

    out = src.copy()
    ci = np.arange(n, rows - n, p.stride)
    cj = np.arange(n, cols - n, p.stride)
    if ci.size == 0 or cj.size == 0:
        return out

    # integral image over the original grid; window sum via 4 corner lookups
    sat = np.zeros((rows + 1, cols + 1), dtype=np.int64)
    np.cumsum(np.cumsum(src, axis=0), axis=1, out=sat[1:, 1:])
    gi, gj = np.meshgrid(ci, cj, indexing="ij")
    win = (sat[gi + n, gj + n] - sat[gi - n, gj + n]
           - sat[gi + n, gj - n] + sat[gi - n, gj - n])
    qual = win > w * w * p.rho

    qi, qj = gi[qual], gj[qual]
    if qi.size == 0:
        return out

    t = np.arange(w * w, dtype=np.uint64)
    u = window_uniforms(p.seed, qi[:, None], qj[:, None], t[None, :])
    fill = u < p.alpha
    di = (t // w).astype(np.int64) - n      # row offsets -n .. n-1
    dj = (t % w).astype(np.int64) - n
    rr = (qi[:, None] + di[None, :])[fill]
    cc = (qj[:, None] + dj[None, :])[fill]
    out[rr, cc] = True                      # duplicates all write True
    return out


def complete_background(bg: BackgroundModel, p: PccParams, segmenter=None) -> np.ndarray:
    """Densify the background mask: PCC, optional segment union, PCC again."""
    completed = pcc(bg.mask, p)
    if segmenter is not None:
        union = completed.copy()
        for det in segmenter.segment(completed, frame_id=-1):
            det.paint_into(union)
        completed = union
    return pcc(completed, p)
