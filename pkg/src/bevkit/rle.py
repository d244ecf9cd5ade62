"""Run-length codec for binary masks.

Runs alternate 0-run / 1-run over the flattened row-major grid and always
start with a 0-run (possibly of length zero). This is the wire format used
by the external segmenter protocol and the in-memory mask storage on
detections.
"""

from __future__ import annotations

import numpy as np


def encode(mask: np.ndarray) -> list[int]:
    """Encode a binary mask (any shape) into alternating run lengths."""
    flat = np.asarray(mask).ravel().astype(bool)
    n = flat.size
    if n == 0:
        return [0]
    # boundaries where the value changes
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change, [n]))
    runs = np.diff(starts).tolist()
    if flat[0]:
        runs = [0] + runs
    return runs


def decode(runs, size: int) -> np.ndarray:
    """Decode run lengths into a flat boolean array of exactly `size` cells.

    Runs describing more cells than `size` are clipped; a short encoding is
    padded with zeros. Negative run lengths are rejected.
    """
    out = np.zeros(size, dtype=bool)
    pos = 0
    val = False
    for r in runs:
        r = int(r)
        if r < 0:
            raise ValueError(f"negative run length {r}")
        if pos >= size:
            break
        end = min(pos + r, size)
        if val:
            out[pos:end] = True
        pos += r
        val = not val
    return out


def decode_grid(runs, width: int, height: int) -> np.ndarray:
    """Decode into a (height, width) boolean grid."""
    return decode(runs, width * height).reshape(height, width)


def total_length(runs) -> int:
    return int(sum(int(r) for r in runs))
