"""Per-track traffic parameters: smoothed trajectories, speed, acceleration,
size-based classification, counts, and descriptive statistics."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import EmptyValues, TooShort

MPS_TO_MPH = 2.236936


class ClassLabel(enum.Enum):
    VEHICLE = "Vehicle"
    PEDESTRIAN = "Pedestrian"


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Unit-sum Gaussian taps truncated at +-4 sigma."""
    if sigma <= 0:
        return np.array([1.0])
    radius = int(np.floor(4.0 * sigma))
    k = np.arange(-radius, radius + 1)
    w = np.exp(-0.5 * (k / sigma) ** 2)
    return w / w.sum()


def smooth_trajectory(positions: np.ndarray, sigma_frames: float = 2.0) -> np.ndarray:
    """Gaussian-smooth x(t) and y(t) independently, edge-replicated ends."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2 or len(pos) < 1:
        raise ValueError(f"positions must be (n, 2) with n >= 1, got {pos.shape}")
    kernel = gaussian_kernel(sigma_frames)
    if len(kernel) == 1:
        return pos.copy()
    radius = len(kernel) // 2
    out = np.empty_like(pos)
    for col in range(2):
        padded = np.pad(pos[:, col], radius, mode="edge")
        out[:, col] = np.convolve(padded, kernel, mode="valid")
    return out


def compute_speed(positions: np.ndarray, frame_rate_hz: float) -> np.ndarray:
    """Central-difference speeds, one-sided at the ends. Always >= 0."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    if n < 2:
        raise TooShort(f"need >= 2 positions for speed, got {n}")
    v = np.empty(n)
    step = np.linalg.norm(pos[1:] - pos[:-1], axis=1)
    v[0] = step[0] * frame_rate_hz
    v[-1] = step[-1] * frame_rate_hz
    if n > 2:
        v[1:-1] = np.linalg.norm(pos[2:] - pos[:-2], axis=1) * frame_rate_hz / 2.0
    return v


def compute_acceleration(speeds: np.ndarray, frame_rate_hz: float) -> np.ndarray:
    """Signed central difference of the scalar speed series."""
    v = np.asarray(speeds, dtype=float)
    n = len(v)
    if n < 2:
        raise TooShort(f"need >= 2 speeds for acceleration, got {n}")
    a = np.empty(n)
    a[0] = (v[1] - v[0]) * frame_rate_hz
    a[-1] = (v[-1] - v[-2]) * frame_rate_hz
    if n > 2:
        a[1:-1] = (v[2:] - v[:-2]) * frame_rate_hz / 2.0
    return a


def classify_track(areas, area_threshold: float = 1.5) -> ClassLabel:
    """Majority vote over per-frame area labels; ties go to Vehicle."""
    votes = Counter(
        ClassLabel.VEHICLE if a >= area_threshold else ClassLabel.PEDESTRIAN
        for a in areas
    )
    if not votes:
        raise EmptyValues("classify_track needs at least one area")
    return (
        ClassLabel.VEHICLE
        if votes[ClassLabel.VEHICLE] >= votes[ClassLabel.PEDESTRIAN]
        else ClassLabel.PEDESTRIAN
    )


def count_by_class(labels) -> dict[str, int]:
    counts = {ClassLabel.VEHICLE.value: 0, ClassLabel.PEDESTRIAN.value: 0}
    for label in labels:
        counts[label.value] += 1
    return counts


def percentile(values, q: float) -> float:
    """Linear-interpolated percentile at position (n-1) * q/100 of the sort."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise EmptyValues("percentile of empty values")
    pos = (v.size - 1) * (q / 100.0)
    lo = int(np.floor(pos))
    hi = min(lo + 1, v.size - 1)
    frac = pos - lo
    return float(v[lo] * (1.0 - frac) + v[hi] * frac)


def describe_stats(values) -> dict[str, float]:
    """Mean, population std, min, and the quartile/90th summary of a sample."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise EmptyValues("describe_stats of empty values")
    return {
        "mean": float(v.mean()),
        "std": float(v.std(ddof=0)),
        "min": float(v.min()),
        "p25": percentile(v, 25.0),
        "p50": percentile(v, 50.0),
        "p75": percentile(v, 75.0),
        "p90": percentile(v, 90.0),
    }


@dataclass(frozen=True)
class Kinematics:
    """Per-frame motion series for one track, all arrays the same length."""

    positions: np.ndarray     # (n, 2) smoothed meters
    speeds: np.ndarray        # (n,) m/s
    speeds_mph: np.ndarray    # (n,) mph
    accels: np.ndarray        # (n,) m/s^2, signed


def track_kinematics(
    positions: np.ndarray, frame_rate_hz: float, sigma_frames: float = 2.0
) -> Kinematics:
    smoothed = smooth_trajectory(positions, sigma_frames)
    speeds = compute_speed(smoothed, frame_rate_hz)
    accels = compute_acceleration(speeds, frame_rate_hz)
    return Kinematics(
        positions=smoothed,
        speeds=speeds,
        speeds_mph=speeds * MPS_TO_MPH,
        accels=accels,
    )
