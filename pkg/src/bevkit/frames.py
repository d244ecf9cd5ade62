"""Per-frame point cloud I/O.

Frames arrive as one CSV per sweep with header ``x,y,z`` or
``x,y,z,intensity`` and coordinates in meters in the sensor frame (origin at
the sensor, z up). Sequences are directories of ``frame_*.csv`` with an
optional ``meta.json`` carrying ``frame_rate_hz`` and ``frame_count``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    BadFrameFilename,
    DuplicateFrameId,
    EmptyFile,
    MalformedRow,
    NoFrames,
    NonMonotoneTimestamps,
)

_ID_RE = re.compile(r"(\d+)")


@dataclass
class Frame:
    """One sweep: an (n, 3) float64 xyz array plus optional intensity."""

    frame_id: int
    timestamp: float
    xyz: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).ravel()

    @property
    def n_points(self) -> int:
        return self.xyz.shape[0]


@dataclass
class SequenceMeta:
    frame_rate_hz: float = 10.0
    sensor_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    frame_count: int = 0

    def __post_init__(self):
        if self.frame_rate_hz <= 0:
            raise ValueError(f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")


def frame_id_from_path(path) -> int:
    """Derive the frame id from the trailing digit group of the stem."""
    matches = _ID_RE.findall(Path(path).stem)
    if not matches:
        raise BadFrameFilename(f"no numeric suffix in {path}")
    return int(matches[-1])


def load_frame(path, frame_id: int | None = None) -> Frame:
    """Load one CSV frame. Raises MalformedRow / EmptyFile."""
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise EmptyFile(f"{path}: no header") from None
    except pd.errors.ParserError as e:
        raise MalformedRow(path, -1, str(e).splitlines()[0]) from None

    cols = list(df.columns)
    if cols not in (["x", "y", "z"], ["x", "y", "z", "intensity"]):
        raise MalformedRow(path, 0, f"bad header {cols}")

    arrs = {}
    for c in cols:
        vals = pd.to_numeric(df[c], errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(vals)
        if bad.any():
            # data row index, 1-based counting from the first row after the header
            raise MalformedRow(path, int(np.flatnonzero(bad)[0]) + 1, f"column {c}")
        arrs[c] = vals

    intensity = arrs.get("intensity")
    if intensity is not None and ((intensity < 0) | (intensity > 1)).any():
        row = int(np.flatnonzero((intensity < 0) | (intensity > 1))[0]) + 1
        raise MalformedRow(path, row, "intensity outside [0, 1]")

    if frame_id is None:
        frame_id = frame_id_from_path(path)
    xyz = np.column_stack([arrs["x"], arrs["y"], arrs["z"]]) if len(df) else np.empty((0, 3))
    return Frame(frame_id=frame_id, timestamp=0.0, xyz=xyz, intensity=intensity)


def save_frame(frame: Frame, path) -> None:
    """Write a frame back out; load_frame recovers coordinates within 1e-6 m."""
    path = Path(path)
    cols = {"x": frame.xyz[:, 0], "y": frame.xyz[:, 1], "z": frame.xyz[:, 2]}
    if frame.intensity is not None:
        cols["intensity"] = frame.intensity
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.6f")


def validate_sequence(frames: list[Frame]) -> None:
    seen = {}
    for f in frames:
        if f.frame_id in seen:
            raise DuplicateFrameId(f"frame_id {f.frame_id} appears twice")
        seen[f.frame_id] = True
    ts = [f.timestamp for f in frames]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise NonMonotoneTimestamps("timestamps decrease within sequence")


def load_sequence(directory, meta: SequenceMeta | None = None) -> tuple[SequenceMeta, list[Frame]]:
    """Load all frame_*.csv in a directory, ordered by numeric suffix.

    Timestamps are synthesized as frame_id / frame_rate_hz. meta.json in the
    directory supplies the frame rate when present; frame_count is always set
    from the files actually found.
    """
    directory = Path(directory)
    paths = sorted(directory.glob("frame_*.csv"), key=frame_id_from_path)
    if not paths:
        raise NoFrames(f"no frame_*.csv in {directory}")

    if meta is None:
        meta = SequenceMeta()
        meta_path = directory / "meta.json"
        if meta_path.exists():
            raw = json.loads(meta_path.read_text())
            if "frame_rate_hz" in raw:
                meta = SequenceMeta(frame_rate_hz=float(raw["frame_rate_hz"]))

    ids = [frame_id_from_path(p) for p in paths]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateFrameId(f"duplicate frame ids {dupes} in {directory}")

    frames = []
    for p, fid in zip(paths, ids):
        f = load_frame(p, frame_id=fid)
        f.timestamp = fid / meta.frame_rate_hz
        frames.append(f)
    validate_sequence(frames)
    meta.frame_count = len(frames)
    return meta, frames


def save_meta(meta: SequenceMeta, directory) -> None:
    payload = {"frame_rate_hz": meta.frame_rate_hz, "frame_count": meta.frame_count}
    (Path(directory) / "meta.json").write_text(json.dumps(payload, indent=2) + "\n")
