"""Foreground segmentation: baseline connected components, greedy NMS, and a
line-delimited JSON client for external segmenter processes.

The external protocol speaks newline-delimited JSON over the child's stdio:
handshake ``{"type":"hello","version":1}`` -> ``{"type":"ready","name":...}``,
then one ``segment`` request per frame carrying the foreground mask as
alternating 0-run/1-run lengths (row-major, starting with a 0-run).
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import rle
from .errors import (
    EmptyMask,
    SegmenterProcessExit,
    SegmenterProtocolError,
    SegmenterTimeout,
)

PROTOCOL_VERSION = 1
_EIGHT = np.ones((3, 3), dtype=int)


@dataclass(frozen=True, order=True)
class BBox2D:
    """Half-open pixel box: u in [u_min, u_max), v in [v_min, v_max)."""

    u_min: int
    v_min: int
    u_max: int
    v_max: int

    def __post_init__(self):
        if self.u_max <= self.u_min or self.v_max <= self.v_min:
            raise EmptyMask(f"empty bbox {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.u_min, self.v_min, self.u_max, self.v_max)

    @property
    def area(self) -> int:
        return (self.u_max - self.u_min) * (self.v_max - self.v_min)

    @property
    def width(self) -> int:
        return self.u_max - self.u_min

    @property
    def height(self) -> int:
        return self.v_max - self.v_min

    def iou(self, other: "BBox2D") -> float:
        return bbox_iou(self, other)


def bbox_iou(a: BBox2D, b: BBox2D) -> float:
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    """A segment: tight bbox plus its mask, RLE-coded over the bbox window."""

    frame_id: int
    bbox: BBox2D
    score: float
    mask_rle: tuple[int, ...]

    def mask(self) -> np.ndarray:
        """Decode to a (bbox.height, bbox.width) boolean array."""
        return rle.decode_grid(self.mask_rle, self.bbox.width, self.bbox.height)

    def pixels(self) -> np.ndarray:
        """Absolute (u, v) coordinates of mask pixels, (N, 2) int64."""
        vv, uu = np.nonzero(self.mask())
        return np.column_stack([uu + self.bbox.u_min, vv + self.bbox.v_min])

    def area_px(self) -> int:
        return int(self.mask().sum())

    def paint_into(self, grid: np.ndarray) -> None:
        b = self.bbox
        grid[b.v_min:b.v_max, b.u_min:b.u_max] |= self.mask()


def detection_from_full_mask(frame_id: int, score: float, full: np.ndarray) -> Detection:
    """Crop a full-grid boolean mask to its tight bbox. Raises EmptyMask."""
    vs, us = np.nonzero(full)
    if vs.size == 0:
        raise EmptyMask("mask has no pixels")
    bbox = BBox2D(int(us.min()), int(vs.min()), int(us.max()) + 1, int(vs.max()) + 1)
    window = np.asarray(full[bbox.v_min:bbox.v_max, bbox.u_min:bbox.u_max], dtype=bool)
    return Detection(frame_id=frame_id, bbox=bbox, score=float(score),
                     mask_rle=tuple(rle.encode(window)))


def component_score(area_px: int) -> float:
    """Deterministic stand-in confidence: grows with segment area."""
    return min(1.0, area_px / (area_px + 16.0))


class ComponentSegmenter:
    """Baseline segmenter: 8-connected components above a pixel-area floor."""

    def __init__(self, min_area_px: int = 4):
        self.min_area_px = min_area_px

    def segment(self, fg: np.ndarray, frame_id: int) -> list[Detection]:
        labels, count = ndimage.label(np.asarray(fg) > 0, structure=_EIGHT)
        dets = []
        for idx in range(1, count + 1):
            comp = labels == idx
            area = int(comp.sum())
            if area < self.min_area_px:
                continue
            dets.append(detection_from_full_mask(frame_id, component_score(area), comp))
        # deterministic report order: top-left corner of the bbox
        dets.sort(key=lambda d: (d.bbox.v_min, d.bbox.u_min))
        return dets


def nms(dets: list[Detection], iou_thresh: float = 0.5) -> list[Detection]:
    """Greedy bbox NMS, score-descending, ties broken by bbox order.

    A detection is kept iff its IoU with every already-kept detection is
    strictly below iou_thresh. All inputs must share one frame.
    """
    frames = {d.frame_id for d in dets}
    if len(frames) > 1:
        raise ValueError(f"nms input spans frames {sorted(frames)}")
    order = sorted(dets, key=lambda d: (-d.score, d.bbox.as_tuple()))
    kept: list[Detection] = []
    for d in order:
        if all(bbox_iou(d.bbox, k.bbox) < iou_thresh for k in kept):
            kept.append(d)
    return kept


class _LineChannel:
    """Buffered line reader over a pipe fd with a deadline."""

    def __init__(self, stream):
        self.stream = stream
        self.buf = bytearray()

    def readline(self, timeout_s: float) -> bytes:
        deadline = time.monotonic() + timeout_s
        while True:
            nl = self.buf.find(b"\n")
            if nl >= 0:
                line = bytes(self.buf[:nl])
                del self.buf[: nl + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise SegmenterTimeout(f"no reply within {timeout_s:.1f}s")
            ready, _, _ = select.select([self.stream], [], [], remaining)
            if not ready:
                raise SegmenterTimeout(f"no reply within {timeout_s:.1f}s")
            chunk = os.read(self.stream.fileno(), 65536)
            if not chunk:
                raise SegmenterProcessExit("segmenter closed its stdout")
            self.buf.extend(chunk)


class ExternalSegmenter:
    """Client for a segmenter subprocess speaking the wire protocol."""

    def __init__(self, command: str | list[str], timeout_s: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_s = timeout_s
        self.proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self.chan = _LineChannel(self.proc.stdout)
        self.name = "?"
        self._handshake()

    def _send(self, payload: dict) -> None:
        try:
            self.proc.stdin.write((json.dumps(payload) + "\n").encode())
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise SegmenterProcessExit(f"segmenter stdin closed: {e}") from None

    def _recv(self) -> dict:
        line = self.chan.readline(self.timeout_s)
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            raise SegmenterProtocolError(f"bad JSON from segmenter: {e}") from None
        if not isinstance(msg, dict) or "type" not in msg:
            raise SegmenterProtocolError(f"reply missing type: {msg!r}")
        return msg

    def _handshake(self) -> None:
        self._send({"type": "hello", "version": PROTOCOL_VERSION})
        msg = self._recv()
        if msg.get("type") != "ready":
            raise SegmenterProtocolError(f"expected ready, got {msg!r}")
        self.name = str(msg.get("name", "?"))

    def segment(self, fg: np.ndarray, frame_id: int) -> list[Detection]:
        grid = np.asarray(fg) > 0
        height, width = grid.shape
        self._send({
            "type": "segment",
            "frame_id": int(frame_id),
            "width": width,
            "height": height,
            "mask_rle": rle.encode(grid),
        })
        msg = self._recv()
        if msg.get("type") == "error":
            raise SegmenterProtocolError(f"segmenter error: {msg.get('message', msg)!r}")
        if msg.get("type") != "segments":
            raise SegmenterProtocolError(f"expected segments, got {msg!r}")
        if msg.get("frame_id") != frame_id:
            raise SegmenterProtocolError(
                f"frame_id mismatch: sent {frame_id}, got {msg.get('frame_id')}"
            )
        segments = msg.get("segments")
        if not isinstance(segments, list):
            raise SegmenterProtocolError("segments is not a list")

        dets = []
        for seg in segments:
            if not isinstance(seg, dict) or "mask_rle" not in seg or "score" not in seg:
                raise SegmenterProtocolError(f"bad segment entry: {seg!r}")
            try:
                # decode clips overlong masks to the grid and pads short ones
                full = rle.decode_grid(seg["mask_rle"], width, height)
            except (ValueError, TypeError) as e:
                raise SegmenterProtocolError(f"bad mask_rle: {e}") from None
            if not full.any():
                continue
            score = min(1.0, max(0.0, float(seg["score"])))
            dets.append(detection_from_full_mask(frame_id, score, full))
        return dets

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_segmenter(kind: str, min_area_px: int = 4, command: str | None = None,
                   timeout_s: float = 30.0):
    """Build a segmenter from config: 'components' or 'external:<command>'."""
    if kind == "components":
        return ComponentSegmenter(min_area_px=min_area_px)
    if kind == "external":
        if not command:
            raise ValueError("external segmenter needs a command")
        return ExternalSegmenter(command, timeout_s=timeout_s)
    if kind.startswith("external:"):
        return ExternalSegmenter(kind.split(":", 1)[1], timeout_s=timeout_s)
    raise ValueError(f"unknown segmenter kind {kind!r}")
