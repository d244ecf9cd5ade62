"""Two-stage IoU tracking over per-frame detections.

High-confidence detections are matched against every live track first; the
leftovers of that pass then get a second chance against low-confidence
detections, which recovers objects through partial occlusion without letting
noise spawn tracks (only unmatched high-confidence detections start one).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bev import BevConfig
from .errors import FrameOrderViolation
from .geom import rect_iou
from .segment import BBox2D, Detection

# Assignment weights are integers so ties are exact, not float-fuzzy:
# round(iou * _IOU_SCALE) major term, track rank minor term.
_IOU_SCALE = 1e9


@dataclass(frozen=True)
class TrackerParams:
    tau_high: float = 0.6
    tau_low: float = 0.1
    iou_match: float = 0.3
    max_age: int = 30
    min_hits: int = 3
    predict_motion: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau_low <= self.tau_high <= 1.0:
            raise ValueError("need 0 <= tau_low <= tau_high <= 1")
        if not 0.0 < self.iou_match <= 1.0:
            raise ValueError("iou_match must be in (0, 1]")
        if self.max_age < 0 or self.min_hits < 1:
            raise ValueError("max_age >= 0 and min_hits >= 1 required")


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    REMOVED = "removed"


@dataclass(frozen=True)
class TrackState:
    """One matched observation of a track.

    Keeps the matched detection so downstream consumers can reach its pixel
    mask without a join back through the detection store.
    """

    frame_id: int
    bbox: BBox2D
    score: float
    x: float
    y: float
    detection: Detection | None = None


def bbox_world_center(bbox: BBox2D, config: BevConfig) -> tuple[float, float]:
    """Continuous world center of a pixel box (v grows downward from y max)."""
    u_c = (bbox.u_min + bbox.u_max) / 2.0
    v_c = (bbox.v_min + bbox.v_max) / 2.0
    return (
        config.x_range[0] + u_c * config.resolution,
        config.y_range[1] - v_c * config.resolution,
    )


class Track:
    def __init__(self, track_id: int, state: TrackState):
        self.track_id = track_id
        self.states: list[TrackState] = [state]
        self.status = TrackStatus.TENTATIVE
        self.hits = 1
        self.time_since_update = 0
        self.ever_confirmed = False
        # pixels per frame, from the two most recent matched observations
        self.velocity = (0.0, 0.0)

    @property
    def last_state(self) -> TrackState:
        return self.states[-1]

    def predicted_rect(self, frame_id: int, predict_motion: bool) -> tuple[float, float, float, float]:
        b = self.last_state.bbox
        u_c = (b.u_min + b.u_max) / 2.0
        v_c = (b.v_min + b.v_max) / 2.0
        if predict_motion:
            dt = frame_id - self.last_state.frame_id
            u_c += self.velocity[0] * dt
            v_c += self.velocity[1] * dt
        hw, hh = b.width / 2.0, b.height / 2.0
        return (u_c - hw, v_c - hh, u_c + hw, v_c + hh)

    def mark_matched(self, state: TrackState, min_hits: int) -> None:
        prev = self.states[-1]
        self.states.append(state)
        gap = state.frame_id - prev.frame_id
        if gap > 0:
            pb, nb = prev.bbox, state.bbox
            du = ((nb.u_min + nb.u_max) - (pb.u_min + pb.u_max)) / 2.0
            dv = ((nb.v_min + nb.v_max) - (pb.v_min + pb.v_max)) / 2.0
            self.velocity = (du / gap, dv / gap)
        self.hits += 1
        self.time_since_update = 0
        if self.status is TrackStatus.TENTATIVE and self.hits >= min_hits:
            self.status = TrackStatus.CONFIRMED
            self.ever_confirmed = True

    def mark_missed(self, max_age: int) -> None:
        self.time_since_update += 1
        if self.time_since_update > max_age:
            self.status = TrackStatus.REMOVED


def _det_rect(det: Detection) -> tuple[float, float, float, float]:
    b = det.bbox
    return (float(b.u_min), float(b.v_min), float(b.u_max), float(b.v_max))


def associate(
    dets: list[Detection],
    tracks: list[Track],
    frame_id: int,
    iou_match: float,
    predict_motion: bool,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Match detections to tracks maximizing summed IoU.

    Pairs below iou_match are never matched. On exact IoU ties the composite
    integer weight steers the match toward the lowest track_id. Returns
    (matches, unmatched_det_indices, unmatched_track_indices).
    """
    if not dets or not tracks:
        return [], list(range(len(dets))), list(range(len(tracks)))

    order = sorted(range(len(tracks)), key=lambda i: tracks[i].track_id)
    rank = {ti: r for r, ti in enumerate(order)}
    k = len(tracks) + 1

    iou = np.zeros((len(dets), len(tracks)))
    weight = np.zeros((len(dets), len(tracks)), dtype=np.int64)
    for ti, trk in enumerate(tracks):
        trect = trk.predicted_rect(frame_id, predict_motion)
        for di, det in enumerate(dets):
            v = rect_iou(_det_rect(det), trect)
            iou[di, ti] = v
            if v >= iou_match:
                weight[di, ti] = int(round(v * _IOU_SCALE)) * k + (k - 1 - rank[ti])

    rows, cols = linear_sum_assignment(weight, maximize=True)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if weight[r, c] > 0]
    m_dets = {r for r, _ in matches}
    m_tracks = {c for _, c in matches}
    unmatched_dets = [i for i in range(len(dets)) if i not in m_dets]
    unmatched_tracks = [i for i in range(len(tracks)) if i not in m_tracks]
    return matches, unmatched_dets, unmatched_tracks


class Tracker:
    def __init__(self, params: TrackerParams, config: BevConfig):
        self.params = params
        self.config = config
        self.tracks: list[Track] = []
        self.removed: list[Track] = []
        self._next_id = 0
        self._last_frame: int | None = None

    def _new_track(self, det: Detection) -> None:
        x, y = bbox_world_center(det.bbox, self.config)
        state = TrackState(det.frame_id, det.bbox, det.score, x, y, det)
        t = Track(self._next_id, state)
        self._next_id += 1
        if self.params.min_hits <= 1:
            t.status = TrackStatus.CONFIRMED
            t.ever_confirmed = True
        self.tracks.append(t)

    def step(self, frame_id: int, detections: list[Detection]) -> None:
        if self._last_frame is not None and frame_id <= self._last_frame:
            raise FrameOrderViolation(
                f"frame {frame_id} after frame {self._last_frame}"
            )
        self._last_frame = frame_id
        p = self.params

        high = [d for d in detections if d.score >= p.tau_high]
        low = [d for d in detections if p.tau_low <= d.score < p.tau_high]

        matches1, un_high, un_tracks1 = associate(
            high, self.tracks, frame_id, p.iou_match, p.predict_motion
        )
        remainder = [self.tracks[i] for i in un_tracks1]
        matches2, _, un_tracks2 = associate(
            low, remainder, frame_id, p.iou_match, p.predict_motion
        )

        matched_pairs = [(high[di], self.tracks[ti]) for di, ti in matches1]
        matched_pairs += [(low[di], remainder[ti]) for di, ti in matches2]
        for det, trk in matched_pairs:
            x, y = bbox_world_center(det.bbox, self.config)
            trk.mark_matched(
                TrackState(frame_id, det.bbox, det.score, x, y, det),
                p.min_hits,
            )

        for ti in un_tracks2:
            remainder[ti].mark_missed(p.max_age)

        for di in un_high:
            self._new_track(high[di])

        still_live = []
        for t in self.tracks:
            (self.removed if t.status is TrackStatus.REMOVED else still_live).append(t)
        self.tracks = still_live

    def all_tracks(self) -> list[Track]:
        return sorted(self.tracks + self.removed, key=lambda t: t.track_id)


def run_tracker(
    frame_detections: list[tuple[int, list[Detection]]],
    params: TrackerParams,
    config: BevConfig,
) -> list[Track]:
    """Run tracking over (frame_id, detections) pairs in frame order.

    Returns every track that was ever confirmed, in track_id order.
    """
    tracker = Tracker(params, config)
    for frame_id, dets in frame_detections:
        tracker.step(frame_id, dets)
    return [t for t in tracker.all_tracks() if t.ever_confirmed]


@dataclass(frozen=True)
class TrackFilterConfig:
    min_frames: int = 8
    winding_max: float = 3.0
    min_displacement: float = 1.0
    thin_aspect: float = 8.0
    thin_area_px: int = 12
    thin_frac: float = 0.5


def _path_lengths(track: Track) -> tuple[float, float]:
    pts = [(s.x, s.y) for s in track.states]
    path = sum(math.dist(a, b) for a, b in zip(pts, pts[1:]))
    endpoint = math.dist(pts[0], pts[-1])
    return path, endpoint


def filter_tracks(
    tracks: list[Track],
    frame_count: int,
    cfg: TrackFilterConfig | None = None,
) -> tuple[list[Track], list[dict]]:
    """Drop implausible tracks; returns (kept, removal_log).

    Each removal log entry lists every criterion the track tripped:
    'short' (too few states, or more states than frames exist),
    'winding' (path folds back on itself, or barely moves),
    'thin' (persistently sliver-shaped boxes, usually edge noise).
    """
    cfg = cfg or TrackFilterConfig()
    kept: list[Track] = []
    log: list[dict] = []
    for t in tracks:
        reasons = []
        n = len(t.states)
        if n < cfg.min_frames or n > frame_count:
            reasons.append("short")
        path, endpoint = _path_lengths(t)
        if path / max(endpoint, 0.1) > cfg.winding_max or endpoint < cfg.min_displacement:
            reasons.append("winding")
        thin = 0
        for s in t.states:
            w, h = s.bbox.width, s.bbox.height
            aspect = max(w, h) / max(min(w, h), 1)
            if aspect > cfg.thin_aspect and s.bbox.area < cfg.thin_area_px:
                thin += 1
        if thin / n >= cfg.thin_frac:
            reasons.append("thin")
        if reasons:
            log.append({"track_id": t.track_id, "reasons": reasons})
        else:
            kept.append(t)
    return kept, log
