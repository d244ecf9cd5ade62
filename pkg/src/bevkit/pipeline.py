"""Stage orchestration and artifact I/O.

Every stage writes its results under the output directory and the next stage
reads them back from disk, so a later subcommand resumed from saved artifacts
sees byte-for-byte what the full run saw. JSON carries floats at full repr
precision; grids round-trip through PGM (binary) or %.17g CSV.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .background import (
    BackgroundModel,
    complete_background,
    estimate_background,
    pcc,
    subtract,
)
from .bev import BevImage, rasterize, read_pgm, write_pgm
from .box3d import Box3D, Footprint, median_smooth_dims, object_height, oriented_footprint
from .config import PipelineConfig, config_to_dict
from .errors import (
    BevkitError,
    NoFrames,
    NonPositiveDim,
    OutOfGrid,
    TooFewPoints,
    TooShort,
    UnknownGround,
)
from .eval3d import EvalReport, evaluate, load_gt_jsonl, write_report
from .frames import Frame, SequenceMeta, load_sequence
from .groundmap import GroundHeightMap, build_ground_map, load_ground_map, save_ground_map
from .segment import BBox2D, Detection, ExternalSegmenter, make_segmenter, nms
from .track import filter_tracks, run_tracker
from .traffic import (
    ClassLabel,
    classify_track,
    count_by_class,
    describe_stats,
    track_kinematics,
)


def worker_count() -> int:
    """Frame-parallel worker pool size; BEVKIT_THREADS caps it."""
    default = min(8, os.cpu_count() or 1)
    cap = os.environ.get("BEVKIT_THREADS", "").strip()
    if cap:
        try:
            return max(1, min(int(cap), default))
        except ValueError:
            raise BevkitError(f"BEVKIT_THREADS={cap!r} is not an integer") from None
    return default


class Artifacts:
    """Canonical on-disk layout of one pipeline run."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def bev_dir(self) -> Path:
        return self.root / "bev"

    @property
    def background_dir(self) -> Path:
        return self.root / "background"

    @property
    def detections_path(self) -> Path:
        return self.root / "detections.jsonl"

    @property
    def tracks_path(self) -> Path:
        return self.root / "tracks.jsonl"

    @property
    def track_filter_log_path(self) -> Path:
        return self.root / "track_filter_log.json"

    @property
    def ground_dir(self) -> Path:
        return self.root / "ground"

    @property
    def boxes_path(self) -> Path:
        return self.root / "boxes.jsonl"

    @property
    def boxes_raw_path(self) -> Path:
        return self.root / "boxes_raw.jsonl"

    @property
    def params_path(self) -> Path:
        return self.root / "params.csv"

    @property
    def stats_path(self) -> Path:
        return self.root / "stats.json"

    @property
    def eval_dir(self) -> Path:
        return self.root / "eval"

    @property
    def plots_dir(self) -> Path:
        return self.root / "plots"

    @property
    def summary_path(self) -> Path:
        return self.root / "summary.json"

    def ensure_root(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)


def write_effective_config(cfg: PipelineConfig, art: Artifacts) -> None:
    art.ensure_root()
    art.config_path.write_text(
        json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
    )


# --- frames ----------------------------------------------------------------

def stage_frames(cfg: PipelineConfig) -> tuple[SequenceMeta, list[Frame]]:
    if not cfg.input_dir:
        raise NoFrames("no input directory configured")
    directory = Path(cfg.input_dir)
    if not directory.is_dir():
        raise NoFrames(f"input directory {directory} does not exist")
    return load_sequence(directory)


# --- rasterize -------------------------------------------------------------

def stage_rasterize(cfg: PipelineConfig, frames: list[Frame],
                    art: Artifacts | None = None) -> list[BevImage]:
    with ThreadPoolExecutor(worker_count()) as ex:
        images = list(ex.map(lambda f: rasterize(f, cfg.bev), frames))
    if art is not None:
        art.bev_dir.mkdir(parents=True, exist_ok=True)
        for img in images:
            write_pgm(art.bev_dir / f"frame_{img.frame_id:04d}.pgm", img.occupancy)
    return images


# --- background ------------------------------------------------------------

def stage_background(
    cfg: PipelineConfig,
    images: list[BevImage],
    art: Artifacts,
    segmenter=None,
) -> tuple[BackgroundModel, np.ndarray]:
    bg = estimate_background(images, cfg.tau_bg)
    completed = complete_background(bg, cfg.pcc, segmenter)
    d = art.background_dir
    d.mkdir(parents=True, exist_ok=True)
    np.savetxt(d / "frequency.csv", bg.frequency, fmt="%.17g", delimiter=",")
    write_pgm(d / "mask.pgm", bg.mask)
    write_pgm(d / "completed.pgm", completed)
    (d / "background.json").write_text(json.dumps(
        {"tau_bg": bg.tau_bg, "frames_used": bg.frames_used}, indent=2,
        sort_keys=True,
    ) + "\n")
    return bg, completed


def load_background(art: Artifacts) -> tuple[BackgroundModel, np.ndarray]:
    d = art.background_dir
    meta = json.loads((d / "background.json").read_text())
    frequency = np.loadtxt(d / "frequency.csv", delimiter=",", ndmin=2)
    bg = BackgroundModel(frequency=frequency, tau_bg=meta["tau_bg"],
                         frames_used=meta["frames_used"])
    completed = read_pgm(d / "completed.pgm")
    return bg, completed


def has_background(art: Artifacts) -> bool:
    return (art.background_dir / "completed.pgm").exists()


# --- detect ----------------------------------------------------------------

def stage_detect(
    cfg: PipelineConfig,
    frames: list[Frame],
    bg: BackgroundModel,
    art: Artifacts,
    segmenter=None,
) -> dict[int, list[Detection]]:
    own = segmenter is None
    if own:
        segmenter = make_segmenter(cfg.segmenter.kind,
                                   min_area_px=cfg.segmenter.min_area_px,
                                   timeout_s=cfg.segmenter.timeout_s)
    try:
        def per_frame(frame: Frame) -> tuple[int, list[Detection]]:
            img = rasterize(frame, cfg.bev)
            fg = subtract(img, bg)
            completed_fg = pcc(fg, cfg.pcc)
            dets = segmenter.segment(completed_fg, frame.frame_id)
            return frame.frame_id, nms(dets, cfg.segmenter.nms_iou)

        # the wire protocol allows one request in flight, so external
        # segmenters force a serial walk
        if isinstance(segmenter, ExternalSegmenter):
            results = [per_frame(f) for f in frames]
        else:
            with ThreadPoolExecutor(worker_count()) as ex:
                results = list(ex.map(per_frame, frames))
    finally:
        if own and hasattr(segmenter, "close"):
            segmenter.close()
    dets_by_frame = dict(results)
    save_detections(dets_by_frame, art.detections_path)
    return dets_by_frame


def save_detections(dets_by_frame: dict[int, list[Detection]], path) -> None:
    with open(path, "w") as fh:
        for fid in sorted(dets_by_frame):
            for det in dets_by_frame[fid]:
                fh.write(json.dumps({
                    "frame_id": fid,
                    "bbox": list(det.bbox.as_tuple()),
                    "score": det.score,
                    "mask_rle": list(det.mask_rle),
                }) + "\n")


def load_detections(path) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            det = Detection(
                frame_id=int(rec["frame_id"]),
                bbox=BBox2D(*rec["bbox"]),
                score=float(rec["score"]),
                mask_rle=tuple(int(r) for r in rec["mask_rle"]),
            )
            out.setdefault(det.frame_id, []).append(det)
    return out


# --- track -----------------------------------------------------------------

@dataclass
class StateRecord:
    frame_id: int
    bbox: tuple[int, int, int, int]
    x: float
    y: float


@dataclass
class TrackRecord:
    track_id: int
    label: str
    states: list[StateRecord]


def stage_track(
    cfg: PipelineConfig,
    dets_by_frame: dict[int, list[Detection]],
    frame_count: int,
    art: Artifacts,
) -> list[TrackRecord]:
    frame_dets = sorted(dets_by_frame.items())
    tracks = run_tracker(frame_dets, cfg.tracker, cfg.bev)
    kept, removal_log = filter_tracks(tracks, frame_count, cfg.track_filter)

    records = []
    for t in kept:
        areas = []
        for s in t.states:
            fp = oriented_footprint(s.detection.pixels(), cfg.bev)
            areas.append(fp.length * fp.width)
        label = classify_track(areas, cfg.area_threshold)
        records.append(TrackRecord(
            track_id=t.track_id,
            label=label.value,
            states=[StateRecord(s.frame_id, s.bbox.as_tuple(), s.x, s.y)
                    for s in t.states],
        ))

    with open(art.tracks_path, "w") as fh:
        for r in records:
            fh.write(json.dumps({
                "track_id": r.track_id,
                "class": r.label,
                "states": [
                    {"frame_id": s.frame_id, "bbox": list(s.bbox),
                     "x": s.x, "y": s.y}
                    for s in r.states
                ],
            }) + "\n")
    art.track_filter_log_path.write_text(json.dumps(
        {"kept": len(records), "removed": removal_log}, indent=2, sort_keys=True,
    ) + "\n")
    return records


def load_tracks(path) -> list[TrackRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(TrackRecord(
                track_id=int(rec["track_id"]),
                label=rec["class"],
                states=[StateRecord(int(s["frame_id"]), tuple(s["bbox"]),
                                    float(s["x"]), float(s["y"]))
                        for s in rec["states"]],
            ))
    return out


# --- ground ----------------------------------------------------------------

def stage_ground(
    cfg: PipelineConfig,
    frames: list[Frame],
    completed_bg: np.ndarray,
    art: Artifacts,
) -> GroundHeightMap:
    gmap = build_ground_map(cfg.bev, completed_bg, frames, cfg.ground)
    save_ground_map(gmap, art.ground_dir)
    return gmap


# --- boxes -----------------------------------------------------------------

def stage_boxes(
    cfg: PipelineConfig,
    frames: list[Frame],
    track_records: list[TrackRecord],
    dets_by_frame: dict[int, list[Detection]],
    gmap: GroundHeightMap,
    art: Artifacts,
) -> list[dict]:
    frame_by_id = {f.frame_id: f for f in frames}
    det_index: dict[tuple[int, tuple[int, int, int, int]], Detection] = {}
    for fid, dets in dets_by_frame.items():
        for det in dets:
            det_index[(fid, det.bbox.as_tuple())] = det

    raw_rows: list[tuple[int, int, list[float]]] = []
    smooth_rows: list[tuple[int, int, list[float]]] = []
    for tr in track_records:
        fps: list[Footprint] = []
        gzs: list[float | None] = []
        heights: list[float | None] = []
        for st in tr.states:
            det = det_index[(st.frame_id, st.bbox)]
            fp = oriented_footprint(det.pixels(), cfg.bev)
            try:
                gz = gmap.query_height(fp.cx, fp.cy)
            except OutOfGrid:
                gz = None
            h = None
            if gz is not None:
                try:
                    h = object_height(frame_by_id[st.frame_id], fp, gmap,
                                      cfg.height)
                except (TooFewPoints, UnknownGround):
                    h = None
                if h is not None and h <= 0:
                    h = None
            fps.append(fp)
            gzs.append(gz)
            heights.append(h)

        known = [h for h in heights if h is not None]
        if not known:
            warnings.warn(
                f"track {tr.track_id}: no state yielded a height; no boxes",
                stacklevel=2,
            )
            continue
        fallback = float(np.median(known))
        filled = [h if h is not None else fallback for h in heights]
        raw_dims = [(fp.length, fp.width, h) for fp, h in zip(fps, filled)]
        smooth_dims = median_smooth_dims(raw_dims, window=5)

        for st, fp, gz, rd, sd in zip(tr.states, fps, gzs, raw_dims, smooth_dims):
            if gz is None:
                continue
            for rows, (length, width, h) in ((raw_rows, rd), (smooth_rows, sd)):
                try:
                    box = Box3D(center=(fp.cx, fp.cy, gz + h / 2.0),
                                dims=(length, width, h), yaw=fp.yaw)
                except NonPositiveDim:
                    continue
                rows.append((st.frame_id, tr.track_id, box.to_tuple9()))

    for rows, path in ((smooth_rows, art.boxes_path),
                       (raw_rows, art.boxes_raw_path)):
        rows.sort(key=lambda r: (r[0], r[1]))
        with open(path, "w") as fh:
            for fid, tid, box in rows:
                fh.write(json.dumps(
                    {"frame_id": fid, "track_id": tid, "box": box}
                ) + "\n")
    return [{"frame_id": f, "track_id": t, "box": b} for f, t, b in smooth_rows]


def load_boxes(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


# --- params ----------------------------------------------------------------

def _uniform_series(states: list[StateRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Resample a track's (frame, x, y) states onto every frame in its span.

    Gap frames (states missed by association) are filled by linear
    interpolation so finite differences see a constant time step.
    """
    fids = np.array([s.frame_id for s in states], dtype=float)
    xs = np.array([s.x for s in states])
    ys = np.array([s.y for s in states])
    full = np.arange(int(fids[0]), int(fids[-1]) + 1, dtype=float)
    return full.astype(int), np.column_stack(
        [np.interp(full, fids, xs), np.interp(full, fids, ys)]
    )


def stage_params(
    cfg: PipelineConfig,
    track_records: list[TrackRecord],
    frame_rate_hz: float,
    art: Artifacts,
) -> dict:
    rows: list[tuple[int, int, str, float, float, float, float, float]] = []
    samples: dict[str, dict[str, list[float]]] = {
        key: {"speed_ms": [], "speed_mph": [], "accel_ms2": []}
        for key in ("Overall", "Vehicle", "Pedestrian")
    }
    for tr in track_records:
        fids, xy = _uniform_series(tr.states)
        try:
            kin = track_kinematics(xy, frame_rate_hz, cfg.sigma_frames)
        except TooShort:
            warnings.warn(f"track {tr.track_id}: too short for kinematics",
                          stacklevel=2)
            continue
        for i, fid in enumerate(fids):
            rows.append((
                int(fid), tr.track_id, tr.label,
                float(kin.positions[i, 0]), float(kin.positions[i, 1]),
                float(kin.speeds[i]), float(kin.speeds_mph[i]),
                float(kin.accels[i]),
            ))
        for key in ("Overall", tr.label):
            samples[key]["speed_ms"].extend(kin.speeds.tolist())
            samples[key]["speed_mph"].extend(kin.speeds_mph.tolist())
            samples[key]["accel_ms2"].extend(kin.accels.tolist())

    rows.sort(key=lambda r: (r[0], r[1]))
    with open(art.params_path, "w") as fh:
        fh.write("frame_id,track_id,class,x,y,speed_ms,speed_mph,accel_ms2\n")
        for fid, tid, label, x, y, v, vmph, a in rows:
            fh.write(f"{fid},{tid},{label},{x:.6f},{y:.6f},"
                     f"{v:.6f},{vmph:.6f},{a:.6f}\n")

    counts = count_by_class(ClassLabel(tr.label) for tr in track_records)
    per_class = {}
    for key, series in samples.items():
        per_class[key] = {
            name: (describe_stats(vals) if vals else None)
            for name, vals in series.items()
        }
    stats = {"counts": counts, "per_class": per_class}
    art.stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return stats


# --- eval ------------------------------------------------------------------

def stage_eval(
    cfg: PipelineConfig,
    box_rows: list[dict],
    track_records: list[TrackRecord],
    art: Artifacts,
) -> EvalReport:
    if not cfg.eval.gt:
        raise BevkitError("eval requires a ground-truth path (eval.gt)")
    label_by_track = {tr.track_id: tr.label for tr in track_records}
    preds_by_frame: dict[int, list[tuple[str, Box3D]]] = {}
    for row in box_rows:
        label = label_by_track.get(row["track_id"], "Vehicle")
        preds_by_frame.setdefault(row["frame_id"], []).append(
            (label, Box3D.from_tuple9(row["box"]))
        )
    gts = load_gt_jsonl(cfg.eval.gt)
    report = evaluate(preds_by_frame, gts, cfg.eval.match_iou,
                      cfg.eval.range_split_m)
    write_report(report, art.eval_dir)
    return report


# --- full run --------------------------------------------------------------

def run_pipeline(cfg: PipelineConfig, out_dir) -> dict:
    """Execute every stage in order, reloading each artifact before use."""
    art = Artifacts(out_dir)
    art.ensure_root()
    write_effective_config(cfg, art)

    meta, frames = stage_frames(cfg)
    images = stage_rasterize(cfg, frames, art)
    bg, completed = stage_background(cfg, images, art)

    stage_detect(cfg, frames, bg, art)
    dets_by_frame = load_detections(art.detections_path)

    stage_track(cfg, dets_by_frame, len(frames), art)
    track_records = load_tracks(art.tracks_path)

    stage_ground(cfg, frames, completed, art)
    gmap = load_ground_map(art.ground_dir)

    stage_boxes(cfg, frames, track_records, dets_by_frame, gmap, art)
    box_rows = load_boxes(art.boxes_path)

    stats = stage_params(cfg, track_records, meta.frame_rate_hz, art)

    summary = {
        "frames": len(frames),
        "tracks": len(track_records),
        "counts": stats["counts"],
        "detections": int(sum(len(v) for v in dets_by_frame.values())),
    }
    if cfg.eval.gt:
        report = stage_eval(cfg, box_rows, track_records, art)
        overall = report.buckets["Overall"]["overall"]
        summary["eval"] = {
            "matched": overall["matched"],
            "missed": overall["missed"],
            "false_positives": overall["false_positives"],
            "volume_iou": overall["iou"]["volume"],
        }
    art.summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    return summary
