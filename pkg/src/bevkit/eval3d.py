"""Scoring of predicted cuboids against ground truth.

Volume IoU treats boxes as yaw-rotated prisms: exact rotated-rectangle
intersection in BEV times the z-interval overlap. Front and side IoUs are
axis-aligned projections (the footprint's y or x extent swept over z).
Results are bucketed by class and by horizontal distance from the sensor.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .box3d import Box3D
from .errors import DegenerateBox, MalformedRow
from .geom import intersection_area, polygon_area, rect_iou

CLASS_KEYS = ("Overall", "Vehicle", "Pedestrian")
RANGE_KEYS = ("overall", "le15m", "gt15m")
TILT_LIMIT_RAD = 0.05


@dataclass(frozen=True)
class GtAnnotation:
    frame_id: int
    label: str
    box: Box3D
    tilt: tuple[float, float] = (0.0, 0.0)   # x_rot, y_rot as annotated


def load_gt_jsonl(path) -> list[GtAnnotation]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                label = rec["class"]
                if label not in ("Vehicle", "Pedestrian"):
                    raise ValueError(f"unknown class {label!r}")
                vals = [float(v) for v in rec["box"]]
                if len(vals) != 9:
                    raise ValueError(f"box has {len(vals)} values, need 9")
                box = Box3D.from_tuple9(vals)
                out.append(GtAnnotation(
                    frame_id=int(rec["frame_id"]), label=label, box=box,
                    tilt=(vals[6], vals[7]),
                ))
            except (KeyError, ValueError, TypeError) as e:
                raise MalformedRow(path, lineno, str(e)) from None
    return out


def save_gt_jsonl(annotations: list[GtAnnotation], path) -> None:
    with open(path, "w") as fh:
        for a in annotations:
            box = a.box.to_tuple9()
            box[6], box[7] = a.tilt
            fh.write(json.dumps(
                {"frame_id": a.frame_id, "class": a.label, "box": box}
            ) + "\n")


def _bev_area(box: Box3D) -> float:
    # shoelace over the actual corners, so identical boxes cancel exactly
    return polygon_area(box.corners_bev())


def _z_overlap(a: Box3D, b: Box3D) -> float:
    lo = max(a.z_interval[0], b.z_interval[0])
    hi = min(a.z_interval[1], b.z_interval[1])
    return max(0.0, hi - lo)


def volume_iou(a: Box3D, b: Box3D) -> float:
    area_a, area_b = _bev_area(a), _bev_area(b)
    vol_a, vol_b = area_a * a.dims[2], area_b * b.dims[2]
    if vol_a <= 0 or vol_b <= 0:
        raise DegenerateBox(f"non-positive volume: {vol_a}, {vol_b}")
    inter = intersection_area(a.corners_bev(), b.corners_bev()) * _z_overlap(a, b)
    return inter / (vol_a + vol_b - inter)


def view_iou(a: Box3D, b: Box3D, view: str) -> float:
    if view == "bev":
        area_a, area_b = _bev_area(a), _bev_area(b)
        if area_a <= 0 or area_b <= 0:
            raise DegenerateBox(f"non-positive footprint: {area_a}, {area_b}")
        inter = intersection_area(a.corners_bev(), b.corners_bev())
        return inter / (area_a + area_b - inter)
    if view in ("front", "side"):
        axis = 1 if view == "front" else 0     # front projects onto (y, z)
        ra = _projection_rect(a, axis)
        rb = _projection_rect(b, axis)
        return rect_iou(ra, rb)
    raise ValueError(f"unknown view {view!r}, want bev|front|side")


def _projection_rect(box: Box3D, axis: int) -> tuple[float, float, float, float]:
    coords = box.corners_bev()[:, axis]
    z0, z1 = box.z_interval
    return (float(coords.min()), z0, float(coords.max()), z1)


def match_boxes(
    preds: list[Box3D], gts: list[Box3D], min_iou: float = 0.1
) -> tuple[list[tuple[int, int, float]], list[int], list[int]]:
    """Greedy one-to-one matching by descending BEV IoU.

    Returns (pairs as (pred_idx, gt_idx, bev_iou), unmatched pred indices,
    unmatched gt indices). Ties resolve by lowest pred then gt index.
    """
    candidates = []
    for pi, p in enumerate(preds):
        for gi, g in enumerate(gts):
            iou = view_iou(p, g, "bev")
            if iou >= min_iou:
                candidates.append((-iou, pi, gi))
    candidates.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for neg_iou, pi, gi in candidates:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        pairs.append((pi, gi, -neg_iou))
    un_p = [i for i in range(len(preds)) if i not in used_p]
    un_g = [i for i in range(len(gts)) if i not in used_g]
    return pairs, un_p, un_g


@dataclass
class PairRecord:
    """Everything one matched pred/GT pair contributes to the tables."""

    frame_id: int
    label: str
    gt_range_m: float
    iou_volume: float
    iou_front: float
    iou_bev: float
    iou_side: float
    center_diff: tuple[float, float, float]   # |delta| per coordinate
    dim_diff: tuple[float, float, float]
    gt_center: tuple[float, float, float]
    gt_dims: tuple[float, float, float]


@dataclass
class EvalReport:
    buckets: dict
    pairs: list[PairRecord] = field(default_factory=list)
    skipped_tilted: int = 0
    range_split_m: float = 15.0
    min_match_iou: float = 0.1

    def to_json(self) -> str:
        doc = {
            "note": "front/side IoUs use axis-aligned projections",
            "range_split_m": self.range_split_m,
            "min_match_iou": self.min_match_iou,
            "skipped_tilted_gt": self.skipped_tilted,
            "buckets": self.buckets,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            "class       range     n_match n_miss n_fp  volIoU frontIoU bevIoU sideIoU",
        ]
        for ck in CLASS_KEYS:
            for rk in RANGE_KEYS:
                b = self.buckets[ck][rk]
                ious = b["iou"]
                def cell(v):
                    return "     -" if v is None else f"{v:6.3f}"
                lines.append(
                    f"{ck:<11} {rk:<9} {b['matched']:>7} {b['missed']:>6} "
                    f"{b['false_positives']:>4} {cell(ious['volume'])} "
                    f"{cell(ious['front']):>8} {cell(ious['bev'])} {cell(ious['side'])}"
                )
        return "\n".join(lines) + "\n"


def _range_key(dist: float, split: float) -> str:
    return "le15m" if dist <= split else "gt15m"


def _bucket_keys(label: str, range_key: str):
    for ck in ("Overall", label):
        for rk in ("overall", range_key):
            yield ck, rk


def evaluate(
    preds_by_frame: dict[int, list[tuple[str, Box3D]]],
    gts: list[GtAnnotation],
    min_match_iou: float = 0.1,
    range_split_m: float = 15.0,
) -> EvalReport:
    """Match per frame and reduce into class x range buckets.

    preds_by_frame maps frame_id to (class label, box) pairs. GT entries
    tilted beyond TILT_LIMIT_RAD are skipped with a warning: evaluation
    geometry is yaw-only.
    """
    usable: dict[int, list[GtAnnotation]] = {}
    skipped = 0
    for g in gts:
        if max(abs(g.tilt[0]), abs(g.tilt[1])) >= TILT_LIMIT_RAD:
            warnings.warn(
                f"frame {g.frame_id}: GT tilt {g.tilt} exceeds "
                f"{TILT_LIMIT_RAD} rad, skipping", stacklevel=2,
            )
            skipped += 1
            continue
        usable.setdefault(g.frame_id, []).append(g)

    records: list[PairRecord] = []
    misses: list[tuple[str, float]] = []      # (label, range)
    falses: list[tuple[str, float]] = []
    frame_ids = sorted(set(usable) | set(preds_by_frame))
    for fid in frame_ids:
        frame_gts = usable.get(fid, [])
        frame_preds = preds_by_frame.get(fid, [])
        pairs, un_p, un_g = match_boxes(
            [p for _, p in frame_preds], [g.box for g in frame_gts], min_match_iou
        )
        for pi, gi, _ in pairs:
            gt = frame_gts[gi]
            pred = frame_preds[pi][1]
            gb, pb = gt.box, pred
            records.append(PairRecord(
                frame_id=fid,
                label=gt.label,
                gt_range_m=math.hypot(gb.center[0], gb.center[1]),
                iou_volume=volume_iou(pb, gb),
                iou_front=view_iou(pb, gb, "front"),
                iou_bev=view_iou(pb, gb, "bev"),
                iou_side=view_iou(pb, gb, "side"),
                center_diff=tuple(abs(pb.center[i] - gb.center[i]) for i in range(3)),
                dim_diff=tuple(abs(pb.dims[i] - gb.dims[i]) for i in range(3)),
                gt_center=gb.center,
                gt_dims=gb.dims,
            ))
        for gi in un_g:
            g = frame_gts[gi]
            misses.append((g.label, math.hypot(g.box.center[0], g.box.center[1])))
        for pi in un_p:
            label, box = frame_preds[pi]
            falses.append((label, math.hypot(box.center[0], box.center[1])))

    buckets = {
        ck: {rk: _empty_bucket() for rk in RANGE_KEYS} for ck in CLASS_KEYS
    }
    for r in records:
        for ck, rk in _bucket_keys(r.label, _range_key(r.gt_range_m, range_split_m)):
            _add_pair(buckets[ck][rk], r)
    for label, dist in misses:
        for ck, rk in _bucket_keys(label, _range_key(dist, range_split_m)):
            buckets[ck][rk]["missed"] += 1
    for label, dist in falses:
        for ck, rk in _bucket_keys(label, _range_key(dist, range_split_m)):
            buckets[ck][rk]["false_positives"] += 1
    for ck in CLASS_KEYS:
        for rk in RANGE_KEYS:
            _finalize_bucket(buckets[ck][rk])

    return EvalReport(
        buckets=buckets, pairs=records, skipped_tilted=skipped,
        range_split_m=range_split_m, min_match_iou=min_match_iou,
    )


def _empty_bucket() -> dict:
    return {
        "matched": 0,
        "missed": 0,
        "false_positives": 0,
        "_acc": {"vol": [], "front": [], "bev": [], "side": [],
                 "dc": [], "dd": [], "gc": [], "gd": []},
    }


def _add_pair(bucket: dict, r: PairRecord) -> None:
    bucket["matched"] += 1
    acc = bucket["_acc"]
    acc["vol"].append(r.iou_volume)
    acc["front"].append(r.iou_front)
    acc["bev"].append(r.iou_bev)
    acc["side"].append(r.iou_side)
    acc["dc"].append(r.center_diff)
    acc["dd"].append(r.dim_diff)
    acc["gc"].append(r.gt_center)
    acc["gd"].append(r.gt_dims)


def _finalize_bucket(bucket: dict) -> None:
    acc = bucket.pop("_acc")
    n = bucket["matched"]
    if n == 0:
        bucket["iou"] = {"volume": None, "front": None, "bev": None, "side": None}
        bucket["center_abs_diff"] = None
        bucket["dim_abs_diff"] = None
        return
    bucket["iou"] = {
        "volume": float(np.mean(acc["vol"])),
        "front": float(np.mean(acc["front"])),
        "bev": float(np.mean(acc["bev"])),
        "side": float(np.mean(acc["side"])),
    }
    dc = np.asarray(acc["dc"])
    dd = np.asarray(acc["dd"])
    gc = np.abs(np.asarray(acc["gc"]))
    gd = np.abs(np.asarray(acc["gd"]))
    # percent columns normalize by the bucket's mean GT magnitude
    bucket["center_abs_diff"] = _diff_block(dc, gc, ("x", "y", "z"))
    bucket["dim_abs_diff"] = _diff_block(dd, gd, ("x_len", "y_len", "z_len"))


def _diff_block(diffs: np.ndarray, gt_mags: np.ndarray, names) -> dict:
    out = {}
    for i, name in enumerate(names):
        mean_diff = float(diffs[:, i].mean())
        denom = float(gt_mags[:, i].mean())
        out[name] = {
            "mean": mean_diff,
            "percent": (mean_diff / denom * 100.0) if denom > 0 else None,
        }
    return out


def write_report(report: EvalReport, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "eval.json").write_text(report.to_json())
    (directory / "eval.txt").write_text(report.to_text())
