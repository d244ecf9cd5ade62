"""Rotated-box IoU scoring, matching, and bucketed report assembly."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from bevkit.box3d import Box3D
from bevkit.errors import MalformedRow
from bevkit.eval3d import (
    GtAnnotation,
    evaluate,
    load_gt_jsonl,
    match_boxes,
    save_gt_jsonl,
    view_iou,
    volume_iou,
    write_report,
)


def _box(x, y, z, xl, yl, zl, yaw=0.0):
    return Box3D(center=(x, y, z), dims=(xl, yl, zl), yaw=yaw)


def _in_box(pts, box):
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = pts[:, 0] - box.center[0]
    dy = pts[:, 1] - box.center[1]
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    lz = pts[:, 2] - box.center[2]
    return (
        (np.abs(lx) <= box.dims[0] / 2)
        & (np.abs(ly) <= box.dims[1] / 2)
        & (np.abs(lz) <= box.dims[2] / 2)
    )


def _mc_volume_iou(a, b, n, seed):
    """Monte Carlo volume IoU over the joint bounding box."""
    rng = np.random.default_rng(seed)
    ca = a.corners_bev()
    cb = b.corners_bev()
    lo = [
        min(ca[:, 0].min(), cb[:, 0].min()),
        min(ca[:, 1].min(), cb[:, 1].min()),
        min(a.z_interval[0], b.z_interval[0]),
    ]
    hi = [
        max(ca[:, 0].max(), cb[:, 0].max()),
        max(ca[:, 1].max(), cb[:, 1].max()),
        max(a.z_interval[1], b.z_interval[1]),
    ]
    pts = rng.uniform(lo, hi, size=(n, 3))
    inter = float((_in_box(pts, a) & _in_box(pts, b)).mean()) * float(
        np.prod(np.asarray(hi) - np.asarray(lo))
    )
    va, vb = a.volume, b.volume
    return inter / (va + vb - inter)


def test_identical_boxes_score_one():
    a = _box(3.0, -2.0, 0.5, 4.2, 1.8, 1.5, yaw=0.6)
    assert volume_iou(a, a) == pytest.approx(1.0, abs=1e-12)
    for view in ("bev", "front", "side"):
        assert view_iou(a, a, view) == pytest.approx(1.0, abs=1e-12)


def test_disjoint_boxes_score_zero():
    a = _box(0.0, 0.0, 0.0, 2.0, 2.0, 2.0)
    b = _box(10.0, 0.0, 0.0, 2.0, 2.0, 2.0)
    assert volume_iou(a, b) == 0.0
    assert view_iou(a, b, "bev") == 0.0


def test_half_offset_cube_is_one_third():
    a = _box(0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
    for axis in range(3):
        center = [0.0, 0.0, 0.0]
        center[axis] = 0.5
        b = _box(*center, 1.0, 1.0, 1.0)
        assert volume_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_z_disjoint_kills_volume_overlap():
    a = _box(0.0, 0.0, 0.0, 2.0, 2.0, 1.0)
    b = _box(0.0, 0.0, 5.0, 2.0, 2.0, 1.0)
    assert volume_iou(a, b) == 0.0
    assert view_iou(a, b, "bev") == pytest.approx(1.0, abs=1e-12)


def test_rotated_pairs_match_monte_carlo():
    rng = np.random.default_rng(19)
    for trial in range(4):
        a = _box(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, yaw=float(rng.uniform(-1.5, 1.5)))
        b = _box(
            float(rng.uniform(-1.5, 1.5)),
            float(rng.uniform(-1.5, 1.5)),
            float(rng.uniform(-0.5, 0.5)),
            3.0, 1.8, 1.2,
            yaw=float(rng.uniform(-1.5, 1.5)),
        )
        got = volume_iou(a, b)
        want = _mc_volume_iou(a, b, 150_000, seed=100 + trial)
        assert got == pytest.approx(want, abs=0.02)


def test_iou_symmetry():
    a = _box(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, yaw=0.3)
    b = _box(1.0, 0.5, 0.2, 3.0, 1.8, 1.2, yaw=-0.4)
    assert volume_iou(a, b) == pytest.approx(volume_iou(b, a), abs=1e-12)
    for view in ("bev", "front", "side"):
        assert view_iou(a, b, view) == pytest.approx(view_iou(b, a, view), abs=1e-12)


def test_iou_invariant_under_shared_rotation_about_center():
    # co-centered boxes only care about relative yaw
    base = volume_iou(
        _box(0, 0, 0, 4, 2, 1.5, yaw=0.0), _box(0, 0, 0, 3, 1.8, 1.2, yaw=0.5)
    )
    for delta in (0.3, -0.7, 1.1):
        rotated = volume_iou(
            _box(0, 0, 0, 4, 2, 1.5, yaw=delta),
            _box(0, 0, 0, 3, 1.8, 1.2, yaw=0.5 + delta),
        )
        assert rotated == pytest.approx(base, abs=1e-9)


def test_iou_scale_invariant():
    a = _box(1.0, 2.0, 0.5, 4.0, 2.0, 1.5, yaw=0.4)
    b = _box(2.0, 2.5, 0.7, 3.0, 1.8, 1.2, yaw=-0.2)
    base = volume_iou(a, b)
    for s in (0.5, 2.0, 10.0):
        sa = _box(1.0 * s, 2.0 * s, 0.5 * s, 4.0 * s, 2.0 * s, 1.5 * s, yaw=0.4)
        sb = _box(2.0 * s, 2.5 * s, 0.7 * s, 3.0 * s, 1.8 * s, 1.2 * s, yaw=-0.2)
        assert volume_iou(sa, sb) == pytest.approx(base, abs=1e-9)


def test_front_and_side_projections():
    # front collapses x, side collapses y
    a = _box(0.0, 0.0, 0.5, 4.0, 2.0, 1.0)
    b = _box(9.0, 1.0, 0.5, 4.0, 2.0, 1.0)
    assert view_iou(a, b, "front") == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert view_iou(a, b, "side") == 0.0
    with pytest.raises(ValueError):
        view_iou(a, b, "top")


def test_two_preds_one_gt_keeps_best():
    gt = _box(0.0, 0.0, 0.0, 4.0, 2.0, 1.5)
    close = _box(0.1, 0.0, 0.0, 4.0, 2.0, 1.5)
    far = _box(1.5, 0.5, 0.0, 4.0, 2.0, 1.5)
    pairs, un_p, un_g = match_boxes([far, close], [gt])
    assert len(pairs) == 1
    assert pairs[0][0] == 1 and pairs[0][1] == 0
    assert un_p == [0] and un_g == []


def test_match_below_threshold_left_out():
    gt = _box(0.0, 0.0, 0.0, 2.0, 2.0, 2.0)
    pred = _box(1.9, 1.9, 0.0, 2.0, 2.0, 2.0)
    pairs, un_p, un_g = match_boxes([pred], [gt], min_iou=0.1)
    assert pairs == []
    assert un_p == [0] and un_g == [0]


def _aabb_bev_iou(a, b):
    iw = min(a.center[0] + a.dims[0] / 2, b.center[0] + b.dims[0] / 2) - max(
        a.center[0] - a.dims[0] / 2, b.center[0] - b.dims[0] / 2
    )
    ih = min(a.center[1] + a.dims[1] / 2, b.center[1] + b.dims[1] / 2) - max(
        a.center[1] - a.dims[1] / 2, b.center[1] - b.dims[1] / 2
    )
    inter = max(0.0, iw) * max(0.0, ih)
    union = a.dims[0] * a.dims[1] + b.dims[0] * b.dims[1] - inter
    return inter / union


def test_greedy_matching_against_reference():
    rng = np.random.default_rng(29)
    for _ in range(25):
        preds = [
            _box(float(x), float(y), 0.0, 2.0, 2.0, 1.0)
            for x, y in rng.uniform(0, 8, size=(5, 2))
        ]
        gts = [
            _box(float(x), float(y), 0.0, 2.0, 2.0, 1.0)
            for x, y in rng.uniform(0, 8, size=(5, 2))
        ]
        got_pairs, got_un_p, got_un_g = match_boxes(preds, gts, min_iou=0.1)

        cands = []
        for pi, p in enumerate(preds):
            for gi, g in enumerate(gts):
                v = _aabb_bev_iou(p, g)
                if v >= 0.1:
                    cands.append((-v, pi, gi))
        cands.sort()
        used_p, used_g, want = set(), set(), []
        for nv, pi, gi in cands:
            if pi in used_p or gi in used_g:
                continue
            used_p.add(pi)
            used_g.add(gi)
            want.append((pi, gi, -nv))
        assert [(p, g) for p, g, _ in got_pairs] == [(p, g) for p, g, _ in want]
        assert [v for _, _, v in got_pairs] == pytest.approx(
            [v for _, _, v in want], abs=1e-9
        )
        assert got_un_p == sorted(set(range(5)) - used_p)
        assert got_un_g == sorted(set(range(5)) - used_g)


def _gt(frame_id, label, box):
    return GtAnnotation(frame_id=frame_id, label=label, box=box)


def test_single_exact_match_report():
    box = _box(5.0, 0.0, -1.25, 4.2, 1.8, 1.5, yaw=0.2)
    report = evaluate({0: [("Vehicle", box)]}, [_gt(0, "Vehicle", box)])
    for ck in ("Overall", "Vehicle"):
        for rk in ("overall", "le15m"):
            b = report.buckets[ck][rk]
            assert b["matched"] == 1
            assert b["missed"] == 0 and b["false_positives"] == 0
            assert b["iou"]["volume"] == pytest.approx(1.0, abs=1e-12)
            assert b["center_abs_diff"]["x"]["mean"] == 0.0
            assert b["dim_abs_diff"]["z_len"]["percent"] == 0.0
    assert report.buckets["Vehicle"]["gt15m"]["matched"] == 0
    assert report.buckets["Vehicle"]["gt15m"]["iou"]["volume"] is None
    assert report.buckets["Pedestrian"]["overall"]["matched"] == 0


def test_range_split_is_inclusive_at_boundary():
    near = _box(9.0, 12.0, 0.0, 4.0, 2.0, 1.5)    # hypot = 15.0 exactly
    far = _box(15.1, 0.0, 0.0, 4.0, 2.0, 1.5)
    report = evaluate(
        {0: [("Vehicle", near)], 1: [("Vehicle", far)]},
        [_gt(0, "Vehicle", near), _gt(1, "Vehicle", far)],
    )
    assert report.buckets["Vehicle"]["le15m"]["matched"] == 1
    assert report.buckets["Vehicle"]["gt15m"]["matched"] == 1


def test_bucket_counts_are_consistent():
    rng = np.random.default_rng(31)
    gts, preds = [], {}
    for fid in range(6):
        frame_preds = []
        for _ in range(int(rng.integers(0, 4))):
            x, y = rng.uniform(-25, 25, size=2)
            label = "Vehicle" if rng.random() < 0.5 else "Pedestrian"
            dims = (4.0, 2.0, 1.5) if label == "Vehicle" else (0.6, 0.6, 1.7)
            box = _box(float(x), float(y), 0.0, *dims)
            gts.append(_gt(fid, label, box))
            if rng.random() < 0.7:
                shifted = _box(float(x) + 0.2, float(y), 0.0, *dims)
                frame_preds.append((label, shifted))
        if rng.random() < 0.3:
            frame_preds.append(("Vehicle", _box(40.0, 40.0, 0.0, 4.0, 2.0, 1.5)))
        preds[fid] = frame_preds
    report = evaluate(preds, gts)
    b = report.buckets
    for ck in ("Overall", "Vehicle", "Pedestrian"):
        for key in ("matched", "missed", "false_positives"):
            assert b[ck]["overall"][key] == b[ck]["le15m"][key] + b[ck]["gt15m"][key]
    for rk in ("overall", "le15m", "gt15m"):
        for key in ("matched", "missed", "false_positives"):
            assert (
                b["Overall"][rk][key]
                == b["Vehicle"][rk][key] + b["Pedestrian"][rk][key]
            )
    n_gt = len(gts)
    assert b["Overall"]["overall"]["matched"] + b["Overall"]["overall"]["missed"] == n_gt


def test_tilted_gt_skipped_with_warning():
    box = _box(5.0, 0.0, 0.0, 4.0, 2.0, 1.5)
    tilted = GtAnnotation(frame_id=0, label="Vehicle", box=box, tilt=(0.06, 0.0))
    with pytest.warns(UserWarning):
        report = evaluate({0: [("Vehicle", box)]}, [tilted])
    assert report.skipped_tilted == 1
    assert report.buckets["Overall"]["overall"]["matched"] == 0
    assert report.buckets["Overall"]["overall"]["false_positives"] == 1


def test_unmatched_entries_counted():
    gt_box = _box(5.0, 0.0, 0.0, 4.0, 2.0, 1.5)
    fp_box = _box(-20.0, 5.0, 0.0, 4.0, 2.0, 1.5)
    report = evaluate({0: [("Vehicle", fp_box)]}, [_gt(0, "Vehicle", gt_box)])
    b = report.buckets["Vehicle"]
    assert b["overall"]["missed"] == 1
    assert b["overall"]["false_positives"] == 1
    assert b["le15m"]["missed"] == 1
    assert b["gt15m"]["false_positives"] == 1


def test_gt_jsonl_round_trip(tmp_path):
    anns = [
        _gt(0, "Vehicle", _box(1.0, 2.0, 0.5, 4.2, 1.8, 1.5, yaw=0.3)),
        _gt(1, "Pedestrian", _box(-3.0, 4.0, -1.0, 0.6, 0.6, 1.7)),
    ]
    path = tmp_path / "gt.jsonl"
    save_gt_jsonl(anns, path)
    back = load_gt_jsonl(path)
    assert back == anns


def test_gt_jsonl_malformed_rows_rejected(tmp_path):
    good = json.dumps(
        {"frame_id": 0, "class": "Vehicle",
         "box": [0, 0, 0, 4, 2, 1.5, 0, 0, 0]}
    )
    cases = [
        '{"frame_id": 0, "class": "Bicycle", "box": [0,0,0,4,2,1.5,0,0,0]}',
        '{"frame_id": 0, "class": "Vehicle", "box": [0,0,0,4,2,1.5,0,0]}',
        '{"frame_id": 0, "class": "Vehicle"}',
    ]
    for bad in cases:
        path = tmp_path / "gt.jsonl"
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(MalformedRow) as exc:
            load_gt_jsonl(path)
        assert exc.value.row == 2


def test_write_report_files(tmp_path):
    box = _box(5.0, 0.0, 0.0, 4.0, 2.0, 1.5)
    report = evaluate({0: [("Vehicle", box)]}, [_gt(0, "Vehicle", box)])
    write_report(report, tmp_path / "eval")
    doc = json.loads((tmp_path / "eval" / "eval.json").read_text())
    assert doc["buckets"]["Vehicle"]["le15m"]["matched"] == 1
    assert doc["range_split_m"] == 15.0
    text = (tmp_path / "eval" / "eval.txt").read_text()
    assert len(text.strip().splitlines()) == 1 + 9
