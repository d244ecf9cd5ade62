"""Connected-component detection, NMS, and the external segmenter channel."""

from __future__ import annotations

import sys
import textwrap

import numpy as np
import pytest

from bevkit.errors import EmptyMask, SegmenterProtocolError
from bevkit.segment import (
    BBox2D,
    ComponentSegmenter,
    ExternalSegmenter,
    bbox_iou,
    component_score,
    make_segmenter,
    nms,
)


def _flood_components(grid):
    """Reference 8-connected labelling by explicit stack flood fill."""
    g = np.asarray(grid) > 0
    seen = np.zeros_like(g)
    comps = []
    for sr in range(g.shape[0]):
        for sc in range(g.shape[1]):
            if not g[sr, sc] or seen[sr, sc]:
                continue
            stack = [(sr, sc)]
            seen[sr, sc] = True
            cells = []
            while stack:
                r, c = stack.pop()
                cells.append((r, c))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if (
                            0 <= rr < g.shape[0]
                            and 0 <= cc < g.shape[1]
                            and g[rr, cc]
                            and not seen[rr, cc]
                        ):
                            seen[rr, cc] = True
                            stack.append((rr, cc))
            comps.append(frozenset(cells))
    return comps


def _brute_nms(dets, iou_thresh):
    ranked = sorted(
        dets, key=lambda d: (-d.score, d.bbox.as_tuple())
    )
    kept = []
    for d in ranked:
        if all(bbox_iou(d.bbox, k.bbox) < iou_thresh for k in kept):
            kept.append(d)
    return kept


def test_two_separated_blocks():
    grid = np.zeros((12, 12), dtype=bool)
    grid[1:4, 1:4] = True
    grid[7:10, 7:10] = True
    dets = ComponentSegmenter().segment(grid, frame_id=0)
    assert len(dets) == 2
    assert all(d.area_px() == 9 for d in dets)
    assert all(d.frame_id == 0 for d in dets)


def test_min_area_gate_drops_single_pixel():
    grid = np.zeros((8, 8), dtype=bool)
    grid[3, 3] = True
    assert ComponentSegmenter(min_area_px=4).segment(grid, 0) == []


def test_diagonal_pixels_merge():
    grid = np.zeros((6, 6), dtype=bool)
    grid[1, 1] = grid[2, 2] = grid[3, 3] = grid[4, 4] = True
    dets = ComponentSegmenter(min_area_px=1).segment(grid, 0)
    assert len(dets) == 1
    assert dets[0].area_px() == 4


def test_components_match_flood_fill_reference():
    rng = np.random.default_rng(13)
    seg = ComponentSegmenter(min_area_px=1)
    for _ in range(20):
        grid = rng.random((32, 32)) < 0.35
        got = {frozenset((v, u) for u, v in d.pixels()) for d in seg.segment(grid, 0)}
        want = set(_flood_components(grid))
        assert got == want


def test_detection_mask_tight_in_bbox():
    grid = np.zeros((10, 10), dtype=bool)
    grid[2:5, 3:7] = True
    grid[3, 5] = False
    (det,) = ComponentSegmenter().segment(grid, 0)
    assert det.bbox.as_tuple() == (3, 2, 7, 5)
    assert det.area_px() == 11
    sub = det.mask()
    assert sub.shape == (3, 4)
    assert sub.sum() == 11


def test_detection_order_is_scanline():
    grid = np.zeros((12, 12), dtype=bool)
    grid[6:9, 1:4] = True
    grid[1:4, 6:9] = True
    dets = ComponentSegmenter().segment(grid, 0)
    assert [d.bbox.v_min for d in dets] == [1, 6]


def test_component_score_monotone_in_area():
    scores = [component_score(a) for a in (4, 9, 25, 100, 10_000)]
    assert scores == sorted(scores)
    assert all(0 < s <= 1 for s in scores)


def test_nms_identical_boxes_keeps_higher_score():
    grid = np.zeros((10, 10), dtype=bool)
    grid[2:5, 2:5] = True
    (det,) = ComponentSegmenter().segment(grid, 0)
    low = type(det)(frame_id=0, bbox=det.bbox, score=0.8, mask_rle=det.mask_rle)
    high = type(det)(frame_id=0, bbox=det.bbox, score=0.9, mask_rle=det.mask_rle)
    kept = nms([low, high], iou_thresh=0.5)
    assert [d.score for d in kept] == [0.9]


def test_nms_disjoint_all_kept():
    grid = np.zeros((20, 20), dtype=bool)
    grid[1:4, 1:4] = True
    grid[10:13, 10:13] = True
    dets = ComponentSegmenter().segment(grid, 0)
    assert len(nms(dets, 0.5)) == 2


def test_nms_matches_brute_force():
    rng = np.random.default_rng(21)
    seg = ComponentSegmenter(min_area_px=1)
    for _ in range(30):
        # overlapping random boxes built as detections with random scores
        dets = []
        for _ in range(10):
            u0, v0 = rng.integers(0, 20, size=2)
            w, h = rng.integers(2, 8, size=2)
            grid = np.zeros((30, 30), dtype=bool)
            grid[v0:v0 + h, u0:u0 + w] = True
            (d,) = seg.segment(grid, 0)
            dets.append(type(d)(frame_id=0, bbox=d.bbox,
                                score=float(rng.uniform(0.1, 1.0)),
                                mask_rle=d.mask_rle))
        thresh = float(rng.uniform(0.2, 0.7))
        got = [(d.bbox.as_tuple(), d.score) for d in nms(dets, thresh)]
        want = [(d.bbox.as_tuple(), d.score) for d in _brute_nms(dets, thresh)]
        assert got == want


def test_degenerate_bbox_rejected():
    with pytest.raises(EmptyMask):
        BBox2D(3, 0, 3, 5)


_ECHO_ADAPTER = textwrap.dedent("""
    import json, sys
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "hello":
            print(json.dumps({"type": "ready", "name": "echo"}), flush=True)
        elif msg["type"] == "segment":
            reply = {"type": "segments", "frame_id": msg["frame_id"],
                     "segments": [{"score": 0.9, "mask_rle": msg["mask_rle"]}]}
            print(json.dumps(reply), flush=True)
""")

_BAD_JSON_ADAPTER = textwrap.dedent("""
    import json, sys
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "hello":
            print(json.dumps({"type": "ready", "name": "bad"}), flush=True)
        else:
            print("this is not json", flush=True)
""")

_OVERLONG_ADAPTER = textwrap.dedent("""
    import json, sys
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "hello":
            print(json.dumps({"type": "ready", "name": "overlong"}), flush=True)
        else:
            n = msg["width"] * msg["height"]
            # mask longer than the grid: decode must clip it
            reply = {"type": "segments", "frame_id": msg["frame_id"],
                     "segments": [{"score": 0.5, "mask_rle": [0, n + 37]}]}
            print(json.dumps(reply), flush=True)
""")


def _adapter_cmd(code):
    return [sys.executable, "-c", code]


def test_external_echo_round_trip():
    grid = np.zeros((6, 8), dtype=bool)
    grid[2:4, 3:6] = True
    with ExternalSegmenter(_adapter_cmd(_ECHO_ADAPTER)) as seg:
        assert seg.name == "echo"
        dets = seg.segment(grid, frame_id=5)
    assert len(dets) == 1
    assert dets[0].frame_id == 5
    assert dets[0].area_px() == 6
    assert dets[0].bbox.as_tuple() == (3, 2, 6, 4)


def test_external_malformed_reply_raises():
    grid = np.zeros((4, 4), dtype=bool)
    grid[1, 1] = True
    with ExternalSegmenter(_adapter_cmd(_BAD_JSON_ADAPTER)) as seg:
        with pytest.raises(SegmenterProtocolError):
            seg.segment(grid, frame_id=0)


def test_external_overlong_mask_clipped_detection_retained():
    grid = np.ones((5, 5), dtype=bool)
    with ExternalSegmenter(_adapter_cmd(_OVERLONG_ADAPTER)) as seg:
        dets = seg.segment(grid, frame_id=2)
    assert len(dets) == 1
    assert dets[0].area_px() == 25
    assert dets[0].bbox.as_tuple() == (0, 0, 5, 5)


def test_make_segmenter_kinds():
    assert isinstance(make_segmenter("components"), ComponentSegmenter)
    with pytest.raises(ValueError):
        make_segmenter("mystery")
