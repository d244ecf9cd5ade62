"""Scripted synthetic scenes: sampling physics, ground truth, determinism."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from bevkit.errors import ConfigError, TimeOutOfRange
from bevkit.frames import load_sequence
from bevkit.eval3d import load_gt_jsonl
from bevkit.synthscene import (
    Agent,
    SamplingParams,
    SceneSampler,
    SceneScript,
    StaticBox,
    demo_scene,
    demo_pipeline_overrides,
    generate,
    script_from_dict,
    script_to_dict,
)


def _quiet_params(**kw):
    defaults = dict(base_density=80.0, beams=16, az_steps=256)
    defaults.update(kw)
    return SamplingParams(**defaults)


def _empty_scene(seed=1):
    return SceneScript(ground=(0.0, 0.0, -2.0), seed=seed, sampling=_quiet_params())


def test_empty_scene_is_ground_only_within_noise():
    script = _empty_scene()
    sampler = SceneSampler(script)
    layout_n = len(sampler.ground_layout)
    assert layout_n > 100
    sigma = script.sampling.z_noise_sigma
    for t in (0.0, 0.5, 1.0):
        xyz = sampler.sample_frame(t).xyz
        plane = script.plane_z(xyz[:, 0], xyz[:, 1])
        assert np.abs(xyz[:, 2] - plane).max() <= 3 * sigma + 1e-9
    # dropout is binomial on the fixed layout
    p = script.sampling.keep_prob
    n = len(sampler.sample_frame(0.2).xyz)
    assert abs(n - layout_n * p) < 3 * math.sqrt(layout_n * p * (1 - p))


def test_inverse_square_density_ratio():
    sp = SamplingParams()
    assert sp.density_at(5.0) / sp.density_at(20.0) == pytest.approx(16.0)
    # flat slab top faces at 5 m and 20 m: observed point ratio tracks it
    near = SceneScript(
        ground=(0.0, 0.0, -2.0),
        statics=(StaticBox(5.0, 0.0, 2.0, 2.0, 0.01),),
        sampling=_quiet_params(),
    )
    far = SceneScript(
        ground=(0.0, 0.0, -2.0),
        statics=(StaticBox(20.0, 0.0, 2.0, 2.0, 0.01),),
        sampling=_quiet_params(),
    )
    n_near = sum(len(c) for c in SceneSampler(near).static_layouts)
    n_far = sum(len(c) for c in SceneSampler(far).static_layouts)
    assert n_far > 0
    ratio = n_near / n_far
    assert 16.0 * 0.7 < ratio < 16.0 * 1.3


def test_same_seed_reproduces_frames_exactly():
    script = demo_scene(seed=7)
    a = SceneSampler(script).sample_frame(1.3)
    b = SceneSampler(script).sample_frame(1.3)
    assert np.array_equal(a.xyz, b.xyz)
    assert a.frame_id == b.frame_id == 13


def test_different_seeds_differ():
    a = SceneSampler(demo_scene(seed=1)).sample_frame(0.5)
    b = SceneSampler(demo_scene(seed=2)).sample_frame(0.5)
    assert a.xyz.shape != b.xyz.shape or not np.array_equal(a.xyz, b.xyz)


def test_frames_at_distinct_times_differ():
    sampler = SceneSampler(_empty_scene())
    a = sampler.sample_frame(0.0)
    b = sampler.sample_frame(0.1)
    assert not (a.xyz.shape == b.xyz.shape and np.array_equal(a.xyz, b.xyz))


def test_ground_truth_centers_sit_half_height_above_plane():
    agent = Agent(
        label="Vehicle", dims=(4.2, 1.8, 1.5),
        waypoints=((0.0, 0.0, 0.0), (10.0, 0.0, 10.0)),
    )
    script = SceneScript(
        ground=(0.02, 0.01, -2.0), agents=(agent,), sampling=_quiet_params()
    )
    anns = SceneSampler(script).ground_truth(5.0)
    assert len(anns) == 1
    box = anns[0].box
    x, y = box.center[0], box.center[1]
    assert (x, y) == pytest.approx((5.0, 0.0))
    plane = 0.02 * x + 0.01 * y - 2.0
    assert box.center[2] == pytest.approx(plane + 0.75, abs=1e-12)
    assert box.dims == pytest.approx((4.2, 1.8, 1.5))
    assert anns[0].frame_id == 50


def test_ground_truth_yaw_follows_velocity():
    diag = Agent(
        label="Pedestrian", dims=(0.6, 0.6, 1.7),
        waypoints=((0.0, 0.0, 0.0), (5.0, 5.0, 5.0)),
    )
    backward = Agent(
        label="Vehicle", dims=(4.2, 1.8, 1.5),
        waypoints=((10.0, 3.0, 0.0), (0.0, 3.0, 5.0)),
    )
    script = SceneScript(
        ground=(0.0, 0.0, -2.0), agents=(diag, backward), sampling=_quiet_params()
    )
    anns = SceneSampler(script).ground_truth(2.0)
    yaws = {a.label: a.box.yaw for a in anns}
    assert yaws["Pedestrian"] == pytest.approx(math.pi / 4, abs=1e-9)
    # driving toward -x is yaw pi, which folds to 0 in the half circle
    assert yaws["Vehicle"] == pytest.approx(0.0, abs=1e-9)


def test_agents_absent_outside_their_window():
    agent = Agent(
        label="Vehicle", dims=(4.2, 1.8, 1.5),
        waypoints=((0.0, 0.0, 2.0), (10.0, 0.0, 6.0)),
    )
    assert agent.pose(1.9) is None
    assert agent.pose(6.1) is None
    assert agent.pose(2.0) == pytest.approx((0.0, 0.0, 0.0))
    assert agent.pose(4.0)[0] == pytest.approx(5.0)
    script = SceneScript(
        ground=(0.0, 0.0, -2.0), agents=(agent,), sampling=_quiet_params()
    )
    assert SceneSampler(script).ground_truth(1.0) == []


def test_time_outside_duration_rejected():
    sampler = SceneSampler(_empty_scene())
    with pytest.raises(TimeOutOfRange):
        sampler.sample_frame(10.5)
    with pytest.raises(TimeOutOfRange):
        sampler.ground_truth(-0.1)


def test_script_validation():
    with pytest.raises(ConfigError):
        SceneScript(ground=(0.0, 0.0, 2.0))          # sensor below ground
    with pytest.raises(ConfigError):
        SceneScript(ground=(0.2, 0.0, -2.0))         # too steep
    with pytest.raises(ConfigError):
        Agent(label="Train", dims=(1, 1, 1),
              waypoints=((0, 0, 0), (1, 0, 1)))
    with pytest.raises(ConfigError):
        Agent(label="Vehicle", dims=(4, 2, 1.5),
              waypoints=((0, 0, 1.0), (1, 0, 0.5)))  # time goes backward
    with pytest.raises(ConfigError):
        StaticBox(0.0, 0.0, 1.0, 0.0, 1.0)


def test_occlusion_suppresses_hidden_object():
    def scene(occ):
        return SceneScript(
            ground=(0.0, 0.0, -2.0),
            statics=(
                StaticBox(10.0, 0.0, 2.0, 2.0, 1.5),
                StaticBox(20.0, 0.0, 2.0, 2.0, 1.5),
            ),
            sampling=_quiet_params(occlusion=occ),
        )

    def far_points(script):
        xyz = SceneSampler(script).sample_frame(0.0).xyz
        sel = (xyz[:, 0] > 15.0) & (np.abs(xyz[:, 1]) < 1.5) & (xyz[:, 2] > -1.6)
        return int(sel.sum())

    visible = far_points(scene(False))
    hidden = far_points(scene(True))
    assert visible > 30
    assert hidden < 0.3 * visible


def test_script_json_round_trip():
    script = demo_scene(seed=5)
    doc = json.loads(json.dumps(script_to_dict(script)))
    assert script_from_dict(doc) == script


def test_script_dict_rejects_unknown_keys():
    doc = script_to_dict(_empty_scene())
    doc["extra"] = 1
    with pytest.raises(ConfigError):
        script_from_dict(doc)


def test_demo_scene_structure():
    script = demo_scene(seed=42)
    assert script.frame_count == 100
    labels = [a.label for a in script.agents]
    assert labels.count("Vehicle") == 5
    assert labels.count("Pedestrian") == 3
    assert len(script.statics) >= 3
    overrides = demo_pipeline_overrides()
    assert overrides["bev"]["resolution"] == 0.1


def test_generate_writes_sequence(tmp_path):
    agent = Agent(
        label="Vehicle", dims=(4.2, 1.8, 1.5),
        waypoints=((-5.0, 2.0, 0.0), (5.0, 2.0, 1.0)),
    )
    script = SceneScript(
        ground=(0.0, 0.0, -2.0), agents=(agent,), duration_s=0.3,
        sampling=_quiet_params(),
    )
    frames_dir = generate(script, tmp_path)
    meta, frames = load_sequence(frames_dir)
    assert len(frames) == 3
    assert meta.frame_rate_hz == 10.0
    assert [f.frame_id for f in frames] == [0, 1, 2]
    anns = load_gt_jsonl(tmp_path / "gt.jsonl")
    assert len(anns) == 3
    assert {a.frame_id for a in anns} == {0, 1, 2}
