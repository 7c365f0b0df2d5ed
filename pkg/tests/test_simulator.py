import json
import math

import numpy as np
import pytest

from evrpn.errors import ConfigError
from evrpn.events import BBox, SensorGeometry, validate_events
from evrpn.ingest import ChunkingConfig, chunk_messages, write_binary_stream
from evrpn.simulator import (
    CircularTrajectory,
    LinearTrajectory,
    MovingShape,
    SceneSpec,
    chunk_midpoints_s,
    ground_truth_boxes,
    simulate,
)


def rect(x, y, w, h, vx=0.0, vy=0.0, intensity=2.0, **kw):
    return MovingShape("rectangle", (w, h), intensity, LinearTrajectory((x, y), (vx, vy)), **kw)


def disc(cx, cy, r, vx=0.0, vy=0.0, intensity=2.0, **kw):
    return MovingShape("disc", r, intensity, LinearTrajectory((cx, cy), (vx, vy)), **kw)


def all_events(messages):
    return np.concatenate([m.events for m in messages])


def test_static_scene_is_silent():
    spec = SceneSpec(SensorGeometry(120, 90), 0.5, shapes=[rect(10, 10, 40, 40), disc(80, 40, 10, intensity=0.5)])
    _, messages, _ = simulate(spec)
    assert len(messages) == 15
    assert all(len(m) == 0 for m in messages)


def test_static_textured_scene_is_silent():
    spec = SceneSpec(SensorGeometry(120, 90), 0.3, shapes=[rect(10, 10, 40, 40, texture_contrast=0.5)])
    assert all(len(m) == 0 for m in simulate(spec)[1])


def test_moving_rectangle_events_hug_its_edges():
    shape = rect(20, 30, 40, 40, vx=60.0)
    spec = SceneSpec(SensorGeometry(160, 100), 1.0, shapes=[shape])
    header, messages, _ = simulate(spec)
    assert header.geometry == spec.geometry
    assert all(len(m) > 0 for m in messages)
    ev = all_events(messages)
    validate_events(ev, spec.geometry, require_sorted=False)
    t = ev["t"].astype(float) * 1e-6
    d = shape.boundary_distance(ev["x"] + 0.5, ev["y"] + 0.5, t)
    assert d.max() <= 1.0 + math.sqrt(0.5)
    # only leading and trailing edges move, so nothing fires along the top/bottom interior
    assert set(np.unique(ev["p"])) == {0, 1}


@pytest.mark.parametrize(
    "shape",
    [
        rect(30, 20, 40, 30, vx=80.0, vy=-40.0, intensity=0.4),
        disc(70, 50, 18, vx=-50.0, vy=30.0, intensity=3.0),
        MovingShape("disc", 12.0, 2.5, CircularTrajectory((80, 50), 20.0, 3.0)),
    ],
)
def test_events_lie_near_some_boundary(shape):
    spec = SceneSpec(SensorGeometry(160, 100), 0.6, shapes=[shape], substep_s=0.002)
    ev = all_events(simulate(spec)[1])
    assert len(ev) > 0
    t = ev["t"].astype(float) * 1e-6
    bound = max(2.0, shape.trajectory.max_speed * spec.substep_s + 2.0)
    assert shape.boundary_distance(ev["x"] + 0.5, ev["y"] + 0.5, t).max() <= bound


def test_polarity_follows_contrast():
    # bright shape moving right: ON at the leading edge, OFF at the trailing edge
    shape = rect(20, 20, 30, 30, vx=60.0)
    ev = all_events(simulate(SceneSpec(SensorGeometry(120, 80), 0.5, shapes=[shape]))[1])
    t = ev["t"].astype(float) * 1e-6
    lead = 20 + 30 + 60 * t
    on = ev["p"] == 1
    assert np.all(np.abs(ev["x"][on] + 0.5 - lead[on]) <= 2)


def test_noise_count_within_five_sigma():
    spec = SceneSpec(SensorGeometry(640, 480), 1.0, noise_rate_hz_per_pixel=50.0, seed=11)
    _, messages, gt = simulate(spec)
    n = sum(len(m) for m in messages)
    mean = 640 * 480 * 50
    assert abs(n - mean) <= 5 * math.sqrt(mean)
    ev = messages[3].events
    assert set(np.unique(ev["p"])) == {0, 1}
    assert abs(ev["p"].mean() - 0.5) < 0.01
    assert all(boxes == () for _, boxes in gt.frames)


def test_messages_are_bucketed_by_cadence():
    spec = SceneSpec(SensorGeometry(64, 48), 0.5, noise_rate_hz_per_pixel=20.0, seed=1, shapes=[rect(5, 5, 20, 20, vx=30)])
    _, messages, _ = simulate(spec)
    for m in messages:
        lo, hi = round(m.index * 1e6 / 30), round((m.index + 1) * 1e6 / 30)
        assert m.events["t"].min() >= lo and m.events["t"].max() <= hi
        assert np.all(np.diff(m.events["t"].astype(np.int64)) >= 0)


def test_doubling_speed_roughly_doubles_events():
    g = SensorGeometry(200, 100)
    slow = sum(len(m) for m in simulate(SceneSpec(g, 1.0, shapes=[rect(10, 30, 30, 30, vx=40)]))[1])
    fast = sum(len(m) for m in simulate(SceneSpec(g, 1.0, shapes=[rect(10, 30, 30, 30, vx=80)]))[1])
    assert 1.5 <= fast / slow <= 2.5


def test_deterministic_given_seed():
    spec = SceneSpec(
        SensorGeometry(96, 64), 0.7, shapes=[rect(5, 5, 30, 20, vx=40, vy=20, texture_contrast=0.4)], noise_rate_hz_per_pixel=3.0, seed=5
    )
    h1, m1, g1 = simulate(spec)
    h2, m2, g2 = simulate(spec)
    assert write_binary_stream(h1, m1) == write_binary_stream(h2, m2)
    assert g1.to_json() == g2.to_json()
    other = simulate(SceneSpec(**{**spec.__dict__, "seed": 6}))
    assert write_binary_stream(*other[:2]) != write_binary_stream(h1, m1)


def test_ground_truth_examples():
    g = SensorGeometry(640, 480)
    spec = SceneSpec(g, 2.0, shapes=[rect(100, 100, 40, 40)])
    assert ground_truth_boxes(spec, 1.3) == [BBox(100, 100, 140, 140)]
    spec = SceneSpec(g, 1.0, shapes=[disc(50, 50, 10)])
    assert ground_truth_boxes(spec, 0.0) == [BBox(40, 40, 60, 60)]
    spec = SceneSpec(g, 1.0, shapes=[rect(0, 0, 20, 20, vx=100)])
    assert ground_truth_boxes(spec, 0.5) == [BBox(50, 0, 70, 20)]
    with pytest.raises(ValueError):
        ground_truth_boxes(spec, 1.5)


def test_ground_truth_clips_and_omits():
    spec = SceneSpec(SensorGeometry(100, 50), 2.0, shapes=[rect(60, 10, 30, 20, vx=20), rect(0, 0, 10, 10, vy=-100)])
    assert ground_truth_boxes(spec, 1.0) == [BBox(80, 10, 100, 30)]


def test_ground_truth_per_chunk_matches_midpoints():
    spec = SceneSpec(SensorGeometry(200, 100), 2.1, shapes=[rect(5, 5, 20, 20, vx=30, vy=10)], substep_s=0.004)
    _, messages, gt = simulate(spec)
    mids = chunk_midpoints_s(spec)
    assert len(gt.frames) == len(chunk_messages(messages)) == 6
    assert mids[0] == pytest.approx(1 / 6)
    for (k, boxes), t in zip(gt.frames, mids):
        assert list(boxes) == ground_truth_boxes(spec, t)


def test_spec_invariants():
    g = SensorGeometry(100, 100)
    with pytest.raises(ConfigError, match="does not fit"):
        SceneSpec(g, 1.0, shapes=[rect(90, 0, 20, 10)])
    with pytest.raises(ConfigError):
        SceneSpec(g, 1.0, substep_s=0.05)
    with pytest.raises(ConfigError):
        SceneSpec(g, 0.0)
    with pytest.raises(ConfigError):
        rect(0, 0, 10, 10, intensity=1.0)
    with pytest.raises(ConfigError):
        MovingShape("triangle", 3.0, 2.0, LinearTrajectory((0, 0)))


def test_spec_json_round_trip(tmp_path):
    spec = SceneSpec(
        SensorGeometry(320, 240),
        1.5,
        shapes=[
            rect(10, 10, 30, 20, vx=5, texture_contrast=0.3, texture_cell_px=4.0),
            MovingShape("disc", 8.0, 0.5, CircularTrajectory((100, 100), 30.0, 1.0, 0.5)),
        ],
        noise_rate_hz_per_pixel=1.0,
        seed=99,
        name="demo",
    )
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert SceneSpec.load(path) == spec
    d = spec.to_dict()
    d.pop("name")
    path2 = tmp_path / "walk.json"
    path2.write_text(json.dumps(d))
    assert SceneSpec.load(path2).name == "walk"
    (tmp_path / "bad.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        SceneSpec.load(tmp_path / "bad.json")


def test_textured_shape_fires_inside_its_box():
    shape = rect(20, 20, 40, 30, vx=60, texture_contrast=0.5)
    spec = SceneSpec(SensorGeometry(160, 80), 0.5, shapes=[shape])
    ev = all_events(simulate(spec)[1])
    t = ev["t"].astype(float) * 1e-6
    x1, y1, x2, y2 = shape.bbox_at(t)
    assert np.all((ev["x"] >= np.floor(x1) - 1) & (ev["x"] <= x2 + 1) & (ev["y"] >= 19) & (ev["y"] <= 50))
    # interior texture cells produce events well away from the outline
    d = shape.boundary_distance(ev["x"] + 0.5, ev["y"] + 0.5, t)
    assert (d > 5).mean() > 0.3
