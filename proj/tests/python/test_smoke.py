import json
import math
from pathlib import Path

import numpy as np
import pytest

import desknav

ROOT = Path(__file__).resolve().parents[2]


def three_walls(n=1000, sigma=0.01, seed=3):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1, 1, (2, n))
    e = rng.normal(0, sigma, n)
    w = np.arange(n) % 3
    pts = np.empty((n, 3))
    pts[w == 0] = np.c_[2 + e, 2 * a, 1 + 1.5 * b][w == 0]
    pts[w == 1] = np.c_[2 * a, 2 + e, 1 + 1.5 * b][w == 1]
    pts[w == 2] = np.c_[2 * a, 2 * b, -1 + e][w == 2]
    return pts


def test_point_plane_distance():
    plane = desknav.Plane(0, 0, 2, -2)
    assert desknav.point_plane_distance(plane, [5, -3, 4]) == pytest.approx(3.0)


def test_three_point_fit_is_exact():
    p = desknav.fit_plane_three_points([1, 0, 0], [0, 1, 0], [0, 0, 1])
    n = p.normal()
    assert abs(n @ [1, 0, 0] + p.zeta) < 1e-12
    assert abs(n @ [0, 1, 0] + p.zeta) < 1e-12
    with pytest.raises(desknav.DegenerateGeometryError):
        desknav.fit_plane_three_points([0, 0, 0], [1, 1, 1], [2, 2, 2])


def test_tls_recovers_tilted_plane():
    rng = np.random.default_rng(0)
    xy = rng.uniform(-2, 2, (200, 2))
    pts = np.c_[xy, 0.5 * xy[:, 0] - 1.0]
    plane, rms = desknav.fit_plane_tls(pts)
    assert rms < 1e-10
    assert desknav.normal_angle(plane, desknav.Plane(0.5, 0, -1, -1)) < 1e-8


def test_segmentation_finds_three_walls():
    out = desknav.segment_planes(three_walls(), {"n_cluster": 3, "rank": 3})
    assert out["status"] == "ok"
    assert len(out["planes"]) == 3
    assert out["labels"].shape == out["sampled_indices"].shape
    normals = np.array([np.abs(p.normalized().normal()) for p in out["planes"]])
    assert sorted(np.argmax(normals, axis=1).tolist()) == [0, 1, 2]


def test_segmentation_errors():
    with pytest.raises(desknav.InsufficientPointsError):
        desknav.segment_planes(np.zeros((10, 3)))
    with pytest.raises(desknav.ConfigError):
        desknav.segment_planes(three_walls(), {"n_cluster": 0})
    with pytest.raises(desknav.ConfigError):
        desknav.segment_planes(three_walls(), {"no_such_key": 1})
    with pytest.raises(ValueError):
        desknav.segment_planes(np.zeros((40, 2)))


def test_entropy_bounds():
    assert desknav.shannon_entropy(np.ones(8)) == pytest.approx(math.log(8))
    assert desknav.shannon_entropy(np.r_[1.0, np.zeros(7)]) < 1e-6


def test_hover_step_is_equilibrium():
    x = np.r_[0, 0, 1.5, 0, 0, 0, 0, 0]
    nxt = desknav.step_euler(x, [9.81, 0, 0])
    assert np.allclose(nxt, x, atol=1e-12)


def test_default_scenario_round_trips():
    doc = desknav.default_scenario("confined_room")
    assert doc["environment"]["name"] == "confined_room"
    json.dumps(doc)


def test_hover_run():
    res = desknav.run_scenario(ROOT / "scenarios" / "hover.json")
    assert res.metrics["collision"] is False
    assert res.metrics["waypoint_mae"] < 0.05
    assert len(res.trace) == res.metrics["ticks"]
    assert "thrust" in res.trace.dtype.names


def test_run_is_deterministic_and_rejects_bad_config():
    scenario = json.loads((ROOT / "scenarios" / "hover.json").read_text())
    a = desknav.run_scenario(scenario, seed=4, mode="fixed")
    b = desknav.run_scenario(scenario, seed=4, mode="fixed")
    assert a.metrics == b.metrics
    assert a.metrics["mode"] == "fixed"
    assert np.array_equal(a.trace, b.trace)
    with pytest.raises(desknav.ConfigError):
        desknav.run_scenario({"environment": {"preset": "corridor"}, "nmpc": {"horizon": -1}})
