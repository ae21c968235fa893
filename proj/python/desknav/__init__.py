"""Plane segmentation of lidar point clouds and adaptive NMPC for a micro aerial vehicle."""

import io
import json

import numpy as np

from ._desknav import (
    ConfigError,
    ConvergenceError,
    DegenerateGeometryError,
    EmptyInputError,
    Error,
    InsufficientPointsError,
    InvalidArgumentError,
    InvalidPlaneError,
    IoError,
    Plane,
    fit_plane_three_points,
    fit_plane_tls,
    normal_angle,
    point_plane_distance,
    shannon_entropy,
    step_euler,
)
from . import _desknav

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DegenerateGeometryError",
    "EmptyInputError",
    "Error",
    "InsufficientPointsError",
    "InvalidArgumentError",
    "InvalidPlaneError",
    "IoError",
    "Plane",
    "RunResult",
    "default_scenario",
    "fit_plane_three_points",
    "fit_plane_tls",
    "normal_angle",
    "point_plane_distance",
    "run_scenario",
    "segment_planes",
    "shannon_entropy",
    "step_euler",
]


def _points(points):
    xyz = np.ascontiguousarray(points, dtype=np.float64)
    if xyz.ndim != 2 or xyz.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {xyz.shape}")
    return xyz


def segment_planes(points, config=None):
    """Segment an (n, 3) point cloud into planes.

    ``config`` is a clustering section as a dict, or None for the defaults.
    Returns a dict with labels, planes, sampled_indices, status,
    rank_deficient and timing.
    """
    text = "" if config is None else json.dumps(config)
    out = json.loads(_desknav._segment(_points(points), text))
    out["labels"] = np.asarray(out["labels"], dtype=int)
    out["sampled_indices"] = np.asarray(out["sampled_indices"], dtype=int)
    out["planes"] = [Plane(**p) for p in out["planes"]]
    return out


def default_scenario(preset="corridor"):
    """Full scenario document with every default filled in."""
    return json.loads(_desknav._default_scenario(preset))


class RunResult:
    """Metrics, per-tick trace and plane snapshots of one closed-loop run."""

    def __init__(self, metrics, trace, planes):
        self.metrics = metrics
        self.trace = trace
        self.planes = planes

    def __repr__(self):
        return f"RunResult(ticks={len(self.trace)}, metrics={self.metrics})"


def run_scenario(scenario, seed=None, mode=None):
    """Run a scenario given as a dict or a path to a JSON file."""
    if not isinstance(scenario, dict):
        with open(scenario, encoding="utf-8") as f:
            scenario = json.load(f)
    scenario = dict(scenario)
    if seed is not None:
        scenario["seed"] = int(seed)
    if mode is not None:
        scenario["mode"] = mode
    metrics, trace_csv, planes = _desknav._run(json.dumps(scenario))
    trace = np.genfromtxt(io.StringIO(trace_csv), delimiter=",", names=True)
    trace = np.atleast_1d(trace)
    snapshots = {int(k): [Plane(**p) for p in v] for k, v in json.loads(planes).items()}
    return RunResult(json.loads(metrics), trace, snapshots)
