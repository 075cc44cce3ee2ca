"""Comparison methods: tuned circular formation, greedy max-coverage placement,
and BO over the geometric coverage proxy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from viewplan.driver import BoConfig, Trace, run_ensemble_bo
from viewplan.geometry import (
    CameraPose,
    SearchSpace,
    ViewPlan,
    decode_plan,
    visibility_matrix,
)
from viewplan.scene import Scene, geometric_coverage, reward, NOISE_FREE


def circle_plan(
    n: int,
    radius: float,
    altitude: float,
    center,
    fov_half_angle: float = np.pi / 4,
    range_min: float = 0.05,
    range_max: float = 50.0,
) -> ViewPlan:
    """N cameras equally spaced on a circle about center, each looking at it."""
    if n < 1 or radius <= 0:
        raise ValueError("need n >= 1 and radius > 0")
    center = np.asarray(center, dtype=float).reshape(3)
    cams = []
    for i in range(n):
        az = 2.0 * np.pi * i / n
        pos = center + np.array([radius * np.cos(az), radius * np.sin(az), altitude])
        look = center - pos
        look /= np.linalg.norm(look)
        cams.append(
            CameraPose(
                position=pos,
                look_dir=look,
                fov_half_angle=fov_half_angle,
                range_min=range_min,
                range_max=range_max,
            )
        )
    return ViewPlan(cameras=tuple(cams))


DEFAULT_RADIUS_GRID = (1.5, 2.0, 2.5, 3.0)
DEFAULT_ALTITUDE_GRID = (0.5, 1.0, 1.5, 2.0)


def tune_circle(
    scene: Scene,
    n: int,
    radius_grid=DEFAULT_RADIUS_GRID,
    altitude_grid=DEFAULT_ALTITUDE_GRID,
    plan_reward=None,
    fov_half_angle: float = np.pi / 4,
    range_min: float = 0.05,
    range_max: float = 50.0,
) -> tuple[ViewPlan, float]:
    """Exhaustive grid search over radius x altitude; ties keep grid order."""
    if len(radius_grid) == 0 or len(altitude_grid) == 0:
        raise ValueError("grids must be non-empty")
    if plan_reward is None:
        def plan_reward(plan):
            return reward_of_plan(scene, plan)
    best = None
    for radius in radius_grid:
        for altitude in altitude_grid:
            plan = circle_plan(
                n, radius, altitude, scene.center,
                fov_half_angle=fov_half_angle, range_min=range_min, range_max=range_max,
            )
            r = float(plan_reward(plan))
            if best is None or r > best[1]:
                best = (plan, r)
    return best


def reward_of_plan(scene: Scene, plan: ViewPlan) -> float:
    """Noise-free chamfer reward for an explicit plan (no parameter vector)."""
    from viewplan.metrics import chamfer_distance
    from viewplan.scene import DEFAULT_WORST_CASE_REWARD, reconstruct

    pc = reconstruct(scene, plan, NOISE_FREE, eval_seed=0)
    if pc.shape[0] == 0:
        return DEFAULT_WORST_CASE_REWARD
    return -chamfer_distance(scene.reference_cloud, pc)


@dataclass(frozen=True)
class CandidateViewSet:
    """Discrete camera candidates with their single-view covered point sets."""

    poses: tuple[CameraPose, ...]
    covered: tuple[frozenset[int], ...]

    def __post_init__(self):
        if len(self.poses) != len(self.covered):
            raise ValueError("poses and covered sets must align")


def build_candidates(
    scene: Scene,
    azimuth_steps: int = 8,
    elevation_steps: int = 2,
    radii=(2.0, 3.0),
    elevations=(0.4, 0.9),
    fov_half_angle: float = np.pi / 4,
    range_min: float = 0.05,
    range_max: float = 50.0,
) -> CandidateViewSet:
    """Hemisphere grid of look-at-center candidates around the scene center."""
    poses = []
    for radius in radii:
        for ei in range(elevation_steps):
            el = elevations[ei % len(elevations)]
            for ai in range(azimuth_steps):
                az = 2.0 * np.pi * ai / azimuth_steps
                offset = radius * np.array(
                    [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
                )
                pos = scene.center + offset
                look = -offset / np.linalg.norm(offset)
                poses.append(
                    CameraPose(
                        position=pos,
                        look_dir=look,
                        fov_half_angle=fov_half_angle,
                        range_min=range_min,
                        range_max=range_max,
                    )
                )
    plan = ViewPlan(cameras=tuple(poses))
    vis = visibility_matrix(plan, scene.reference_cloud)
    covered = tuple(frozenset(np.flatnonzero(vis[i]).tolist()) for i in range(len(poses)))
    return CandidateViewSet(poses=tuple(poses), covered=covered)


def mcp_greedy(candidates: CandidateViewSet, n: int) -> list[int]:
    """Classic greedy max-coverage: N picks, ties to the lowest index.

    Marginal gains are checked to be non-increasing (coverage is submodular).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(candidates.poses) == 0:
        raise ValueError("candidate set is empty")
    chosen: list[int] = []
    covered: set[int] = set()
    prev_gain = None
    while len(chosen) < n and len(chosen) < len(candidates.poses):
        gains = [
            len(candidates.covered[i] - covered) if i not in chosen else -1
            for i in range(len(candidates.poses))
        ]
        best = int(np.argmax(gains))
        gain = gains[best]
        if prev_gain is not None and gain > prev_gain:
            raise AssertionError("coverage gains increased; submodularity violated")
        prev_gain = gain
        chosen.append(best)
        covered |= candidates.covered[best]
    return chosen


def mcp_plan(candidates: CandidateViewSet, n: int) -> ViewPlan:
    idx = mcp_greedy(candidates, n)
    return ViewPlan(cameras=tuple(candidates.poses[i] for i in idx))


def run_geometric_bo(scene: Scene, space: SearchSpace, config: BoConfig) -> Trace:
    """Same loop, but the oracle is noise-free geometric coverage in [0, 1]."""

    def oracle(theta):
        return geometric_coverage(scene, decode_plan(theta, space))

    return run_ensemble_bo(oracle, space, config)
