"""Synthetic agricultural scenes and the black-box reconstruction reward.

The expensive image-based reconstruction pipeline is replaced by a
deterministic simulator: a reference point is recovered iff at least two
cameras see it with sufficient parallax for triangulation. Image-quality
noise maps to per-view dropout plus 3-D jitter; camera-placement noise
perturbs the parameter vector before decoding. An external reconstruction
command can be substituted through a subprocess adapter.
"""

from __future__ import annotations

import os
import subprocess
import threading
from dataclasses import dataclass, replace

import numpy as np

from viewplan import fileio
from viewplan.geometry import SearchSpace, ViewPlan, decode_plan, visibility_matrix
from viewplan.metrics import EmptyCloudError, chamfer_distance
from viewplan.seeds import derive_seed

DEFAULT_TAU_PARALLAX = np.deg2rad(5.0)
DEFAULT_WORST_CASE_REWARD = -10.0

# Fraction of each plant's points placed on the stem; the rest form the canopy.
_STEM_FRACTION = 0.35


@dataclass(frozen=True)
class SceneSpec:
    """Generative recipe for a synthetic crop plot. Deterministic given rng_seed."""

    plant_count: int = 3
    points_per_plant: int = 400
    ground_points: int = 800
    plot_size: float = 4.0
    stem_height_range: tuple[float, float] = (0.5, 1.2)
    canopy_radius_range: tuple[float, float] = (0.25, 0.5)
    plant_positions: tuple[tuple[float, float], ...] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.plant_count < 0:
            raise ValueError("plant_count must be >= 0")
        if self.points_per_plant < 1:
            raise ValueError("points_per_plant must be >= 1")
        if self.ground_points < 0:
            raise ValueError("ground_points must be >= 0")
        if self.plant_positions is not None and len(self.plant_positions) != self.plant_count:
            raise ValueError("plant_positions length must equal plant_count")


@dataclass(frozen=True)
class PlantParams:
    """One plant's realized shape: an anisotropic canopy shell on a stem."""

    position: tuple[float, float]
    stem_height: float
    canopy_radii: tuple[float, float, float]
    scale: float
    rotation: float
    point_seed: int


@dataclass(frozen=True)
class Scene:
    reference_cloud: np.ndarray
    spec: SceneSpec
    plants: tuple[PlantParams, ...]
    center: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray

    @property
    def size(self) -> int:
        return self.reference_cloud.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise knobs: camera-placement noise, image-quality noise, observation noise.

    sigma_input may be a scalar or a per-dimension vector in parameter-space
    units. Image noise sigma_image acts through visibility dropout with
    probability min(1, dropout_scale * sigma_image) and 3-D jitter with std
    jitter_scale * sigma_image meters.
    """

    sigma_input: float | np.ndarray = 0.0
    sigma_image: float = 0.0
    sigma_obs: float = 0.0
    dropout_scale: float = 1.0
    jitter_scale: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.sigma_input) < 0):
            raise ValueError("sigma_input must be >= 0")
        for name in ("sigma_image", "sigma_obs", "dropout_scale", "jitter_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


NOISE_FREE = NoiseSpec()


def _sample_plants(spec: SceneSpec) -> tuple[PlantParams, ...]:
    rng = np.random.default_rng(derive_seed(spec.rng_seed, 1))
    if spec.plant_positions is not None:
        positions = [tuple(map(float, p)) for p in spec.plant_positions]
    else:
        half = spec.plot_size / 2 * 0.6
        positions = [tuple(rng.uniform(-half, half, size=2)) for _ in range(spec.plant_count)]
    plants = []
    for i, pos in enumerate(positions):
        h = rng.uniform(*spec.stem_height_range)
        rx = rng.uniform(*spec.canopy_radius_range)
        ry = rx * rng.uniform(0.55, 0.85)  # anisotropic so rotation is observable
        rz = rng.uniform(*spec.canopy_radius_range) * 0.8
        scale = rng.uniform(0.9, 1.1)
        rotation = rng.uniform(0.0, 2 * np.pi)
        plants.append(
            PlantParams(
                position=pos,
                stem_height=float(h),
                canopy_radii=(float(rx), float(ry), float(rz)),
                scale=float(scale),
                rotation=float(rotation),
                point_seed=derive_seed(spec.rng_seed, 2, i),
            )
        )
    return tuple(plants)


def _plant_points(p: PlantParams, n: int) -> np.ndarray:
    rng = np.random.default_rng(p.point_seed)
    n_stem = max(1, int(round(_STEM_FRACTION * n))) if n > 1 else n
    n_canopy = n - n_stem
    stem = np.zeros((n_stem, 3))
    stem[:, 2] = rng.uniform(0.0, p.stem_height, size=n_stem)
    stem[:, :2] = rng.normal(0.0, 0.02, size=(n_stem, 2))
    if n_canopy > 0:
        u = rng.normal(size=(n_canopy, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        shell = u * np.asarray(p.canopy_radii)
        shell[:, 2] += p.stem_height
        pts = np.vstack([stem, shell])
    else:
        pts = stem
    pts = pts * p.scale
    c, s = np.cos(p.rotation), np.sin(p.rotation)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = pts @ rot.T
    pts[:, 0] += p.position[0]
    pts[:, 1] += p.position[1]
    return pts


def _assemble(spec: SceneSpec, plants: tuple[PlantParams, ...]) -> Scene:
    parts = []
    if spec.ground_points > 0:
        grng = np.random.default_rng(derive_seed(spec.rng_seed, 3))
        half = spec.plot_size / 2
        ground = np.zeros((spec.ground_points, 3))
        ground[:, :2] = grng.uniform(-half, half, size=(spec.ground_points, 2))
        parts.append(ground)
    for p in plants:
        parts.append(_plant_points(p, spec.points_per_plant))
    if not parts:
        raise EmptyCloudError("scene has no ground points and no plants")
    cloud = np.vstack(parts)
    cloud.setflags(write=False)
    return Scene(
        reference_cloud=cloud,
        spec=spec,
        plants=plants,
        center=cloud.mean(axis=0),
        bbox_min=cloud.min(axis=0),
        bbox_max=cloud.max(axis=0),
    )


def generate_scene(spec: SceneSpec) -> Scene:
    """Sample a scene from its spec. Bit-reproducible for a given rng_seed."""
    return _assemble(spec, _sample_plants(spec))


def transform_scene(
    scene: Scene,
    scale_jitter: float = 0.0,
    rotate: bool = False,
    remove_indices=(),
    seed: int = 0,
) -> Scene:
    """Derive a similar-but-different scene: rescale/re-rotate plants, drop some.

    Point counts per surviving plant and the ground are preserved.
    """
    remove = set(int(i) for i in remove_indices)
    for i in remove:
        if i < 0 or i >= len(scene.plants):
            raise IndexError(f"plant index {i} out of range")
    rng = np.random.default_rng(derive_seed(seed, 4))
    plants = []
    for i, p in enumerate(scene.plants):
        jitter = float(rng.uniform(-scale_jitter, scale_jitter))
        rotation = float(rng.uniform(0.0, 2 * np.pi))
        if i in remove:
            continue
        q = p
        if scale_jitter > 0:
            q = replace(q, scale=q.scale * (1.0 + jitter))
        if rotate:
            q = replace(q, rotation=rotation)
        plants.append(q)
    new_spec = replace(
        scene.spec,
        plant_count=len(plants),
        plant_positions=tuple(p.position for p in plants),
    )
    return _assemble(new_spec, tuple(plants))


def _occlusion_mask(plan: ViewPlan, cloud: np.ndarray, r_occ: float) -> np.ndarray:
    """True where the camera->point segment passes within r_occ of another point."""
    pos = plan.positions()
    n, p = pos.shape[0], cloud.shape[0]
    blocked = np.zeros((n, p), dtype=bool)
    for i in range(n):
        seg = cloud - pos[i]  # (P, 3) camera->point
        seg_len = np.linalg.norm(seg, axis=1)
        for j in range(p):
            d = seg[j]
            ln = seg_len[j]
            if ln == 0:
                continue
            u = d / ln
            rel = cloud - pos[i]
            t = rel @ u
            perp = np.linalg.norm(rel - np.outer(t, u), axis=1)
            between = (t > 1e-9) & (t < ln - 1e-9)
            hit = between & (perp < r_occ)
            hit[j] = False
            if hit.any():
                blocked[i, j] = True
    return blocked


def reconstruct(
    scene: Scene,
    plan: ViewPlan,
    noise: NoiseSpec = NOISE_FREE,
    eval_seed: int = 0,
    tau_parallax: float = DEFAULT_TAU_PARALLAX,
    occlusion_radius: float | None = None,
) -> np.ndarray:
    """Simulated reconstruction: points seen by >= 2 cameras with enough parallax.

    With sigma_image > 0, each (camera, point) visibility drops independently
    with probability min(1, dropout_scale * sigma_image), and surviving points
    are jittered by N(0, (jitter_scale * sigma_image)^2 I). Deterministic
    given (scene, plan, noise, eval_seed). May return an empty (0, 3) array.
    """
    cloud = scene.reference_cloud
    vis = visibility_matrix(plan, cloud)
    if occlusion_radius is not None:
        vis &= ~_occlusion_mask(plan, cloud, occlusion_radius)
    rng = np.random.default_rng(derive_seed(noise.rng_seed, eval_seed, 5))
    if noise.sigma_image > 0:
        p_drop = min(1.0, noise.dropout_scale * noise.sigma_image)
        vis &= rng.random(vis.shape) >= p_drop
    pos = plan.positions()
    diff = pos[:, None, :] - cloud[None, :, :]  # (N, P, 3) point->camera
    dist = np.linalg.norm(diff, axis=2)
    safe = np.where(dist > 0, dist, 1.0)
    rays = diff / safe[:, :, None]
    cos_pair = np.einsum("ipk,jpk->ijp", rays, rays)
    valid = vis[:, None, :] & vis[None, :, :]
    iu = np.triu_indices(pos.shape[0], k=1)
    if iu[0].size == 0:
        recon_mask = np.zeros(cloud.shape[0], dtype=bool)
    else:
        ok = valid[iu] & (cos_pair[iu] <= np.cos(tau_parallax))
        recon_mask = ok.any(axis=0)
    pts = cloud[recon_mask].copy()
    if noise.sigma_image > 0 and pts.shape[0] > 0:
        pts += rng.normal(0.0, noise.jitter_scale * noise.sigma_image, size=pts.shape)
    return pts


def reward(
    scene: Scene,
    theta,
    space: SearchSpace,
    noise: NoiseSpec = NOISE_FREE,
    eval_seed: int = 0,
    worst_case_reward: float = DEFAULT_WORST_CASE_REWARD,
    tau_parallax: float = DEFAULT_TAU_PARALLAX,
) -> float:
    """Black-box reward: negative chamfer distance of the simulated reconstruction.

    Placement noise perturbs theta before decoding (the caller's intended
    theta is what gets recorded by the optimizer); an empty reconstruction
    maps to worst_case_reward; observation noise is added last.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if not space.contains(theta):
        raise ValueError("theta is outside the search-space bounds")
    if np.any(np.asarray(noise.sigma_input) > 0):
        eps_rng = np.random.default_rng(derive_seed(noise.rng_seed, eval_seed, 6))
        theta = space.clip_wrap(theta + eps_rng.normal(0.0, noise.sigma_input, size=theta.shape))
    plan = decode_plan(theta, space)
    pc = reconstruct(scene, plan, noise, eval_seed, tau_parallax=tau_parallax)
    if pc.shape[0] == 0:
        y = worst_case_reward
    else:
        y = -chamfer_distance(scene.reference_cloud, pc)
    if noise.sigma_obs > 0:
        obs_rng = np.random.default_rng(derive_seed(noise.rng_seed, eval_seed, 7))
        y += float(obs_rng.normal(0.0, noise.sigma_obs))
    return float(y)


def geometric_coverage(
    scene: Scene,
    plan: ViewPlan,
    tau_parallax: float = DEFAULT_TAU_PARALLAX,
) -> float:
    """Noise-free fraction of reference points recoverable by triangulation."""
    pc = reconstruct(scene, plan, NOISE_FREE, eval_seed=0, tau_parallax=tau_parallax)
    return pc.shape[0] / scene.size


class AdapterError(RuntimeError):
    """External reconstruction command failed or produced unusable output."""


@dataclass(frozen=True)
class AdapterConfig:
    """Contract for an external reconstruction command.

    The command runs with workdir as its current directory, must exit 0, and
    must produce `recon.ply` (ASCII PLY) there. The plan is provided as
    `plan.json` in the same directory.
    """

    command: str | tuple[str, ...]
    reference_cloud_path: str
    timeout: float = 600.0
    worst_case_reward: float = DEFAULT_WORST_CASE_REWARD


_workdir_locks: dict[str, threading.Lock] = {}
_locks_guard = threading.Lock()


def _workdir_lock(workdir: str) -> threading.Lock:
    key = os.path.abspath(workdir)
    with _locks_guard:
        return _workdir_locks.setdefault(key, threading.Lock())


def reward_external(theta, space: SearchSpace, adapter: AdapterConfig, workdir) -> float:
    """Reward via an external reconstruction process instead of the simulator."""
    workdir = os.fspath(workdir)
    os.makedirs(workdir, exist_ok=True)
    plan = decode_plan(np.asarray(theta, dtype=float), space)
    reference = fileio.read_ply(adapter.reference_cloud_path)
    with _workdir_lock(workdir):
        fileio.write_plan_file(plan, os.path.join(workdir, "plan.json"))
        cmd = adapter.command
        try:
            proc = subprocess.run(
                cmd if isinstance(cmd, str) else list(cmd),
                cwd=workdir,
                shell=isinstance(cmd, str),
                timeout=adapter.timeout,
                capture_output=True,
                text=True,
            )
        except subprocess.TimeoutExpired as e:
            raise AdapterError(f"external command timed out after {adapter.timeout}s") from e
        if proc.returncode != 0:
            raise AdapterError(
                f"external command exited {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        out_path = os.path.join(workdir, "recon.ply")
        if not os.path.exists(out_path):
            raise AdapterError("external command produced no recon.ply")
        recon = fileio.read_ply(out_path)
    if recon.shape[0] == 0:
        return adapter.worst_case_reward
    return -chamfer_distance(reference, recon)
