"""Camera/scene geometry: poses, search-space parameterization, visibility predicates.

Point clouds are plain float arrays of shape (P, 3), in meters. Camera
orientation is a unit look-direction vector; the visibility cone is
rotationally symmetric about it, so roll is irrelevant and omitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

LOOK_AT_CENTER = "look-at-center"
FREE_POSE = "free-pose"


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError("coordinates must be finite")
    return a


@dataclass(frozen=True)
class CameraPose:
    """One camera: position, unit look direction, and its viewing cone."""

    position: np.ndarray
    look_dir: np.ndarray
    fov_half_angle: float
    range_min: float
    range_max: float

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))
        object.__setattr__(self, "look_dir", _as_vec3(self.look_dir))
        n = float(np.linalg.norm(self.look_dir))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"look_dir must be unit length, got norm {n}")
        if not (0.0 < self.fov_half_angle < np.pi / 2):
            raise ValueError("fov_half_angle must lie in (0, pi/2)")
        if not (0.0 <= self.range_min < self.range_max):
            raise ValueError("require 0 <= range_min < range_max")


@dataclass(frozen=True)
class ViewPlan:
    """An ordered set of N >= 1 camera poses."""

    cameras: tuple[CameraPose, ...]

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        if len(self.cameras) < 1:
            raise ValueError("a plan needs at least one camera")

    def __len__(self) -> int:
        return len(self.cameras)

    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.cameras])

    def look_dirs(self) -> np.ndarray:
        return np.array([c.look_dir for c in self.cameras])


@dataclass(frozen=True)
class SearchSpace:
    """Bounded parameterization of the feasible camera configurations.

    look-at-center mode: 3 dims per camera (azimuth, elevation, radius),
    cameras placed on spherical offsets around scene_center and oriented
    toward it. free-pose mode: 5 dims per camera (x, y, z, yaw, pitch).
    Azimuth/yaw dims are periodic and wrap modulo 2*pi.
    """

    mode: str
    n_cameras: int
    scene_center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    fov_half_angle: float = np.pi / 4
    range_min: float = 0.05
    range_max: float = 50.0

    def __post_init__(self):
        if self.mode not in (LOOK_AT_CENTER, FREE_POSE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_cameras < 1:
            raise ValueError("n_cameras must be >= 1")
        object.__setattr__(self, "scene_center", _as_vec3(self.scene_center))
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        d = self.dimension
        if lo.shape != (d,) or hi.shape != (d,):
            raise ValueError(f"bounds must have length {d}")
        if not np.all(lo < hi):
            raise ValueError("lower bounds must be strictly below upper bounds")

    @property
    def per_camera(self) -> int:
        return 3 if self.mode == LOOK_AT_CENTER else 5

    @property
    def dimension(self) -> int:
        return self.per_camera * self.n_cameras

    @property
    def periodic_dims(self) -> tuple[int, ...]:
        k = self.per_camera
        off = 0 if self.mode == LOOK_AT_CENTER else 3
        return tuple(off + k * i for i in range(self.n_cameras))

    def periodic_mask(self) -> np.ndarray:
        m = np.zeros(self.dimension, dtype=bool)
        m[list(self.periodic_dims)] = True
        return m

    def clip_wrap(self, theta: np.ndarray) -> np.ndarray:
        """Wrap angular dims modulo 2*pi into their bound window, clip the rest."""
        theta = np.asarray(theta, dtype=float).reshape(self.dimension)
        out = np.clip(theta, self.lower, self.upper)
        pm = self.periodic_mask()
        out[pm] = self.lower[pm] + np.mod(theta[pm] - self.lower[pm], TWO_PI)
        return out

    def contains(self, theta: np.ndarray, atol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.dimension,):
            return False
        return bool(np.all(theta >= self.lower - atol) and np.all(theta <= self.upper + atol))


def look_at_center_space(
    n_cameras: int,
    scene_center,
    radius_range=(1.0, 4.0),
    elevation_range=(0.05, 1.4),
    fov_half_angle: float = np.pi / 4,
    range_min: float = 0.05,
    range_max: float = 50.0,
) -> SearchSpace:
    """Convenience constructor for the default look-at-center search space."""
    lo = np.tile([0.0, elevation_range[0], radius_range[0]], n_cameras)
    hi = np.tile([TWO_PI, elevation_range[1], radius_range[1]], n_cameras)
    return SearchSpace(
        mode=LOOK_AT_CENTER,
        n_cameras=n_cameras,
        scene_center=scene_center,
        lower=lo,
        upper=hi,
        fov_half_angle=fov_half_angle,
        range_min=range_min,
        range_max=range_max,
    )


def free_pose_space(
    n_cameras: int,
    scene_center,
    position_lower,
    position_upper,
    pitch_range=(-1.4, 1.4),
    fov_half_angle: float = np.pi / 4,
    range_min: float = 0.05,
    range_max: float = 50.0,
) -> SearchSpace:
    """Convenience constructor for the 5N-dimensional free-pose space.

    High-dimensional for GP surrogates at typical camera counts; prefer
    look-at-center unless free placement is genuinely required.
    """
    plo = np.asarray(position_lower, dtype=float).reshape(3)
    phi = np.asarray(position_upper, dtype=float).reshape(3)
    lo = np.tile(np.concatenate([plo, [0.0, pitch_range[0]]]), n_cameras)
    hi = np.tile(np.concatenate([phi, [TWO_PI, pitch_range[1]]]), n_cameras)
    return SearchSpace(
        mode=FREE_POSE,
        n_cameras=n_cameras,
        scene_center=scene_center,
        lower=lo,
        upper=hi,
        fov_half_angle=fov_half_angle,
        range_min=range_min,
        range_max=range_max,
    )


def _dir_from_angles(yaw: float, pitch: float) -> np.ndarray:
    cp = np.cos(pitch)
    return np.array([cp * np.cos(yaw), cp * np.sin(yaw), np.sin(pitch)])


def decode_plan(theta, space: SearchSpace) -> ViewPlan:
    """Turn a parameter vector into concrete camera poses. Deterministic."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (space.dimension,):
        raise ValueError(f"expected {space.dimension} parameters, got {theta.shape[0]}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains non-finite entries")
    cams = []
    k = space.per_camera
    for i in range(space.n_cameras):
        block = theta[k * i : k * (i + 1)]
        if space.mode == LOOK_AT_CENTER:
            az, el, radius = block
            az = az % TWO_PI
            offset = radius * _dir_from_angles(az, el)
            pos = space.scene_center + offset
            look = -offset / radius
        else:
            pos = block[:3]
            yaw = block[3] % TWO_PI
            pitch = block[4]
            look = _dir_from_angles(yaw, pitch)
        look = look / np.linalg.norm(look)
        cams.append(
            CameraPose(
                position=pos,
                look_dir=look,
                fov_half_angle=space.fov_half_angle,
                range_min=space.range_min,
                range_max=space.range_max,
            )
        )
    return ViewPlan(cameras=tuple(cams))


def encode_plan(plan: ViewPlan, space: SearchSpace) -> np.ndarray:
    """Inverse of decode_plan; round-trips within 1e-9 on valid plans."""
    if len(plan) != space.n_cameras:
        raise ValueError(f"plan has {len(plan)} cameras, space expects {space.n_cameras}")
    theta = np.empty(space.dimension)
    k = space.per_camera
    for i, cam in enumerate(plan.cameras):
        if space.mode == LOOK_AT_CENTER:
            offset = cam.position - space.scene_center
            radius = float(np.linalg.norm(offset))
            if radius <= 0:
                raise ValueError("camera sits at the scene center")
            toward = -offset / radius
            if float(np.dot(toward, cam.look_dir)) < 1.0 - 1e-6:
                raise ValueError(f"camera {i} does not look at the scene center")
            az = np.arctan2(offset[1], offset[0]) % TWO_PI
            el = np.arcsin(np.clip(offset[2] / radius, -1.0, 1.0))
            theta[k * i : k * (i + 1)] = (az, el, radius)
        else:
            v = cam.look_dir
            yaw = np.arctan2(v[1], v[0]) % TWO_PI
            pitch = np.arcsin(np.clip(v[2], -1.0, 1.0))
            theta[k * i : k * i + 3] = cam.position
            theta[k * i + 3] = yaw
            theta[k * i + 4] = pitch
    return theta


def is_visible(pose: CameraPose, p) -> bool:
    """True iff p is within the pose's range band and viewing cone."""
    p = _as_vec3(p)
    d = p - pose.position
    dist = float(np.linalg.norm(d))
    if dist < pose.range_min or dist > pose.range_max:
        return False
    if dist == 0.0:
        return pose.range_min == 0.0
    cos_ang = float(np.dot(pose.look_dir, d)) / dist
    return cos_ang >= np.cos(pose.fov_half_angle)


def visibility_matrix(plan: ViewPlan, cloud: np.ndarray) -> np.ndarray:
    """Boolean (N_cameras, P) matrix of is_visible over all pairs, vectorized."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    pos = plan.positions()
    dirs = plan.look_dirs()
    diff = cloud[None, :, :] - pos[:, None, :]  # (N, P, 3)
    dist = np.linalg.norm(diff, axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_ang = np.einsum("nk,npk->np", dirs, diff) / dist
    cos_ang = np.where(dist > 0, cos_ang, 1.0)
    vis = np.ones(dist.shape, dtype=bool)
    for i, cam in enumerate(plan.cameras):
        vis[i] = (
            (dist[i] >= cam.range_min)
            & (dist[i] <= cam.range_max)
            & (cos_ang[i] >= np.cos(cam.fov_half_angle))
        )
    return vis


def parallax_angle(c1, c2, p) -> float:
    """Angle at p between the rays p->c1 and p->c2, in [0, pi]."""
    c1, c2, p = _as_vec3(c1), _as_vec3(c2), _as_vec3(p)
    u1 = c1 - p
    u2 = c2 - p
    n1 = np.linalg.norm(u1)
    n2 = np.linalg.norm(u2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("point coincides with a camera position")
    cos_a = float(np.dot(u1, u2) / (n1 * n2))
    return float(np.arccos(np.clip(cos_a, -1.0, 1.0)))
