"""Synthetic ground-truth scenes, their renders, and oracle reconstructions.

A scene is a textured static point set plus an optional rigid dynamic
cluster on a smooth trajectory, viewed from a smooth camera arc.  Point
features come from a smooth random field so nearby surface points carry
similar feature directions.  The scene doubles as the decoder target for
the scene-video backend: a latent perturbs the per-frame cameras and
texture, and rewards compare the decoded frames against oracle geometry.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .backends import GaussianMixtureModel, GmmDiffusionBackend
from .errors import InvalidArgument
from .geometry import (
    CameraPose,
    GaussianSet,
    Intrinsics,
    look_at_pose,
    rotation_from_axis_angle,
    splat_points,
)


@dataclass(frozen=True)
class SceneSpec:
    frames: int = 8
    static_points: int = 200
    dynamic_points: int = 40
    width: int = 48
    height: int = 48
    focal: float = 48.0
    channels: int = 16
    box_extent: float = 1.0
    camera_distance: float = 3.0
    arc_degrees: float = 40.0
    camera_height: float = 0.4
    dynamic_radius: float = 0.2
    dynamic_amplitude: float = 0.5
    dynamic_spin: float = 0.6
    feature_waves: int = 8
    feature_frequency: float = 0.5
    feature_base_weight: float = 0.8
    oracle_radius_scale: float = 0.08

    def __post_init__(self):
        if self.frames < 1:
            raise InvalidArgument("scene needs at least one frame")
        if self.static_points < 100:
            raise InvalidArgument("scene needs at least 100 static points")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, spec: dict) -> "SceneSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(spec) - known
        if unknown:
            raise InvalidArgument(f"unknown scene spec fields: {sorted(unknown)}")
        return cls(**spec)


@dataclass
class GroundTruthScene:
    spec: SceneSpec
    seed: int
    static_points: np.ndarray      # (P, 3)
    static_features: np.ndarray    # (P, C)
    dynamic_points: np.ndarray     # (D, 3), empty for static-only scenes
    dynamic_features: np.ndarray   # (D, C)
    dynamic_center: np.ndarray     # (3,)
    dynamic_axis: np.ndarray       # (3,)
    dynamic_direction: np.ndarray  # (3,)
    nominal_poses: list            # frames CameraPose
    intrinsics: Intrinsics
    appearance_basis: np.ndarray   # (A, C)

    @property
    def frames(self) -> int:
        return self.spec.frames

    @property
    def has_dynamics(self) -> bool:
        return len(self.dynamic_points) > 0

    def dynamic_points_at(self, frame_time: float) -> np.ndarray:
        """Rigidly displaced dynamic cluster at a (possibly fractional)
        frame time inside [0, frames-1]."""
        if not self.has_dynamics:
            return self.dynamic_points
        n = self.frames
        if not 0.0 <= frame_time <= max(n - 1, 0):
            raise InvalidArgument(f"frame_time {frame_time} outside [0, {n - 1}]")
        tau = frame_time / (n - 1) if n > 1 else 0.0
        spec = self.spec
        rot = rotation_from_axis_angle(self.dynamic_axis * spec.dynamic_spin * tau)
        offset = spec.dynamic_amplitude * np.sin(np.pi * tau) * self.dynamic_direction
        local = self.dynamic_points - self.dynamic_center
        return local @ rot.T + self.dynamic_center + offset

    def points_at(self, frame_time: float):
        """All scene points at a frame time; returns (points, features,
        static_count)."""
        if not self.has_dynamics:
            return self.static_points, self.static_features, len(self.static_points)
        dyn = self.dynamic_points_at(frame_time)
        pts = np.concatenate([self.static_points, dyn])
        feats = np.concatenate([self.static_features, self.dynamic_features])
        return pts, feats, len(self.static_points)

    def describe(self) -> dict:
        return {"type": "ground-truth-scene", "seed": self.seed, "spec": self.spec.to_dict()}


def _feature_field(rng, spec: SceneSpec):
    """Smooth random feature field: a constant base direction plus a few
    random plane waves, so feature directions decorrelate over a
    controllable spatial scale."""
    c, w = spec.channels, spec.feature_waves
    base = rng.standard_normal(c)
    base /= np.linalg.norm(base)
    freqs = rng.standard_normal((w, 3))
    freqs *= spec.feature_frequency / np.maximum(np.linalg.norm(freqs, axis=1, keepdims=True), 1e-12)
    phases = rng.uniform(0, 2 * np.pi, w)
    amps = rng.standard_normal((w, c)) / np.sqrt(w)

    def field(points):
        phase = points @ freqs.T + phases
        return spec.feature_base_weight * base + np.cos(phase) @ amps

    return field


def synth_scene(seed: int, spec: SceneSpec) -> GroundTruthScene:
    """Deterministic synthetic scene for the given seed and spec."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(101,))))
    e = spec.box_extent
    static = rng.uniform(-e, e, (spec.static_points, 3))
    field_fn = _feature_field(rng, spec)
    static_feats = field_fn(static)

    if spec.dynamic_points > 0 and spec.dynamic_amplitude > 0.0:
        center = rng.uniform(-0.4 * e, 0.4 * e, 3)
        dyn = center + spec.dynamic_radius * rng.standard_normal((spec.dynamic_points, 3))
        dyn_feats = field_fn(dyn) + 0.3 * rng.standard_normal(spec.channels)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
    else:
        dyn = np.zeros((0, 3))
        dyn_feats = np.zeros((0, spec.channels))
        center = np.zeros(3)
        axis = np.array([0.0, 0.0, 1.0])
        direction = np.zeros(3)

    half = np.deg2rad(spec.arc_degrees) / 2
    angles = np.linspace(-half, half, spec.frames) if spec.frames > 1 else np.array([0.0])
    poses = []
    for a in angles:
        position = np.array([
            spec.camera_distance * np.sin(a),
            spec.camera_height,
            -spec.camera_distance * np.cos(a),
        ])
        poses.append(look_at_pose(position, target=np.zeros(3)))

    intr = Intrinsics(
        fx=spec.focal, fy=spec.focal,
        cx=spec.width / 2.0, cy=spec.height / 2.0,
        width=spec.width, height=spec.height,
    )
    basis = rng.standard_normal((6, spec.channels)) / np.sqrt(spec.channels)
    return GroundTruthScene(
        spec=spec, seed=int(seed),
        static_points=static, static_features=static_feats,
        dynamic_points=dyn, dynamic_features=dyn_feats,
        dynamic_center=center, dynamic_axis=axis, dynamic_direction=direction,
        nominal_poses=poses, intrinsics=intr, appearance_basis=basis,
    )


@dataclass
class RenderedFrame:
    features: np.ndarray   # (H, W, C)
    pointmap: np.ndarray   # (H, W, 3) world coordinates of the owning point
    validity: np.ndarray   # (H, W) bool
    mask: np.ndarray       # (H, W) uint8, 1 where a dynamic point owns the pixel


def render_scene(scene: GroundTruthScene, pose: CameraPose, frame_time: float) -> RenderedFrame:
    """Render the scene at a pose/time; also returns the ground-truth
    pointmap and dynamic mask implied by the z-buffer winners."""
    pts, feats, static_count = scene.points_at(frame_time)
    fmap, coverage, winner = splat_points(pts, feats, None, pose, scene.intrinsics)
    pointmap = np.zeros((*coverage.shape, 3))
    pointmap[coverage] = pts[winner[coverage]]
    mask = np.zeros(coverage.shape, dtype=np.uint8)
    mask[coverage & (winner >= static_count)] = 1
    return RenderedFrame(features=fmap, pointmap=pointmap, validity=coverage, mask=mask)


# ---------------------------------------------------------------------------
# scene-video latents
# ---------------------------------------------------------------------------

APPEARANCE_DIM = 6


@dataclass(frozen=True)
class LatentMagnitudes:
    """Physical effect of one latent unit per coordinate group, and the
    latent prior scale per group.  The effective physical spread of a
    group is magnitude * prior scale; the prior scale additionally sets
    how early in the reverse process the group's values commit (larger
    prior variance beats the injected unit noise sooner)."""

    rotation: float = 0.02
    translation: float = 0.05
    texture: float = 0.1
    rotation_prior: float = 1.0
    translation_prior: float = 1.0
    texture_prior: float = 1.0

    def prior_scales(self, frames: int) -> np.ndarray:
        per_frame = np.concatenate([
            np.full(3, self.rotation_prior),
            np.full(3, self.translation_prior),
            np.full(APPEARANCE_DIM, self.texture_prior),
        ])
        return np.tile(per_frame, frames)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SceneVideoLatent:
    """Per-frame camera perturbations (axis-angle + translation) and
    texture jitter coefficients."""

    trajectory: np.ndarray   # (frames, 6)
    appearance: np.ndarray   # (frames, APPEARANCE_DIM)

    @classmethod
    def dimension(cls, frames: int) -> int:
        return frames * (6 + APPEARANCE_DIM)

    @classmethod
    def from_flat(cls, flat, frames: int) -> "SceneVideoLatent":
        flat = np.asarray(flat, dtype=np.float64).reshape(frames, 6 + APPEARANCE_DIM)
        return cls(trajectory=flat[:, :6].copy(), appearance=flat[:, 6:].copy())

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.trajectory, self.appearance], axis=1).reshape(-1)


def scene_latent_decode(latent, scene: GroundTruthScene,
                        magnitudes: LatentMagnitudes = LatentMagnitudes()) -> np.ndarray:
    """Render the scene along its nominal path composed with the latent's
    per-frame perturbations; returns a (frames, H, W, C) stack.  Purely
    deterministic: a zero latent reproduces the nominal renders bitwise."""
    n = scene.frames
    flat = np.asarray(latent, dtype=np.float64).reshape(-1)
    if flat.size != SceneVideoLatent.dimension(n):
        raise InvalidArgument(
            f"latent has {flat.size} values, scene expects {SceneVideoLatent.dimension(n)}"
        )
    if not np.all(np.isfinite(flat)):
        raise InvalidArgument("latent must be finite")
    lat = SceneVideoLatent.from_flat(flat, n)
    intr = scene.intrinsics
    frames = np.empty((n, intr.height, intr.width, scene.spec.channels))
    for f in range(n):
        rot = rotation_from_axis_angle(magnitudes.rotation * lat.trajectory[f, :3])
        dt = magnitudes.translation * lat.trajectory[f, 3:6]
        pose = scene.nominal_poses[f].compose_delta(rot, dt)
        pts, feats, _ = scene.points_at(float(f))
        offset = magnitudes.texture * (lat.appearance[f] @ scene.appearance_basis)
        fmap, _, _ = splat_points(pts, feats + offset, None, pose, intr)
        frames[f] = fmap
    return frames


class SceneVideoBackend(GmmDiffusionBackend):
    """Velocity-prediction diffusion over scene-video latents.

    The prior is a single diagonal Gaussian whose per-coordinate scales
    come from the magnitudes (unit scales by default); decoding happens
    only inside reward evaluation.
    """

    def __init__(self, scene: GroundTruthScene, magnitudes: LatentMagnitudes = LatentMagnitudes()):
        dim = SceneVideoLatent.dimension(scene.frames)
        scales = magnitudes.prior_scales(scene.frames)
        model = GaussianMixtureModel(
            weights=np.array([1.0]),
            means=np.zeros((1, dim)),
            variances=(scales * scales)[None, :],
        )
        super().__init__(model)
        self.scene = scene
        self.magnitudes = magnitudes

    def decode(self, latent) -> np.ndarray:
        return scene_latent_decode(latent, self.scene, self.magnitudes)

    def describe(self) -> dict:
        return {
            "type": "scene-video",
            "scene": self.scene.describe(),
            "magnitudes": self.magnitudes.to_dict(),
        }


# ---------------------------------------------------------------------------
# oracle reconstructions
# ---------------------------------------------------------------------------

@dataclass
class SceneEstimate3D:
    gaussians: GaussianSet
    poses: list
    intrinsics: Intrinsics
    frame_indices: tuple


@dataclass
class SceneEstimate4D:
    pointmaps: np.ndarray   # (F, H, W, 3)
    validity: np.ndarray    # (F, H, W) bool
    masks: np.ndarray       # (F, H, W) uint8
    poses: list
    intrinsics: Intrinsics
    frame_indices: tuple


def _perturb_pose(pose: CameraPose, noise: float, rng) -> CameraPose:
    axis = rng.standard_normal(3)
    axis /= max(np.linalg.norm(axis), 1e-12)
    rot = rotation_from_axis_angle(axis * noise * rng.standard_normal())
    dt = noise * rng.standard_normal(3)
    return CameraPose(rotation=rot @ pose.rotation, translation=rot @ pose.translation + dt)


def local_point_spacing(points) -> float:
    """Median nearest-neighbour distance."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 1.0
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(dist[:, 1]))


def oracle_reconstruct_3d(frames, scene: GroundTruthScene, noise_level: float,
                          frame_indices=None, seed: int = 0) -> SceneEstimate3D:
    """Ground-truth stand-in for a feed-forward 3D reconstructor: one
    isotropic opaque primitive per static scene point plus the true poses,
    with optional zero-mean perturbations of magnitude ``noise_level``."""
    if noise_level < 0:
        raise InvalidArgument("noise level must be non-negative")
    if frame_indices is None:
        frame_indices = tuple(range(len(frames)))
    frame_indices = tuple(int(i) for i in frame_indices)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(202,))))
    pts = scene.static_points.copy()
    poses = [scene.nominal_poses[i] for i in frame_indices]
    if noise_level > 0:
        pts = pts + noise_level * rng.standard_normal(pts.shape)
        poses = [_perturb_pose(p, noise_level, rng) for p in poses]
    r = local_point_spacing(scene.static_points) * scene.spec.oracle_radius_scale
    count = len(pts)
    gaussians = GaussianSet(
        positions=pts,
        opacities=np.ones(count),
        covariances=np.broadcast_to(np.eye(3) * r * r, (count, 3, 3)).copy(),
        features=scene.static_features.copy(),
    )
    return SceneEstimate3D(
        gaussians=gaussians, poses=poses, intrinsics=scene.intrinsics,
        frame_indices=frame_indices,
    )


def oracle_reconstruct_4d(frames, scene: GroundTruthScene, noise_level: float,
                          frame_indices=None, seed: int = 0) -> SceneEstimate4D:
    """Ground-truth pointmaps, dynamic masks, and poses for the selected
    frames; ``noise_level`` perturbs pointmaps and poses but never masks."""
    if noise_level < 0:
        raise InvalidArgument("noise level must be non-negative")
    if frame_indices is None:
        frame_indices = tuple(range(len(frames)))
    frame_indices = tuple(int(i) for i in frame_indices)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(203,))))
    intr = scene.intrinsics
    F = len(frame_indices)
    pointmaps = np.zeros((F, intr.height, intr.width, 3))
    validity = np.zeros((F, intr.height, intr.width), dtype=bool)
    masks = np.zeros((F, intr.height, intr.width), dtype=np.uint8)
    poses = []
    for j, i in enumerate(frame_indices):
        rendered = render_scene(scene, scene.nominal_poses[i], float(i))
        pointmaps[j] = rendered.pointmap
        validity[j] = rendered.validity
        masks[j] = rendered.mask
        pose = scene.nominal_poses[i]
        if noise_level > 0:
            pointmaps[j][validity[j]] += noise_level * rng.standard_normal(
                (int(validity[j].sum()), 3)
            )
            pose = _perturb_pose(pose, noise_level, rng)
        poses.append(pose)
    return SceneEstimate4D(
        pointmaps=pointmaps, validity=validity, masks=masks,
        poses=poses, intrinsics=intr, frame_indices=frame_indices,
    )
