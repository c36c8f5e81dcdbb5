"""Pinhole camera math, point splatting, and a minimal Gaussian renderer.

Feature maps are plain (H, W, C) float64 arrays; masks and coverage are
(H, W) arrays.  Pixel centers sit at integer coordinates and continuous
coordinates round half-up when points are scattered onto the grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, InvalidArgument

MIN_DEPTH = 1e-6
DEPTH_TIE = 1e-12


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rotation and translation: p_cam = R p_world + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9:
            raise InvalidArgument("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise InvalidArgument("rotation determinant must be 1 within 1e-9")

    def compose_delta(self, delta_rotation, delta_translation) -> "CameraPose":
        """Apply an extra camera-frame rotation/translation."""
        dr = np.asarray(delta_rotation, dtype=np.float64).reshape(3, 3)
        dt = np.asarray(delta_translation, dtype=np.float64).reshape(3)
        return CameraPose(rotation=dr @ self.rotation, translation=dr @ self.translation + dt)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgument("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise InvalidArgument("principal point must lie inside the image")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }


@dataclass(frozen=True)
class GaussianSet:
    """Isotropic-or-full-covariance primitives with per-primitive features."""

    positions: np.ndarray   # (P, 3)
    opacities: np.ndarray   # (P,)
    covariances: np.ndarray  # (P, 3, 3)
    features: np.ndarray    # (P, C)

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        o = np.asarray(self.opacities, dtype=np.float64).reshape(-1)
        c = np.asarray(self.covariances, dtype=np.float64).reshape(-1, 3, 3)
        f = np.asarray(self.features, dtype=np.float64)
        f = f.reshape(len(p), -1) if len(p) else f.reshape(0, max(f.shape[-1] if f.ndim else 1, 1))
        for name, arr in (("opacities", o), ("covariances", c), ("features", f)):
            if len(arr) != len(p):
                raise InvalidArgument(f"{name} length {len(arr)} != positions length {len(p)}")
        if np.any((o < 0) | (o > 1)):
            raise InvalidArgument("opacities must lie in [0, 1]")
        if len(c):
            if np.abs(c - np.transpose(c, (0, 2, 1))).max() > 1e-9:
                raise InvalidArgument("covariances must be symmetric within 1e-9")
            if np.linalg.eigvalsh(c).min() < -1e-12:
                raise InvalidArgument("covariances must be positive semi-definite")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "opacities", o)
        object.__setattr__(self, "covariances", c)
        object.__setattr__(self, "features", f)

    def __len__(self) -> int:
        return len(self.positions)


def project(point, pose: CameraPose, intrinsics: Intrinsics):
    """Project a world point; returns (u, v, depth) or raises BehindCamera."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise InvalidArgument("point must be finite")
    pc = pose.rotation @ p + pose.translation
    depth = float(pc[2])
    if depth <= MIN_DEPTH:
        raise BehindCamera(f"depth {depth} <= {MIN_DEPTH}")
    u = intrinsics.fx * pc[0] / depth + intrinsics.cx
    v = intrinsics.fy * pc[1] / depth + intrinsics.cy
    return float(u), float(v), depth


def unproject(pixel, depth, pose: CameraPose, intrinsics: Intrinsics) -> np.ndarray:
    """Exact inverse of project for the same pose and intrinsics."""
    d = float(depth)
    if d <= 0:
        raise InvalidArgument(f"depth must be positive, got {d}")
    u, v = float(pixel[0]), float(pixel[1])
    pc = np.array([(u - intrinsics.cx) / intrinsics.fx * d,
                   (v - intrinsics.cy) / intrinsics.fy * d,
                   d])
    return pose.rotation.T @ (pc - pose.translation)


def project_points(points, pose: CameraPose, intrinsics: Intrinsics):
    """Vectorized projection; returns (u, v, depth, in_front) without raising."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = p @ pose.rotation.T + pose.translation
    depth = pc[:, 2]
    in_front = depth > MIN_DEPTH
    safe = np.where(in_front, depth, 1.0)
    u = intrinsics.fx * pc[:, 0] / safe + intrinsics.cx
    v = intrinsics.fy * pc[:, 1] / safe + intrinsics.cy
    return u, v, depth, in_front


def splat_points(points, features, validity, pose: CameraPose, intrinsics: Intrinsics):
    """Nearest-point z-buffer scatter of features onto the pixel grid.

    Returns (feature_map (H,W,C), coverage (H,W) bool, winner (H,W) int32)
    where winner holds the source index that owns each covered pixel (-1
    elsewhere).  Depth ties within 1e-12 resolve to the lower source index.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    feats = np.asarray(features, dtype=np.float64).reshape(len(pts), -1)
    valid = np.ones(len(pts), dtype=bool) if validity is None else np.asarray(validity, dtype=bool).reshape(-1)
    H, W, C = intrinsics.height, intrinsics.width, feats.shape[1]
    fmap = np.zeros((H, W, C))
    coverage = np.zeros((H, W), dtype=bool)
    winner = np.full((H, W), -1, dtype=np.int64)
    if not valid.any():
        return fmap, coverage, winner
    if not np.all(np.isfinite(pts[valid])):
        raise InvalidArgument("points must be finite where valid")

    u, v, depth, in_front = project_points(pts, pose, intrinsics)
    px = np.floor(u + 0.5).astype(np.int64)
    py = np.floor(v + 0.5).astype(np.int64)
    ok = valid & in_front & (px >= 0) & (px < W) & (py >= 0) & (py < H)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return fmap, coverage, winner
    lin = py[idx] * W + px[idx]
    d = depth[idx]

    min_depth = np.full(H * W, np.inf)
    np.minimum.at(min_depth, lin, d)
    near = d <= min_depth[lin] + DEPTH_TIE
    lin_n, idx_n = lin[near], idx[near]
    best = np.full(H * W, np.iinfo(np.int64).max)
    np.minimum.at(best, lin_n, idx_n)
    win = best[lin_n] == idx_n
    rows, cols = lin_n[win] // W, lin_n[win] % W
    src = idx_n[win]
    fmap[rows, cols] = feats[src]
    coverage[rows, cols] = True
    winner[rows, cols] = src
    return fmap, coverage, winner


def render_gaussians(gaussians: GaussianSet, pose: CameraPose, intrinsics: Intrinsics) -> np.ndarray:
    """Simplified splatting renderer: project centers, sort front-to-back,
    alpha-composite isotropic footprints with screen radius
    sqrt(max eigenvalue) * fx / depth and per-pixel weight exp(-d^2/2r^2)*o.
    Compositing for a pixel stops once transmittance drops below 1e-4.
    Output is invariant to the order of the primitive list."""
    H, W = intrinsics.height, intrinsics.width
    C = gaussians.features.shape[1]
    out = np.zeros((H, W, C))
    if len(gaussians) == 0:
        return out
    u, v, depth, in_front = project_points(gaussians.positions, pose, intrinsics)
    idx = np.flatnonzero(in_front)
    if idx.size == 0:
        return out
    eigmax = np.linalg.eigvalsh(gaussians.covariances[idx]).max(axis=1)
    radius = np.sqrt(np.maximum(eigmax, 1e-30)) * intrinsics.fx / depth[idx]
    # content-based sort key so identical-depth primitives composite in a
    # list-order-independent sequence
    order = np.lexsort((
        gaussians.opacities[idx],
        gaussians.positions[idx, 2], gaussians.positions[idx, 1], gaussians.positions[idx, 0],
        depth[idx],
    ))
    trans = np.ones((H, W))
    for j in order:
        g = idx[j]
        r = max(float(radius[j]), 1e-6)
        o = float(gaussians.opacities[g])
        if o <= 0.0:
            continue
        cu, cv, half = u[idx[j]], v[idx[j]], int(np.ceil(3.0 * max(radius[j], 0.5)))
        x0, x1 = max(int(np.floor(cu)) - half, 0), min(int(np.floor(cu)) + half + 1, W)
        y0, y1 = max(int(np.floor(cv)) - half, 0), min(int(np.floor(cv)) + half + 1, H)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) - cu
        ys = np.arange(y0, y1) - cv
        d2 = ys[:, None] ** 2 + xs[None, :] ** 2
        w = np.exp(-d2 / (2.0 * r * r)) * o
        tpatch = trans[y0:y1, x0:x1]
        live = tpatch > 1e-4
        contrib = np.where(live, tpatch * w, 0.0)
        out[y0:y1, x0:x1] += contrib[:, :, None] * gaussians.features[g]
        trans[y0:y1, x0:x1] = np.where(live, tpatch * (1.0 - w), tpatch)
    return out


def orthonormalize_rotation(r) -> np.ndarray:
    """Nearest proper rotation (for rotations round-tripped through
    float32 storage)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=np.float64).reshape(3, 3))
    if np.linalg.det(u @ vt) < 0:
        u[:, -1] *= -1
    return u @ vt


def rotation_from_axis_angle(axis_angle) -> np.ndarray:
    """Rodrigues formula; the vector's norm is the rotation angle."""
    w = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return np.eye(3)
    k = w / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def look_at_pose(position, target, up=(0.0, 1.0, 0.0)) -> CameraPose:
    """World-to-camera pose for a camera at ``position`` looking at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - position
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise InvalidArgument("camera position coincides with target")
    z = fwd / n
    x = np.cross(np.asarray(up, dtype=np.float64), z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise InvalidArgument("up vector is parallel to the view direction")
    x = x / nx
    y = np.cross(z, x)
    r = np.stack([x, y, z])
    # re-orthonormalize so the pose passes the strict orthonormality check
    uu, _, vv = np.linalg.svd(r)
    r = uu @ vv
    if np.linalg.det(r) < 0:
        uu[:, -1] *= -1
        r = uu @ vv
    return CameraPose(rotation=r, translation=-r @ position)
