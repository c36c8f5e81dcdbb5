"""Deterministic geometry-free reconstruction stand-in.

The mock ignores image content for geometry: cameras sit on a fixed
parameterized arc (identity rotations, translations sweeping the arc),
pointmaps place every pixel at a constant depth through the request
intrinsics, and dynamic masks are all zero (the mock scene is static).
3d requests get a regular grid of isotropic primitives on the
constant-depth plane whose features are sampled from the first input
frame, so identical requests produce byte-identical responses.

Real pose-free reconstruction networks can replace this module by
implementing the same ``(BridgeRequest) -> response dict`` signature and
passing the handler to ``serve``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .protocol import BridgeRequest, ProtocolError
from .tensorfile import read_tensor, write_tensor

PLANE_DEPTH = 3.0
ARC_SPAN = 0.4
GRID = 8


def _arc_pose(index: int, count: int) -> np.ndarray:
    # identity rotation; translation sweeps a shallow arc in front of the plane
    theta = 0.0 if count == 1 else (index / (count - 1) - 0.5) * ARC_SPAN
    t = np.array([np.sin(theta), 0.0, PLANE_DEPTH * (1.0 - np.cos(theta))])
    return np.hstack([np.eye(3), t[:, None]])


def _plane_points(intr: dict) -> np.ndarray:
    xs = np.linspace(0, intr["width"] - 1, GRID)
    ys = np.linspace(0, intr["height"] - 1, GRID)
    u, v = np.meshgrid(xs, ys)
    x = (u - intr["cx"]) / intr["fx"] * PLANE_DEPTH
    y = (v - intr["cy"]) / intr["fy"] * PLANE_DEPTH
    return np.stack([x, y, np.full_like(x, PLANE_DEPTH)], axis=-1).reshape(-1, 3)


def mock_reconstruct(request: BridgeRequest) -> dict:
    """Handle one request; returns the response dict with tensor paths."""
    if request.mode not in ("3d", "4d"):
        raise ProtocolError(f"unsupported mode {request.mode!r}")
    scratch = Path(request.scratch)
    scratch.mkdir(parents=True, exist_ok=True)
    frames = [np.asarray(read_tensor(p), dtype=np.float64) for p in request.frames]
    intr = request.intrinsics
    h, w = int(intr["height"]), int(intr["width"])
    for i, frame in enumerate(frames):
        if frame.ndim != 3 or frame.shape[0] != h or frame.shape[1] != w:
            raise ProtocolError(
                f"frame {i} shaped {frame.shape}, expected ({h}, {w}, channels)"
            )

    pose_paths = []
    for i in range(len(frames)):
        path = scratch / f"pose_{i:03d}.f32t"
        write_tensor(path, _arc_pose(i, len(frames)))
        pose_paths.append(str(path))

    if request.mode == "3d":
        points = _plane_points(intr)
        count = len(points)
        px = np.clip(((points[:, 0] / PLANE_DEPTH) * intr["fx"] + intr["cx"]).round().astype(int), 0, w - 1)
        py = np.clip(((points[:, 1] / PLANE_DEPTH) * intr["fy"] + intr["cy"]).round().astype(int), 0, h - 1)
        features = frames[0][py, px]
        radius = PLANE_DEPTH / float(intr["fx"]) * 2.0
        paths = {}
        for name, tensor in (
            ("positions", points),
            ("opacities", np.ones(count)),
            ("covariances", np.broadcast_to(np.eye(3) * radius * radius, (count, 3, 3)).copy()),
            ("features", features),
        ):
            path = scratch / f"gauss_{name}.f32t"
            write_tensor(path, tensor)
            paths[name] = str(path)
        return {"status": "ok", "poses": pose_paths, "gaussians": paths}

    # 4d: constant-depth pointmaps through the intrinsics, all-static masks
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    pointmap = np.stack([
        (u - intr["cx"]) / intr["fx"] * PLANE_DEPTH,
        (v - intr["cy"]) / intr["fy"] * PLANE_DEPTH,
        np.full_like(u, PLANE_DEPTH),
    ], axis=-1)
    pointmap_paths, mask_paths = [], []
    for i in range(len(frames)):
        pm_path = scratch / f"pointmap_{i:03d}.f32t"
        mask_path = scratch / f"mask_{i:03d}.f32t"
        write_tensor(pm_path, pointmap)
        write_tensor(mask_path, np.zeros((h, w)))
        pointmap_paths.append(str(pm_path))
        mask_paths.append(str(mask_path))
    return {"status": "ok", "poses": pose_paths, "pointmaps": pointmap_paths, "masks": mask_paths}
