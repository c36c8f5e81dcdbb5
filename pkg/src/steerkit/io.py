"""Run artifacts: manifests, trace tables, scene/estimate bundles, images."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument
from .geometry import CameraPose, GaussianSet, Intrinsics, orthonormalize_rotation
from .scene import SceneEstimate3D, SceneEstimate4D
from .steering import SteerResult
from .tensorfile import read_tensor, write_tensor

TRACES_HEADER = ["step", "particle", "reward", "weight", "ess", "ancestor"]
TRACES_SCHEMA = "steerkit-traces-v1"
SCORES_HEADER = ["frame", "score", "raw_sum", "pixels"]
SCORES_SCHEMA = "steerkit-scores-v1"
BENCH_HEADER = ["suite", "setting", "seed", "metric"]
BENCH_SCHEMA = "steerkit-bench-v1"


def config_stamp(config: dict) -> str:
    """Content hash of a config snapshot (sha1 of canonical JSON)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def write_traces_csv(path, result: SteerResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACES_HEADER)
        for tr in result.traces:
            for i in range(len(tr.weights)):
                writer.writerow([
                    tr.step, i, repr(float(tr.rewards[i])), repr(float(tr.weights[i])),
                    repr(float(tr.ess)), int(tr.ancestors[i]),
                ])


def write_steer_outputs(out_dir, result: SteerResult, config: dict) -> dict:
    """Write manifest, traces, and tensors for one steering run; returns
    the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "selected.f32t", result.selected)
    write_tensor(out / "ensemble.f32t", result.final_states)
    write_tensor(out / "ensemble_rewards.f32t", result.final_rewards)
    write_traces_csv(out / "traces.csv", result)
    manifest = {
        "config": config,
        "stamp": config_stamp(config),
        "traces_schema": TRACES_SCHEMA,
        "engine": result.manifest,
        "result": {
            "selected_index": result.selected_index,
            "selected_reward": result.selected_reward,
        },
        "outputs": ["selected.f32t", "ensemble.f32t", "ensemble_rewards.f32t", "traces.csv"],
    }
    write_manifest(out / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# scene-estimate bundles
# ---------------------------------------------------------------------------

def _poses_to_tensor(poses) -> np.ndarray:
    return np.stack([np.hstack([p.rotation, p.translation[:, None]]) for p in poses])


def _poses_from_tensor(arr) -> list:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1:] != (3, 4):
        raise FormatError(f"pose tensor must be (F, 3, 4), got {arr.shape}")
    # float32 storage perturbs orthonormality; snap back onto the manifold
    return [CameraPose(rotation=orthonormalize_rotation(a[:, :3]), translation=a[:, 3])
            for a in arr]


def save_estimate(out_dir, estimate) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "frame_indices": list(estimate.frame_indices),
        "intrinsics": estimate.intrinsics.to_dict(),
    }
    write_tensor(out / "poses.f32t", _poses_to_tensor(estimate.poses))
    if isinstance(estimate, SceneEstimate3D):
        meta["kind"] = "3d"
        write_tensor(out / "gauss_positions.f32t", estimate.gaussians.positions)
        write_tensor(out / "gauss_opacities.f32t", estimate.gaussians.opacities)
        write_tensor(out / "gauss_covariances.f32t", estimate.gaussians.covariances)
        write_tensor(out / "gauss_features.f32t", estimate.gaussians.features)
    elif isinstance(estimate, SceneEstimate4D):
        meta["kind"] = "4d"
        write_tensor(out / "pointmaps.f32t", estimate.pointmaps)
        write_tensor(out / "masks.f32t", estimate.masks.astype(np.float32))
        write_tensor(out / "validity.f32t", estimate.validity.astype(np.float32))
    else:
        raise InvalidArgument(f"unknown estimate type {type(estimate).__name__}")
    write_manifest(out / "estimate.json", meta)


def load_estimate(est_dir):
    est = Path(est_dir)
    meta = read_manifest(est / "estimate.json")
    intr = Intrinsics(**meta["intrinsics"])
    poses = _poses_from_tensor(read_tensor(est / "poses.f32t"))
    idx = tuple(int(i) for i in meta["frame_indices"])
    if meta["kind"] == "3d":
        gaussians = GaussianSet(
            positions=read_tensor(est / "gauss_positions.f32t"),
            opacities=read_tensor(est / "gauss_opacities.f32t"),
            covariances=read_tensor(est / "gauss_covariances.f32t"),
            features=read_tensor(est / "gauss_features.f32t"),
        )
        return SceneEstimate3D(gaussians=gaussians, poses=poses, intrinsics=intr, frame_indices=idx)
    if meta["kind"] == "4d":
        return SceneEstimate4D(
            pointmaps=np.asarray(read_tensor(est / "pointmaps.f32t"), dtype=np.float64),
            validity=read_tensor(est / "validity.f32t") > 0.5,
            masks=(read_tensor(est / "masks.f32t") > 0.5).astype(np.uint8),
            poses=poses, intrinsics=intr, frame_indices=idx,
        )
    raise FormatError(f"unknown estimate kind {meta['kind']!r}")


def write_scores_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_HEADER)
        for row in rows:
            writer.writerow(row)


def export_frames_png(out_dir, frames, prefix="frame") -> dict:
    """8-bit image export: one PNG per frame using a fixed per-channel
    affine mapping over the whole stack (first three channels)."""
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = np.asarray(frames, dtype=np.float64)
    channels = min(3, frames.shape[-1])
    sel = frames[..., :channels]
    lo = sel.reshape(-1, channels).min(axis=0)
    hi = sel.reshape(-1, channels).max(axis=0)
    scale = 255.0 / np.maximum(hi - lo, 1e-12)
    mapping = {"offset": lo.tolist(), "scale": scale.tolist(), "channels": channels}
    for i, frame in enumerate(sel):
        img = np.clip((frame - lo) * scale, 0, 255).astype(np.uint8)
        if channels == 1:
            img = np.repeat(img, 3, axis=-1)
        elif channels == 2:
            img = np.concatenate([img, np.zeros((*img.shape[:2], 1), dtype=np.uint8)], axis=-1)
        Image.fromarray(img, mode="RGB").save(out / f"{prefix}_{i:03d}.png")
    return mapping
