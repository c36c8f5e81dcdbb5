"""Client side of the out-of-process reconstruction bridge (protocol v1).

The bridge is a long-lived subprocess: it prints one JSON handshake line
on startup, then answers one JSON response line per JSON request line on
stdin.  Tensors travel as raw float32 files in a scratch directory.  One
request is in flight at a time per process.
"""
from __future__ import annotations

import json
import shlex
import subprocess
import threading
from pathlib import Path

import numpy as np

from .errors import BridgeProtocolError
from .geometry import CameraPose, GaussianSet, Intrinsics, orthonormalize_rotation
from .scene import SceneEstimate3D, SceneEstimate4D
from .tensorfile import read_tensor, write_tensor

PROTOCOL_NAME = "recon-bridge"
PROTOCOL_VERSION = 1


class BridgeClient:
    def __init__(self, command, scratch_dir):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.scratch = Path(scratch_dir)
        self.scratch.mkdir(parents=True, exist_ok=True)
        self._proc = None
        self._lock = threading.Lock()
        self._counter = 0

    def start(self) -> None:
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )
        line = self._proc.stdout.readline()
        if not line:
            raise BridgeProtocolError("bridge exited before handshake")
        try:
            hello = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"malformed handshake line: {line!r}") from exc
        if hello.get("protocol") != PROTOCOL_NAME or hello.get("version") != PROTOCOL_VERSION:
            raise BridgeProtocolError(f"unsupported bridge handshake: {hello!r}")

    def close(self) -> int:
        if self._proc is None:
            return 0
        if self._proc.stdin:
            self._proc.stdin.close()
        code = self._proc.wait(timeout=30)
        self._proc = None
        return code

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def _round_trip(self, request: dict) -> dict:
        if self._proc is None:
            raise BridgeProtocolError("bridge not started")
        self._proc.stdin.write(json.dumps(request) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise BridgeProtocolError("bridge closed the stream mid-request")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"malformed response line: {line!r}") from exc
        status = response.get("status")
        if status != "ok":
            raise BridgeProtocolError(f"bridge error status: {status!r}")
        return response

    def _load_poses(self, paths, expected: int) -> list:
        if len(paths) != expected:
            raise BridgeProtocolError(f"expected {expected} pose tensors, got {len(paths)}")
        poses = []
        for p in paths:
            arr = np.asarray(read_tensor(p), dtype=np.float64)
            if arr.shape != (3, 4):
                raise BridgeProtocolError(f"pose tensor {p} has shape {arr.shape}, expected (3, 4)")
            poses.append(CameraPose(rotation=orthonormalize_rotation(arr[:, :3]),
                                    translation=arr[:, 3]))
        return poses

    def reconstruct(self, mode: str, frames, intrinsics: Intrinsics, frame_indices):
        """Send the frames through the bridge; returns a scene estimate."""
        if mode not in ("3d", "4d"):
            raise BridgeProtocolError(f"unsupported mode {mode!r}")
        frames = np.asarray(frames, dtype=np.float64)
        with self._lock:
            self._counter += 1
            req_dir = self.scratch / f"req_{self._counter:06d}"
            req_dir.mkdir(parents=True, exist_ok=True)
            frame_paths = []
            for i, frame in enumerate(frames):
                p = req_dir / f"frame_{i:03d}.f32t"
                write_tensor(p, frame)
                frame_paths.append(str(p))
            request = {
                "mode": mode,
                "frames": frame_paths,
                "intrinsics": intrinsics.to_dict(),
                "scratch": str(req_dir),
            }
            response = self._round_trip(request)
        poses = self._load_poses(response.get("poses", []), len(frames))
        h, w = intrinsics.height, intrinsics.width
        idx = tuple(int(i) for i in frame_indices)
        try:
            if mode == "3d":
                g = response["gaussians"]
                gaussians = GaussianSet(
                    positions=read_tensor(g["positions"]),
                    opacities=read_tensor(g["opacities"]),
                    covariances=read_tensor(g["covariances"]),
                    features=read_tensor(g["features"]),
                )
                if gaussians.features.shape[1] != frames.shape[-1]:
                    raise BridgeProtocolError(
                        f"gaussian features have {gaussians.features.shape[1]} channels, "
                        f"frames have {frames.shape[-1]}"
                    )
                return SceneEstimate3D(
                    gaussians=gaussians, poses=poses, intrinsics=intrinsics, frame_indices=idx
                )
            pointmaps = np.stack([
                np.asarray(read_tensor(p), dtype=np.float64) for p in response["pointmaps"]
            ])
            masks = np.stack([
                (np.asarray(read_tensor(p)) > 0.5).astype(np.uint8) for p in response["masks"]
            ])
            if pointmaps.shape != (len(frames), h, w, 3):
                raise BridgeProtocolError(
                    f"pointmaps shaped {pointmaps.shape}, expected {(len(frames), h, w, 3)}"
                )
            if masks.shape != (len(frames), h, w):
                raise BridgeProtocolError(
                    f"masks shaped {masks.shape}, expected {(len(frames), h, w)}"
                )
            return SceneEstimate4D(
                pointmaps=pointmaps, validity=np.ones_like(masks, dtype=bool), masks=masks,
                poses=poses, intrinsics=intrinsics, frame_indices=idx,
            )
        except KeyError as exc:
            raise BridgeProtocolError(f"response missing field: {exc}") from exc


class BridgeReconstructor:
    """Adapter plugging a BridgeClient into the scene rewards."""

    def __init__(self, client: BridgeClient, mode: str, intrinsics: Intrinsics):
        self.client = client
        self.mode = mode
        self.intrinsics = intrinsics

    def __call__(self, frames, frame_indices):
        selected = np.asarray(frames)[list(frame_indices)]
        return self.client.reconstruct(self.mode, selected, self.intrinsics, frame_indices)
