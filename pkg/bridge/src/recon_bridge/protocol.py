"""Protocol v1 message schema and validation.

One JSON object per line.  A request names a mode (``3d`` or ``4d``),
per-frame tensor file paths, pinhole intrinsics, and a scratch directory
for response tensors.  A response carries ``status`` (``ok`` or
``error:<message>``), pose tensor paths (one (3, 4) tensor per frame),
and either a Gaussian-primitive set (3d) or per-frame pointmaps and
dynamic masks (4d).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

PROTOCOL_NAME = "recon-bridge"
PROTOCOL_VERSION = 1
MODES = ("3d", "4d")


class ProtocolError(ValueError):
    pass


@dataclass
class BridgeRequest:
    mode: str
    frames: list
    intrinsics: dict
    scratch: str

    @classmethod
    def from_dict(cls, payload: dict) -> "BridgeRequest":
        if not isinstance(payload, dict):
            raise ProtocolError("request must be a JSON object")
        mode = payload.get("mode")
        if mode not in MODES:
            raise ProtocolError(f"unsupported mode {mode!r}")
        frames = payload.get("frames")
        if not isinstance(frames, list) or not frames:
            raise ProtocolError("request needs a non-empty frames list")
        intr = payload.get("intrinsics")
        required = {"fx", "fy", "cx", "cy", "width", "height"}
        if not isinstance(intr, dict) or not required <= set(intr):
            raise ProtocolError(f"intrinsics must define {sorted(required)}")
        scratch = payload.get("scratch")
        if not scratch:
            raise ProtocolError("request needs a scratch directory")
        for p in frames:
            if not Path(p).is_file():
                raise ProtocolError(f"frame tensor not found: {p}")
        return cls(mode=mode, frames=list(frames), intrinsics=dict(intr), scratch=str(scratch))


def handshake() -> dict:
    return {"protocol": PROTOCOL_NAME, "version": PROTOCOL_VERSION}


def error_response(message: str) -> dict:
    return {"status": f"error: {message}"}
