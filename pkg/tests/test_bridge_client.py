import json
import sys

import numpy as np
import pytest

from steerkit import BridgeProtocolError, Intrinsics, SceneSpec
from steerkit.bridge_client import BridgeClient
from steerkit.cli import main

INTR = Intrinsics(fx=24.0, fy=24.0, cx=12.0, cy=12.0, width=24, height=24)


def scene_config(reward_type="render-consistency"):
    return {
        "algorithm": "v-prediction",
        "seed": 2,
        "backend": {
            "type": "scene-video",
            "scene_seed": 1,
            "scene": {"frames": 4, "static_points": 120, "dynamic_points": 0,
                      "width": 24, "height": 24, "focal": 24.0, "channels": 4},
        },
        "reward": {"type": reward_type, "recon_frames": 4},
        "steering": {"k": 2, "lam": 5.0, "steps": 8, "schedule_kind": "cosine",
                     "mode": "linear", "m": 2, "transition": "ancestral"},
    }


class TestBridgeClient:
    def test_reconstruct_3d_shapes(self, fake_bridge_cmd, tmp_path):
        with BridgeClient(fake_bridge_cmd, tmp_path / "scratch") as client:
            frames = np.random.default_rng(0).standard_normal((4, 24, 24, 4))
            est = client.reconstruct("3d", frames, INTR, (0, 1, 2, 3))
            assert len(est.poses) == 4
            assert est.gaussians.features.shape[1] == 4

    def test_reconstruct_4d_shapes(self, fake_bridge_cmd, tmp_path):
        with BridgeClient(fake_bridge_cmd, tmp_path / "scratch") as client:
            frames = np.random.default_rng(0).standard_normal((3, 24, 24, 4))
            est = client.reconstruct("4d", frames, INTR, (0, 1, 2))
            assert est.pointmaps.shape == (3, 24, 24, 3)
            assert est.masks.shape == (3, 24, 24)
            assert est.masks.sum() == 0

    def test_identical_requests_identical_tensor_bytes(self, fake_bridge_cmd, tmp_path):
        with BridgeClient(fake_bridge_cmd, tmp_path / "scratch") as client:
            frames = np.random.default_rng(1).standard_normal((2, 24, 24, 4))
            client.reconstruct("4d", frames, INTR, (0, 1))
            client.reconstruct("4d", frames, INTR, (0, 1))
            a = (tmp_path / "scratch" / "req_000001" / "pm_000.f32t").read_bytes()
            b = (tmp_path / "scratch" / "req_000002" / "pm_000.f32t").read_bytes()
            assert a == b

    def test_bad_handshake_raises(self, tmp_path):
        script = tmp_path / "bad.py"
        script.write_text("print('hello world', flush=True)\nimport sys\nsys.stdin.read()\n")
        client = BridgeClient(f"{sys.executable} {script}", tmp_path / "scratch")
        with pytest.raises(BridgeProtocolError):
            client.start()
        client._proc.kill()

    def test_error_status_raises(self, tmp_path):
        script = tmp_path / "err.py"
        script.write_text(
            "import json, sys\n"
            "print(json.dumps({'protocol': 'recon-bridge', 'version': 1}), flush=True)\n"
            "for line in sys.stdin:\n"
            "    print(json.dumps({'status': 'error: nope'}), flush=True)\n"
        )
        with BridgeClient(f"{sys.executable} {script}", tmp_path / "scratch") as client:
            with pytest.raises(BridgeProtocolError):
                client.reconstruct("3d", np.zeros((1, 24, 24, 4)), INTR, (0,))


class TestBridgeSteering:
    def test_steer_with_bridge_completes(self, fake_bridge_cmd, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(scene_config()))
        out = tmp_path / "out"
        code = main(["steer", "--config", str(cfg), "--out", str(out),
                     "--bridge", fake_bridge_cmd])
        assert code == 0
        assert (out / "selected.f32t").exists()

    def test_steer_with_broken_bridge_exits_four(self, tmp_path):
        script = tmp_path / "bad.py"
        script.write_text("print('garbage', flush=True)\nimport sys\nsys.stdin.read()\n")
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(scene_config()))
        code = main(["steer", "--config", str(cfg), "--out", str(tmp_path / "out"),
                     "--bridge", f"{sys.executable} {script}"])
        assert code == 4
