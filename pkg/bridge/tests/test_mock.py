import numpy as np
import pytest

from recon_bridge.mock import mock_reconstruct
from recon_bridge.protocol import BridgeRequest, ProtocolError
from recon_bridge.tensorfile import read_tensor, write_tensor

INTR = {"fx": 64.0, "fy": 64.0, "cx": 32.0, "cy": 32.0, "width": 64, "height": 64}


def make_request(tmp_path, mode="3d", frames=8, h=64, w=64, c=5):
    tmp_path.mkdir(parents=True, exist_ok=True)
    g = np.random.default_rng(0)
    paths = []
    for i in range(frames):
        p = tmp_path / f"frame_{i:03d}.f32t"
        write_tensor(p, g.standard_normal((h, w, c)))
        paths.append(str(p))
    scratch = tmp_path / "scratch"
    intr = dict(INTR, width=w, height=h, cx=w / 2, cy=h / 2)
    return BridgeRequest(mode=mode, frames=paths, intrinsics=intr, scratch=str(scratch))


def test_3d_response_structure(tmp_path):
    resp = mock_reconstruct(make_request(tmp_path, "3d", frames=8))
    assert resp["status"] == "ok"
    assert len(resp["poses"]) == 8
    for p in resp["poses"]:
        arr = read_tensor(p)
        assert arr.shape == (3, 4)
        r = arr[:, :3].astype(np.float64)
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-6
    g = resp["gaussians"]
    pos = read_tensor(g["positions"])
    assert pos.ndim == 2 and pos.shape[1] == 3
    assert read_tensor(g["features"]).shape == (len(pos), 5)
    assert read_tensor(g["opacities"]).shape == (len(pos),)
    assert read_tensor(g["covariances"]).shape == (len(pos), 3, 3)


def test_4d_shapes_match_frames(tmp_path):
    resp = mock_reconstruct(make_request(tmp_path, "4d", frames=3, h=64, w=64))
    assert resp["status"] == "ok"
    assert len(resp["pointmaps"]) == 3
    assert read_tensor(resp["pointmaps"][0]).shape == (64, 64, 3)
    assert read_tensor(resp["masks"][0]).shape == (64, 64)


def test_static_mock_masks_all_zero(tmp_path):
    resp = mock_reconstruct(make_request(tmp_path, "4d", frames=4))
    for p in resp["masks"]:
        assert read_tensor(p).sum() == 0.0


def test_deterministic_byte_identical(tmp_path):
    req1 = make_request(tmp_path / "a", "3d", frames=2)
    req2 = make_request(tmp_path / "b", "3d", frames=2)
    r1 = mock_reconstruct(req1)
    r2 = mock_reconstruct(req2)
    for key in ("positions", "features", "covariances"):
        b1 = open(r1["gaussians"][key], "rb").read()
        b2 = open(r2["gaussians"][key], "rb").read()
        assert b1 == b2
    assert open(r1["poses"][0], "rb").read() == open(r2["poses"][0], "rb").read()


def test_missing_frame_path_errors_with_path(tmp_path):
    with pytest.raises(ProtocolError) as err:
        BridgeRequest.from_dict({
            "mode": "3d", "frames": [str(tmp_path / "nope.f32t")],
            "intrinsics": INTR, "scratch": str(tmp_path),
        })
    assert "nope.f32t" in str(err.value)


def test_unsupported_mode_rejected(tmp_path):
    with pytest.raises(ProtocolError):
        BridgeRequest.from_dict({"mode": "5d", "frames": ["x"],
                                 "intrinsics": INTR, "scratch": str(tmp_path)})
