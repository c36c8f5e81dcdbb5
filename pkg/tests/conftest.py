import sys
import textwrap

import pytest

# Minimal bridge stub implementing protocol v1: handshake, then one JSON
# response per request line, tensors written into the request scratch dir.
FAKE_BRIDGE_SOURCE = textwrap.dedent(
    """
    import json, struct, sys
    import numpy as np

    def write_tensor(path, arr):
        arr = np.asarray(arr, dtype="<f4")
        header = b"F32T" + struct.pack("<HH", 1, arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        with open(path, "wb") as fh:
            fh.write(header + arr.tobytes(order="C"))

    print(json.dumps({"protocol": "recon-bridge", "version": 1}), flush=True)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            scratch = req["scratch"]
            intr = req["intrinsics"]
            h, w = intr["height"], intr["width"]
            n = len(req["frames"])
            pose_paths = []
            for i in range(n):
                pose = np.hstack([np.eye(3), np.array([[0.0], [0.0], [3.0]])])
                p = f"{scratch}/pose_{i:03d}.f32t"
                write_tensor(p, pose)
                pose_paths.append(p)
            if req["mode"] == "3d":
                count, ch = 8, None
                # channel count from the first frame tensor header
                with open(req["frames"][0], "rb") as fh:
                    data = fh.read(8 + 16)
                ch = struct.unpack("<I", data[8 + 8:8 + 12])[0]
                resp = {"status": "ok", "poses": pose_paths, "gaussians": {}}
                g = np.random.default_rng(0)
                write_tensor(f"{scratch}/gp.f32t", g.uniform(-1, 1, (count, 3)) + [0, 0, 3.0])
                write_tensor(f"{scratch}/go.f32t", np.ones(count))
                write_tensor(f"{scratch}/gc.f32t", np.stack([np.eye(3) * 1e-2] * count))
                write_tensor(f"{scratch}/gf.f32t", g.standard_normal((count, ch)))
                resp["gaussians"] = {"positions": f"{scratch}/gp.f32t",
                                     "opacities": f"{scratch}/go.f32t",
                                     "covariances": f"{scratch}/gc.f32t",
                                     "features": f"{scratch}/gf.f32t"}
            else:
                pm_paths, m_paths = [], []
                pm = np.zeros((h, w, 3)); pm[..., 2] = 3.0
                for i in range(n):
                    pmp, mp = f"{scratch}/pm_{i:03d}.f32t", f"{scratch}/m_{i:03d}.f32t"
                    write_tensor(pmp, pm)
                    write_tensor(mp, np.zeros((h, w)))
                    pm_paths.append(pmp); m_paths.append(mp)
                resp = {"status": "ok", "poses": pose_paths,
                        "pointmaps": pm_paths, "masks": m_paths}
        except Exception as exc:
            resp = {"status": f"error: {exc}"}
        print(json.dumps(resp), flush=True)
    """
)


@pytest.fixture
def fake_bridge_cmd(tmp_path):
    script = tmp_path / "fake_bridge.py"
    script.write_text(FAKE_BRIDGE_SOURCE)
    return f"{sys.executable} {script}"
