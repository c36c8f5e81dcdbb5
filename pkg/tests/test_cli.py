import csv
import json

import numpy as np
import pytest

from steerkit import io as kio
from steerkit import (
    GeoRewardConfig,
    SceneSpec,
    SceneVideoLatent,
    oracle_reconstruct_3d,
    oracle_reconstruct_4d,
    read_tensor,
    scene_latent_decode,
    synth_scene,
    write_tensor,
)
from steerkit.cli import ConfigError, build_resampling, load_config, main, validate_config


def gmm_config(**steering):
    base = dict(k=2, lam=0.5, steps=12, schedule_kind="cosine", mode="linear", m=2,
                transition="ancestral")
    base.update(steering)
    return {
        "algorithm": "v-prediction",
        "seed": 5,
        "backend": {"type": "gmm", "components": [
            {"weight": 1.0, "mean": [0.0], "variance": [1.0]},
        ]},
        "reward": {"type": "linear", "coefficients": [1.0]},
        "steering": base,
    }


def write_config(tmp_path, config, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(config))
    return p


class TestValidation:
    def test_valid_config_passes(self):
        validate_config(gmm_config())

    def test_unknown_key_rejected(self):
        cfg = gmm_config()
        cfg["typo"] = 1
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            validate_config(gmm_config(k=0))

    def test_scene_reward_requires_scene_backend(self):
        cfg = gmm_config()
        cfg["reward"] = {"type": "render-consistency"}
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_flow_rejects_scene_backend(self):
        cfg = gmm_config()
        cfg["algorithm"] = "rectified-flow"
        cfg["backend"] = {"type": "scene-video"}
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_production_defaults_three_d(self):
        # lam=10, m=4, early placement is the 3D default
        cfg = gmm_config(lam=10.0, steps=50, mode="early", m=4)
        validate_config(cfg)
        r = build_resampling(cfg["steering"], 50)
        assert r.m == 4 and set(r.steering_steps) == {40, 37, 33, 30}

    def test_production_defaults_four_d(self):
        # m=2 is the 4D default
        cfg = gmm_config(lam=10.0, steps=50, mode="early", m=2)
        validate_config(cfg)
        assert build_resampling(cfg["steering"], 50).m == 2

    def test_exit_code_two_for_bad_config(self, tmp_path):
        p = write_config(tmp_path, {"algorithm": "nope"})
        assert main(["steer", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_exit_code_two_for_missing_file(self, tmp_path):
        assert main(["steer", "--config", str(tmp_path / "none.json"),
                     "--out", str(tmp_path / "o")]) == 2


class TestSteerCommand:
    def test_outputs_and_rerun_bitwise(self, tmp_path):
        p = write_config(tmp_path, gmm_config(k=1))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["steer", "--config", str(p), "--out", str(out1)]) == 0
        assert main(["steer", "--config", str(p), "--out", str(out2)]) == 0
        for name in ("selected.f32t", "ensemble.f32t", "ensemble_rewards.f32t"):
            assert (out1 / name).exists()
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        assert (out1 / "manifest.json").exists()
        assert (out1 / "traces.csv").exists()

    def test_manifest_reproduces_run(self, tmp_path):
        p = write_config(tmp_path, gmm_config(k=3, lam=2.0))
        out1 = tmp_path / "a"
        assert main(["steer", "--config", str(p), "--out", str(out1)]) == 0
        manifest = kio.read_manifest(out1 / "manifest.json")
        p2 = write_config(tmp_path, manifest["config"], name="from_manifest.json")
        out2 = tmp_path / "b"
        assert main(["steer", "--config", str(p2), "--out", str(out2)]) == 0
        assert (out1 / "selected.f32t").read_bytes() == (out2 / "selected.f32t").read_bytes()
        assert (out1 / "ensemble.f32t").read_bytes() == (out2 / "ensemble.f32t").read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        p = write_config(tmp_path, gmm_config(k=1))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["steer", "--config", str(p), "--out", str(out1)]) == 0
        assert main(["steer", "--config", str(p), "--seed", "99", "--out", str(out2)]) == 0
        assert (out1 / "selected.f32t").read_bytes() != (out2 / "selected.f32t").read_bytes()

    def test_traces_header_golden(self, tmp_path):
        p = write_config(tmp_path, gmm_config())
        out = tmp_path / "a"
        assert main(["steer", "--config", str(p), "--out", str(out)]) == 0
        first = (out / "traces.csv").read_text().splitlines()[0]
        assert first == "step,particle,reward,weight,ess,ancestor"


class TestSceneCommand:
    def test_scene_outputs(self, tmp_path):
        spec = {"frames": 25, "static_points": 120, "width": 24, "height": 24,
                "focal": 24.0, "channels": 4, "dynamic_points": 10}
        p = write_config(tmp_path, spec, name="scene.json")
        out = tmp_path / "scene"
        assert main(["scene", "--config", str(p), "--seed", "3", "--out", str(out)]) == 0
        manifest = kio.read_manifest(out / "manifest.json")
        assert manifest["poses"] == 25
        assert read_tensor(out / "frames.f32t").shape == (25, 24, 24, 4)
        assert (out / "frame_000.png").exists()
        assert (out / "frame_024.png").exists()
        assert "png_mapping" in manifest


class TestScoreCommand:
    @pytest.mark.parametrize("kind", ["3d", "4d"])
    def test_score_round_trip(self, tmp_path, kind):
        spec = SceneSpec(frames=4, static_points=120, dynamic_points=10,
                         width=32, height=32, focal=32.0, channels=6)
        scene = synth_scene(1, spec)
        frames = scene_latent_decode(np.zeros(SceneVideoLatent.dimension(4)), scene)
        if kind == "3d":
            est = oracle_reconstruct_3d(frames, scene, 0.0, (0, 1, 2, 3))
        else:
            est = oracle_reconstruct_4d(frames, scene, 0.0, (0, 1, 2, 3))
        est_dir = tmp_path / "est"
        kio.save_estimate(est_dir, est)
        frames_path = tmp_path / "frames.f32t"
        write_tensor(frames_path, frames)
        out_csv = tmp_path / "scores.csv"
        assert main(["score", "--frames", str(frames_path),
                     "--estimate", str(est_dir), "--out", str(out_csv)]) == 0
        rows = list(csv.reader(out_csv.open()))
        assert rows[0] == ["frame", "score", "raw_sum", "pixels"]
        assert rows[-1][0] == "total"
        assert float(rows[-1][1]) > 0.9

    def test_estimate_round_trip_preserves_values(self, tmp_path):
        spec = SceneSpec(frames=4, static_points=120, dynamic_points=0,
                         width=32, height=32, focal=32.0, channels=6)
        scene = synth_scene(2, spec)
        frames = scene_latent_decode(np.zeros(SceneVideoLatent.dimension(4)), scene)
        est = oracle_reconstruct_3d(frames, scene, 0.0, (0, 1, 2, 3))
        kio.save_estimate(tmp_path / "e", est)
        back = kio.load_estimate(tmp_path / "e")
        cfg = GeoRewardConfig(recon_frames=4)
        from steerkit import render_consistency

        a = render_consistency(frames, cfg, est)
        b = render_consistency(frames.astype(np.float32).astype(np.float64), cfg, back)
        assert abs(a - b) < 1e-3  # float32 round trip


class TestBenchCommand:
    def bench_config(self):
        cfg = gmm_config(k=2, lam=1.0, steps=10, mode="linear", m=2)
        cfg["bench"] = {"k_grid": [1, 2], "seeds": 3, "modes": ["early", "late"],
                       "runs_grid": [5], "etas": [0.0, 0.1], "runs": 5, "k": 2}
        cfg["steering"]["steps"] = 10
        return cfg

    def test_scaling_structure(self, tmp_path):
        p = write_config(tmp_path, self.bench_config())
        out = tmp_path / "bench"
        assert main(["bench", "--suite", "scaling", "--config", str(p), "--out", str(out)]) == 0
        rows = list(csv.reader((out / "bench_scaling.csv").open()))
        assert rows[0] == ["suite", "setting", "seed", "metric"]
        settings = {r[1] for r in rows[1:] if r[0] == "scaling"}
        assert settings == {"1", "2"}
        assert sum(r[0] == "scaling-summary" for r in rows) == 2

    def test_schedule_paired_seeds(self, tmp_path):
        cfg = self.bench_config()
        cfg["steering"]["steps"] = 20
        p = write_config(tmp_path, cfg)
        out = tmp_path / "bench"
        assert main(["bench", "--suite", "schedule", "--config", str(p), "--out", str(out)]) == 0
        rows = [r for r in csv.reader((out / "bench_schedule.csv").open())
                if r and r[0] == "schedule"]
        early_seeds = sorted(r[2] for r in rows if r[1] == "early")
        late_seeds = sorted(r[2] for r in rows if r[1] == "late")
        assert early_seeds == late_seeds and len(early_seeds) == 3

    def test_convergence_reports_error_metric(self, tmp_path):
        p = write_config(tmp_path, self.bench_config())
        out = tmp_path / "bench"
        assert main(["bench", "--suite", "convergence", "--config", str(p), "--out", str(out)]) == 0
        rows = list(csv.reader((out / "bench_convergence.csv").open()))
        assert any(r[0] == "convergence-summary" for r in rows)

    def test_bon_suite(self, tmp_path):
        p = write_config(tmp_path, self.bench_config())
        out = tmp_path / "bench"
        assert main(["bench", "--suite", "bon", "--config", str(p), "--out", str(out)]) == 0
        rows = list(csv.reader((out / "bench_bon.csv").open()))
        assert {"steer", "best-of-n"} <= {r[1] for r in rows[1:]}
