"""Command-line entry points: steer, bench, score, scene.

Configs are JSON and validated in full before any compute.  Exit codes:
0 success, 2 configuration error, 3 numeric failure, 4 bridge-protocol
violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import io as kio
from .backends import GaussianMixtureModel, GmmDiffusionBackend, GmmFlowBackend
from .bridge_client import BridgeClient, BridgeReconstructor
from .errors import (
    BridgeProtocolError,
    DegenerateWeights,
    InvalidArgument,
    NumericError,
    ScheduleInfeasible,
    SteerKitError,
    Unsupported,
)
from .rewards import (
    GeoRewardConfig,
    LinearReward,
    PerturbedReward,
    QuadraticReward,
    SceneReward,
    render_consistency,
    reprojection_consistency,
)
from .scene import LatentMagnitudes, SceneSpec, SceneVideoBackend, synth_scene, render_scene
from .schedule import (
    ResamplingSchedule,
    build_alpha_bar_schedule,
    build_flow_grid,
    build_resampling_schedule,
)
from .steering import PotentialConfig, best_of_n, steer_rectified_flow, steer_v_prediction
from .tensorfile import read_tensor, write_tensor


class ConfigError(InvalidArgument):
    """Configuration problem; maps to exit code 2."""


ALGORITHMS = ("v-prediction", "rectified-flow", "best-of-n")


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _known_keys(section: dict, allowed, where: str):
    unknown = set(section) - set(allowed)
    _require(not unknown, f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    _require(isinstance(config, dict), "config root must be an object")
    return config


def validate_config(config: dict) -> dict:
    """Full validation before any compute; returns the config unchanged."""
    _known_keys(config, {"algorithm", "seed", "out", "backend", "reward", "steering", "bench"}, "config")
    algorithm = config.get("algorithm", "v-prediction")
    _require(algorithm in ALGORITHMS, f"algorithm must be one of {ALGORITHMS}")

    backend = config.get("backend")
    _require(isinstance(backend, dict), "config needs a backend object")
    btype = backend.get("type")
    _require(btype in ("gmm", "scene-video"), "backend.type must be 'gmm' or 'scene-video'")
    if btype == "gmm":
        _known_keys(backend, {"type", "components"}, "backend")
        comps = backend.get("components")
        _require(isinstance(comps, list) and comps, "gmm backend needs a non-empty components list")
        for c in comps:
            _known_keys(c, {"weight", "mean", "variance"}, "gmm component")
            _require({"weight", "mean", "variance"} <= set(c), "gmm component needs weight/mean/variance")
    else:
        _known_keys(backend, {"type", "scene_seed", "scene", "magnitudes"}, "backend")
        if "scene" in backend:
            try:
                SceneSpec.from_dict(backend["scene"])
            except (InvalidArgument, TypeError) as exc:
                raise ConfigError(f"bad scene spec: {exc}")
        if "magnitudes" in backend:
            _known_keys(backend["magnitudes"],
                        {f.name for f in dataclasses.fields(LatentMagnitudes)}, "magnitudes")
        _require(algorithm != "rectified-flow", "the scene-video backend is velocity-prediction only")

    reward = config.get("reward")
    _require(isinstance(reward, dict), "config needs a reward object")
    rtype = reward.get("type")
    _require(
        rtype in ("linear", "quadratic", "render-consistency", "reprojection-consistency"),
        "reward.type must be linear, quadratic, render-consistency, or reprojection-consistency",
    )
    _known_keys(reward, {"type", "coefficients", "center", "scale", "recon_frames",
                         "recon_noise", "recon_seed", "perturb"}, "reward")
    if rtype == "linear":
        _require("coefficients" in reward, "linear reward needs coefficients")
    if rtype == "quadratic":
        _require("center" in reward, "quadratic reward needs a center")
    if rtype in ("render-consistency", "reprojection-consistency"):
        _require(btype == "scene-video", f"{rtype} reward requires the scene-video backend")
    if "perturb" in reward:
        _known_keys(reward["perturb"], {"eta", "seed"}, "reward.perturb")
        _require(float(reward["perturb"].get("eta", 0.0)) >= 0.0, "perturb.eta must be >= 0")

    steering = config.get("steering")
    _require(isinstance(steering, dict), "config needs a steering object")
    _known_keys(steering, {"k", "lam", "steps", "schedule_kind", "mode", "m",
                           "steering_steps", "transition", "diversify", "final_correction"}, "steering")
    k = steering.get("k", 1)
    _require(isinstance(k, int) and k >= 1, "steering.k must be an integer >= 1")
    _require(float(steering.get("lam", 0.0)) >= 0.0, "steering.lam must be >= 0")
    steps = steering.get("steps")
    _require(isinstance(steps, int) and steps >= 1, "steering.steps must be an integer >= 1")
    _require(steering.get("schedule_kind", "cosine") in ("cosine", "linear-beta"),
             "steering.schedule_kind must be 'cosine' or 'linear-beta'")
    mode = steering.get("mode", "none")
    _require(mode in ("early", "late", "linear", "all", "none", "custom"),
             "steering.mode must be early/late/linear/all/none/custom")
    if mode in ("early", "late", "linear"):
        _require(isinstance(steering.get("m"), int) and steering["m"] >= 1,
                 f"steering.m required for mode {mode!r}")
    if mode == "custom":
        _require(isinstance(steering.get("steering_steps"), list),
                 "custom mode needs an explicit steering_steps list")
    _require(steering.get("transition", "ddim") in ("ddim", "ancestral"),
             "steering.transition must be 'ddim' or 'ancestral'")
    _require(steering.get("diversify", "none") in ("none", "renoise"),
             "steering.diversify must be 'none' or 'renoise'")
    seed = config.get("seed", 0)
    _require(isinstance(seed, int), "seed must be an integer")
    return config


def build_backend(config: dict):
    backend = config["backend"]
    if backend["type"] == "gmm":
        model = GaussianMixtureModel.from_dict(backend)
        return GmmDiffusionBackend(model) if config.get("algorithm") != "rectified-flow" \
            else GmmFlowBackend(model)
    spec = SceneSpec.from_dict(backend.get("scene", {}))
    scene = synth_scene(int(backend.get("scene_seed", 0)), spec)
    mags = LatentMagnitudes(**backend.get("magnitudes", {}))
    return SceneVideoBackend(scene, mags)


def build_reward(config: dict, backend, bridge_command=None, scratch_dir=None):
    reward_cfg = config["reward"]
    rtype = reward_cfg["type"]
    bridge = None
    if rtype == "linear":
        reward = LinearReward(reward_cfg["coefficients"])
    elif rtype == "quadratic":
        reward = QuadraticReward(reward_cfg["center"], float(reward_cfg.get("scale", 1.0)))
    else:
        kind = "render" if rtype == "render-consistency" else "reprojection"
        cfg = GeoRewardConfig(recon_frames=int(reward_cfg.get("recon_frames", 8)))
        reconstructor = None
        if bridge_command:
            scratch = scratch_dir or tempfile.mkdtemp(prefix="steerkit-bridge-")
            bridge = BridgeClient(bridge_command, scratch)
            bridge.start()
            mode = "3d" if kind == "render" else "4d"
            reconstructor = BridgeReconstructor(bridge, mode, backend.scene.intrinsics)
        reward = SceneReward(
            backend.scene, kind, cfg, magnitudes=backend.magnitudes,
            recon_noise=float(reward_cfg.get("recon_noise", 0.0)),
            recon_seed=int(reward_cfg.get("recon_seed", 0)),
            reconstructor=reconstructor,
        )
    if "perturb" in reward_cfg:
        reward = PerturbedReward(reward, float(reward_cfg["perturb"].get("eta", 0.0)),
                                 int(reward_cfg["perturb"].get("seed", 0)))
    return reward, bridge


def build_resampling(steering: dict, total_steps: int) -> ResamplingSchedule:
    mode = steering.get("mode", "none")
    if mode == "none":
        return ResamplingSchedule.none()
    if mode == "all":
        return ResamplingSchedule.every_step(total_steps)
    if mode == "custom":
        return ResamplingSchedule.explicit(steering["steering_steps"])
    return build_resampling_schedule(total_steps, int(steering["m"]), mode)


def run_steer(config: dict, out_dir, bridge_command=None) -> dict:
    validate_config(config)
    algorithm = config.get("algorithm", "v-prediction")
    steering = config["steering"]
    seed = int(config.get("seed", 0))
    backend = build_backend(config)
    reward, bridge = build_reward(config, backend, bridge_command=bridge_command)
    try:
        steps = int(steering["steps"])
        resampling = build_resampling(steering, steps)
        potential = PotentialConfig(lam=float(steering.get("lam", 0.0)), schedule=resampling)
        k = int(steering.get("k", 1))
        if algorithm == "rectified-flow":
            grid = build_flow_grid(steps)
            result = steer_rectified_flow(
                backend, reward, grid, resampling, potential, k, seed,
                final_correction=bool(steering.get("final_correction", False)),
            )
        elif algorithm == "best-of-n":
            schedule = build_alpha_bar_schedule(steps, steering.get("schedule_kind", "cosine"))
            result = best_of_n(
                backend, reward, k, seed, schedule=schedule,
                transition=steering.get("transition", "ddim"),
            )
        else:
            schedule = build_alpha_bar_schedule(steps, steering.get("schedule_kind", "cosine"))
            result = steer_v_prediction(
                backend, reward, schedule, resampling, potential, k, seed,
                transition=steering.get("transition", "ddim"),
                diversify=steering.get("diversify", "none"),
                final_correction=bool(steering.get("final_correction", False)),
            )
    finally:
        if bridge is not None:
            code = bridge.close()
            if code != 0:
                raise BridgeProtocolError(f"bridge exited with status {code}")
    return kio.write_steer_outputs(out_dir, result, config)


def _load_frames(frames_path):
    """A stacked (N, H, W, C) tensor file, or a directory of per-frame
    tensors read in sorted order."""
    p = Path(frames_path)
    if p.is_dir():
        files = sorted(p.glob("*.f32t"))
        _require(files, f"no .f32t frames in directory {p}")
        frames = np.stack([np.asarray(read_tensor(f), dtype=np.float64) for f in files])
    else:
        frames = np.asarray(read_tensor(p), dtype=np.float64)
    return frames


def run_score(frames_path, estimate_dir, out_path) -> list:
    frames = _load_frames(frames_path)
    if frames.ndim != 4:
        raise ConfigError(f"frames tensor must be (N, H, W, C), got shape {frames.shape}")
    estimate = kio.load_estimate(estimate_dir)
    cfg = GeoRewardConfig(recon_frames=len(estimate.frame_indices))
    details = {}
    from .scene import SceneEstimate3D

    if isinstance(estimate, SceneEstimate3D):
        total = render_consistency(frames, cfg, estimate, details=details)
        per = details["per_frame"]
        labels = [str(i) for i in details["frame_indices"]]
    else:
        total = reprojection_consistency(frames, cfg, estimate, details=details)
        per = details["per_target"]
        labels = [str(estimate.frame_indices[j]) for j in details["target_positions"]]
    rows = [[lab, repr(float(s)), "", ""] for lab, s in zip(labels, per)]
    rows.append(["total", repr(float(total)), "", ""])
    kio.write_scores_csv(out_path, rows)
    return rows


def run_scene(spec_dict: dict, seed: int, out_dir) -> dict:
    spec = SceneSpec.from_dict(spec_dict)
    scene = synth_scene(seed, spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = np.empty((spec.frames, spec.height, spec.width, spec.channels))
    pointmaps = np.empty((spec.frames, spec.height, spec.width, 3))
    masks = np.empty((spec.frames, spec.height, spec.width), dtype=np.float32)
    validity = np.empty_like(masks)
    for f in range(spec.frames):
        r = render_scene(scene, scene.nominal_poses[f], float(f))
        frames[f], pointmaps[f] = r.features, r.pointmap
        masks[f], validity[f] = r.mask, r.validity
    write_tensor(out / "frames.f32t", frames)
    write_tensor(out / "pointmaps.f32t", pointmaps)
    write_tensor(out / "masks.f32t", masks)
    write_tensor(out / "validity.f32t", validity)
    mapping = kio.export_frames_png(out, frames)
    manifest = {
        "spec": spec.to_dict(),
        "seed": seed,
        "intrinsics": scene.intrinsics.to_dict(),
        "poses": len(scene.nominal_poses),
        "png_mapping": mapping,
        "outputs": ["frames.f32t", "pointmaps.f32t", "masks.f32t", "validity.f32t"],
    }
    kio.write_manifest(out / "manifest.json", manifest)
    return manifest


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steerkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    steer = sub.add_parser("steer", help="run one steering job")
    steer.add_argument("--config", required=True)
    steer.add_argument("--seed", type=int, default=None)
    steer.add_argument("--out", required=True)
    steer.add_argument("--bridge", default=None, help="external reconstruction command line")

    bench = sub.add_parser("bench", help="run a benchmark suite")
    bench.add_argument("--suite", required=True, choices=sorted(bench_mod.SUITES))
    bench.add_argument("--config", required=True)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--out", required=True)
    bench.add_argument("--plot", action="store_true")

    score = sub.add_parser("score", help="score frames against a scene estimate")
    score.add_argument("--frames", required=True)
    score.add_argument("--estimate", required=True)
    score.add_argument("--out", required=True)

    scene = sub.add_parser("scene", help="synthesize and render a ground-truth scene")
    scene.add_argument("--config", default=None, help="JSON scene spec")
    scene.add_argument("--seed", type=int, default=0)
    scene.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "steer":
            config = validate_config(load_config(args.config))
            if args.seed is not None:
                config["seed"] = args.seed
            run_steer(config, args.out, bridge_command=args.bridge)
        elif args.command == "bench":
            config = load_config(args.config)
            if args.seed is not None:
                config["seed"] = args.seed
            bench_mod.run_suite(args.suite, config, args.out, plot=args.plot)
        elif args.command == "score":
            run_score(args.frames, args.estimate, args.out)
        elif args.command == "scene":
            spec = load_config(args.config) if args.config else {}
            run_scene(spec, args.seed, args.out)
    except BridgeProtocolError as exc:
        print(f"bridge protocol error: {exc}", file=sys.stderr)
        return 4
    except (NumericError, DegenerateWeights) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InvalidArgument, ScheduleInfeasible, Unsupported, SteerKitError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
