"""Reward functions: validation rewards and the geometric consistency scores.

The two geometric rewards compare generated frames against a scene
reconstruction.  ``render_consistency`` re-renders a reconstructed
primitive set from the estimated poses and measures per-pixel feature
cosine against the frames.  ``reprojection_consistency`` lifts background
features from half the frames through the reconstructed pointmaps and
scores them against the other half at their estimated viewpoints.  Scores
are means over eligible pixels, so both live in [-1, 1].
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySupport, InvalidArgument
from .geometry import render_gaussians, splat_points
from .scene import (
    GroundTruthScene,
    LatentMagnitudes,
    SceneEstimate3D,
    SceneEstimate4D,
    oracle_reconstruct_3d,
    oracle_reconstruct_4d,
    scene_latent_decode,
)
from .steering import RewardFn

NORM_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# frame bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameSplit:
    """Odd-position source frames and even-position target frames
    (1-based positions over a sequence of n frames)."""

    src_indices: tuple
    tgt_indices: tuple

    @classmethod
    def of(cls, n: int) -> "FrameSplit":
        if n < 1:
            raise InvalidArgument("need at least one frame")
        return cls(src_indices=tuple(range(0, n, 2)), tgt_indices=tuple(range(1, n, 2)))


@dataclass(frozen=True)
class GeoRewardConfig:
    """Geometric reward settings: how many evenly spaced frames feed the
    reconstruction (first and last always included), scores averaged over
    eligible pixels."""

    recon_frames: int = 8

    def to_dict(self) -> dict:
        return {"recon_frames": self.recon_frames, "frame_selection": "even", "pixel_normalization": "mean"}


def select_frame_indices(total: int, count: int) -> tuple:
    """``count`` evenly spaced frame indices over ``total`` frames."""
    if count < 1 or count > total:
        raise InvalidArgument(f"need 1 <= count <= {total}, got {count}")
    if count == 1:
        return (0,)
    pos = [(total - 1) * j / (count - 1) for j in range(count)]
    idx = tuple(int(math.floor(p + 0.5)) for p in pos)
    if len(set(idx)) != count:
        raise InvalidArgument(f"frame selection collapsed for total={total}, count={count}")
    return idx


# ---------------------------------------------------------------------------
# cosine field
# ---------------------------------------------------------------------------

def cosine_field(a, b, mask=None, coverage=None, details=None) -> float:
    """Mean per-pixel cosine similarity between two (H, W, C) feature maps.

    Pixels are eligible when unmasked, covered, and both vectors have norm
    at least 1e-12.  Raises EmptySupport (carrying score 0) when nothing is
    eligible.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 3:
        raise InvalidArgument(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    eligible = (na >= NORM_FLOOR) & (nb >= NORM_FLOOR)
    if mask is not None:
        eligible &= np.asarray(mask) == 0
    if coverage is not None:
        eligible &= np.asarray(coverage).astype(bool)
    count = int(eligible.sum())
    if count == 0:
        raise EmptySupport("no eligible pixels for cosine field", score=0.0)
    cos = (a[eligible] * b[eligible]).sum(axis=-1) / (na[eligible] * nb[eligible])
    raw = float(cos.sum())
    if details is not None:
        details["raw_sum"] = raw
        details["pixels"] = count
    return raw / count


# ---------------------------------------------------------------------------
# geometric rewards
# ---------------------------------------------------------------------------

def _check_selection(frames, config: GeoRewardConfig, estimate):
    total = len(frames)
    idx = select_frame_indices(total, min(config.recon_frames, total))
    if tuple(estimate.frame_indices) != idx:
        raise InvalidArgument(
            f"estimate was built for frames {estimate.frame_indices}, expected {idx}"
        )
    if len(estimate.poses) != len(idx):
        raise InvalidArgument("estimate must hold one pose per selected frame")
    return idx


def render_consistency(frames, config: GeoRewardConfig, estimate: SceneEstimate3D,
                       details=None) -> float:
    """3D consistency: mean cosine between each selected frame and the
    reconstruction re-rendered from its estimated pose.

    Frames whose comparison has no eligible pixels contribute 0 and are
    flagged; if every frame is empty the total is 0 with
    ``empty_support=True`` in details.
    """
    idx = _check_selection(frames, config, estimate)
    per_frame = []
    empties = 0
    for j, i in enumerate(idx):
        render = render_gaussians(estimate.gaussians, estimate.poses[j], estimate.intrinsics)
        try:
            per_frame.append(cosine_field(frames[i], render))
        except EmptySupport as exc:
            per_frame.append(exc.score)
            empties += 1
    score = float(np.mean(per_frame))
    if details is not None:
        details["per_frame"] = per_frame
        details["frame_indices"] = idx
        details["empty_frames"] = empties
        details["empty_support"] = empties == len(idx)
    return 0.0 if empties == len(idx) else score


def reprojection_consistency(frames, config: GeoRewardConfig, estimate: SceneEstimate4D,
                             details=None) -> float:
    """4D consistency: unproject background features of the source half of
    the selected frames through the estimated pointmaps, splat them into
    each target viewpoint, and average the masked cosine over targets.

    All-dynamic masks yield score 0 with ``zero_coverage=True``.
    """
    idx = _check_selection(frames, config, estimate)
    split = FrameSplit.of(len(idx))
    pts, feats = [], []
    for j in split.src_indices:
        keep = estimate.validity[j] & (estimate.masks[j] == 0)
        if keep.any():
            pts.append(estimate.pointmaps[j][keep])
            feats.append(frames[idx[j]][keep])
    per_tgt = []
    zero_cov = 0
    tgt_positions = split.tgt_indices if split.tgt_indices else ()
    if not tgt_positions:
        raise InvalidArgument("need at least two selected frames for reprojection scoring")
    src_pts = np.concatenate(pts) if pts else np.zeros((0, 3))
    src_feats = np.concatenate(feats) if feats else np.zeros((0, frames.shape[-1]))
    for j in tgt_positions:
        if len(src_pts):
            fhat, cov, _ = splat_points(src_pts, src_feats, None, estimate.poses[j], estimate.intrinsics)
        else:
            h, w = estimate.masks[j].shape
            fhat = np.zeros((h, w, frames.shape[-1]))
            cov = np.zeros((h, w), dtype=bool)
        try:
            per_tgt.append(cosine_field(frames[idx[j]], fhat, mask=estimate.masks[j], coverage=cov))
        except EmptySupport as exc:
            per_tgt.append(exc.score)
            zero_cov += 1
    score = float(np.mean(per_tgt))
    if details is not None:
        details["per_target"] = per_tgt
        details["target_positions"] = tgt_positions
        details["zero_coverage"] = zero_cov == len(tgt_positions)
    return 0.0 if zero_cov == len(tgt_positions) else score


# ---------------------------------------------------------------------------
# validation rewards
# ---------------------------------------------------------------------------

class LinearReward(RewardFn):
    """r(x) = a . x"""

    def __init__(self, coefficients):
        self.a = np.atleast_1d(np.asarray(coefficients, dtype=np.float64))

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape != self.a.shape:
            raise InvalidArgument(f"dimension mismatch: x {x.shape} vs a {self.a.shape}")
        return float(x @ self.a)

    def evaluate_batch(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[-1] != self.a.shape[0]:
            raise InvalidArgument(f"dimension mismatch: batch {xs.shape} vs a {self.a.shape}")
        return xs @ self.a

    evaluate_intermediate_batch = evaluate_batch

    def describe(self) -> dict:
        return {"type": "linear", "coefficients": self.a.tolist()}


class QuadraticReward(RewardFn):
    """r(x) = -scale * ||x - center||^2"""

    def __init__(self, center, scale: float = 1.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        self.scale = float(scale)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape != self.center.shape:
            raise InvalidArgument(f"dimension mismatch: x {x.shape} vs center {self.center.shape}")
        d = x - self.center
        return float(-self.scale * (d @ d))

    def evaluate_batch(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[-1] != self.center.shape[0]:
            raise InvalidArgument("dimension mismatch in batch")
        d = xs - self.center
        return -self.scale * (d * d).sum(axis=-1)

    evaluate_intermediate_batch = evaluate_batch

    def describe(self) -> dict:
        return {"type": "quadratic", "center": self.center.tolist(), "scale": self.scale}


def linear_reward(coefficients) -> LinearReward:
    return LinearReward(coefficients)


def quadratic_reward(center, scale: float = 1.0) -> QuadraticReward:
    return QuadraticReward(center, scale)


class PerturbedReward(RewardFn):
    """Adds a deterministic bounded perturbation in [-eta, eta] to
    intermediate evaluations only; final evaluations stay exact.

    The perturbation is a fixed smooth field: the sample is projected onto
    a direction derived by hashing the seed and passed through a cosine.
    A smooth field (rather than per-sample white noise) is what makes the
    induced sampling bias observable in distribution-level statistics; the
    field is independent of eta, so it scales linearly when only eta
    changes.
    """

    _FREQUENCY = 1.5
    intermediate_is_exact = False

    def __init__(self, base: RewardFn, eta: float, seed: int = 0):
        if eta < 0:
            raise InvalidArgument("eta must be non-negative")
        self.base = base
        self.eta = float(eta)
        self.seed = int(seed)
        digest = hashlib.blake2b(
            self.seed.to_bytes(8, "little", signed=True), digest_size=16
        ).digest()
        self._phase = int.from_bytes(digest[:8], "little") / 2.0 ** 64 * 2.0 * np.pi
        self._direction_seed = int.from_bytes(digest[8:], "little")
        self._directions = {}

    def _direction(self, dim: int) -> np.ndarray:
        w = self._directions.get(dim)
        if w is None:
            g = np.random.Generator(np.random.Philox(np.random.SeedSequence(self._direction_seed)))
            w = g.standard_normal(dim)
            w /= max(np.linalg.norm(w), 1e-12)
            self._directions[dim] = w
        return w

    def _unit_noise(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        w = self._direction(x.size)
        # square wave: full-amplitude bias at every point of the field
        return float(np.sign(np.cos(self._FREQUENCY * (x @ w) + self._phase)))

    def evaluate(self, x) -> float:
        return self.base.evaluate(x)

    def evaluate_intermediate(self, x) -> float:
        return self.base.evaluate_intermediate(x) + self.eta * self._unit_noise(x)

    @property
    def evaluate_batch(self):
        return getattr(self.base, "evaluate_batch", None)

    @property
    def evaluate_intermediate_batch(self):
        inner = getattr(self.base, "evaluate_intermediate_batch", None)
        if inner is None:
            return None

        def batched(xs):
            xs = np.asarray(xs, dtype=np.float64)
            if self.eta == 0.0:
                return np.asarray(inner(xs), dtype=np.float64)
            w = self._direction(xs.shape[-1])
            noise = np.sign(np.cos(self._FREQUENCY * (xs @ w) + self._phase))
            return np.asarray(inner(xs), dtype=np.float64) + self.eta * noise

        return batched

    def describe(self) -> dict:
        d = getattr(self.base, "describe", lambda: {"type": type(self.base).__name__})()
        return {"type": "perturbed", "eta": self.eta, "seed": self.seed, "base": d}


def perturbed_reward(base: RewardFn, eta: float, seed: int = 0) -> PerturbedReward:
    return PerturbedReward(base, eta, seed)


# ---------------------------------------------------------------------------
# scene-video rewards
# ---------------------------------------------------------------------------

class SceneReward(RewardFn):
    """Geometric reward over scene-video latents.

    Decodes the latent to frames, obtains a reconstruction (oracle by
    default, or a caller-supplied function of the frames), and scores
    consistency.  With the oracle, the reconstruction and any re-renders
    are latent-independent and cached at construction.
    """

    def __init__(self, scene: GroundTruthScene, kind: str = "render",
                 config: GeoRewardConfig = GeoRewardConfig(),
                 magnitudes: LatentMagnitudes = LatentMagnitudes(),
                 recon_noise: float = 0.0, recon_seed: int = 0,
                 reconstructor=None):
        if kind not in ("render", "reprojection"):
            raise InvalidArgument(f"unknown scene reward kind {kind!r}")
        self.scene = scene
        self.kind = kind
        self.config = GeoRewardConfig(recon_frames=min(config.recon_frames, scene.frames))
        self.magnitudes = magnitudes
        self.recon_noise = float(recon_noise)
        self.recon_seed = int(recon_seed)
        self.reconstructor = reconstructor
        self.indices = select_frame_indices(scene.frames, self.config.recon_frames)
        self._cached_renders = None
        self._oracle_estimate = None
        if reconstructor is None:
            dummy = np.zeros((scene.frames,))
            if kind == "render":
                self._oracle_estimate = oracle_reconstruct_3d(
                    dummy, scene, self.recon_noise, self.indices, seed=self.recon_seed
                )
                self._cached_renders = [
                    render_gaussians(self._oracle_estimate.gaussians, p, scene.intrinsics)
                    for p in self._oracle_estimate.poses
                ]
            else:
                self._oracle_estimate = oracle_reconstruct_4d(
                    dummy, scene, self.recon_noise, self.indices, seed=self.recon_seed
                )

    def _estimate(self, frames):
        if self.reconstructor is not None:
            return self.reconstructor(frames, self.indices)
        return self._oracle_estimate

    def score_frames(self, frames, details=None) -> float:
        est = self._estimate(frames)
        if self.kind == "render":
            if self._cached_renders is not None:
                per_frame = []
                empties = 0
                for j, i in enumerate(self.indices):
                    try:
                        per_frame.append(cosine_field(frames[i], self._cached_renders[j]))
                    except EmptySupport as exc:
                        per_frame.append(exc.score)
                        empties += 1
                if details is not None:
                    details["per_frame"] = per_frame
                    details["empty_support"] = empties == len(self.indices)
                return 0.0 if empties == len(self.indices) else float(np.mean(per_frame))
            return render_consistency(frames, self.config, est, details=details)
        return reprojection_consistency(frames, self.config, est, details=details)

    def evaluate(self, latent) -> float:
        frames = scene_latent_decode(latent, self.scene, self.magnitudes)
        return self.score_frames(frames)

    def describe(self) -> dict:
        return {
            "type": f"scene-{self.kind}-consistency",
            "recon_frames": self.config.recon_frames,
            "recon_noise": self.recon_noise,
            "recon_seed": self.recon_seed,
            "magnitudes": self.magnitudes.to_dict(),
            "external_reconstructor": self.reconstructor is not None,
        }
