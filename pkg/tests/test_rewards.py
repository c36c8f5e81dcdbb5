import numpy as np
import pytest

from steerkit import (
    EmptySupport,
    FrameSplit,
    GeoRewardConfig,
    InvalidArgument,
    SceneReward,
    SceneSpec,
    SceneVideoLatent,
    cosine_field,
    linear_reward,
    oracle_reconstruct_3d,
    oracle_reconstruct_4d,
    perturbed_reward,
    quadratic_reward,
    render_consistency,
    reprojection_consistency,
    scene_latent_decode,
    select_frame_indices,
    synth_scene,
)
from steerkit.geometry import CameraPose, GaussianSet
from steerkit.scene import SceneEstimate3D


def scene_and_frames(seed=0, frames=6, dynamic=0, **kw):
    spec = SceneSpec(frames=frames, dynamic_points=dynamic, width=40, height=40,
                     focal=40.0, channels=8, static_points=150, **kw)
    scene = synth_scene(seed, spec)
    decoded = scene_latent_decode(np.zeros(SceneVideoLatent.dimension(frames)), scene)
    return scene, decoded


class TestCosineField:
    def test_self_similarity(self):
        a = np.random.default_rng(0).standard_normal((5, 5, 3)) + 2.0
        assert cosine_field(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_negated(self):
        a = np.random.default_rng(1).standard_normal((5, 5, 3)) + 2.0
        assert cosine_field(a, -a) == pytest.approx(-1.0, abs=1e-12)

    def test_orthogonal(self):
        a = np.zeros((2, 2, 2)); a[..., 0] = 1.0
        b = np.zeros((2, 2, 2)); b[..., 1] = 1.0
        assert cosine_field(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_empty_support_carries_zero(self):
        a = np.zeros((3, 3, 2))
        with pytest.raises(EmptySupport) as err:
            cosine_field(a, a)
        assert err.value.score == 0.0

    def test_mask_and_coverage(self):
        a = np.ones((2, 2, 2))
        b = np.ones((2, 2, 2))
        b[0, 0] = [1.0, -1.0]
        mask = np.zeros((2, 2)); mask[0, 0] = 1
        assert cosine_field(a, b, mask=mask) == pytest.approx(1.0)
        cov = np.zeros((2, 2), dtype=bool); cov[0, 0] = True
        assert cosine_field(a, b, coverage=cov) == pytest.approx(0.0)

    def test_details_raw_sum(self):
        a = np.ones((2, 2, 1))
        d = {}
        cosine_field(a, a, details=d)
        assert d["pixels"] == 4 and d["raw_sum"] == pytest.approx(4.0)


class TestFrameBookkeeping:
    def test_split_odd_even(self):
        s = FrameSplit.of(5)
        assert s.src_indices == (0, 2, 4)
        assert s.tgt_indices == (1, 3)
        assert len(s.src_indices) == -(-5 // 2)

    def test_selection_even_spacing(self):
        assert select_frame_indices(25, 8) == (0, 3, 7, 10, 14, 17, 21, 24)
        assert select_frame_indices(8, 8) == tuple(range(8))
        idx = select_frame_indices(25, 8)
        assert idx[0] == 0 and idx[-1] == 24

    def test_selection_bounds(self):
        with pytest.raises(InvalidArgument):
            select_frame_indices(4, 9)


class TestRenderConsistency:
    def test_oracle_floor(self):
        scene, frames = scene_and_frames()
        est = oracle_reconstruct_3d(frames, scene, 0.0, tuple(range(6)))
        score = render_consistency(frames, GeoRewardConfig(recon_frames=6), est)
        assert score >= 0.99

    def test_random_poses_degrade(self):
        cfg = GeoRewardConfig(recon_frames=6)
        rng = np.random.default_rng(0)
        for seed in range(8):
            scene, frames = scene_and_frames(seed)
            est = oracle_reconstruct_3d(frames, scene, 0.0, tuple(range(6)))
            base = render_consistency(frames, cfg, est)
            from steerkit.geometry import look_at_pose
            scrambled = SceneEstimate3D(
                gaussians=est.gaussians,
                poses=[look_at_pose(rng.uniform(-3, 3, 3) + [0, 0, -3.0], rng.uniform(-1, 1, 3))
                       for _ in est.poses],
                intrinsics=est.intrinsics,
                frame_indices=est.frame_indices,
            )
            assert render_consistency(frames, cfg, scrambled) < base

    def test_all_zero_render_scores_zero_with_flag(self):
        scene, frames = scene_and_frames()
        empty = GaussianSet(positions=np.zeros((0, 3)), opacities=np.zeros(0),
                            covariances=np.zeros((0, 3, 3)), features=np.zeros((0, 8)))
        est = oracle_reconstruct_3d(frames, scene, 0.0, tuple(range(6)))
        est = SceneEstimate3D(gaussians=empty, poses=est.poses,
                              intrinsics=est.intrinsics, frame_indices=est.frame_indices)
        details = {}
        score = render_consistency(frames, GeoRewardConfig(recon_frames=6), est, details=details)
        assert score == 0.0 and details["empty_support"]

    def test_frame_count_contract(self):
        scene, frames = scene_and_frames(frames=10)
        cfg = GeoRewardConfig(recon_frames=4)
        idx = select_frame_indices(10, 4)
        est = oracle_reconstruct_3d(frames, scene, 0.0, idx)
        details = {}
        render_consistency(frames, cfg, est, details=details)
        assert details["frame_indices"] == idx
        assert len(details["per_frame"]) == 4
        # estimate built for different frames is rejected
        bad = oracle_reconstruct_3d(frames, scene, 0.0, (0, 1, 2, 3))
        with pytest.raises(InvalidArgument):
            render_consistency(frames, cfg, bad)


class TestReprojectionConsistency:
    def test_oracle_floor_static(self):
        scene, frames = scene_and_frames(seed=3)
        est = oracle_reconstruct_4d(frames, scene, 0.0, tuple(range(6)))
        score = reprojection_consistency(frames, GeoRewardConfig(recon_frames=6), est)
        assert score >= 0.99

    def test_dynamic_mask_blindness_exact(self):
        scene, frames = scene_and_frames(seed=5, dynamic=25)
        cfg = GeoRewardConfig(recon_frames=6)
        est = oracle_reconstruct_4d(frames, scene, 0.0, tuple(range(6)))
        base = reprojection_consistency(frames, cfg, est)
        corrupted = frames.copy()
        for j in range(6):
            m = est.masks[j] == 1
            corrupted[j][m] = 123.456  # arbitrary edits under the dynamic mask
        after = reprojection_consistency(corrupted, cfg, est)
        assert abs(after - base) <= 1e-12

    def test_all_dynamic_masks_zero_coverage(self):
        scene, frames = scene_and_frames(seed=6)
        est = oracle_reconstruct_4d(frames, scene, 0.0, tuple(range(6)))
        est.masks[:] = 1
        details = {}
        score = reprojection_consistency(frames, GeoRewardConfig(recon_frames=6), est, details=details)
        assert score == 0.0 and details["zero_coverage"]

    def test_monotone_degradation_in_eta(self):
        cfg = GeoRewardConfig(recon_frames=6)
        etas = [0.0, 0.01, 0.05, 0.1, 0.5]
        gs = np.zeros((6, len(etas)))
        dyn = np.zeros((6, len(etas)))
        for seed in range(6):
            scene, frames = scene_and_frames(seed)
            scene_d, frames_d = scene_and_frames(seed, dynamic=25)
            for j, eta in enumerate(etas):
                est3 = oracle_reconstruct_3d(frames, scene, eta, tuple(range(6)), seed=seed)
                est4 = oracle_reconstruct_4d(frames_d, scene_d, eta, tuple(range(6)), seed=seed)
                gs[seed, j] = render_consistency(frames, cfg, est3)
                dyn[seed, j] = reprojection_consistency(frames_d, cfg, est4)
        assert np.all(np.diff(gs.mean(axis=0)) <= 1e-9)
        assert np.all(np.diff(dyn.mean(axis=0)) <= 1e-9)

    def test_scores_bounded(self):
        rng = np.random.default_rng(0)
        cfg = GeoRewardConfig(recon_frames=2)
        for seed in range(300):
            spec = SceneSpec(frames=2, static_points=110, dynamic_points=int(rng.integers(0, 20)),
                             width=20, height=20, focal=20.0, channels=3)
            scene = synth_scene(seed, spec)
            frames = scene_latent_decode(
                rng.uniform(0.0, 2.0) * rng.standard_normal(SceneVideoLatent.dimension(2)), scene
            )
            noisy = frames + rng.standard_normal(frames.shape)
            est3 = oracle_reconstruct_3d(noisy, scene, rng.uniform(0, 1), (0, 1), seed=seed)
            est4 = oracle_reconstruct_4d(noisy, scene, rng.uniform(0, 1), (0, 1), seed=seed)
            assert -1.0 <= render_consistency(noisy, cfg, est3) <= 1.0
            assert -1.0 <= reprojection_consistency(noisy, cfg, est4) <= 1.0


class TestValidationRewards:
    def test_linear(self):
        r = linear_reward([1.0])
        assert r.evaluate(np.array([0.5])) == 0.5
        r2 = linear_reward([1.0, -1.0])
        assert r2.evaluate(np.array([2.0, 2.0])) == 0.0
        assert np.allclose(r2.evaluate_batch(np.array([[2.0, 2.0], [1.0, 0.0]])), [0.0, 1.0])

    def test_quadratic(self):
        r = quadratic_reward([0.0], 1.0)
        assert r.evaluate(np.array([0.0])) == 0.0
        assert r.evaluate(np.array([2.0])) == -4.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgument):
            linear_reward([1.0, 2.0]).evaluate(np.array([1.0]))


class TestPerturbedReward:
    def test_eta_zero_identity(self):
        base = linear_reward([1.0, 1.0])
        p = perturbed_reward(base, 0.0, seed=1)
        g = np.random.default_rng(0)
        for _ in range(50):
            x = g.standard_normal(2)
            assert p.evaluate_intermediate(x) == base.evaluate(x)

    def test_bound_holds(self):
        base = linear_reward([1.0, 1.0])
        eta = 0.2
        p = perturbed_reward(base, eta, seed=3)
        g = np.random.default_rng(1)
        xs = g.standard_normal((100_000, 2))
        diff = p.evaluate_intermediate_batch(xs) - base.evaluate_batch(xs)
        assert np.abs(diff).max() <= eta * (1 + 1e-12)  # up to one rounding ulp

    def test_deterministic_and_final_exact(self):
        base = quadratic_reward([0.0], 1.0)
        p = perturbed_reward(base, 0.1, seed=2)
        x = np.array([0.7])
        assert p.evaluate_intermediate(x) == p.evaluate_intermediate(x)
        assert p.evaluate(x) == base.evaluate(x)

    def test_noise_scales_linearly_with_eta(self):
        base = linear_reward([1.0])
        x = np.array([0.3])
        d1 = perturbed_reward(base, 0.1, seed=5).evaluate_intermediate(x) - base.evaluate(x)
        d2 = perturbed_reward(base, 0.2, seed=5).evaluate_intermediate(x) - base.evaluate(x)
        assert d2 == pytest.approx(2 * d1, rel=1e-12)


class TestSceneReward:
    def test_cached_matches_direct(self):
        scene, frames = scene_and_frames(seed=2)
        reward = SceneReward(scene, "render", GeoRewardConfig(recon_frames=6))
        est = oracle_reconstruct_3d(frames, scene, 0.0, tuple(range(6)))
        direct = render_consistency(frames, GeoRewardConfig(recon_frames=6), est)
        lat = np.zeros(SceneVideoLatent.dimension(6))
        assert reward.evaluate(lat) == pytest.approx(direct, abs=1e-12)

    def test_prior_latent_scores_below_zero_latent(self):
        cfg = GeoRewardConfig(recon_frames=4)
        wins = 0
        seeds = 200
        for seed in range(seeds):
            spec = SceneSpec(frames=4, dynamic_points=0, width=32, height=32,
                             focal=32.0, channels=6, static_points=130)
            scene = synth_scene(seed, spec)
            reward = SceneReward(scene, "render", cfg)
            g = np.random.default_rng(1000 + seed)
            zero = reward.evaluate(np.zeros(SceneVideoLatent.dimension(4)))
            prior = reward.evaluate(g.standard_normal(SceneVideoLatent.dimension(4)))
            wins += prior < zero
        assert wins >= 0.95 * seeds  # strictly below in >= 95% of seeds
