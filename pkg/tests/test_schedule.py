import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steerkit import (
    InvalidArgument,
    ResamplingSchedule,
    ScheduleInfeasible,
    build_alpha_bar_schedule,
    build_flow_grid,
    build_resampling_schedule,
)

WINDOWS = {"early": (0.6, 0.8), "late": (0.2, 0.4)}


class TestAlphaBar:
    def test_linear_beta_t50_matches_cumprod_oracle(self):
        # frozen values from an independent cumulative-product computation
        s = build_alpha_bar_schedule(50, "linear-beta")
        assert len(s.alpha_bar) == 51
        assert s.alpha_bar[0] == 1.0
        assert s.alpha_bar[1] == pytest.approx(0.998, abs=1e-15)
        assert s.alpha_bar[25] == pytest.approx(0.069088983062073, abs=1e-12)
        assert s.alpha_bar[50] == pytest.approx(7.744765699226731e-06, rel=1e-9)
        assert s.alpha_bar[50] < 1e-3
        assert np.all(np.diff(s.alpha_bar) < 0)

    def test_cosine_t2_endpoint(self):
        s = build_alpha_bar_schedule(2, "cosine")
        assert s.alpha_bar[0] == 1.0
        assert s.alpha_bar[-1] < 1e-3

    def test_t1_rejected(self):
        for kind in ("cosine", "linear-beta"):
            with pytest.raises(InvalidArgument):
                build_alpha_bar_schedule(1, kind)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidArgument):
            build_alpha_bar_schedule(10, "quadratic")

    def test_deterministic(self):
        a = build_alpha_bar_schedule(77, "cosine").alpha_bar
        b = build_alpha_bar_schedule(77, "cosine").alpha_bar
        assert np.array_equal(a, b)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(5, 1000), st.sampled_from(["linear-beta", "cosine"]))
    def test_monotone_over_fuzz_grid(self, T, kind):
        s = build_alpha_bar_schedule(T, kind)
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert s.alpha_bar[0] == 1.0
        assert s.alpha_bar[-1] < 1e-3


class TestFlowGrid:
    def test_single_step(self):
        assert build_flow_grid(1).times.tolist() == [1.0, 0.0]

    def test_uniform_spacing(self):
        assert build_flow_grid(4).times.tolist() == [1.0, 0.75, 0.5, 0.25, 0.0]

    def test_zero_steps_rejected(self):
        with pytest.raises(InvalidArgument):
            build_flow_grid(0)

    def test_time_of_indexing(self):
        g = build_flow_grid(4)
        assert g.time_of(0) == 0.0
        assert g.time_of(4) == 1.0
        assert g.time_of(1) == 0.25


class TestResampling:
    def test_early_t50_m4(self):
        s = build_resampling_schedule(50, 4, "early")
        assert set(s.steering_steps) == {40, 37, 33, 30}

    def test_late_t50_m2(self):
        s = build_resampling_schedule(50, 2, "late")
        assert set(s.steering_steps) == {20, 10}

    def test_duplicate_collapse_is_error(self):
        with pytest.raises(ScheduleInfeasible):
            build_resampling_schedule(10, 4, "early")

    def test_m_exceeds_t(self):
        with pytest.raises(InvalidArgument):
            build_resampling_schedule(10, 11, "linear")

    def test_small_t_needs_linear(self):
        with pytest.raises(InvalidArgument):
            build_resampling_schedule(4, 1, "early")

    def test_every_step(self):
        s = ResamplingSchedule.every_step(5)
        assert set(s.steering_steps) == {0, 1, 2, 3, 4}
        assert s.m == 5

    def test_explicit_steps(self):
        s = ResamplingSchedule.explicit([7, 3, 5])
        assert s.steering_steps == (7, 5, 3)
        assert s.m == 3

    @settings(max_examples=120, deadline=None)
    @given(
        st.integers(5, 1000),
        st.integers(1, 8),
        st.sampled_from(["early", "late", "linear"]),
    )
    def test_steps_stay_inside_window(self, T, m, mode):
        if m > T:
            return
        try:
            s = build_resampling_schedule(T, m, mode)
        except ScheduleInfeasible:
            return
        lo, hi = WINDOWS.get(mode, (0, 1))
        for step in s.steering_steps:
            if mode == "linear":
                assert 0 < step < T
            else:
                assert lo * T - 0.5 <= step <= hi * T + 0.5
                # integer window is fully inside the real-valued window
                assert np.ceil(lo * T - 1e-9) <= step <= np.floor(hi * T + 1e-9)
        assert len(set(s.steering_steps)) == m
