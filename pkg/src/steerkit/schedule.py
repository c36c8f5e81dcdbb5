"""Noise schedules, flow time grids, and interval-resampling step sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ScheduleInfeasible

ALPHA_BAR_KINDS = ("linear-beta", "cosine")
RESAMPLING_MODES = ("early", "linear", "late")

# Continuous-time variance-preserving endpoints; betas are divided by the
# step count so the cumulative product is step-count independent, and
# clipped so small step counts stay valid.
_BETA_MIN = 0.1
_BETA_MAX = 20.0
_BETA_CLIP = 0.999
_COSINE_OFFSET = 0.008


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class TimestepSchedule:
    """Cumulative signal ratios indexed by timestep: index 0 is the clean
    end (value exactly 1), index ``total_steps`` the noisiest."""

    total_steps: int
    alpha_bar: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if self.total_steps < 1 or len(ab) != self.total_steps + 1:
            raise InvalidArgument(
                f"alpha_bar must hold total_steps+1 values, got {len(ab)} for T={self.total_steps}"
            )
        if not np.all(np.isfinite(ab)):
            raise InvalidArgument("alpha_bar contains non-finite values")
        if abs(ab[0] - 1.0) > 1e-12:
            raise InvalidArgument(f"clean-step alpha_bar must be 1, got {ab[0]!r}")
        if ab[-1] >= 1e-3:
            raise InvalidArgument(f"noisiest alpha_bar must be < 1e-3, got {ab[-1]!r}")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise InvalidArgument("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise InvalidArgument("alpha_bar must strictly decrease with timestep")

    def to_dict(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "kind": self.kind,
            "alpha_bar": self.alpha_bar.tolist(),
        }


def build_alpha_bar_schedule(total_steps: int, kind: str) -> TimestepSchedule:
    """Construct a diffusion schedule of the given kind.

    ``linear-beta`` uses per-step noise rates linearly spaced between the
    variance-preserving endpoints scaled by 1/T; ``cosine`` uses the
    squared-cosine profile.  Both are re-derived through clipped per-step
    rates so every T >= 2 yields a valid, strictly monotone schedule.
    """
    if total_steps < 2:
        raise InvalidArgument(f"total_steps must be >= 2, got {total_steps}")
    if kind not in ALPHA_BAR_KINDS:
        raise InvalidArgument(f"unknown schedule kind {kind!r}; expected one of {ALPHA_BAR_KINDS}")
    T = int(total_steps)
    if kind == "linear-beta":
        betas = np.linspace(_BETA_MIN / T, _BETA_MAX / T, T)
    else:
        t = np.arange(T + 1, dtype=np.float64)
        f = np.cos((t / T + _COSINE_OFFSET) / (1 + _COSINE_OFFSET) * np.pi / 2) ** 2
        raw = f / f[0]
        betas = 1.0 - raw[1:] / raw[:-1]
    betas = np.minimum(betas, _BETA_CLIP)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return TimestepSchedule(total_steps=T, alpha_bar=alpha_bar, kind=kind)


@dataclass(frozen=True)
class FlowTimeGrid:
    """Strictly decreasing flow times from exactly 1 down to exactly 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", t)
        if len(t) < 2:
            raise InvalidArgument("flow grid needs at least two times")
        if t[0] != 1.0 or t[-1] != 0.0:
            raise InvalidArgument("flow grid must run from exactly 1 to exactly 0")
        if np.any(np.diff(t) >= 0.0):
            raise InvalidArgument("flow times must be strictly decreasing")

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def time_of(self, index: int) -> float:
        """Time at grid index, counted from the clean end (index 0 -> 0.0)."""
        return float(self.times[len(self.times) - 1 - index])

    def to_dict(self) -> dict:
        return {"times": self.times.tolist()}


def build_flow_grid(steps: int) -> FlowTimeGrid:
    """Uniform grid t_i = i/steps in decreasing order."""
    if steps < 1:
        raise InvalidArgument(f"steps must be >= 1, got {steps}")
    times = np.array([(steps - j) / steps for j in range(steps + 1)], dtype=np.float64)
    return FlowTimeGrid(times=times)


@dataclass(frozen=True)
class ResamplingSchedule:
    """The set of timestep indices at which rewards are scored and the
    ensemble is resampled.  ``steering_steps`` is stored in execution
    order (descending timestep)."""

    mode: str
    steering_steps: tuple = field(default_factory=tuple)
    m: int = 0

    def __post_init__(self):
        steps = tuple(sorted({int(s) for s in self.steering_steps}, reverse=True))
        object.__setattr__(self, "steering_steps", steps)
        if len(steps) != self.m:
            raise InvalidArgument(
                f"steering_steps holds {len(steps)} distinct indices, declared m={self.m}"
            )
        if self.m and steps[-1] < 0:
            raise InvalidArgument("steering steps must be non-negative")

    @classmethod
    def explicit(cls, steps, mode: str = "custom") -> "ResamplingSchedule":
        steps = tuple(int(s) for s in steps)
        return cls(mode=mode, steering_steps=steps, m=len(set(steps)))

    @classmethod
    def every_step(cls, total_steps: int) -> "ResamplingSchedule":
        """Score and resample at every transition target 0..T-1."""
        if total_steps < 1:
            raise InvalidArgument("total_steps must be >= 1")
        return cls.explicit(range(total_steps), mode="all")

    @classmethod
    def none(cls) -> "ResamplingSchedule":
        return cls(mode="none", steering_steps=(), m=0)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "m": self.m, "steering_steps": list(self.steering_steps)}


def build_resampling_schedule(total_steps: int, m: int, mode: str) -> ResamplingSchedule:
    """Place ``m`` steering steps in the window belonging to ``mode``.

    early: [0.6T, 0.8T]; late: [0.2T, 0.4T]; linear: uniformly inside the
    open interval (0, T).  Window endpoints are inclusive, values round
    half-up, and collapsing duplicates is an error rather than a silent
    reduction of m.
    """
    T = int(total_steps)
    if m < 1 or m > T:
        raise InvalidArgument(f"need 1 <= m <= T, got m={m}, T={T}")
    if mode not in RESAMPLING_MODES:
        raise InvalidArgument(f"unknown mode {mode!r}; expected one of {RESAMPLING_MODES}")
    if mode in ("early", "late") and T < 5:
        raise InvalidArgument(f"{mode} mode needs T >= 5, got {T}")

    if mode == "linear":
        points = [T * j / (m + 1) for j in range(1, m + 1)]
    else:
        frac_lo, frac_hi = (0.6, 0.8) if mode == "early" else (0.2, 0.4)
        lo = math.ceil(frac_lo * T - 1e-9)
        hi = math.floor(frac_hi * T + 1e-9)
        if hi < lo or hi - lo + 1 < m:
            raise ScheduleInfeasible(
                f"{mode} window [{lo}, {hi}] cannot hold {m} distinct steps for T={T}"
            )
        if m == 1:
            points = [float(hi)]
        else:
            points = [lo + (hi - lo) * j / (m - 1) for j in range(m)]
    steps = {_round_half_up(p) for p in points}
    if len(steps) < m:
        raise ScheduleInfeasible(
            f"rounding collapsed {m} steering steps to {len(steps)} for T={T}, mode={mode}"
        )
    return ResamplingSchedule(mode=mode, steering_steps=tuple(steps), m=m)
