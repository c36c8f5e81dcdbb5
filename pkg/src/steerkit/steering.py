"""Interacting-particle steering of diffusion and rectified-flow samplers.

The particle system follows the usual sequential-Monte-Carlo shape:
propose with the model transition, score denoised estimates with a reward,
weight, multinomial-resample at scheduled timesteps, and finally select
the highest-reward particle.

Weighting uses ratio increments so that the product of all weights applied
along a lineage telescopes to exp(lam * reward(x0)): at each scheduled step
a particle is weighted by exp(lam * (s_t - s_prev)) where s_prev is the
score it carried into its last resampling, and the optional terminal
correction applies the remaining exp(lam * (r_final - s_last)).  The
printed max-form potentials exp(lam * max(history)) are computed and logged
per particle for diagnostics; applying them directly as repeated resampling
weights over-tilts the ensemble and fails the exact-distribution checks.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeights, InvalidArgument, NumericError, SteerKitError
from .rng import RunStreams
from .schedule import FlowTimeGrid, ResamplingSchedule, TimestepSchedule

TRANSITIONS = ("ddim", "ancestral")


# ---------------------------------------------------------------------------
# reward contract
# ---------------------------------------------------------------------------

class RewardFn:
    """Scalar reward over decoded samples.

    Subclasses implement ``evaluate``; ``evaluate_intermediate`` defaults to
    the same function and exists so wrappers can perturb intermediate
    scoring while keeping the final evaluation exact.  Optional
    ``evaluate_batch`` / ``evaluate_intermediate_batch`` take a (k, D) array
    and return (k,) scores; the engine prefers them when present.
    ``intermediate_is_exact`` flags whether the intermediate oracle equals
    the exact one; wrappers that perturb it set this False.
    """

    intermediate_is_exact = True

    def evaluate(self, x) -> float:
        raise NotImplementedError

    def evaluate_intermediate(self, x) -> float:
        return self.evaluate(x)

    def describe(self) -> dict:
        return {"type": type(self).__name__}


def _batch_eval(reward_fn: RewardFn, states: np.ndarray, final: bool, workers: int):
    batch = getattr(reward_fn, "evaluate_batch" if final else "evaluate_intermediate_batch", None)
    if batch is not None:
        return np.asarray(batch(states), dtype=np.float64)
    single = reward_fn.evaluate if final else reward_fn.evaluate_intermediate
    if workers <= 1 or len(states) == 1:
        return np.array([float(single(s)) for s in states], dtype=np.float64)
    out = np.empty(len(states), dtype=np.float64)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futures = {ex.submit(single, states[i]): i for i in range(len(states))}
        for fut in as_completed(futures):
            out[futures[fut]] = float(fut.result())
    return out


class EvaluationError(SteerKitError):
    """Backend or reward failure, annotated with particle/timestep context."""

    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class Particle:
    """One sampler state with its scored history."""

    state: np.ndarray
    reward_history: tuple = ()
    running_max: float = float("-inf")
    stream_id: tuple = (0, 0)

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64)
        if self.reward_history:
            true_max = max(s for _, s in self.reward_history)
            if abs(self.running_max - true_max) > 0.0:
                raise InvalidArgument(
                    f"running_max {self.running_max} does not match history max {true_max}"
                )


@dataclass
class ParticleEnsemble:
    particles: list
    k: int
    current_step: int = 0

    def __post_init__(self):
        if len(self.particles) != self.k:
            raise InvalidArgument(f"ensemble holds {len(self.particles)} particles, declared k={self.k}")


@dataclass(frozen=True)
class PotentialConfig:
    """Tilt strength and the schedule the potentials are evaluated on."""

    lam: float
    schedule: ResamplingSchedule | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidArgument(f"lam must be non-negative, got {self.lam}")


@dataclass
class StepTrace:
    step: int | str
    rewards: np.ndarray
    log_potentials: np.ndarray
    weights: np.ndarray
    ess: float
    ancestors: np.ndarray


@dataclass
class SteerResult:
    selected: np.ndarray
    selected_reward: float
    selected_index: int
    final_states: np.ndarray
    final_rewards: np.ndarray
    reward_histories: list
    traces: list
    manifest: dict

    def __post_init__(self):
        if abs(self.selected_reward - float(np.max(self.final_rewards))) > 0.0:
            raise InvalidArgument("selected reward must equal the ensemble maximum")


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def tweedie_estimate(x, v, alpha_bar):
    """Denoised posterior-mean estimate from a velocity prediction."""
    ab = float(alpha_bar)
    if not 0.0 < ab <= 1.0:
        raise InvalidArgument(f"alpha_bar must lie in (0, 1], got {ab}")
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != v.shape:
        raise InvalidArgument(f"shape mismatch: x {x.shape} vs v {v.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise NumericError("non-finite input to tweedie_estimate")
    return np.sqrt(ab) * x - np.sqrt(1.0 - ab) * v


def _ddim_update(x_hat0, x_prev, ab_from, ab_to):
    eps = (x_prev - np.sqrt(ab_from) * x_hat0) / np.sqrt(1.0 - ab_from)
    return np.sqrt(ab_to) * x_hat0 + np.sqrt(1.0 - ab_to) * eps


def _ancestral_update(x_hat0, x_prev, ab_from, ab_to, noise):
    # Posterior-mean move plus transitional noise sqrt(1 - ab_from/ab_to);
    # exactly variance-preserving for unit-Gaussian data.
    eps = (x_prev - np.sqrt(ab_from) * x_hat0) / np.sqrt(1.0 - ab_from)
    beta = 1.0 - ab_from / ab_to
    var_small = (1.0 - ab_to) * beta / (1.0 - ab_from)
    mean = np.sqrt(ab_to) * x_hat0 + np.sqrt(max(1.0 - ab_to - var_small, 0.0)) * eps
    return mean + np.sqrt(beta) * noise


def proposal_update(x_hat0, x_prev, alpha_bar_from, alpha_bar_to):
    """Deterministic first-order solver update between raw noise levels:
    re-derive the noise direction at the source level and recombine at the
    target level."""
    ab_from, ab_to = float(alpha_bar_from), float(alpha_bar_to)
    if not (0.0 < ab_from <= 1.0 and 0.0 < ab_to <= 1.0 and ab_from <= ab_to):
        raise InvalidArgument(
            f"need 0 < alpha_bar_from <= alpha_bar_to <= 1, got {ab_from} -> {ab_to}"
        )
    x_hat0 = np.asarray(x_hat0, dtype=np.float64)
    x_prev = np.asarray(x_prev, dtype=np.float64)
    if x_hat0.shape != x_prev.shape:
        raise InvalidArgument(f"shape mismatch: {x_hat0.shape} vs {x_prev.shape}")
    if ab_from == 1.0:
        if np.any(x_prev != x_hat0):
            raise NumericError("noise direction undefined: alpha_bar=1 but x_prev != x_hat0")
        return np.sqrt(ab_to) * x_hat0
    return _ddim_update(x_hat0, x_prev, ab_from, ab_to)


def proposal_step(x_hat0, x_prev, schedule: TimestepSchedule, from_t: int, to_t: int):
    """Deterministic first-order solver update from timestep from_t to to_t."""
    if not (0 <= to_t < from_t <= schedule.total_steps):
        raise InvalidArgument(f"need 0 <= to_t < from_t <= T, got {from_t} -> {to_t}")
    return proposal_update(
        x_hat0, x_prev, schedule.alpha_bar[from_t], schedule.alpha_bar[to_t]
    )


def log_potential(reward_history, lam: float) -> float:
    """log of the max-form potential exp(lam * max(history))."""
    history = [float(s) for s in reward_history]
    if not history:
        raise InvalidArgument("reward history must be non-empty")
    if lam < 0:
        raise InvalidArgument("lam must be non-negative")
    return lam * max(history)


def compute_potential(reward_history, lam: float) -> float:
    return float(np.exp(log_potential(reward_history, lam)))


def terminal_correction(final_reward: float, per_step_potentials, lam: float) -> float:
    """Correction factor making the potential product telescope to
    exp(lam * final_reward); computed in log space."""
    pots = np.asarray(per_step_potentials, dtype=np.float64)
    if np.any(~np.isfinite(pots)) or np.any(pots <= 0.0):
        raise NumericError("per-step potentials must be finite and positive")
    return float(np.exp(lam * float(final_reward) - np.log(pots).sum()))


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w < 0.0) or w.sum() <= 0.0:
        raise DegenerateWeights(f"invalid weights {w!r}")
    return float(w.sum() ** 2 / (w * w).sum())


def _multinomial_ancestors(weights, rng, k: int) -> np.ndarray:
    """k i.i.d. categorical draws via inverse-CDF lookup of fresh uniforms.

    Using explicit uniforms (rather than an opaque sampler) keeps runs that
    share a seed coupled under small weight changes, which sharpens paired
    comparisons between configurations.
    """
    cdf = np.cumsum(weights / weights.sum())
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, rng.random(k), side="right"), k - 1)


def multinomial_resample(ensemble: ParticleEnsemble, weights, rng):
    """Draw k particles i.i.d. proportional to weights.

    Returns the resampled ensemble together with the ancestor indices.
    Copies carry their ancestor's history and an advanced stream id, so a
    fresh random stream can be attached to every survivor.
    """
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != ensemble.k:
        raise InvalidArgument(f"got {len(w)} weights for k={ensemble.k}")
    if np.any(~np.isfinite(w)) or np.any(w < 0.0) or w.sum() <= 0.0:
        raise DegenerateWeights(f"degenerate weights {w!r}")
    k = ensemble.k
    ancestors = _multinomial_ancestors(w, rng, k) if k > 1 else np.zeros(1, dtype=np.int64)
    particles = []
    for slot, a in enumerate(ancestors):
        src = ensemble.particles[int(a)]
        particles.append(
            Particle(
                state=src.state.copy(),
                reward_history=tuple(src.reward_history),
                running_max=src.running_max,
                stream_id=(slot, src.stream_id[1] + 1),
            )
        )
    return ParticleEnsemble(particles=particles, k=k, current_step=ensemble.current_step), ancestors


def resolve_workers(workers=None) -> int:
    if workers is None:
        try:
            workers = int(os.environ.get("STEERKIT_THREADS", "1"))
        except ValueError:
            workers = 1
    return max(1, int(workers))


# ---------------------------------------------------------------------------
# particle system internals
# ---------------------------------------------------------------------------

class _System:
    def __init__(self, backend, reward_fn, lam, k, seed, workers):
        if k < 1:
            raise InvalidArgument(f"k must be >= 1, got {k}")
        self.backend = backend
        self.reward_fn = reward_fn
        self.lam = float(lam)
        self.k = int(k)
        self.workers = resolve_workers(workers)
        self.dim = int(backend.dimension)
        self.streams = RunStreams(int(seed), self.k, self.dim)
        self.event = 0
        init = getattr(backend, "initial_state", None)
        if init is None:
            self.x = self.streams.initial_block()
        else:
            gen = self.streams.initial_generator()
            self.x = np.ascontiguousarray(
                np.stack([init(gen) for _ in range(self.k)]), dtype=np.float64
            )
        # score histories as shared-tail cons lists: node = (parent, (step, s))
        self.hist_nodes = [None] * self.k
        self.run_max = np.full(self.k, -np.inf)
        self.applied = np.zeros(self.k)
        self.traces: list[StepTrace] = []

    def noise(self) -> np.ndarray:
        return self.streams.noise_block()

    def check_finite(self, step):
        bad = ~np.isfinite(self.x).all(axis=1)
        if bad.any():
            raise NumericError(
                f"non-finite state after step {step} for particle(s) {np.flatnonzero(bad).tolist()}"
            )

    def evaluate(self, states, final: bool, step) -> np.ndarray:
        try:
            scores = _batch_eval(self.reward_fn, states, final, self.workers)
        except SteerKitError:
            raise
        except Exception as exc:
            raise EvaluationError(f"reward failed at step {step}: {exc}", step=step) from exc
        if scores.shape != (self.k,):
            raise EvaluationError(f"reward returned shape {scores.shape} at step {step}", step=step)
        bad = ~np.isfinite(scores)
        if bad.any():
            p = int(np.flatnonzero(bad)[0])
            raise EvaluationError(f"non-finite reward at step {step}", step=step, particle=p)
        return scores

    def _normalized_weights(self, tilt):
        logw = tilt - self.applied
        logw = logw - logw.max()
        w = np.exp(logw)
        total = w.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise DegenerateWeights(f"degenerate steering weights at event {self.event}")
        return w / total

    def resample_event(self, step, scores, extra_arrays=()):
        """Score bookkeeping, ratio weighting, and multinomial resampling.

        ``extra_arrays`` are permuted alongside the system state (the flow
        variant resamples the denoised estimates it is about to re-noise).
        Resampling over a single particle is the identity and consumes no
        randomness, so a k=1 steered run matches the baseline bitwise.
        """
        self.hist_nodes = [
            (self.hist_nodes[i], (step, float(scores[i]))) for i in range(self.k)
        ]
        self.run_max = np.maximum(self.run_max, scores)
        tilt = self.lam * scores
        w = self._normalized_weights(tilt)
        event_ess = float(1.0 / (w * w).sum())
        log_pots = self.lam * self.run_max
        if self.k == 1:
            ancestors = np.zeros(1, dtype=np.int64)
        else:
            rng = self.streams.resample_generator()
            ancestors = _multinomial_ancestors(w, rng, self.k)
            self.x = self.x[ancestors]
            self.hist_nodes = [self.hist_nodes[int(a)] for a in ancestors]
            self.run_max = self.run_max[ancestors]
            self.applied = tilt[ancestors]
            for arr in extra_arrays:
                arr[:] = arr[ancestors]
        self.event += 1
        self.traces.append(
            StepTrace(
                step=step,
                rewards=np.asarray(scores, dtype=np.float64).copy(),
                log_potentials=log_pots.copy(),
                weights=w.copy(),
                ess=event_ess,
                ancestors=ancestors.copy(),
            )
        )
        return ancestors

    def terminal_event(self, final_rewards):
        """Apply the remaining exp(lam*(r_final - s_applied)) as one last
        resampling so the ensemble realizes the full reward tilt.

        The correction weight queries the same (possibly perturbed)
        oracle the per-step potentials used; the rewards reported in the
        result stay exact.
        """
        if getattr(self.reward_fn, "intermediate_is_exact", True):
            correction_scores = final_rewards
        else:
            correction_scores = self.evaluate(self.x, final=False, step="terminal")
        tilt = self.lam * correction_scores
        w = self._normalized_weights(tilt)
        event_ess = float(1.0 / (w * w).sum())
        if self.k == 1:
            ancestors = np.zeros(1, dtype=np.int64)
        else:
            rng = self.streams.resample_generator()
            ancestors = _multinomial_ancestors(w, rng, self.k)
            self.x = self.x[ancestors]
            self.hist_nodes = [self.hist_nodes[int(a)] for a in ancestors]
            self.run_max = self.run_max[ancestors]
            self.applied = tilt[ancestors]
            final_rewards[:] = final_rewards[ancestors]
        self.event += 1
        self.traces.append(
            StepTrace(
                step="final",
                rewards=np.asarray(final_rewards, dtype=np.float64).copy(),
                log_potentials=self.lam * self.run_max,
                weights=w.copy(),
                ess=event_ess,
                ancestors=ancestors.copy(),
            )
        )

    def _history(self, node) -> tuple:
        items = []
        while node is not None:
            node, entry = node[0], node[1]
            items.append(entry)
        return tuple(reversed(items))

    def result(self, final_rewards, manifest) -> SteerResult:
        idx = int(np.argmax(final_rewards))  # ties resolve to the lowest index
        return SteerResult(
            selected=self.x[idx].copy(),
            selected_reward=float(final_rewards[idx]),
            selected_index=idx,
            final_states=self.x.copy(),
            final_rewards=np.asarray(final_rewards, dtype=np.float64).copy(),
            reward_histories=[self._history(n) for n in self.hist_nodes],
            traces=self.traces,
            manifest=manifest,
        )


def _describe(obj):
    fn = getattr(obj, "describe", None)
    return fn() if fn is not None else {"type": type(obj).__name__}


def _validate_steps(resampling: ResamplingSchedule, horizon: int):
    if resampling.m and (max(resampling.steering_steps) > horizon - 1 or min(resampling.steering_steps) < 0):
        raise InvalidArgument(
            f"steering steps {resampling.steering_steps} outside transition targets [0, {horizon - 1}]"
        )


# ---------------------------------------------------------------------------
# steering algorithms
# ---------------------------------------------------------------------------

DIVERSIFY_MODES = ("none", "renoise")


def steer_v_prediction(
    backend,
    reward_fn: RewardFn,
    schedule: TimestepSchedule,
    resampling: ResamplingSchedule,
    potential: PotentialConfig,
    k: int,
    seed: int,
    *,
    transition: str = "ddim",
    diversify: str = "none",
    final_correction: bool = False,
    workers=None,
) -> SteerResult:
    """Steer a velocity-prediction diffusion sampler.

    Per step: query the velocity, form the denoised estimate, advance with
    the chosen transition kernel; at scheduled steps score the estimates and
    multinomial-resample.  ``transition='ddim'`` is the deterministic solver
    update; ``'ancestral'`` adds the posterior transition noise, which keeps
    resampled copies exploring distinct continuations.

    ``diversify='renoise'`` additionally projects resampled denoised
    estimates back onto the current noise level with fresh per-slot draws
    (the interval-resampling recipe used for straight-path flows); with few
    scheduled steps this widens exploration, but applied at every step the
    posterior-mean squash distorts the sampled law, so distribution-level
    runs keep it off.
    """
    if transition not in TRANSITIONS:
        raise InvalidArgument(f"unknown transition {transition!r}; expected one of {TRANSITIONS}")
    if diversify not in DIVERSIFY_MODES:
        raise InvalidArgument(f"unknown diversify mode {diversify!r}; expected one of {DIVERSIFY_MODES}")
    T = schedule.total_steps
    _validate_steps(resampling, T)
    sys = _System(backend, reward_fn, potential.lam, k, seed, workers)
    ab = schedule.alpha_bar
    steps = set(resampling.steering_steps)
    for t in range(T - 1, -1, -1):
        ab_from, ab_to = float(ab[t + 1]), float(ab[t])
        try:
            v = backend.velocity(sys.x, ab_from)
        except SteerKitError:
            raise
        except Exception as exc:
            raise EvaluationError(f"backend velocity failed at step {t}: {exc}", step=t) from exc
        x_hat0 = np.sqrt(ab_from) * sys.x - np.sqrt(1.0 - ab_from) * v
        if transition == "ddim":
            sys.x = _ddim_update(x_hat0, sys.x, ab_from, ab_to)
        else:
            sys.x = _ancestral_update(x_hat0, sys.x, ab_from, ab_to, sys.noise())
        sys.check_finite(t)
        if t in steps:
            scores = sys.evaluate(x_hat0, final=False, step=t)
            sys.resample_event(t, scores, extra_arrays=(x_hat0,))
            if diversify == "renoise":
                sys.x = np.sqrt(ab_to) * x_hat0 + np.sqrt(1.0 - ab_to) * sys.noise()
                sys.check_finite(t)
    final_rewards = sys.evaluate(sys.x, final=True, step="final")
    if final_correction:
        sys.terminal_event(final_rewards)
    manifest = {
        "algorithm": "steer-v-prediction",
        "transition": transition,
        "diversify": diversify,
        "k": k,
        "lam": potential.lam,
        "seed": int(seed),
        "final_correction": bool(final_correction),
        "schedule": schedule.to_dict(),
        "resampling": resampling.to_dict(),
        "backend": _describe(backend),
        "reward": _describe(reward_fn),
    }
    return sys.result(final_rewards, manifest)


def steer_rectified_flow(
    backend,
    reward_fn: RewardFn,
    grid: FlowTimeGrid,
    resampling: ResamplingSchedule,
    potential: PotentialConfig,
    k: int,
    seed: int,
    *,
    final_correction: bool = False,
    workers=None,
) -> SteerResult:
    """Steer a rectified-flow sampler.

    Deterministic Euler updates between events; at scheduled steps the
    clean-state estimates are scored, resampled, and projected back onto
    the current noise level with fresh per-particle Gaussian draws.
    """
    N = grid.steps
    _validate_steps(resampling, N)
    sys = _System(backend, reward_fn, potential.lam, k, seed, workers)
    steps = set(resampling.steering_steps)
    for i in range(N - 1, -1, -1):
        t_hi, t_lo = grid.time_of(i + 1), grid.time_of(i)
        try:
            v = backend.flow_velocity(sys.x, t_hi)
        except SteerKitError:
            raise
        except Exception as exc:
            raise EvaluationError(f"backend flow velocity failed at step {i}: {exc}", step=i) from exc
        if i in steps:
            x_hat = sys.x - t_hi * v
            scores = sys.evaluate(x_hat, final=False, step=i)
            sys.resample_event(i, scores, extra_arrays=(x_hat,))
            sys.x = (1.0 - t_lo) * x_hat + t_lo * sys.noise()
        else:
            sys.x = sys.x - (t_hi - t_lo) * v
        sys.check_finite(i)
    final_rewards = sys.evaluate(sys.x, final=True, step="final")
    if final_correction:
        sys.terminal_event(final_rewards)
    manifest = {
        "algorithm": "steer-rectified-flow",
        "k": k,
        "lam": potential.lam,
        "seed": int(seed),
        "final_correction": bool(final_correction),
        "grid": grid.to_dict(),
        "resampling": resampling.to_dict(),
        "backend": _describe(backend),
        "reward": _describe(reward_fn),
    }
    return sys.result(final_rewards, manifest)


def best_of_n(
    backend,
    reward_fn: RewardFn,
    k: int,
    seed: int,
    *,
    schedule: TimestepSchedule | None = None,
    grid: FlowTimeGrid | None = None,
    transition: str = "ddim",
    workers=None,
) -> SteerResult:
    """k independent baseline runs; the highest final reward wins (ties to
    the lowest index).  Pass exactly one of ``schedule`` or ``grid``."""
    if (schedule is None) == (grid is None):
        raise InvalidArgument("pass exactly one of schedule= or grid=")
    none = ResamplingSchedule.none()
    pot = PotentialConfig(lam=0.0)
    if schedule is not None:
        result = steer_v_prediction(
            backend, reward_fn, schedule, none, pot, k, seed,
            transition=transition, final_correction=False, workers=workers,
        )
    else:
        result = steer_rectified_flow(
            backend, reward_fn, grid, none, pot, k, seed,
            final_correction=False, workers=workers,
        )
    result.manifest["algorithm"] = "best-of-n"
    return result


def baseline_sample(
    backend,
    seed: int,
    *,
    schedule: TimestepSchedule | None = None,
    grid: FlowTimeGrid | None = None,
    transition: str = "ddim",
    n: int = 1,
) -> np.ndarray:
    """n unsteered samples, drawn as n non-interacting particles."""

    class _Zero(RewardFn):
        def evaluate(self, x):
            return 0.0

        def evaluate_batch(self, xs):
            return np.zeros(len(xs))

        evaluate_intermediate_batch = evaluate_batch

    res = best_of_n(
        backend, _Zero(), n, seed, schedule=schedule, grid=grid, transition=transition
    )
    return res.final_states
