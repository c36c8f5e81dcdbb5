"""Analytic Gaussian-mixture generative backends.

These stand in for learned models: the marginal posterior means under the
forward noising process (and the conditional flow velocity under linear
interpolation) have closed forms, so sampled trajectories can be validated
against exact oracles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InvalidArgument, Unsupported


@dataclass(frozen=True)
class GaussianMixtureModel:
    """Diagonal-covariance mixture: weights (K,), means (K, D), variances (K, D)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        if m.shape != v.shape or len(w) != m.shape[0]:
            raise InvalidArgument(
                f"inconsistent mixture shapes: weights {w.shape}, means {m.shape}, variances {v.shape}"
            )
        if np.any(w <= 0.0):
            raise InvalidArgument("component weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgument(f"weights must sum to 1 within 1e-9, got {w.sum()!r}")
        if np.any(v <= 0.0):
            raise InvalidArgument("variances must be strictly positive")

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @classmethod
    def standard_normal(cls, dimension: int) -> "GaussianMixtureModel":
        return cls(
            weights=np.array([1.0]),
            means=np.zeros((1, dimension)),
            variances=np.ones((1, dimension)),
        )

    @classmethod
    def from_dict(cls, spec: dict) -> "GaussianMixtureModel":
        comps = spec["components"]
        return cls(
            weights=np.array([c["weight"] for c in comps], dtype=np.float64),
            means=np.array([c["mean"] for c in comps], dtype=np.float64),
            variances=np.array([c["variance"] for c in comps], dtype=np.float64),
        )

    def to_dict(self) -> dict:
        return {
            "components": [
                {"weight": float(w), "mean": m.tolist(), "variance": v.tolist()}
                for w, m, v in zip(self.weights, self.means, self.variances)
            ]
        }

    def moments(self):
        """Prior mean vector and full covariance matrix."""
        m = self.weights @ self.means
        d = self.dimension
        cov = np.zeros((d, d))
        for w, mu, var in zip(self.weights, self.means, self.variances):
            cov += w * (np.diag(var) + np.outer(mu, mu))
        return m, cov - np.outer(m, m)


def _log_responsibilities(x, centers, spreads, weights):
    # x: (..., D); centers/spreads: (K, D); returns (..., K)
    diff = x[..., None, :] - centers
    logp = -0.5 * (diff * diff / spreads + np.log(2 * np.pi * spreads)).sum(axis=-1)
    logr = np.log(weights) + logp
    logr = logr - logr.max(axis=-1, keepdims=True)
    r = np.exp(logr)
    return r / r.sum(axis=-1, keepdims=True)


def gmm_posterior_mean(x, alpha_bar, model: GaussianMixtureModel):
    """E[x0 | x_t] under the diffused mixture; valid for alpha_bar in (0, 1)."""
    ab = float(alpha_bar)
    sq = np.sqrt(ab)
    var_t = ab * model.variances + (1.0 - ab)            # (K, D)
    resp = _log_responsibilities(x, sq * model.means, var_t, model.weights)
    post = (sq * model.variances * x[..., None, :] + (1.0 - ab) * model.means) / var_t
    return (resp[..., :, None] * post).sum(axis=-2)


def gmm_velocity(x, alpha_bar, model: GaussianMixtureModel):
    """Exact velocity-parameterized prediction at noise level alpha_bar."""
    ab = float(alpha_bar)
    if not 0.0 < ab < 1.0:
        raise InvalidArgument(f"alpha_bar must lie strictly inside (0, 1), got {ab}")
    x = np.asarray(x, dtype=np.float64)
    mean = gmm_posterior_mean(x, ab, model)
    return (np.sqrt(ab) * x - mean) / np.sqrt(1.0 - ab)


def _flow_velocity(x, t, model: GaussianMixtureModel):
    # E[z - x0 | x_t] under x_t = (1-t) x0 + t z; closed form, valid on [0, 1].
    t = float(t)
    c = 1.0 - t
    var_t = c * c * model.variances + t * t
    resp = _log_responsibilities(x, c * model.means, var_t, model.weights)
    centered = x[..., None, :] - c * model.means
    e_x0 = model.means + c * model.variances * centered / var_t
    e_z = t * centered / var_t
    v = e_z - e_x0
    return (resp[..., :, None] * v).sum(axis=-2)


def gmm_flow_velocity(x, t, model: GaussianMixtureModel):
    """Exact rectified-flow velocity at time t in (0, 1)."""
    t = float(t)
    if not 0.0 < t < 1.0:
        raise InvalidArgument(f"flow time must lie strictly inside (0, 1), got {t}")
    return _flow_velocity(np.asarray(x, dtype=np.float64), t, model)


def analytic_tilted_moments(model: GaussianMixtureModel, coefficients, lam: float):
    """Moments of the mixture tilted by exp(lam * a.x); linear rewards only."""
    try:
        a = np.asarray(coefficients, dtype=np.float64).reshape(model.dimension)
    except (TypeError, ValueError) as exc:
        raise Unsupported("analytic tilting requires a linear coefficient vector") from exc
    lam = float(lam)
    if lam < 0:
        raise InvalidArgument("lam must be non-negative")
    new_means = model.means + lam * model.variances * a
    logw = np.log(model.weights) + lam * model.means @ a + 0.5 * lam * lam * (model.variances @ (a * a))
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    mean = w @ new_means
    d = model.dimension
    cov = np.zeros((d, d))
    for wc, mu, var in zip(w, new_means, model.variances):
        cov += wc * (np.diag(var) + np.outer(mu, mu))
    return mean, cov - np.outer(mean, mean)


class GmmDiffusionBackend:
    """Velocity-prediction diffusion backend over a Gaussian mixture."""

    def __init__(self, model: GaussianMixtureModel):
        self.model = model

    @property
    def dimension(self) -> int:
        return self.model.dimension

    def velocity(self, x, alpha_bar):
        return gmm_velocity(x, alpha_bar, self.model)

    def describe(self) -> dict:
        return {"type": "gmm-diffusion", "model": self.model.to_dict()}


class GmmFlowBackend:
    """Rectified-flow backend over a Gaussian mixture.

    Unlike the bare operation, the backend's velocity is defined at the
    grid endpoints via the same closed form (the first integration step
    queries t = 1 exactly).
    """

    def __init__(self, model: GaussianMixtureModel):
        self.model = model

    @property
    def dimension(self) -> int:
        return self.model.dimension

    def flow_velocity(self, x, t):
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise InvalidArgument(f"flow time must lie in [0, 1], got {t}")
        return _flow_velocity(np.asarray(x, dtype=np.float64), t, self.model)

    def describe(self) -> dict:
        return {"type": "gmm-flow", "model": self.model.to_dict()}


def gaussian_bin_centers(bins: int) -> np.ndarray:
    """Centers of equal-probability bins of the standard normal."""
    if bins < 2:
        raise InvalidArgument("need at least 2 bins")
    return ndtri((np.arange(bins) + 0.5) / bins)


class QuantizedInitBackend:
    """Wraps a backend so initial states are drawn from a finite set of
    equally likely centers; with deterministic transitions this makes the
    whole path space exhaustively enumerable."""

    def __init__(self, inner, centers):
        self.inner = inner
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        if self.centers.shape[1] != inner.dimension:
            self.centers = self.centers.reshape(-1, inner.dimension)

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    def initial_state(self, gen) -> np.ndarray:
        return self.centers[int(gen.integers(len(self.centers)))].copy()

    def velocity(self, x, alpha_bar):
        return self.inner.velocity(x, alpha_bar)

    def describe(self) -> dict:
        return {"type": "quantized-init", "bins": len(self.centers)}
