"""Forward-process kernels, posterior coefficients, loss weights, and reverse steps.

All functions here are pure: coefficients are plain Python floats derived from a
frozen :class:`NoiseSchedule`, applied with ordinary arithmetic, so the image
arguments may be numpy arrays, torch tensors, or scalars. Step indices ``t`` are
1-based (``t in [1, T]``); ``alpha_bar(0) == 1`` by convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    """Invalid schedule parameters or step index."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod alpha_s."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    beta_start: float
    beta_end: float
    profile: str = "custom"

    def __post_init__(self):
        for name in ("betas", "alphas", "alpha_bars"):
            arr = getattr(self, name)
            if arr.shape != (self.T,):
                raise ScheduleError(f"{name} must have shape ({self.T},), got {arr.shape}")

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def _check_t(self, t: int):
        if not 1 <= t <= self.T:
            raise ScheduleError(f"step index t={t} outside [1, {self.T}]")

    def to_manifest(self) -> dict:
        return {
            "T": self.T,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "profile": self.profile,
        }

    @staticmethod
    def from_manifest(d: dict) -> "NoiseSchedule":
        return make_linear_schedule(
            int(d["T"]), float(d["beta_start"]), float(d["beta_end"]), profile=d.get("profile", "custom")
        )


@dataclass(frozen=True)
class PosteriorCoefficients:
    """Coefficients of the closed-form posterior q(y_{t-1} | y_t, y_0)."""

    mu_coef_yt: float
    mu_coef_y0: float
    beta_tilde: float


def make_linear_schedule(
    T: int, beta_start: float = 1e-4, beta_end: float = 0.02, profile: str = "custom"
) -> NoiseSchedule:
    """Linearly increasing variance schedule, endpoints included."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(
        T=T,
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        beta_start=float(beta_start),
        beta_end=float(beta_end),
        profile=profile,
    )


def _check_same_shape(a, b, what: str):
    sa = getattr(a, "shape", None)
    sb = getattr(b, "shape", None)
    if sa != sb:
        raise ScheduleError(f"{what}: shape mismatch {sa} vs {sb}")


def q_sample(y0, t: int, eps, s: NoiseSchedule):
    """Forward-noised sample y_t = sqrt(ab_t)*y0 + sqrt(1-ab_t)*eps."""
    _check_same_shape(y0, eps, "q_sample")
    ab = s.alpha_bar(t)
    return math.sqrt(ab) * y0 + math.sqrt(1.0 - ab) * eps


def predict_y0_from_eps(y_t, eps_hat, t: int, s: NoiseSchedule, clamp: bool = False):
    """Invert the forward marginal: y0_hat = (y_t - sqrt(1-ab)*eps_hat) / sqrt(ab)."""
    _check_same_shape(y_t, eps_hat, "predict_y0_from_eps")
    ab = s.alpha_bar(t)
    if ab <= 0.0:
        raise ScheduleError(f"alpha_bar({t}) must be positive")
    y0 = (y_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)
    if clamp:
        y0 = y0.clip(-1.0, 1.0) if hasattr(y0, "clip") else min(1.0, max(-1.0, y0))
    return y0


def posterior_coefficients(t: int, s: NoiseSchedule) -> PosteriorCoefficients:
    """Closed-form q(y_{t-1} | y_t, y0) mean coefficients and variance.

    For t == 1 the alpha_bar(0) == 1 convention collapses the posterior onto the
    predicted clean image (mu == y0) and beta_tilde is defined as beta_1; the
    final sampling step therefore returns the predicted mean.
    """
    s._check_t(t)
    if t == 1:
        return PosteriorCoefficients(mu_coef_yt=0.0, mu_coef_y0=1.0, beta_tilde=s.beta(1))
    beta_t = s.beta(t)
    alpha_t = s.alpha(t)
    ab_prev = s.alpha_bar(t - 1)
    beta_tilde = 1.0 / (alpha_t / beta_t + 1.0 / (1.0 - ab_prev))
    mu_coef_yt = math.sqrt(alpha_t) / beta_t * beta_tilde
    mu_coef_y0 = math.sqrt(ab_prev) / (1.0 - ab_prev) * beta_tilde
    return PosteriorCoefficients(mu_coef_yt=mu_coef_yt, mu_coef_y0=mu_coef_y0, beta_tilde=beta_tilde)


def posterior_params(y_t, y0, t: int, s: NoiseSchedule):
    """Applied posterior mean and variance: (mu_tilde, beta_tilde)."""
    _check_same_shape(y_t, y0, "posterior_params")
    c = posterior_coefficients(t, s)
    return c.mu_coef_yt * y_t + c.mu_coef_y0 * y0, c.beta_tilde


def posterior_mean_from_eps(y_t, eps, t: int, s: NoiseSchedule):
    """Equivalent posterior mean written in terms of the (predicted) noise."""
    _check_same_shape(y_t, eps, "posterior_mean_from_eps")
    alpha_t = s.alpha(t)
    ab_t = s.alpha_bar(t)
    return (y_t - (1.0 - alpha_t) / math.sqrt(1.0 - ab_t) * eps) / math.sqrt(alpha_t)


def ddim_sigma(t: int, t_prev: int, eta: float, s: NoiseSchedule) -> float:
    ab_t = s.alpha_bar(t)
    ab_prev = s.alpha_bar(t_prev)
    return eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)


def ddim_step(
    y_t, eps_hat, t: int, t_prev: int, eta: float, s: NoiseSchedule, noise=None, clamp_y0: bool = False
):
    """One accelerated reverse step t -> t_prev (t_prev may be 0, meaning done).

    eta == 0 is fully deterministic and never touches the noise argument;
    eta > 0 requires an explicit unit-Gaussian draw. clamp_y0 clips the
    intermediate clean-image estimate to the valid pixel range (off by
    default; sampling pipelines turn it on).
    """
    if not 0 <= t_prev < t:
        raise ScheduleError(f"need 0 <= t_prev < t, got t_prev={t_prev}, t={t}")
    if not 0.0 <= eta <= 1.0:
        raise ScheduleError(f"eta must be in [0, 1], got {eta}")
    y0_hat = predict_y0_from_eps(y_t, eps_hat, t, s, clamp=clamp_y0)
    if clamp_y0:
        # keep (y_t, y0_hat, eps) consistent after clipping
        ab_t = s.alpha_bar(t)
        eps_hat = (y_t - math.sqrt(ab_t) * y0_hat) / math.sqrt(1.0 - ab_t)
    ab_prev = s.alpha_bar(t_prev)
    if eta == 0.0:
        sigma = 0.0
    else:
        if noise is None:
            raise ScheduleError("eta > 0 requires a noise draw")
        sigma = ddim_sigma(t, t_prev, eta, s)
    dir_coef = math.sqrt(max(1.0 - ab_prev - sigma * sigma, 0.0))
    out = math.sqrt(ab_prev) * y0_hat + dir_coef * eps_hat
    if sigma > 0.0:
        out = out + sigma * noise
    return out


def ddim_time_grid(T: int, steps: int) -> list[int]:
    """Evenly spaced ascending subsequence of [1, T] with at most `steps` entries."""
    if steps < 1:
        raise ScheduleError(f"steps must be >= 1, got {steps}")
    grid = np.unique(np.linspace(1, T, num=min(steps, T)).round().astype(int))
    return [int(t) for t in grid]


def p2_weight(t: int, s: NoiseSchedule, gamma: float = 1.0, k: float = 1.0) -> float:
    """Perception-prioritized loss weight 1 / (k + SNR_t)^gamma."""
    if k <= 0.0:
        raise ScheduleError(f"k must be positive, got {k}")
    ab = s.alpha_bar(t)
    snr = ab / (1.0 - ab)
    return 1.0 / (k + snr) ** gamma
