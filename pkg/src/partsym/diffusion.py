"""DDPM forward/reverse chains with pluggable noise predictors.

Variances follow the convention q(z_t | z_{t-1}) = N(mu_t z_{t-1}, sigma_t I)
with mu_t = sqrt(1 - sigma_t); ``sigmas`` are therefore variances, not
standard deviations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .sampler import VectorDb

Denoiser = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class DdpmSchedule:
    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float).reshape(-1)
        if len(s) == 0 or np.any(s <= 0) or np.any(s >= 1):
            raise ValueError("DDPM variances must lie strictly inside (0, 1)")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def linear(cls, tau: int = 1000, start: float = 1e-4, end: float = 0.02) -> "DdpmSchedule":
        return cls(np.linspace(start, end, tau))

    @property
    def tau(self) -> int:
        return len(self.sigmas)

    @property
    def mus(self) -> np.ndarray:
        return np.sqrt(1.0 - self.sigmas)

    @property
    def alpha_bars(self) -> np.ndarray:
        """prod_{i<=t} mu_i^2, the signal fraction of the closed-form marginal."""
        return np.cumprod(1.0 - self.sigmas)

    def _check(self, t: int):
        if not 1 <= t <= self.tau:
            raise ValueError(f"step {t} outside 1..{self.tau}")


def forward_step(z_prev, t: int, sched: DdpmSchedule, rng: np.random.Generator, mu: float | None = None) -> np.ndarray:
    """One draw from N(mu_t z_prev, sigma_t I).

    ``mu`` overrides mu_t; ``mu=1`` gives the mean-preserving chain used by the
    Langevin sampler.
    """
    sched._check(t)
    z_prev = np.asarray(z_prev, dtype=float)
    s = sched.sigmas[t - 1]
    m = np.sqrt(1.0 - s) if mu is None else mu
    return m * z_prev + np.sqrt(s) * rng.standard_normal(z_prev.shape)


def forward_marginal(z0, t: int, sched: DdpmSchedule, eps) -> np.ndarray:
    """z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    sched._check(t)
    ab = sched.alpha_bars[t - 1]
    return np.sqrt(ab) * np.asarray(z0, dtype=float) + np.sqrt(1.0 - ab) * eps


def ddpm_loss(den: Denoiser, z0, sched: DdpmSchedule, rng: np.random.Generator, t: int | None = None) -> float:
    """||eps - den(z_t, t)||^2 for one draw of t ~ U{1..tau} and eps ~ N(0, I)."""
    z0 = np.asarray(z0, dtype=float)
    if t is None:
        t = int(rng.integers(1, sched.tau + 1))
    eps = rng.standard_normal(z0.shape)
    pred = np.asarray(den(forward_marginal(z0, t, sched, eps), t), dtype=float)
    if pred.shape != z0.shape:
        raise ValueError(f"denoiser returned shape {pred.shape}, expected {z0.shape}")
    return float(np.sum((eps - pred) ** 2))


def reverse_mean(den: Denoiser, z_t, t: int, sched: DdpmSchedule) -> np.ndarray:
    """Posterior mean implied by a noise prediction (epsilon parameterization)."""
    s = sched.sigmas[t - 1]
    ab = sched.alpha_bars[t - 1]
    eps_hat = np.asarray(den(z_t, t), dtype=float)
    return (z_t - s / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(1.0 - s)


def reverse_sample(
    den: Denoiser,
    sched: DdpmSchedule,
    rng: np.random.Generator,
    dim: int,
    varsigmas=None,
    z_init=None,
) -> np.ndarray:
    """Run z_tau ~ N(0, I) back to z_0 with z_{t-1} ~ N(mean, varsigma_t^2 I).

    ``varsigmas`` are standard deviations; by default varsigma_t^2 = sigma_t.
    """
    if varsigmas is None:
        varsigmas = np.sqrt(sched.sigmas)
    varsigmas = np.asarray(varsigmas, dtype=float)
    if len(varsigmas) != sched.tau:
        raise ValueError("need one reverse standard deviation per step")
    z = rng.standard_normal(dim) if z_init is None else np.asarray(z_init, dtype=float).copy()
    for t in range(sched.tau, 0, -1):
        mean = reverse_mean(den, z, t, sched)
        noise = varsigmas[t - 1] * rng.standard_normal(z.shape) if varsigmas[t - 1] > 0 else 0.0
        z = mean + noise
    return z


class KernelDenoiser:
    """Exact noise predictor for the empirical distribution of a vector database.

    E[z_0 | z_t] is a softmax-weighted mean of the entries; the predicted
    noise is what maps that mean back to z_t.
    """

    def __init__(self, db: VectorDb, sched: DdpmSchedule):
        self.db = db
        self.sched = sched

    def __call__(self, z_t, t: int) -> np.ndarray:
        z_t = np.asarray(z_t, dtype=float)
        ab = self.sched.alpha_bars[t - 1]
        scaled = np.sqrt(ab) * self.db.entries
        logw = -np.sum((scaled - z_t) ** 2, axis=1) / (2.0 * (1.0 - ab))
        w = np.exp(logw - logsumexp(logw))
        z0_hat = w @ self.db.entries
        return (z_t - np.sqrt(ab) * z0_hat) / np.sqrt(1.0 - ab)


def zero_denoiser(z_t, t: int) -> np.ndarray:
    return np.zeros_like(np.asarray(z_t, dtype=float))
