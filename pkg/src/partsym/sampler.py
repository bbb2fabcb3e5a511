"""Annealed Langevin sampling with a nonparametric (kernel) score.

The score of the noise-perturbed data distribution is estimated directly
from a database of examples: at noise level gamma it is the
Gaussian-weighted mean of the database minus the current point, divided by
gamma^2. With step size beta = gamma^2 one Langevin step collapses to
"jump to the weighted mean, then add sqrt(2) * gamma noise", i.e. a noisy
mean-shift step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .symgroup import (
    N_SLOTS,
    SLOT_WIDTH,
    GeneratorSet,
    SymmetryError,
    generate_group,
    snap_generators,
)


class ScoreError(ArithmeticError):
    """Kernel weights collapsed; the score is undefined at this noise level."""


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step noise increments sigma_1..sigma_tau; gamma_t is derived from them."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float).reshape(-1)
        if len(s) == 0 or np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("sigmas must be a non-empty sequence of positive reals")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @property
    def tau(self) -> int:
        return len(self.sigmas)

    @property
    def gammas(self) -> np.ndarray:
        return np.sqrt(np.cumsum(self.sigmas**2))

    def gamma(self, t: int) -> float:
        """gamma_t for 1-based step t."""
        if not 1 <= t <= self.tau:
            raise ValueError(f"step {t} outside 1..{self.tau}")
        return float(self.gammas[t - 1])

    @classmethod
    def from_gammas(cls, gammas) -> "NoiseSchedule":
        g = np.asarray(gammas, dtype=float)
        if np.any(np.diff(g) <= 0) or g[0] <= 0:
            raise ValueError("gammas must be positive and strictly increasing")
        sig2 = np.diff(np.concatenate([[0.0], g**2]))
        return cls(np.sqrt(sig2))

    @classmethod
    def geometric(cls, tau: int = 50, gamma_min: float = 0.01, gamma_max: float = 1.0) -> "NoiseSchedule":
        if tau == 1:
            return cls.from_gammas([gamma_min])
        return cls.from_gammas(np.geomspace(gamma_min, gamma_max, tau))


@dataclass(frozen=True)
class LangevinConfig:
    """Inner steps per level and optional explicit step sizes (default beta_t = gamma_t^2)."""

    n_steps: int = 10
    betas: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("LangevinConfig requires at least one inner step (L >= 1)")
        if self.betas is not None and any(b <= 0 for b in self.betas):
            raise ValueError("step sizes must be positive")

    def beta(self, t: int, sched: NoiseSchedule) -> float:
        if self.betas is None:
            return sched.gamma(t) ** 2
        if len(self.betas) != sched.tau:
            raise ValueError("betas must have one entry per noise level")
        return float(self.betas[t - 1])


@dataclass(frozen=True, eq=False)
class VectorDb:
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or len(e) == 0:
            raise ValueError("vector database must be a non-empty (m, dim) array")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def __len__(self) -> int:
        return len(self.entries)


def perturb(v0, t: int, sched: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """v0 + gamma_t * eps: the closed-form marginal of the mean-preserving forward chain."""
    v0 = np.asarray(v0, dtype=float)
    return v0 + sched.gamma(t) * rng.standard_normal(v0.shape)


def weighted_mean(v, db: VectorDb, gamma: float) -> np.ndarray:
    """Mean of the db under isotropic Gaussian weights N(v; R, gamma^2 I).

    ``v`` may be a single vector or a (batch, dim) array.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    vb = np.atleast_2d(v)
    e = db.entries
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        sq = np.sum((vb[:, None, :] - e[None, :, :]) ** 2, axis=2)
        logw = -sq / (2.0 * gamma**2)
        lse = logsumexp(logw, axis=1, keepdims=True)
    if not np.all(np.isfinite(lse)):
        raise ScoreError("score undefined at this noise level: all kernel weights vanished")
    w = np.exp(logw - lse)
    out = w @ e
    return out[0] if single else out


def empirical_score(v, t: int, db: VectorDb, sched: NoiseSchedule) -> np.ndarray:
    """(weighted mean - v) / gamma_t^2."""
    g = sched.gamma(t)
    return (weighted_mean(v, db, g) - np.asarray(v, dtype=float)) / g**2


def log_density(v, t: int, db: VectorDb, sched: NoiseSchedule) -> float:
    """log of the db-convolved density, (1/m) sum_R N(v; R, gamma_t^2 I)."""
    g = sched.gamma(t)
    v = np.asarray(v, dtype=float)
    sq = np.sum((db.entries - v) ** 2, axis=1)
    d = db.dim
    return float(
        logsumexp(-sq / (2 * g**2)) - np.log(len(db)) - 0.5 * d * np.log(2 * np.pi * g**2)
    )


def langevin_step(v, t, db, sched, beta: float, eps) -> np.ndarray:
    """v + beta * score + sqrt(2 beta) * eps."""
    v = np.asarray(v, dtype=float)
    return v + beta * empirical_score(v, t, db, sched) + np.sqrt(2.0 * beta) * eps


def meanshift_form_update(v, t: int, db: VectorDb, sched: NoiseSchedule, rng=None, eps=None) -> np.ndarray:
    """Weighted mean at bandwidth gamma_t plus sqrt(2) * gamma_t noise.

    Equal to :func:`langevin_step` with beta = gamma_t^2 and the same ``eps``.
    """
    v = np.asarray(v, dtype=float)
    if eps is None:
        eps = rng.standard_normal(v.shape)
    g = sched.gamma(t)
    return weighted_mean(v, db, g) + np.sqrt(2.0) * g * eps


def langevin_sample(
    db: VectorDb,
    sched: NoiseSchedule,
    cfg: LangevinConfig,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Annealed Langevin dynamics from N(0, I) at level tau down to level 1.

    Returns one vector, or a (size, dim) batch of independent chains.
    """
    shape = (db.dim,) if size is None else (size, db.dim)
    s = rng.standard_normal(shape)
    for t in range(sched.tau, 0, -1):
        beta = cfg.beta(t, sched)
        for _ in range(cfg.n_steps):
            s = langevin_step(s, t, db, sched, beta, rng.standard_normal(shape))
    return s


def default_schedule() -> NoiseSchedule:
    return NoiseSchedule.geometric(50, 0.01, 1.0)


def sample_generator_set(
    db: VectorDb,
    sched: NoiseSchedule | None = None,
    cfg: LangevinConfig | None = None,
    rng: np.random.Generator | None = None,
    threshold: float = 0.5,
    max_retries: int = 8,
    max_order: int = 128,
) -> GeneratorSet:
    """Sample a 12-slot vector and decode it into a valid generator set.

    Slots with a raw normal shorter than ``threshold`` become inactive; the
    rest are re-unitized, canonicalized and angle-snapped. Samples whose
    group does not close are redrawn up to ``max_retries`` times.
    """
    if db.dim != N_SLOTS * SLOT_WIDTH:
        raise ValueError(f"generator database must be {N_SLOTS * SLOT_WIDTH}-dimensional")
    sched = sched or default_schedule()
    cfg = cfg or LangevinConfig()
    rng = rng if rng is not None else np.random.default_rng()
    last: Exception | None = None
    for _ in range(max_retries + 1):
        raw = langevin_sample(db, sched, cfg, rng)
        try:
            gens = snap_generators(decode_generators(raw, threshold))
            generate_group(gens, max_order)
            return gens
        except SymmetryError as err:
            last = err
    raise SymmetryError(f"no valid generator set after {max_retries} retries: {last}")


def decode_generators(raw, threshold: float = 0.5) -> GeneratorSet:
    """Decode a raw 12-vector, dropping slots that duplicate an earlier active plane."""
    raw = np.asarray(raw, dtype=float).reshape(N_SLOTS, SLOT_WIDTH)
    kept = []
    for slot in raw:
        if np.linalg.norm(slot[:3]) < threshold:
            continue
        cand = GeneratorSet.from_vector(np.concatenate([slot, np.zeros(8)]), threshold).planes[0]
        if any(np.allclose(cand.as_vector(), k.as_vector(), atol=1e-9) for k in kept):
            continue
        kept.append(cand)
    return GeneratorSet(tuple(kept))
