import numpy as np
import pytest

from partsym.diffusion import (
    DdpmSchedule,
    KernelDenoiser,
    ddpm_loss,
    forward_marginal,
    forward_step,
    reverse_mean,
    reverse_sample,
    zero_denoiser,
)
from partsym.sampler import NoiseSchedule, VectorDb, perturb


def chain(z0, sched, rng, upto=None, mu=None):
    z = np.array(z0, dtype=float)
    for t in range(1, (upto or sched.tau) + 1):
        z = forward_step(z, t, sched, rng, mu=mu)
    return z


class TestSchedule:
    def test_derived(self):
        s = DdpmSchedule([0.1, 0.2])
        np.testing.assert_allclose(s.mus, np.sqrt([0.9, 0.8]))
        np.testing.assert_allclose(s.alpha_bars, [0.9, 0.72])

    @pytest.mark.parametrize("bad", [[0.0], [1.0], [0.5, -0.1], []])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            DdpmSchedule(bad)

    def test_linear(self):
        s = DdpmSchedule.linear()
        assert s.tau == 1000
        assert s.sigmas[0] == pytest.approx(1e-4) and s.sigmas[-1] == pytest.approx(0.02)


class TestForward:
    def test_tiny_variance(self, rng):
        s = DdpmSchedule([1e-300])
        z = np.array([1.0, -2.0])
        np.testing.assert_allclose(forward_step(z, 1, s, rng), z, atol=1e-140)

    def test_moments(self, rng):
        s = DdpmSchedule([0.3])
        z = np.array([1.0, -0.5, 2.0])
        draws = forward_step(np.tile(z, (10_000, 1)), 1, s, rng)
        np.testing.assert_allclose(draws.mean(axis=0), np.sqrt(0.7) * z, atol=0.03)
        np.testing.assert_allclose(draws.var(axis=0), 0.3, rtol=0.1)

    @pytest.mark.parametrize("z0", [[1.0, -1.0, 0.5], [0.2] * 12])
    def test_reaches_standard_normal(self, rng, z0):
        s = DdpmSchedule.linear()
        z = chain(np.tile(z0, (10_000, 1)), s, rng)
        assert np.linalg.norm(z.mean(axis=0)) < 0.05
        np.testing.assert_allclose(z.var(axis=0), 1.0, atol=0.1)

    def test_telescoping(self, rng):
        s = DdpmSchedule(np.linspace(0.01, 0.2, 15))
        z0 = np.array([1.5, -1.0, 0.5])
        chained = chain(np.tile(z0, (10_000, 1)), s, rng)
        direct = forward_marginal(np.tile(z0, (10_000, 1)), s.tau, s, rng.standard_normal((10_000, 3)))
        np.testing.assert_allclose(chained.mean(axis=0), direct.mean(axis=0), atol=0.05)
        np.testing.assert_allclose(chained.var(axis=0), direct.var(axis=0), rtol=0.1)
        ab = np.prod(1 - s.sigmas)
        np.testing.assert_allclose(direct.var(axis=0), 1 - ab, rtol=0.1)

    def test_mean_preserving_matches_perturb(self, rng):
        s = DdpmSchedule(np.full(10, 0.05))
        z0 = np.array([0.2, 0.4])
        chained = chain(np.tile(z0, (10_000, 1)), s, rng, mu=1.0)
        ns = NoiseSchedule(np.sqrt(s.sigmas))
        pert = perturb(np.tile(z0, (10_000, 1)), 10, ns, rng)
        np.testing.assert_allclose(chained.mean(axis=0), pert.mean(axis=0), atol=0.03)
        np.testing.assert_allclose(chained.var(axis=0), pert.var(axis=0), rtol=0.1)


class TestLoss:
    def test_oracle_zero(self, rng):
        s = DdpmSchedule.linear(100)
        z0 = np.array([0.3, -0.2, 0.9])

        def oracle(zt, t):
            ab = s.alpha_bars[t - 1]
            return (zt - np.sqrt(ab) * z0) / np.sqrt(1 - ab)

        for _ in range(20):
            assert ddpm_loss(oracle, z0, s, rng) == pytest.approx(0.0, abs=1e-18)

    def test_zero_denoiser_chi_square(self, rng):
        s = DdpmSchedule.linear(100)
        z0 = np.zeros(6)
        losses = [ddpm_loss(zero_denoiser, z0, s, rng) for _ in range(10_000)]
        assert np.mean(losses) == pytest.approx(6.0, rel=0.05)
        assert min(losses) >= 0.0

    def test_kernel_beats_zero_every_t(self, rng):
        s = DdpmSchedule.linear(50, 1e-3, 0.05)
        z0 = np.array([0.7, -0.4])
        den = KernelDenoiser(VectorDb([z0]), s)
        for t in range(1, s.tau + 1):
            k = np.mean([ddpm_loss(den, z0, s, rng, t=t) for _ in range(1000)])
            z = np.mean([ddpm_loss(zero_denoiser, z0, s, rng, t=t) for _ in range(1000)])
            assert k < z

    def test_shape_check(self, rng):
        with pytest.raises(ValueError):
            ddpm_loss(lambda z, t: np.zeros(2), np.zeros(3), DdpmSchedule([0.1]), rng)


class TestReverse:
    def test_singleton_contraction(self, rng):
        s = DdpmSchedule.linear(200, 1e-4, 0.05)
        r = np.array([0.3, -0.2, 0.5])
        den = KernelDenoiser(VectorDb([r]), s)
        hits = [np.linalg.norm(reverse_sample(den, s, rng, 3) - r) < 0.05 for _ in range(100)]
        assert np.mean(hits) > 0.95

    def test_single_step_deterministic(self):
        s = DdpmSchedule([0.2])

        def identity_mean(z, t):
            return (z - np.sqrt(0.8) * z) / np.sqrt(0.2)

        z = np.array([0.5, 1.0, -1.0, 2.0])
        np.testing.assert_allclose(reverse_mean(identity_mean, z, 1, s), z, atol=1e-15)
        a = reverse_sample(identity_mean, s, np.random.default_rng(1), 4, varsigmas=[0.0], z_init=z)
        b = reverse_sample(identity_mean, s, np.random.default_rng(2), 4, varsigmas=[0.0], z_init=z)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(a, z, atol=1e-15)

    @pytest.mark.parametrize("dim", [1, 5, 12])
    def test_dimension(self, rng, dim):
        s = DdpmSchedule.linear(10)
        assert reverse_sample(zero_denoiser, s, rng, dim).shape == (dim,)

    def test_varsigma_length(self, rng):
        with pytest.raises(ValueError):
            reverse_sample(zero_denoiser, DdpmSchedule([0.1, 0.2]), rng, 2, varsigmas=[0.1])
