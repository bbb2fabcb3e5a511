import numpy as np
import pytest

from partsym.assembly import (
    Assembler,
    AssemblerSet,
    AssemblyError,
    apply_assembler,
    compose_shape,
    decode_assembler_set,
    euler_to_matrix,
    fit_assembler,
    invert_assembler,
    matrix_to_euler,
    random_assembler,
    sample_assembler_set,
    wrap_angle,
)
from partsym.geom import PointCloud
from partsym.metrics import chamfer
from partsym.sampler import LangevinConfig, NoiseSchedule, VectorDb


class TestAssembler:
    def test_identity(self, rng):
        p = PointCloud(rng.normal(size=(10, 3)))
        np.testing.assert_array_equal(apply_assembler(Assembler.identity(), p).points, p.points)

    def test_translation(self):
        t = Assembler([1, 2, 3], [0, 0, 0], [1, 1, 1])
        np.testing.assert_allclose(apply_assembler(t, np.zeros((1, 3))).points, [[1, 2, 3]])

    def test_order_scale_rotate_translate(self):
        t = Assembler([0, 0, 1], [0, 0, np.pi / 2], [2, 1, 1])
        # (1,0,0) -> scale (2,0,0) -> rotate about z (0,2,0) -> translate (0,2,1)
        np.testing.assert_allclose(apply_assembler(t, np.array([[1.0, 0, 0]])).points, [[0, 2, 1]], atol=1e-15)

    def test_inverse(self, rng):
        for _ in range(20):
            t = random_assembler(rng)
            p = rng.normal(size=(30, 3))
            back = invert_assembler(t, apply_assembler(t, p)).points
            np.testing.assert_allclose(back, p, atol=1e-9)

    def test_invariants(self):
        with pytest.raises(AssemblyError):
            Assembler([0, 0, 0], [0, 0, 0], [1, 0, 1])
        a = Assembler([0, 0, 0], [-np.pi, 3 * np.pi, 0.5], [1, 1, 1])
        np.testing.assert_allclose(a.angles, [np.pi, np.pi, 0.5])

    def test_vector_roundtrip(self, rng):
        s = AssemblerSet(tuple(random_assembler(rng) for _ in range(3)))
        v = s.to_vector()
        assert v.shape == (27,)
        assert AssemblerSet.from_vector(v) == s

    def test_bad_flat_length(self):
        with pytest.raises(AssemblyError):
            AssemblerSet.from_vector(np.zeros(10))


class TestEuler:
    def test_intrinsic_xyz(self):
        r = euler_to_matrix([0.3, 0.0, 0.0])
        assert r[0, 0] == 1.0
        np.testing.assert_allclose(euler_to_matrix([0.1, 0.2, 0.3]), euler_to_matrix([0.1, 0, 0]) @ euler_to_matrix([0, 0.2, 0]) @ euler_to_matrix([0, 0, 0.3]))

    def test_roundtrip(self, rng):
        for _ in range(100):
            ang = rng.uniform(-np.pi, np.pi, 3)
            ang[1] /= 2
            np.testing.assert_allclose(matrix_to_euler(euler_to_matrix(ang)), ang, atol=1e-9)

    @pytest.mark.parametrize("pitch", [np.pi / 2, -np.pi / 2, np.pi / 2 - 1e-8])
    def test_gimbal_fold(self, pitch):
        r = euler_to_matrix([0.4, pitch, 0.7])
        ang = matrix_to_euler(r)
        assert ang[2] == 0.0
        np.testing.assert_allclose(euler_to_matrix(ang), r, atol=1e-7)

    def test_wrap(self):
        np.testing.assert_allclose(wrap_angle([np.pi, -np.pi, 3.0 * np.pi, 0.1]), [np.pi, np.pi, np.pi, 0.1])


class TestFit:
    def test_identity(self, rng):
        a = rng.normal(size=(20, 3))
        t, res = fit_assembler(a, a, return_residual=True)
        np.testing.assert_allclose(t.to_vector(), Assembler.identity().to_vector(), atol=1e-12)
        assert res < 1e-12

    def test_translation(self, rng):
        a = rng.normal(size=(20, 3))
        t, res = fit_assembler(a, a + [0, 1, 0], return_residual=True)
        np.testing.assert_allclose(t.translation, [0, 1, 0], atol=1e-12)
        assert res < 1e-9

    def test_recover(self, rng):
        for _ in range(50):
            t = random_assembler(rng)
            a = rng.normal(size=(64, 3))
            f, res = fit_assembler(a, apply_assembler(t, a), return_residual=True)
            np.testing.assert_allclose(f.to_vector(), t.to_vector(), atol=1e-6)
            assert res < 1e-8

    def test_noisy_fit_is_least_squares(self, rng):
        t = random_assembler(rng)
        a = rng.normal(size=(200, 3))
        b = apply_assembler(t, a).points + 0.01 * rng.normal(size=(200, 3))
        f, res = fit_assembler(a, b, return_residual=True)
        assert res < 0.02
        # nudging any parameter does not lower the residual
        base = np.sqrt(np.mean(np.sum((apply_assembler(f, a).points - b) ** 2, axis=1)))
        for k in range(9):
            v = f.to_vector().copy()
            v[k] += 1e-4
            g = Assembler.from_vector(v)
            assert np.sqrt(np.mean(np.sum((apply_assembler(g, a).points - b) ** 2, axis=1))) >= base - 1e-12

    def test_degenerate(self, rng):
        flat = np.c_[rng.normal(size=(20, 2)), np.zeros(20)]
        with pytest.raises(AssemblyError, match="along z"):
            fit_assembler(flat, flat)

    def test_size_mismatch(self, rng):
        with pytest.raises(AssemblyError):
            fit_assembler(rng.normal(size=(5, 3)), rng.normal(size=(6, 3)))

    def test_reflection_rejected(self, rng):
        a = rng.normal(size=(20, 3))
        with pytest.raises(AssemblyError, match="reflection"):
            fit_assembler(a, a * [-1, 1, 1])


class TestCompose:
    def test_single_identity(self, rng):
        p = PointCloud(rng.normal(size=(7, 3)))
        out = compose_shape([p], AssemblerSet((Assembler.identity(),)))
        np.testing.assert_array_equal(out.points, p.points)
        np.testing.assert_array_equal(out.labels, 0)

    def test_labels_partition(self, rng):
        parts = [rng.normal(size=(5, 3)), rng.normal(size=(8, 3))]
        out = compose_shape(parts, AssemblerSet((random_assembler(rng), random_assembler(rng))))
        assert len(out) == 13
        assert np.bincount(out.labels).tolist() == [5, 8]

    def test_length_mismatch(self, rng):
        with pytest.raises(AssemblyError):
            compose_shape([rng.normal(size=(3, 3))], AssemblerSet(()))

    def test_decompose_recompose(self, rng):
        canon = [rng.normal(size=(40, 3)) for _ in range(3)]
        truth = AssemblerSet(tuple(random_assembler(rng) for _ in range(3)))
        shape = compose_shape(canon, truth)
        fitted = AssemblerSet(tuple(fit_assembler(canon[j], shape.part(j)) for j in range(3)))
        assert chamfer(compose_shape(canon, fitted), shape) < 1e-6

    def test_relabel_commutes(self, rng):
        parts = [rng.normal(size=(6, 3)) for _ in range(3)]
        ts = [random_assembler(rng) for _ in range(3)]
        perm = [2, 0, 1]
        a = compose_shape(parts, AssemblerSet(tuple(ts)))
        b = compose_shape([parts[i] for i in perm], AssemblerSet(tuple(ts[i] for i in perm)))
        key = lambda p: sorted(map(tuple, np.round(p, 12)))
        assert key(a.points) == key(b.points)


class TestSample:
    def test_clamp(self):
        s = decode_assembler_set([0, 0, 0, 0, 0, 0, -0.2, 1, 1])
        assert s[0].scale[0] == 1e-3

    def test_singleton(self, rng):
        t = AssemblerSet((random_assembler(rng), random_assembler(rng)))
        db = VectorDb([t.to_vector()])
        out = sample_assembler_set(db, NoiseSchedule.geometric(30, 1e-3, 1.0), LangevinConfig(5), rng)
        np.testing.assert_allclose(out.to_vector(), t.to_vector(), atol=1e-2)

    def test_invariant_sweep(self, rng):
        db = VectorDb([AssemblerSet((random_assembler(rng),)).to_vector() for _ in range(5)])
        sched = NoiseSchedule.geometric(10, 0.05, 3.0)
        for _ in range(100):
            s = sample_assembler_set(db, sched, LangevinConfig(2), rng)
            for a in s:
                assert np.all(a.scale > 0)
                assert np.all(a.angles > -np.pi) and np.all(a.angles <= np.pi)

    def test_dimension_check(self, rng):
        with pytest.raises(AssemblyError):
            sample_assembler_set(VectorDb(np.zeros((1, 8))), rng=rng)
