"""Part assemblers: 9-parameter scale/rotate/translate transforms and their fitting.

An assembler maps a part from its canonical frame into the shape:
``x -> R @ (s * x) + t`` with per-axis scale ``s``, rotation ``R`` built from
XYZ intrinsic Euler angles (``R = Rx(a) @ Ry(b) @ Rz(c)``) and translation ``t``.
The flat 9-vector layout is ``(tx, ty, tz, a, b, c, sx, sy, sz)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import PointCloud, as_cloud, coords
from .sampler import LangevinConfig, NoiseSchedule, VectorDb, default_schedule, langevin_sample

N_PARAMS = 9
MIN_SCALE = 1e-3
GIMBAL_TOL = 1e-6


class AssemblyError(ValueError):
    pass


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)
    return w


def euler_to_matrix(angles) -> np.ndarray:
    a, b, c = angles
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rx @ ry @ rz


def matrix_to_euler(rot) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix` with pitch in [-pi/2, pi/2].

    Near gimbal lock the third angle is folded to zero.
    """
    r = np.asarray(rot, dtype=float)
    cb = np.hypot(r[0, 0], r[0, 1])
    b = np.arctan2(r[0, 2], cb)
    if cb < GIMBAL_TOL:
        a = np.arctan2(r[2, 1], r[1, 1])
        c = 0.0
    else:
        a = np.arctan2(-r[1, 2], r[2, 2])
        c = np.arctan2(-r[0, 1], r[0, 0])
    return wrap_angle([a, b, c])


@dataclass(frozen=True, eq=False)
class Assembler:
    translation: np.ndarray
    angles: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        a = np.asarray(self.angles, dtype=float).reshape(3)
        s = np.asarray(self.scale, dtype=float).reshape(3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(a)) and np.all(np.isfinite(s))):
            raise AssemblyError("assembler parameters must be finite")
        if np.any(s <= 0):
            raise AssemblyError(f"assembler scales must be positive, got {s.tolist()}")
        a = wrap_angle(a)
        for name, v in (("translation", t), ("angles", a), ("scale", s)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def identity(cls) -> "Assembler":
        return cls(np.zeros(3), np.zeros(3), np.ones(3))

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.angles)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.angles, self.scale])

    @classmethod
    def from_vector(cls, v) -> "Assembler":
        v = np.asarray(v, dtype=float).reshape(N_PARAMS)
        return cls(v[:3], v[3:6], v[6:])

    def __eq__(self, other):
        return isinstance(other, Assembler) and np.array_equal(self.to_vector(), other.to_vector())

    def __repr__(self):
        return f"Assembler(t={self.translation.tolist()}, angles={self.angles.tolist()}, scale={self.scale.tolist()})"


@dataclass(frozen=True)
class AssemblerSet:
    assemblers: tuple[Assembler, ...]

    def __len__(self) -> int:
        return len(self.assemblers)

    def __iter__(self):
        return iter(self.assemblers)

    def __getitem__(self, j) -> Assembler:
        return self.assemblers[j]

    def to_vector(self) -> np.ndarray:
        if not self.assemblers:
            return np.zeros(0)
        return np.concatenate([a.to_vector() for a in self.assemblers])

    @classmethod
    def from_vector(cls, v) -> "AssemblerSet":
        v = np.asarray(v, dtype=float).reshape(-1)
        if len(v) % N_PARAMS:
            raise AssemblyError(f"flat assembler record length {len(v)} is not a multiple of 9")
        return cls(tuple(Assembler.from_vector(b) for b in v.reshape(-1, N_PARAMS)))


def _transform(t: Assembler, pts: np.ndarray) -> np.ndarray:
    return (pts * t.scale) @ t.rotation.T + t.translation


def apply_assembler(t: Assembler, part) -> PointCloud:
    part = as_cloud(part)
    return part.with_points(_transform(t, part.points))


def invert_assembler(t: Assembler, placed) -> PointCloud:
    """Map placed points back into the canonical frame."""
    placed = as_cloud(placed)
    pts = ((placed.points - t.translation) @ t.rotation) / t.scale
    return placed.with_points(pts)


def compose_shape(parts, ts: AssemblerSet) -> PointCloud:
    """Union of T_j p_j with point labels set to the part index j."""
    parts = list(parts)
    if len(parts) != len(ts):
        raise AssemblyError(f"{len(parts)} parts but {len(ts)} assemblers")
    if not parts:
        raise AssemblyError("nothing to compose")
    pts, labels = [], []
    for j, (p, t) in enumerate(zip(parts, ts)):
        q = _transform(t, coords(p))
        pts.append(q)
        labels.append(np.full(len(q), j, dtype=int))
    return PointCloud(np.vstack(pts), np.concatenate(labels))


def _degenerate_axis(centered: np.ndarray, rtol: float = 1e-9) -> str | None:
    _, sv, vt = np.linalg.svd(centered, full_matrices=True)
    sv = np.concatenate([sv, np.zeros(3 - len(sv))])
    if sv[2] > rtol * max(sv[0], 1e-300):
        return None
    d = vt[2]
    return f"{'xyz'[int(np.argmax(np.abs(d)))]} (direction {np.round(d, 6).tolist()})"


def fit_assembler(canonical, placed, return_residual: bool = False, iters: int = 50):
    """Least-squares fit of ``placed ~ R @ (s * canonical) + t`` over corresponding points.

    The linear part is solved in closed form, split into rotation and
    per-axis scale, then polished by alternating orthogonal Procrustes on
    scale-whitened coordinates with a per-axis scale update.
    """
    a, b = coords(canonical), coords(placed)
    if a.shape != b.shape:
        raise AssemblyError(f"point counts differ: {len(a)} vs {len(b)}")
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    x, y = a - ca, b - cb
    bad = _degenerate_axis(x)
    if bad is not None:
        raise AssemblyError(f"degenerate canonical part: no spread along {bad}")
    lin = np.linalg.lstsq(x, y, rcond=None)[0].T
    if np.linalg.det(lin) <= 0:
        raise AssemblyError("placement contains a reflection; not representable by an assembler")
    s = np.linalg.norm(lin, axis=0)
    u, _, vt = np.linalg.svd(lin / s)
    rot = u @ vt
    prev = np.inf
    for _ in range(iters):
        xs = x * s
        u, _, vt = np.linalg.svd(y.T @ xs)
        dfix = np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))])
        rot = u @ dfix @ vt
        yr = y @ rot
        s = np.maximum(np.sum(yr * x, axis=0) / np.sum(x * x, axis=0), MIN_SCALE)
        err = float(np.sum((yr - x * s) ** 2))
        if prev - err <= 1e-15 * max(prev, 1.0):
            break
        prev = err
    t_vec = cb - rot @ (s * ca)
    fitted = Assembler(t_vec, matrix_to_euler(rot), s)
    if not return_residual:
        return fitted
    res = float(np.sqrt(np.mean(np.sum((_transform(fitted, a) - b) ** 2, axis=1))))
    return fitted, res


def decode_assembler_set(raw) -> AssemblerSet:
    """Clamp scales to >= MIN_SCALE and wrap angles before building assemblers."""
    v = np.asarray(raw, dtype=float).reshape(-1, N_PARAMS).copy()
    v[:, 6:] = np.maximum(v[:, 6:], MIN_SCALE)
    v[:, 3:6] = wrap_angle(v[:, 3:6])
    return AssemblerSet.from_vector(v)


def sample_assembler_set(
    db: VectorDb,
    sched: NoiseSchedule | None = None,
    cfg: LangevinConfig | None = None,
    rng: np.random.Generator | None = None,
) -> AssemblerSet:
    if db.dim % N_PARAMS:
        raise AssemblyError(f"assembler database dimension {db.dim} is not a multiple of 9")
    sched = sched or default_schedule()
    cfg = cfg or LangevinConfig()
    rng = rng if rng is not None else np.random.default_rng()
    return decode_assembler_set(langevin_sample(db, sched, cfg, rng))


def random_assembler(rng: np.random.Generator, max_shift: float = 1.0, scale_range=(0.5, 2.0)) -> Assembler:
    """Random assembler with pitch in (-pi/2, pi/2), the canonical Euler range."""
    angles = rng.uniform(-np.pi, np.pi, 3)
    angles[1] /= 2.0
    return Assembler(
        rng.uniform(-max_shift, max_shift, 3),
        angles,
        rng.uniform(*scale_range, 3),
    )


__all__ = [
    "Assembler",
    "AssemblerSet",
    "AssemblyError",
    "apply_assembler",
    "compose_shape",
    "decode_assembler_set",
    "euler_to_matrix",
    "fit_assembler",
    "invert_assembler",
    "matrix_to_euler",
    "random_assembler",
    "sample_assembler_set",
    "wrap_angle",
]
