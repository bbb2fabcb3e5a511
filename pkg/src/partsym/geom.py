"""Core 3D types: point clouds, reflection planes, rigid transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9
SIGN_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


class TranslationResultError(GeometryError):
    """Two distinct parallel planes compose to a translation, not a rotation."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise GeometryError(f"expected (N, 3) coordinates, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N points in R^3 with optional per-point part labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_points(self.points)
        if len(pts) == 0:
            raise GeometryError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point cloud has non-finite coordinates")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (len(pts),):
                raise GeometryError(
                    f"label count {lab.size} does not match point count {len(pts)}"
                )
            if lab.size and (lab.min() < 0 or not np.issubdtype(lab.dtype, np.integer)):
                raise GeometryError("labels must be non-negative integers")
            lab = lab.astype(np.int64)
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_parts(self) -> int:
        if self.labels is None:
            return 1
        return int(self.labels.max()) + 1

    def part_ids(self) -> list[int]:
        if self.labels is None:
            return [0]
        return sorted(int(v) for v in np.unique(self.labels))

    def part(self, j: int) -> "PointCloud":
        """Points of part ``j`` as an unlabeled cloud."""
        if self.labels is None:
            if j != 0:
                raise GeometryError(f"unlabeled cloud has no part {j}")
            return PointCloud(self.points)
        mask = self.labels == j
        if not mask.any():
            raise GeometryError(f"cloud has no part {j}")
        return PointCloud(self.points[mask])

    def subset(self, indices) -> "PointCloud":
        idx = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return PointCloud(self.points[idx], labels)

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.labels)


def as_cloud(c) -> PointCloud:
    return c if isinstance(c, PointCloud) else PointCloud(c)


def coords(c) -> np.ndarray:
    return c.points if isinstance(c, PointCloud) else _as_points(c)


def canonicalize_plane(normal, offset: float) -> tuple[np.ndarray, float]:
    """Unit-normalize and flip so the first non-negligible normal component is positive."""
    n = np.asarray(normal, dtype=float).reshape(3)
    norm = np.linalg.norm(n)
    if not np.isfinite(norm) or norm == 0.0:
        raise GeometryError("plane normal must be a non-zero finite vector")
    n = n / norm
    d = float(offset) / norm
    for comp in n:
        if abs(comp) > SIGN_TOL:
            if comp < 0:
                n, d = -n, -d
            break
    return n + 0.0, d + 0.0


@dataclass(frozen=True, eq=False)
class ReflectionPlane:
    """Mirror plane ``{x : normal . x = offset}`` in Hesse normal form.

    Construction always canonicalizes, so two planes describing the same
    reflection compare equal via :meth:`as_vector`.
    """

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        n, d = canonicalize_plane(self.normal, self.offset)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", d)

    def as_vector(self) -> np.ndarray:
        return np.append(self.normal, self.offset)

    @classmethod
    def from_vector(cls, v) -> "ReflectionPlane":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], float(v[3]))

    def signed_distance(self, points) -> np.ndarray:
        return coords(points) @ self.normal - self.offset

    def __repr__(self) -> str:
        n = ", ".join(f"{x:.6g}" for x in self.normal)
        return f"ReflectionPlane(normal=({n}), offset={self.offset:.6g})"


def _nearest_orthogonal(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    return u @ vt


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> linear @ x + translation with orthogonal ``linear``."""

    linear: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        a = np.asarray(self.linear, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        drift = np.abs(a.T @ a - np.eye(3)).max()
        if drift > 1e-6:
            raise GeometryError(f"linear part is not orthogonal (drift {drift:.2e})")
        if drift > ORTHO_TOL:
            a = _nearest_orthogonal(a)
        a = a.copy()
        t = t.copy()
        a.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "linear", a)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def apply(self, points) -> np.ndarray:
        return coords(points) @ self.linear.T + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.linear.T, -self.linear.T @ self.translation)

    def flat(self) -> np.ndarray:
        """12-vector (row-major linear part, then translation) used for dedup."""
        return np.concatenate([self.linear.ravel(), self.translation])

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.linear))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return ``a o b``, i.e. the transform x -> a(b(x))."""
    return RigidTransform(a.linear @ b.linear, a.linear @ b.translation + a.translation)


def reflect_point(plane: ReflectionPlane, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    dist = p @ plane.normal - plane.offset
    return p - 2.0 * np.multiply.outer(dist, plane.normal)


def reflection_to_transform(plane: ReflectionPlane) -> RigidTransform:
    n = plane.normal
    return RigidTransform(np.eye(3) - 2.0 * np.outer(n, n), 2.0 * plane.offset * n)


def rotation_from_reflections(p1: ReflectionPlane, p2: ReflectionPlane) -> RigidTransform:
    """Compose reflect(p2) o reflect(p1).

    For intersecting planes this is a rotation about the intersection line
    by twice the dihedral angle.
    """
    same_dir = abs(abs(float(p1.normal @ p2.normal)) - 1.0) < 1e-12
    if same_dir:
        sign = 1.0 if p1.normal @ p2.normal > 0 else -1.0
        if abs(p1.offset - sign * p2.offset) > 1e-12:
            raise TranslationResultError(
                "translation result: parallel distinct planes compose to a translation"
            )
        return RigidTransform.identity()
    return compose(reflection_to_transform(p2), reflection_to_transform(p1))


def rotation_axis_angle(rot: np.ndarray) -> tuple[np.ndarray, float]:
    """Axis and angle in [0, pi] of a proper rotation matrix."""
    rot = np.asarray(rot, dtype=float)
    cos = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos))
    if angle < 1e-12:
        return np.array([0.0, 0.0, 1.0]), 0.0
    if np.pi - angle < 1e-6:
        # near pi the skew part vanishes; read the axis off R + I
        m = (rot + np.eye(3)) / 2.0
        col = int(np.argmax(np.diag(m)))
        axis = m[:, col] / np.sqrt(m[col, col])
        return axis / np.linalg.norm(axis), angle
    axis = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    return axis / np.linalg.norm(axis), angle


@dataclass(frozen=True, eq=False)
class Normalization:
    """Similarity that maps a cloud to the unit ball: y = (x - center) / scale."""

    center: np.ndarray
    scale: float

    def forward(self, points) -> np.ndarray:
        return (coords(points) - self.center) / self.scale

    def inverse(self, points) -> np.ndarray:
        return coords(points) * self.scale + self.center

    def plane_forward(self, plane: ReflectionPlane) -> ReflectionPlane:
        return ReflectionPlane(plane.normal, (plane.offset - plane.normal @ self.center) / self.scale)

    def plane_inverse(self, plane: ReflectionPlane) -> ReflectionPlane:
        return ReflectionPlane(plane.normal, plane.offset * self.scale + plane.normal @ self.center)


def normalize_cloud(c) -> tuple[PointCloud, Normalization]:
    """Center on the centroid and scale to unit max radius."""
    c = as_cloud(c)
    center = c.points.mean(axis=0)
    radius = float(np.linalg.norm(c.points - center, axis=1).max())
    if radius < 1e-12:
        raise GeometryError("degenerate cloud: all points coincide")
    norm = Normalization(center, radius)
    return c.with_points(norm.forward(c.points)), norm


def resample_part(c, target_n: int, rng: np.random.Generator) -> PointCloud:
    """Subsample without replacement, or upsample by random duplication."""
    c = as_cloud(c)
    n = len(c)
    if target_n < 1:
        raise GeometryError("target_n must be >= 1")
    if target_n <= n:
        idx = rng.choice(n, size=target_n, replace=False)
    else:
        extra = rng.choice(n, size=target_n - n, replace=True)
        idx = np.concatenate([np.arange(n), extra])
        idx = rng.permutation(idx)
    return c.subset(idx)
