"""Finite symmetry groups generated by up to three reflections.

A group is built by breadth-first closure over its reflection generators.
Fundamental domains are Dirichlet regions around a reference point with a
trivial stabilizer: a point belongs to the domain iff it is (within the
boundary tolerance) the member of its own orbit closest to the reference.
For a single mirror this is the half-space on the positive side of the
plane; for a rotation of order k it is a 2*pi/k wedge about the axis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import (
    GeometryError,
    PointCloud,
    ReflectionPlane,
    RigidTransform,
    as_cloud,
    compose,
    coords,
    reflection_to_transform,
    rotation_from_reflections,
)

N_SLOTS = 3
SLOT_WIDTH = 4
DEDUP_TOL = 1e-6
BOUNDARY_EPS = 1e-6
MERGE_RADIUS = 1e-6
COVER_TOL = 0.02
SNAP_TOL = np.deg2rad(1.5)
MAX_FOLD = 18  # smallest dihedral angle pi/18, i.e. 2k in {2..36}


class SymmetryError(GeometryError):
    """Base class for symmetry-group failures."""


class NonTerminatingGroupError(SymmetryError):
    """Closure exceeded the element budget."""


class CoverageError(SymmetryError):
    """The group does not reconstruct the cloud from its fundamental domain."""


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """Three reflection slots; active planes first, ``None`` marks a padded slot."""

    planes: tuple[ReflectionPlane, ...] = ()

    def __post_init__(self):
        planes = tuple(self.planes)
        if len(planes) > N_SLOTS:
            raise SymmetryError(f"at most {N_SLOTS} generators, got {len(planes)}")
        for a, b in itertools.combinations(planes, 2):
            if np.allclose(a.as_vector(), b.as_vector(), atol=1e-12):
                raise SymmetryError("generator planes must be pairwise distinct")
        object.__setattr__(self, "planes", planes)

    @classmethod
    def empty(cls) -> "GeneratorSet":
        return cls(())

    @property
    def n_active(self) -> int:
        return len(self.planes)

    def slots(self) -> list[ReflectionPlane | None]:
        return list(self.planes) + [None] * (N_SLOTS - len(self.planes))

    def to_vector(self) -> np.ndarray:
        """12-vector: per slot (normal, offset); inactive slots are all zero."""
        out = np.zeros(N_SLOTS * SLOT_WIDTH)
        for i, p in enumerate(self.planes):
            out[SLOT_WIDTH * i : SLOT_WIDTH * (i + 1)] = p.as_vector()
        return out

    @classmethod
    def from_vector(cls, v, threshold: float = 0.5) -> "GeneratorSet":
        """Decode a 12-vector; slots whose normal magnitude is below ``threshold`` are inactive."""
        v = np.asarray(v, dtype=float).reshape(N_SLOTS, SLOT_WIDTH)
        planes = []
        for slot in v:
            if np.linalg.norm(slot[:3]) < threshold:
                continue
            planes.append(ReflectionPlane(slot[:3], slot[3]))
        return cls(tuple(planes))

    def transforms(self) -> list[RigidTransform]:
        return [reflection_to_transform(p) for p in self.planes]

    def __repr__(self) -> str:
        return f"GeneratorSet({list(self.planes)!r})"


@dataclass(frozen=True, eq=False)
class SymmetryGroup:
    elements: tuple[RigidTransform, ...]
    generators: GeneratorSet

    @property
    def order(self) -> int:
        return len(self.elements)

    def fixed_point(self) -> np.ndarray:
        """A point fixed by every element (orbit centroid of the origin)."""
        return np.mean([g.translation for g in self.elements], axis=0)

    def orbit(self, points) -> np.ndarray:
        """Images of each point under every element, shape (order, N, 3)."""
        pts = coords(points)
        return np.stack([g.apply(pts) for g in self.elements])


def _rotate_towards(fixed: np.ndarray, moving: np.ndarray, target_cos: float) -> np.ndarray:
    """Rotate ``moving`` inside span(fixed, moving) so that fixed . result = target_cos."""
    perp = moving - (moving @ fixed) * fixed
    pn = np.linalg.norm(perp)
    if pn < 1e-12:
        return moving
    perp /= pn
    sin = np.sqrt(max(0.0, 1.0 - target_cos**2))
    return target_cos * fixed + sin * perp


def _snap_cos(c: float, tol: float) -> float | None:
    """Snap |cos| of a dihedral angle to cos(pi/k); None when no k is within ``tol``."""
    theta = float(np.arccos(np.clip(abs(c), 0.0, 1.0)))
    ks = np.arange(2, MAX_FOLD + 1)
    targets = np.pi / ks
    i = int(np.argmin(np.abs(targets - theta)))
    if abs(targets[i] - theta) > tol:
        return None
    return float(np.copysign(np.cos(targets[i]), c))


def _solve_third_normal(n1, n2, n3, c1, c2):
    """Unit vector closest to n3 with prescribed dot products c1, c2 against n1, n2."""
    g = np.array([[1.0, n1 @ n2], [n1 @ n2, 1.0]])
    try:
        ab = np.linalg.solve(g, np.array([c1, c2]))
    except np.linalg.LinAlgError:
        return None
    base = ab[0] * n1 + ab[1] * n2
    rest = 1.0 - base @ base
    if rest < -1e-12:
        return None
    cross = np.cross(n1, n2)
    cross /= np.linalg.norm(cross)
    h = np.sqrt(max(rest, 0.0))
    sign = 1.0 if n3 @ cross >= 0 else -1.0
    return base + sign * h * cross


def snap_generators(gens: GeneratorSet, tol: float = SNAP_TOL) -> GeneratorSet:
    """Snap inter-plane dihedral angles to the nearest pi/k (k = 2..18) within ``tol``.

    The first plane is kept fixed. A rotated plane pivots about its
    intersection with the earlier planes, so the rotation axis stays put.
    """
    planes = list(gens.planes)
    if len(planes) < 2:
        return gens
    n = [p.normal.copy() for p in planes]
    anchors = [planes[0].offset * planes[0].normal]
    for k in range(1, len(planes)):
        a = np.array([p.normal for p in planes[: k + 1]])
        b = np.array([p.offset for p in planes[: k + 1]])
        anchors.append(np.linalg.lstsq(a, b, rcond=None)[0])

    c12 = _snap_cos(n[0] @ n[1], tol)
    if c12 is not None:
        n[1] = _rotate_towards(n[0], n[1], c12)
    if len(planes) == 3:
        c13 = _snap_cos(n[0] @ n[2], tol)
        c23 = _snap_cos(n[1] @ n[2], tol)
        if c13 is not None and c23 is not None:
            cand = _solve_third_normal(n[0], n[1], n[2], c13, c23)
            if cand is not None and np.arccos(np.clip(cand @ n[2], -1, 1)) <= 2 * tol:
                n[2] = cand
        elif c13 is not None:
            n[2] = _rotate_towards(n[0], n[2], c13)
        elif c23 is not None:
            n[2] = _rotate_towards(n[1], n[2], c23)

    snapped = []
    for normal, anchor in zip(n, anchors):
        normal = normal / np.linalg.norm(normal)
        snapped.append(ReflectionPlane(normal, float(normal @ anchor)))
    try:
        return GeneratorSet(tuple(snapped))
    except SymmetryError:
        return gens


def generate_group(
    gens: GeneratorSet, max_order: int = 128, snap: bool = True
) -> SymmetryGroup:
    """Breadth-first closure of the generators under composition."""
    if max_order < 1:
        raise SymmetryError("max_order must be >= 1")
    if snap:
        gens = snap_generators(gens)
    # two parallel distinct mirrors generate translations
    for a, b in itertools.combinations(gens.planes, 2):
        rotation_from_reflections(a, b)

    gen_t = gens.transforms()
    elements = [RigidTransform.identity()]
    keys = np.empty((max_order + 1, 12))
    keys[0] = elements[0].flat()
    frontier = [elements[0]]
    while frontier:
        nxt = []
        for g in frontier:
            for s in gen_t:
                h = compose(s, g)
                key = h.flat()
                n = len(elements)
                if np.linalg.norm(keys[:n] - key, axis=1).min() < DEDUP_TOL:
                    continue
                if n == max_order:
                    raise NonTerminatingGroupError(
                        f"non-terminating group: closure exceeded {max_order} elements"
                    )
                elements.append(h)
                keys[n] = key
                nxt.append(h)
        frontier = nxt
    return SymmetryGroup(tuple(elements), gens)


def dedup_points(points, radius: float = MERGE_RADIUS) -> np.ndarray:
    """Collapse points closer than ``radius``; keeps the first of each cluster."""
    pts = coords(points)
    tree = cKDTree(pts)
    keep = np.ones(len(pts), dtype=bool)
    for i, j in sorted(tree.query_pairs(radius)):
        if keep[i] and keep[j]:
            keep[j] = False
    return pts[keep]


def apply_group(g: SymmetryGroup, d, dedup: bool = False) -> PointCloud:
    """Union of the images of ``d`` under all group elements.

    Labels, if present, are carried along with each copy.
    """
    d = as_cloud(d)
    pts = g.orbit(d.points).reshape(-1, 3)
    labels = None if d.labels is None else np.tile(d.labels, g.order)
    if dedup:
        tree = cKDTree(pts)
        keep = np.ones(len(pts), dtype=bool)
        for i, j in sorted(tree.query_pairs(MERGE_RADIUS)):
            if keep[i] and keep[j]:
                keep[j] = False
        pts = pts[keep]
        labels = None if labels is None else labels[keep]
    return PointCloud(pts, labels)


def _chamfer(a: np.ndarray, b: np.ndarray) -> float:
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(np.mean(da**2) + np.mean(db**2))


_REFERENCE_DIRS = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (1.0, 0.29, 0.13),
    (0.37, 1.0, 0.61),
    (0.53, -0.23, 1.0),
    (0.71, 0.43, -0.57),
)


def reference_point(g: SymmetryGroup) -> np.ndarray:
    """Deterministic point with trivial stabilizer, on the positive side of the generators.

    Candidates combine the positive generator normals with a wedge
    reference: the +x axis projected off the rotation axis, falling back to
    +y. The first candidate whose orbit is free (all images distinct) is
    used; among its images the one satisfying the most generator
    half-spaces is returned.
    """
    center = g.fixed_point()
    normals = [p.normal for p in g.generators.planes]
    bias = np.sum(normals, axis=0) if normals else np.zeros(3)
    for ref in _REFERENCE_DIRS:
        for weight in (0.5, 0.25, 0.125):
            u = bias + weight * np.asarray(ref)
            if np.linalg.norm(u) < 1e-9:
                continue
            v = center + u / np.linalg.norm(u)
            images = g.orbit(v)[:, 0, :]
            gaps = np.linalg.norm(images[1:] - v, axis=1)
            if g.order > 1 and gaps.min() < 1e-3:
                continue
            score = [
                sum(p.signed_distance(x[None])[0] > 0 for p in g.generators.planes)
                for x in images
            ]
            return images[int(np.argmax(score))]
    raise SymmetryError("no reference point with trivial stabilizer")


def domain_mask(g: SymmetryGroup, points, eps: float = BOUNDARY_EPS) -> np.ndarray:
    pts = coords(points)
    if g.order == 1:
        return np.ones(len(pts), dtype=bool)
    v = reference_point(g)
    orbit = g.orbit(pts)
    dist = np.linalg.norm(orbit - v, axis=2)
    return dist[0] <= dist.min(axis=0) + eps


@dataclass(frozen=True, eq=False)
class FundamentalDomain:
    indices: np.ndarray
    residual: float

    def __len__(self) -> int:
        return len(self.indices)


def extract_fundamental_domain(
    gens: GeneratorSet | SymmetryGroup,
    c,
    cover_tol: float = COVER_TOL,
    check: bool = True,
    max_order: int = 128,
) -> FundamentalDomain:
    """Indices of ``c`` lying in the group's fundamental region.

    With ``check`` the reconstruction is validated and a
    :class:`CoverageError` is raised when its Chamfer residual exceeds
    ``cover_tol``.
    """
    g = gens if isinstance(gens, SymmetryGroup) else generate_group(gens, max_order)
    pts = coords(c)
    mask = domain_mask(g, pts)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        residual = float("inf")
    else:
        residual = _chamfer(pts, apply_group(g, pts[idx]).points)
    if check and not residual <= cover_tol:
        raise CoverageError(
            f"not a symmetry of this cloud: residual {residual:.4g} > {cover_tol:g}"
        )
    if len(idx) == 0:
        raise CoverageError("fundamental domain is empty")
    return FundamentalDomain(idx, residual)


def validate_symmetry(c, gens: GeneratorSet, tol: float = COVER_TOL) -> tuple[float, bool]:
    fd = extract_fundamental_domain(gens, c, check=False)
    return fd.residual, fd.residual <= tol
