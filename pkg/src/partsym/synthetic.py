"""Synthetic point clouds with planted symmetries, for tests and demos."""

from __future__ import annotations

import numpy as np

from .geom import PointCloud, ReflectionPlane, normalize_cloud, reflect_point
from .symgroup import GeneratorSet, apply_group, generate_group


def random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def blob_seed(rng: np.random.Generator, n: int, n_blobs: int = 4) -> np.ndarray:
    """Asymmetric lump of anisotropic Gaussian blobs of unequal size."""
    centers = rng.uniform(-1.0, 1.0, size=(n_blobs, 3))
    weights = rng.dirichlet(np.full(n_blobs, 2.0))
    which = rng.choice(n_blobs, size=n, p=weights)
    out = np.empty((n, 3))
    for k in range(n_blobs):
        idx = which == k
        axes = random_rotation(rng) * rng.uniform(0.05, 0.35, size=3)
        out[idx] = centers[k] + rng.normal(size=(idx.sum(), 3)) @ axes.T
    return out


def planted_mirror(
    rng: np.random.Generator, n: int = 512, noise: float = 0.01
) -> tuple[PointCloud, ReflectionPlane]:
    """Mirror-symmetric cloud of ``n`` points plus the planted plane.

    The cloud is normalized before noise is added, and the plane is
    returned in that normalized frame.
    """
    plane = ReflectionPlane(random_unit(rng), rng.uniform(-0.5, 0.5))
    half = blob_seed(rng, n // 2)
    # keep the seed on one side so the two halves do not interpenetrate
    dist = half @ plane.normal - plane.offset
    half = half - np.minimum(dist, 0.0)[:, None] * 2.0 * plane.normal
    pts = np.vstack([half, reflect_point(plane, half)])
    cloud, norm = normalize_cloud(PointCloud(pts))
    plane = norm.plane_forward(plane)
    pts = cloud.points + noise * rng.normal(size=cloud.points.shape)
    return PointCloud(pts), plane


def dihedral_generators(k: int, axis=(0.0, 0.0, 1.0), ref=(1.0, 0.0, 0.0)) -> GeneratorSet:
    """Two mirrors through the origin containing ``axis``, at dihedral angle pi/k."""
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    u = np.asarray(ref, float)
    u = u - (u @ axis) * axis
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    a = np.pi / k
    return GeneratorSet((ReflectionPlane(u, 0.0), ReflectionPlane(np.cos(a) * u + np.sin(a) * v, 0.0)))


def planted_group_cloud(
    rng: np.random.Generator, gens: GeneratorSet, n_seed: int, noise: float = 0.0
) -> PointCloud:
    """Orbit of a random asymmetric seed under the group generated by ``gens``."""
    g = generate_group(gens)
    seed = 0.6 * blob_seed(rng, n_seed, n_blobs=3) + np.array([0.4, 0.15, 0.1])
    pts = apply_group(g, seed).points
    if noise:
        pts = pts + noise * rng.normal(size=pts.shape)
    return PointCloud(pts)


def sphere_samples(rng, n: int, radius: float = 1.0) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def cube_samples(rng, n: int, half: float = 1.0) -> np.ndarray:
    """Uniform samples on the surface of an axis-aligned cube."""
    pts = rng.uniform(-half, half, size=(n, 3))
    face = rng.integers(0, 3, size=n)
    side = rng.choice([-half, half], size=n)
    pts[np.arange(n), face] = side
    return pts
