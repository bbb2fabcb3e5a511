"""Reflection-symmetry discovery by pair voting and mean-shift mode seeking.

Every point pair votes for the plane that swaps it. Votes live in a space of
4-vectors ``(n, w*d)``; a plane and its sign-flipped twin describe the same
reflection, so distances are taken modulo that flip. Modes of the kernel
density over the votes are candidate mirrors; subsets of up to three of them
are validated as symmetry groups and the one with the smallest fundamental
domain wins.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud, ReflectionPlane, as_cloud, normalize_cloud
from .symgroup import (
    COVER_TOL,
    GeneratorSet,
    SymmetryError,
    domain_mask,
    generate_group,
    apply_group,
    _chamfer,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DensityParams:
    bandwidth: float = 0.15
    radius: float = np.inf
    offset_weight: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.radius > 0:
            raise ValueError("neighborhood radius must be positive")


@dataclass(frozen=True, eq=False)
class ReflectionDb:
    """Canonical plane votes stacked as an (m, 4) array of (normal, offset)."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float).reshape(-1, 4)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_planes(cls, planes) -> "ReflectionDb":
        return cls(np.array([p.as_vector() for p in planes]).reshape(-1, 4))

    def planes(self) -> list[ReflectionPlane]:
        return [ReflectionPlane.from_vector(e) for e in self.entries]


def _canonical_rows(n: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Vectorized sign canonicalization: first component above 1e-12 in magnitude is positive."""
    big = np.abs(n) > 1e-12
    first = np.argmax(big, axis=1)
    lead = n[np.arange(len(n)), first]
    flip = np.where(lead < 0, -1.0, 1.0)
    return np.column_stack([n * flip[:, None], d * flip])


def _pair_votes(pts: np.ndarray, budget: int, rng) -> tuple[np.ndarray, np.ndarray]:
    n = len(pts)
    n_pairs = n * (n - 1) // 2
    if n_pairs <= 5_000_000:
        iu, ju = np.triu_indices(n, k=1)
        if budget < n_pairs:
            pick = rng.choice(n_pairs, size=budget, replace=False)
            iu, ju = iu[pick], ju[pick]
    else:
        iu = rng.integers(0, n, size=budget)
        ju = (iu + rng.integers(1, n, size=budget)) % n
    a, b = pts[iu], pts[ju]
    diff = a - b
    length = np.linalg.norm(diff, axis=1)
    ok = length >= 1e-9
    normal = diff[ok] / length[ok, None]
    offset = np.einsum("ij,ij->i", normal, (a[ok] + b[ok]) / 2.0)
    return _canonical_rows(normal, offset), length[ok]


def vote_pairs(c, budget: int, rng: np.random.Generator) -> ReflectionDb:
    """Mirror-plane votes from up to ``budget`` uniformly drawn unordered pairs."""
    pts = as_cloud(c).points
    if len(pts) < 2:
        raise ValueError("need at least two points to vote")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    return ReflectionDb(_pair_votes(pts, budget, rng)[0])


def _embed(x: np.ndarray, w: float) -> np.ndarray:
    x = np.array(x, dtype=float)
    x[..., 3] *= w
    return x


def reflection_distance(a, b, offset_weight: float = 1.0) -> float:
    """Distance between two reflections, invariant to the (n, d) -> (-n, -d) flip."""
    va = a.as_vector() if isinstance(a, ReflectionPlane) else np.asarray(a, float)
    vb = b.as_vector() if isinstance(b, ReflectionPlane) else np.asarray(b, float)
    va, vb = _embed(va, offset_weight), _embed(vb, offset_weight)
    return float(min(np.linalg.norm(va - vb), np.linalg.norm(va + vb)))


def _sq_dist_aligned(s: np.ndarray, entries: np.ndarray):
    """Squared flip-invariant distances from each row of ``s`` to every entry, plus signs."""
    ss = np.sum(s * s, axis=1)[:, None]
    ee = np.sum(entries * entries, axis=1)[None, :]
    cross = s @ entries.T
    sign = np.where(cross >= 0, 1.0, -1.0)
    sq = np.maximum(ss + ee - 2.0 * np.abs(cross), 0.0)
    return sq, sign


def density(s, db: ReflectionDb, params: DensityParams = DensityParams()) -> float:
    """Gaussian kernel density sum_R K(d(s, R) / h) with K(0) = 1."""
    s = _embed(np.asarray(s, float).reshape(1, 4), params.offset_weight)
    e = _embed(db.entries, params.offset_weight)
    sq, _ = _sq_dist_aligned(s, e)
    mask = sq <= params.radius**2
    return float(np.sum(np.exp(-sq / (2 * params.bandwidth**2)) * mask))


def _shift_local(s, entries, params, max_iter, tol):
    """Mean shift restricted to a finite neighbourhood, using a KD-tree over +/- entries."""
    h2 = 2 * params.bandwidth**2
    both = np.vstack([entries, -entries])
    tree = cKDTree(both)
    out = s.copy()
    for k, cur in enumerate(out):
        for _ in range(max_iter):
            idx = tree.query_ball_point(cur, params.radius)
            if not idx:
                break
            nb = both[idx]
            sq = np.sum((nb - cur) ** 2, axis=1)
            w = np.exp(-(sq - sq.min()) / h2)
            new = w @ nb / w.sum()
            moved = np.linalg.norm(new - cur)
            cur = new
            if moved < tol:
                break
        out[k] = cur
    return out


def _shift_batch(s, entries, params, max_iter, tol):
    if np.isfinite(params.radius):
        return _shift_local(s, entries, params, max_iter, tol)
    inv_h2 = 1.0 / (2 * params.bandwidth**2)
    ee = np.sum(entries * entries, axis=1)
    s = s.copy()
    active = np.arange(len(s))
    for _ in range(max_iter):
        if len(active) == 0:
            break
        cur = s[active]
        cross = cur @ entries.T
        # squared flip-invariant distance minus the per-row constant |s|^2
        q = ee - 2.0 * np.abs(cross)
        q -= q.min(axis=1, keepdims=True)
        w = np.exp(-inv_h2 * q)
        tot = w.sum(axis=1, keepdims=True)
        new = (np.copysign(w, cross) @ entries) / tot
        moved = np.linalg.norm(new - cur, axis=1)
        s[active] = new
        active = active[moved >= tol]
    return s


def mean_shift(
    s0,
    db: ReflectionDb,
    params: DensityParams = DensityParams(),
    max_iter: int = 200,
    tol: float = 1e-8,
) -> np.ndarray:
    """Iterate s <- kernel-weighted mean of the sign-aligned votes until it stops moving."""
    if len(db) == 0:
        raise ValueError("empty reflection database")
    w = params.offset_weight
    s = _embed(np.asarray(s0, float).reshape(1, 4), w)
    out = _shift_batch(s, _embed(db.entries, w), params, max_iter, tol)[0]
    out[3] /= w
    return out


def _to_plane(v: np.ndarray) -> ReflectionPlane:
    return ReflectionPlane(v[:3], float(v[3]))


def cluster_modes(
    db: ReflectionDb,
    params: DensityParams = DensityParams(),
    merge_radius: float = 0.05,
    max_iter: int = 200,
    tol: float = 1e-8,
    seeds: np.ndarray | None = None,
) -> list[tuple[ReflectionPlane, float]]:
    """Mean-shift from every entry (or from ``seeds``) and merge the endpoints.

    Returns ``(mode, mass)`` pairs sorted by mass, where mass is the fraction
    of starting points that converged to the mode.
    """
    if len(db) == 0:
        raise ValueError("empty reflection database")
    w = params.offset_weight
    entries = _embed(db.entries, w)
    start = entries if seeds is None else _embed(np.asarray(seeds, float).reshape(-1, 4), w)
    ends = np.empty_like(start)
    for lo in range(0, len(start), 256):
        ends[lo : lo + 256] = _shift_batch(start[lo : lo + 256], entries, params, max_iter, tol)

    modes: list[np.ndarray] = []
    counts: list[int] = []
    for e in ends:
        for k, m in enumerate(modes):
            if min(np.linalg.norm(e - m), np.linalg.norm(e + m)) < merge_radius:
                counts[k] += 1
                break
        else:
            modes.append(e)
            counts.append(1)

    out = []
    for m, cnt in zip(modes, counts):
        m = m.copy()
        m[3] /= w
        if np.linalg.norm(m[:3]) < 1e-9:
            continue
        out.append((_to_plane(m), cnt / len(start)))
    out.sort(key=lambda pm: -pm[1])
    return out


def refine_plane(
    points: np.ndarray, plane: ReflectionPlane, iters: int = 10, tree: cKDTree | None = None
) -> ReflectionPlane:
    """Polish a mirror by alternating nearest-neighbour matching and plane refitting.

    Each point's mirror image is matched to its nearest cloud point; the
    normal becomes the principal direction of the matched differences and the
    offset the mean projection of the pair midpoints.
    """
    tree = tree or cKDTree(points)
    n, d = plane.normal, plane.offset
    for _ in range(iters):
        dist = points @ n - d
        mirrored = points - 2.0 * dist[:, None] * n
        gap, j = tree.query(mirrored)
        keep = gap <= max(3.0 * np.median(gap), 1e-12)
        diff = points[keep] - points[j[keep]]
        mid = (points[keep] + points[j[keep]]) / 2.0
        if len(diff) < 3:
            break
        _, vecs = np.linalg.eigh(diff.T @ diff)
        new_n = vecs[:, -1]
        if new_n @ n < 0:
            new_n = -new_n
        if np.linalg.norm(diff, axis=1).max() < 1e-12:
            new_n = n
        new_d = float(np.mean(mid @ new_n))
        if np.linalg.norm(new_n - n) < 1e-12 and abs(new_d - d) < 1e-12:
            n, d = new_n, new_d
            break
        n, d = new_n, new_d
    return ReflectionPlane(n, d)


@dataclass
class DetectConfig:
    bandwidth: float = 0.15
    radius: float = np.inf
    offset_weight: float = 1.0
    vote_budget: int | None = None  # None: min(50_000, N^2 / 2)
    n_seeds: int = 8
    merge_radius: float = 0.05
    top_k: int = 6
    max_iter: int = 100
    tol: float = 1e-4
    hough_cell: float = 0.04
    hough_min_length: float = 0.2
    hough_cells: int = 48
    refine_iters: int = 10
    cover_tol: float = 2e-3
    max_order: int = 128
    seed: int = 0

    def density_params(self) -> DensityParams:
        return DensityParams(self.bandwidth, self.radius, self.offset_weight)


@dataclass
class Detection:
    """Outcome of :func:`detect_symmetry_group`, in the input cloud's frame."""

    generators: GeneratorSet
    found: bool
    residual: float
    domain_size: int
    order: int
    candidates: list[ReflectionPlane] = field(default_factory=list)


def hough_peaks(votes: np.ndarray, cell: float, n_peaks: int) -> np.ndarray:
    """Mean vote of the most populated cells of two half-shifted 4D grids.

    Each vote is binned together with its sign-flipped twin so that a cluster
    straddling the canonical-sign boundary is not split.
    """
    both = np.vstack([votes, -votes])
    peaks = []
    counts = []
    for shift in (0.0, 0.5):
        cells = np.floor(both / cell + shift).astype(np.int64)
        cells -= cells.min(axis=0)
        span = cells.max(axis=0) + 1
        keys = np.ravel_multi_index(cells.T, span)
        _, inverse, cnt = np.unique(keys, return_inverse=True, return_counts=True)
        top = np.argsort(-cnt, kind="stable")[:n_peaks]
        sums = np.column_stack(
            [np.bincount(inverse, weights=both[:, k], minlength=len(cnt)) for k in range(4)]
        )
        peaks.append(sums[top] / cnt[top, None])
        counts.append(cnt[top])
    peaks = np.vstack(peaks)
    order = np.argsort(-np.concatenate(counts), kind="stable")
    return peaks[order]


def mirror_residual(points: np.ndarray, plane: ReflectionPlane, tree: cKDTree, cap: float = 0.1) -> float:
    """Mean squared distance from each mirrored point to the cloud, truncated at ``cap``."""
    dist = points @ plane.normal - plane.offset
    gap, _ = tree.query(points - 2.0 * dist[:, None] * plane.normal)
    return float(np.mean(np.minimum(gap, cap) ** 2))


def _dense_seeds(db: ReflectionDb, w: float, cell: float, n_seeds: int) -> np.ndarray:
    e = _embed(db.entries, w)
    seeds = hough_peaks(e, cell, n_seeds)[:n_seeds]
    seeds[:, 3] /= w
    return seeds


def candidate_planes(pts: np.ndarray, cfg: DetectConfig, rng) -> list[ReflectionPlane]:
    """Best mirror candidates for an already-normalized cloud, most convincing first.

    Candidates come from mean-shift modes of the full vote density, Hough
    peaks among votes of well-separated pairs (whose normals are least
    affected by noise), and the principal axes through the centroid. All are
    refined and ranked by their mirror residual.
    """
    n = len(pts)
    budget = cfg.vote_budget or min(50_000, n * n // 2)
    votes, length = _pair_votes(pts, budget, rng)
    if len(votes) == 0:
        return []
    db = ReflectionDb(votes)
    seeds = _dense_seeds(db, cfg.offset_weight, cfg.hough_cell, cfg.n_seeds) if len(db) > cfg.n_seeds else None
    modes = cluster_modes(db, cfg.density_params(), cfg.merge_radius, cfg.max_iter, cfg.tol, seeds=seeds)

    long_votes = votes[length >= cfg.hough_min_length]
    pool = [m for m, _ in modes]
    # a mirror fixes the centroid and its normal diagonalizes the covariance
    centroid = pts.mean(axis=0)
    _, axes = np.linalg.eigh(np.cov((pts - centroid).T))
    pool.extend(ReflectionPlane(a, float(a @ centroid)) for a in axes.T)
    if len(long_votes):
        for v in hough_peaks(long_votes, cfg.hough_cell, cfg.hough_cells):
            if np.linalg.norm(v[:3]) > 0.5:
                pool.append(ReflectionPlane(v[:3], v[3]))

    tree = cKDTree(pts)
    scored = sorted(pool, key=lambda p: mirror_residual(pts, p, tree))
    refined: list[tuple[float, ReflectionPlane]] = []
    for p in scored[: 2 * cfg.top_k]:
        p = refine_plane(pts, p, cfg.refine_iters, tree)
        if all(reflection_distance(p, q, cfg.offset_weight) >= cfg.merge_radius for _, q in refined):
            refined.append((mirror_residual(pts, p, tree), p))
    refined.sort(key=lambda rp: rp[0])
    return [p for _, p in refined[: cfg.top_k]]


def detect_symmetry_group(c, cfg: DetectConfig | None = None, rng=None) -> Detection:
    """Find the symmetry group (up to three mirrors) with the smallest fundamental domain.

    Works on the normalized cloud and reports planes in the input frame. When
    no non-trivial candidate validates, the empty generator set is returned
    with ``found=False``.
    """
    cfg = cfg or DetectConfig()
    c = as_cloud(c)
    if len(c) < 8:
        raise ValueError("need at least 8 points for detection")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    cn, norm = normalize_cloud(c)
    pts = cn.points
    planes = candidate_planes(pts, cfg, rng)

    best = (len(pts), 0.0, 0, GeneratorSet.empty(), 1)
    seen_orders: dict[frozenset, int] = {}
    for size in (1, 2, 3):
        for combo in itertools.combinations(range(len(planes)), size):
            # a generator that does not enlarge the group of its subset is redundant
            sub_orders = [seen_orders.get(frozenset(s)) for s in itertools.combinations(combo, size - 1)]
            if size > 1 and any(o is None for o in sub_orders):
                continue
            gens = GeneratorSet(tuple(planes[i] for i in combo))
            try:
                g = generate_group(gens, cfg.max_order)
            except SymmetryError:
                continue
            if size > 1 and g.order <= max(sub_orders):
                continue
            mask = domain_mask(g, pts)
            card = int(mask.sum())
            if card == 0:
                continue
            residual = _chamfer(pts, apply_group(g, pts[mask]).points)
            if residual > cfg.cover_tol:
                continue
            seen_orders[frozenset(combo)] = g.order
            key = (card, residual, size)
            if key < best[:3]:
                best = (card, residual, size, g.generators, g.order)

    card, residual, size, gens, order = best
    found = size > 0
    if not found:
        log.info("no symmetry found")
    out = GeneratorSet(tuple(norm.plane_inverse(p) for p in gens.planes))
    return Detection(
        generators=out,
        found=found,
        residual=residual,
        domain_size=card,
        order=order,
        candidates=[norm.plane_inverse(p) for p in planes],
    )
