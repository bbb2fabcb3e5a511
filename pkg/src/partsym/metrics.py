"""Shape distances, the symmetry discrepancy index, and 1-NNA."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .geom import ReflectionPlane, as_cloud, coords, normalize_cloud, resample_part
from .symgroup import (
    GeneratorSet,
    apply_group,
    dedup_points,
    domain_mask,
    generate_group,
)

EMD_EXACT_CAP = 1024


class MetricKind(str, enum.Enum):
    CD = "cd"
    EMD = "emd"

    @property
    def sdi_scale(self) -> float:
        return 10.0 if self is MetricKind.CD else 1e3


class MetricError(ValueError):
    pass


def chamfer(a, b) -> float:
    """Symmetric Chamfer distance: mean squared NN distance a->b plus b->a.

    Nearest neighbours come from a KD-tree; the squared distances are then
    recomputed from coordinates so the value matches brute force exactly.
    """
    pa, pb = coords(a), coords(b)
    _, ia = cKDTree(pb).query(pa)
    _, ib = cKDTree(pa).query(pb)
    da = np.sum((pa - pb[ia]) ** 2, axis=1)
    db = np.sum((pb - pa[ib]) ** 2, axis=1)
    return float(da.mean() + db.mean())


def _auction(cost: np.ndarray, eps_final: float) -> np.ndarray:
    """Forward auction with epsilon scaling for a square minimization problem.

    Returns ``assign`` with row i matched to column assign[i]; the total cost
    is within n * eps_final of optimal.
    """
    n = len(cost)
    benefit = -cost
    prices = np.zeros(n)
    eps = max(np.ptp(cost), eps_final) / 4.0
    while True:
        owner = np.full(n, -1)
        assign = np.full(n, -1)
        free = list(range(n))
        while free:
            i = free.pop()
            vals = benefit[i] - prices
            j = int(np.argmax(vals))
            best = vals[j]
            vals[j] = -np.inf
            second = vals.max() if n > 1 else best
            prices[j] += best - second + eps
            if owner[j] >= 0:
                assign[owner[j]] = -1
                free.append(owner[j])
            owner[j] = i
            assign[i] = j
        if eps <= eps_final:
            return assign
        eps = max(eps / 5.0, eps_final)


def emd(a, b, approximate: bool = False, cap: int = EMD_EXACT_CAP, eps: float = 1e-4) -> float:
    """Mean matched Euclidean distance under the optimal bijection.

    Solved exactly as a linear assignment problem; above ``cap`` points the
    caller must opt into the epsilon-scaling auction with ``approximate``.
    """
    pa, pb = coords(a), coords(b)
    if len(pa) != len(pb):
        raise MetricError(f"EMD needs equal sizes, got {len(pa)} and {len(pb)}; resample first")
    cost = cdist(pa, pb)
    if len(pa) > cap:
        if not approximate:
            raise MetricError(
                f"{len(pa)} points exceeds the exact EMD cap of {cap}; pass approximate=True"
            )
        cols = _auction(cost, eps)
        return float(cost[np.arange(len(pa)), cols].mean())
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def distance(a, b, kind: MetricKind | str) -> float:
    kind = MetricKind(kind)
    return chamfer(a, b) if kind is MetricKind.CD else emd(a, b)


@dataclass(frozen=True)
class EvalReport:
    metric: str
    raw: float
    scaled: float
    scale: float
    normalized: bool = True
    chamfer_variant: str = "mean-squared-symmetric"

    def to_dict(self) -> dict:
        return asdict(self)


def reconstruct(c, gens: GeneratorSet, max_order: int = 128):
    """Apply the group to the fundamental domain of ``c`` (both in c's frame)."""
    g = generate_group(gens, max_order)
    pts = coords(c)
    mask = domain_mask(g, pts)
    return apply_group(g, pts[mask]).points


def sdi(c, gens: GeneratorSet, kind: MetricKind | str = MetricKind.CD, seed: int = 0) -> EvalReport:
    """Distance between the normalized cloud and its reconstruction from the fundamental domain.

    ``gens`` are given in the frame of ``c``. For EMD the reconstruction is
    deduplicated and resampled to ``len(c)`` points.
    """
    kind = MetricKind(kind)
    cn, norm = normalize_cloud(as_cloud(c))
    gn = GeneratorSet(tuple(norm.plane_forward(p) for p in gens.planes))
    rec = reconstruct(cn.points, gn)
    if kind is MetricKind.EMD:
        rec = dedup_points(rec)
        rec = resample_part(rec, len(cn), np.random.default_rng(seed)).points
    raw = distance(cn.points, rec, kind)
    return EvalReport(kind.value, raw, raw * kind.sdi_scale, kind.sdi_scale)


def sdi_parts(c, part_gens: dict[int, GeneratorSet], kind: MetricKind | str = MetricKind.CD, seed: int = 0) -> EvalReport:
    """Shape-level SDI where each labeled part carries its own generators."""
    kind = MetricKind(kind)
    c = as_cloud(c)
    cn, norm = normalize_cloud(c)
    pieces = []
    for j in cn.part_ids():
        part = cn.part(j).points
        gens = part_gens.get(j, GeneratorSet.empty())
        gn = GeneratorSet(tuple(norm.plane_forward(p) for p in gens.planes))
        pieces.append(reconstruct(part, gn))
    rec = np.vstack(pieces)
    if kind is MetricKind.EMD:
        rec = dedup_points(rec)
        rec = resample_part(rec, len(cn), np.random.default_rng(seed)).points
    raw = distance(cn.points, rec, kind)
    return EvalReport(kind.value, raw, raw * kind.sdi_scale, kind.sdi_scale)


VERTICAL_MIRROR = GeneratorSet((ReflectionPlane([1.0, 0.0, 0.0], 0.0),))


def sdi_default(c, kind: MetricKind | str = MetricKind.CD, seed: int = 0) -> EvalReport:
    """SDI under the x = 0 bisector mirror of the normalized cloud."""
    cn, _ = normalize_cloud(as_cloud(c))
    return sdi(cn, VERTICAL_MIRROR, kind, seed)


def pairwise_distances(clouds, kind: MetricKind | str) -> np.ndarray:
    n = len(clouds)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = distance(clouds[i], clouds[j], kind)
    return out


def one_nna_from_matrix(dist: np.ndarray, n_gen: int, dup_tol: float = 1e-12, tie_rtol: float = 1e-9) -> float:
    """Leave-one-out 1-NN accuracy (percent) from the pooled distance matrix, gen first.

    A shape is left out together with its exact copies (distance <= dup_tol),
    since a copy in the other set is the same shape, not a neighbour.
    Neighbours tied within ``tie_rtol`` split the credit evenly.
    """
    d = np.array(dist, dtype=float)
    n = len(d)
    labels = np.r_[np.zeros(n_gen, dtype=int), np.ones(n - n_gen, dtype=int)]
    hits = np.zeros(n)
    for i in range(n):
        row = d[i].copy()
        row[i] = np.inf
        row[row <= dup_tol] = np.inf
        if not np.isfinite(row).any():
            row = d[i].copy()
            row[i] = np.inf
        best = row.min()
        ties = row <= best + tie_rtol * abs(best) + 1e-300
        hits[i] = np.mean(labels[ties] == labels[i])
    return float(hits.mean() * 100.0)


def one_nna(gen, ref, kind: MetricKind | str = MetricKind.CD) -> float:
    if len(gen) == 0 or len(ref) == 0:
        raise MetricError("both sets must be non-empty")
    pooled = list(gen) + list(ref)
    return one_nna_from_matrix(pairwise_distances(pooled, kind), len(gen))
