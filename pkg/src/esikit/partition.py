"""Random spatial partitions: Mondrian trees and Voronoi tessellations.

Both partition families cover a rectangular domain with disjoint cells.
A Mondrian tree is grown by an exponential cut clock whose rate equals the
linear measure of the box being cut; a Voronoi tessellation assigns every
location to its nearest nucleus. Each family has a data-free variant and a
data-conditioned ("trained") variant that concentrates cells where the
measured points are.

The coarseness of either family is controlled by a single scalar ``alpha``
in [0, 1): larger values mean more, smaller cells. ``lambda_mondrian`` and
``lambda_voronoi`` translate ``alpha`` into the family's native rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import OutOfDomainError
from .geometry import ConditioningData, Domain, measure

__all__ = [
    "MondrianTree",
    "VoronoiPartition",
    "Forest",
    "lambda_mondrian",
    "lambda_voronoi",
    "sample_mondrian",
    "sample_trained_mondrian",
    "sample_voronoi",
    "sample_forest",
    "cell_id",
    "cell_ids",
    "group_by_cell",
    "forest_to_json",
]

_ASSIGN_BLOCK = 8192  # targets processed per distance block in Voronoi lookup


def lambda_mondrian(alpha: float, domain: Domain) -> float:
    """Cut-clock budget for a Mondrian tree at granularity ``alpha``.

    lambda = 1 / (measure(domain) * (1 - alpha)); alpha -> 1 grows arbitrarily
    deep trees while alpha = 0 yields the shallowest useful budget.
    """
    _check_alpha(alpha)
    mu = measure(domain)
    if mu <= 0:
        raise ValueError("domain has zero measure; cannot derive a cut budget")
    return 1.0 / (mu * (1.0 - alpha))


def lambda_voronoi(alpha: float, n_samples: int) -> float:
    """Expected nucleus count for a Voronoi tessellation at granularity ``alpha``.

    lambda = 0.5 * n_samples * alpha. The draw downstream is clamped to at
    least one nucleus, so alpha = 0 still produces a single-cell partition.
    """
    _check_alpha(alpha)
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    return 0.5 * n_samples * alpha


def _check_alpha(alpha: float) -> None:
    if not (np.isfinite(alpha) and 0.0 <= alpha < 1.0):
        raise ValueError("alpha must lie in [0, 1)")


@dataclass(frozen=True)
class MondrianTree:
    """Binary space-partition tree stored as flat node arrays.

    ``cut_dim[i] < 0`` marks node ``i`` as a leaf. Internal nodes carry the
    cut dimension, the cut position and the time at which the cut fired;
    ``child_lo`` holds the half with coordinates strictly below the cut and
    ``child_hi`` the half at or above it. Cell identifiers are leaf node
    indices.
    """

    domain: Domain
    cut_dim: np.ndarray
    cut_pos: np.ndarray
    cut_time: np.ndarray
    child_lo: np.ndarray
    child_hi: np.ndarray
    box_lower: np.ndarray
    box_upper: np.ndarray

    def __post_init__(self):
        for name in ("cut_dim", "child_lo", "child_hi"):
            arr = np.asarray(getattr(self, name), dtype=np.int32)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for name in ("cut_pos", "cut_time", "box_lower", "box_upper"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.cut_dim.size

    @property
    def n_cells(self) -> int:
        return int(np.sum(self.cut_dim < 0))

    def leaf_ids(self) -> np.ndarray:
        return np.flatnonzero(self.cut_dim < 0)


@dataclass(frozen=True)
class VoronoiPartition:
    """Voronoi tessellation of a domain induced by a set of nuclei.

    Every location belongs to the cell of its nearest nucleus in Euclidean
    distance; exact ties go to the nucleus with the lowest index. Cell
    identifiers are nucleus indices.
    """

    domain: Domain
    nuclei: np.ndarray

    def __post_init__(self):
        nuclei = np.atleast_2d(np.asarray(self.nuclei, dtype=np.float64))
        if nuclei.shape[0] < 1 or nuclei.shape[1] != self.domain.ndim:
            raise ValueError("nuclei must form a non-empty (K, d) matrix matching the domain")
        if not self.domain.contains(nuclei).all():
            raise ValueError("all nuclei must lie inside the domain")
        nuclei = nuclei.copy()
        nuclei.flags.writeable = False
        object.__setattr__(self, "nuclei", nuclei)

    @property
    def n_cells(self) -> int:
        return self.nuclei.shape[0]


class _TreeBuilder:
    """Accumulates node arrays while a Mondrian tree is being sampled."""

    def __init__(self, ndim: int):
        self.cut_dim = []
        self.cut_pos = []
        self.cut_time = []
        self.child_lo = []
        self.child_hi = []
        self.box_lower = []
        self.box_upper = []
        self._ndim = ndim

    def new_node(self, lower, upper, time) -> int:
        idx = len(self.cut_dim)
        self.cut_dim.append(-1)
        self.cut_pos.append(np.nan)
        self.cut_time.append(time)
        self.child_lo.append(-1)
        self.child_hi.append(-1)
        self.box_lower.append(np.asarray(lower, dtype=np.float64))
        self.box_upper.append(np.asarray(upper, dtype=np.float64))
        return idx

    def set_cut(self, node, dim, pos, time, lo_child, hi_child) -> None:
        self.cut_dim[node] = dim
        self.cut_pos[node] = pos
        self.cut_time[node] = time
        self.child_lo[node] = lo_child
        self.child_hi[node] = hi_child

    def build(self, domain: Domain) -> MondrianTree:
        return MondrianTree(
            domain=domain,
            cut_dim=np.asarray(self.cut_dim, dtype=np.int32),
            cut_pos=np.asarray(self.cut_pos, dtype=np.float64),
            cut_time=np.asarray(self.cut_time, dtype=np.float64),
            child_lo=np.asarray(self.child_lo, dtype=np.int32),
            child_hi=np.asarray(self.child_hi, dtype=np.int32),
            box_lower=np.vstack(self.box_lower),
            box_upper=np.vstack(self.box_upper),
        )


def _pick_dimension(rng, sides, total) -> int:
    # Dimension chosen with probability proportional to its side length.
    u = rng.random() * total
    dim = int(np.searchsorted(np.cumsum(sides), u, side="right"))
    return min(dim, sides.size - 1)


def sample_mondrian(domain: Domain, lam: float, rng: np.random.Generator) -> MondrianTree:
    """Sample a data-free Mondrian tree on ``domain`` with cut budget ``lam``.

    Starting from the whole box at time 0, each box draws a waiting time
    from Exp(measure(box)); if the accumulated time stays below ``lam`` the
    box is cut at a uniform position along a dimension chosen proportionally
    to side length, and both halves recurse with the new clock. A budget
    ``lam <= 0`` or a degenerate box yields a leaf without consuming
    randomness.
    """
    if not np.isfinite(lam):
        raise ValueError("lam must be finite")
    builder = _TreeBuilder(domain.ndim)
    root = builder.new_node(domain.lower, domain.upper, 0.0)
    stack = [(root, 0.0)]
    while stack:
        node, tau = stack.pop()
        lower = builder.box_lower[node]
        upper = builder.box_upper[node]
        sides = upper - lower
        mu = float(sides.sum())
        if lam <= 0.0 or mu <= 0.0:
            continue
        t = tau + rng.exponential(1.0 / mu)
        if t >= lam:
            continue
        dim = _pick_dimension(rng, sides, mu)
        pos = rng.uniform(lower[dim], upper[dim])
        hi_lower = lower.copy()
        hi_lower[dim] = pos
        lo_upper = upper.copy()
        lo_upper[dim] = pos
        hi_child = builder.new_node(hi_lower, upper, t)
        lo_child = builder.new_node(lower, lo_upper, t)
        builder.set_cut(node, dim, pos, t, lo_child, hi_child)
        # Depth-first, greater-side subtree first: push it last.
        stack.append((lo_child, t))
        stack.append((hi_child, t))
    return builder.build(domain)


def sample_trained_mondrian(
    domain: Domain, lam: float, points, rng: np.random.Generator
) -> MondrianTree:
    """Sample a Mondrian tree conditioned on measured point locations.

    Identical to :func:`sample_mondrian` except that each box's clock rate
    and cut location are drawn on the smallest sub-box enclosing the points
    that fall in it. Cuts therefore always land strictly between measured
    coordinates, so every resulting cell keeps at least one point; boxes
    holding at most one point (or only coincident points) become leaves.
    """
    if not np.isfinite(lam):
        raise ValueError("lam must be finite")
    coords = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if coords.shape[1] != domain.ndim:
        raise ValueError("points dimension does not match the domain")
    if not domain.contains(coords).all():
        raise OutOfDomainError("conditioning points must lie inside the domain")
    builder = _TreeBuilder(domain.ndim)
    root = builder.new_node(domain.lower, domain.upper, 0.0)
    stack = [(root, 0.0, np.arange(coords.shape[0]))]
    while stack:
        node, tau, idx = stack.pop()
        if lam <= 0.0 or idx.size <= 1:
            continue
        local = coords[idx]
        star_lower = local.min(axis=0)
        star_upper = local.max(axis=0)
        sides = star_upper - star_lower
        mu = float(sides.sum())
        if mu <= 0.0:
            continue  # all points coincide
        t = tau + rng.exponential(1.0 / mu)
        if t >= lam:
            continue
        dim = _pick_dimension(rng, sides, mu)
        pos = rng.uniform(star_lower[dim], star_upper[dim])
        lower = builder.box_lower[node]
        upper = builder.box_upper[node]
        hi_lower = lower.copy()
        hi_lower[dim] = pos
        lo_upper = upper.copy()
        lo_upper[dim] = pos
        hi_child = builder.new_node(hi_lower, upper, t)
        lo_child = builder.new_node(lower, lo_upper, t)
        builder.set_cut(node, dim, pos, t, lo_child, hi_child)
        below = local[:, dim] < pos
        stack.append((lo_child, t, idx[below]))
        stack.append((hi_child, t, idx[~below]))
    return builder.build(domain)


def sample_voronoi(
    domain: Domain,
    lam: float,
    rng: np.random.Generator,
    data: ConditioningData | None = None,
    data_cond: bool = True,
) -> VoronoiPartition:
    """Sample a Voronoi tessellation with a Poisson(``lam``) nucleus count.

    With ``data_cond`` the nuclei are drawn without replacement from the
    distinct measured locations (count clamped to [1, #distinct]), which
    guarantees every cell contains at least one measured point. Otherwise
    nuclei are uniform over the domain and the count is only clamped below
    at 1.
    """
    if not (np.isfinite(lam) and lam >= 0):
        raise ValueError("lam must be finite and non-negative")
    if data_cond:
        if data is None:
            raise ValueError("data-conditioned Voronoi sampling needs conditioning data")
        if not domain.contains(data.points).all():
            raise OutOfDomainError("conditioning points must lie inside the domain")
        # Duplicate coordinates would produce cells emptied by the tie rule,
        # so nuclei are drawn from the distinct locations only.
        unique_pts = np.unique(data.points, axis=0)
        k = int(np.clip(rng.poisson(lam), 1, unique_pts.shape[0]))
        chosen = rng.choice(unique_pts.shape[0], size=k, replace=False)
        nuclei = unique_pts[np.sort(chosen)]
    else:
        k = max(1, int(rng.poisson(lam)))
        nuclei = rng.uniform(domain.lower, domain.upper, size=(k, domain.ndim))
    return VoronoiPartition(domain=domain, nuclei=nuclei)


def _mondrian_cells(tree: MondrianTree, coords: np.ndarray) -> np.ndarray:
    idx = np.zeros(coords.shape[0], dtype=np.int64)
    while True:
        dims = tree.cut_dim[idx]
        active = dims >= 0
        if not active.any():
            return idx
        rows = np.flatnonzero(active)
        nodes = idx[rows]
        coord = coords[rows, dims[rows]]
        go_hi = coord >= tree.cut_pos[nodes]
        idx[rows] = np.where(go_hi, tree.child_hi[nodes], tree.child_lo[nodes])


def _voronoi_cells(part: VoronoiPartition, coords: np.ndarray) -> np.ndarray:
    out = np.empty(coords.shape[0], dtype=np.int64)
    for start in range(0, coords.shape[0], _ASSIGN_BLOCK):
        block = coords[start : start + _ASSIGN_BLOCK]
        d2 = cdist(block, part.nuclei, metric="sqeuclidean")
        # argmin returns the first minimum, which is the lowest-index tie rule
        out[start : start + _ASSIGN_BLOCK] = np.argmin(d2, axis=1)
    return out


def cell_ids(partition, coords) -> np.ndarray:
    """Vectorised cell lookup for an (N, d) coordinate matrix."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    domain = partition.domain
    inside = domain.contains(coords)
    if not inside.all():
        bad = coords[~inside][0]
        raise OutOfDomainError(f"location {bad.tolist()} lies outside the domain")
    if isinstance(partition, MondrianTree):
        return _mondrian_cells(partition, coords)
    if isinstance(partition, VoronoiPartition):
        return _voronoi_cells(partition, coords)
    raise TypeError(f"not a partition: {type(partition).__name__}")


def cell_id(partition, x) -> int:
    """Cell identifier of a single location."""
    return int(cell_ids(partition, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])


def group_by_cell(partition, points) -> dict:
    """Group row indices of ``points`` by the cell that contains them."""
    coords = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ids = cell_ids(partition, coords)
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    cells, starts = np.unique(sorted_ids, return_index=True)
    bounds = np.append(starts, sorted_ids.size)
    return {
        int(cells[i]): order[bounds[i] : bounds[i + 1]] for i in range(cells.size)
    }


@dataclass(frozen=True)
class Forest:
    """A fixed-size collection of independent partitions of one domain."""

    kind: str
    domain: Domain
    partitions: tuple
    lam: float
    alpha: float
    trained: bool
    seed: int

    @property
    def n_partitions(self) -> int:
        return len(self.partitions)


def sample_forest(
    kind: str,
    domain: Domain,
    n_partitions: int,
    alpha: float,
    data: ConditioningData | None = None,
    data_cond: bool = True,
    seed: int = 0,
) -> Forest:
    """Sample ``n_partitions`` independent partitions of ``domain``.

    Per-partition random streams are spawned from a single seed sequence, so
    partition ``k`` depends only on (seed, k). This makes forests prefix
    stable: resampling with a smaller ``n_partitions`` reproduces the leading
    partitions exactly, and per-partition work can run on any thread.
    """
    if kind not in ("mondrian", "voronoi"):
        raise ValueError("kind must be 'mondrian' or 'voronoi'")
    if n_partitions < 1:
        raise ValueError("n_partitions must be at least 1")
    _check_alpha(alpha)
    if kind == "mondrian":
        lam = lambda_mondrian(alpha, domain)
    else:
        if data is None:
            raise ValueError("voronoi forests need conditioning data to set their rate")
        lam = lambda_voronoi(alpha, len(data))
    trained = bool(data_cond and data is not None)
    streams = np.random.SeedSequence(seed).spawn(n_partitions)
    parts = []
    for child in streams:
        rng = np.random.default_rng(child)
        if kind == "mondrian":
            if trained:
                parts.append(sample_trained_mondrian(domain, lam, data.points, rng))
            else:
                parts.append(sample_mondrian(domain, lam, rng))
        else:
            parts.append(sample_voronoi(domain, lam, rng, data=data, data_cond=trained))
    return Forest(
        kind=kind,
        domain=domain,
        partitions=tuple(parts),
        lam=float(lam),
        alpha=float(alpha),
        trained=trained,
        seed=int(seed),
    )


def _tree_record(tree: MondrianTree) -> dict:
    # Children always have larger indices than their parent, so walking the
    # node list backwards builds every child's record before it is needed.
    records: dict[int, dict] = {}
    for node in range(tree.n_nodes - 1, -1, -1):
        rec = {
            "box": {
                "lower": tree.box_lower[node].tolist(),
                "upper": tree.box_upper[node].tolist(),
            },
            "time": float(tree.cut_time[node]),
        }
        if tree.cut_dim[node] >= 0:
            rec["cut_dim"] = int(tree.cut_dim[node])
            rec["cut_pos"] = float(tree.cut_pos[node])
            rec["below"] = records.pop(int(tree.child_lo[node]))
            rec["at_or_above"] = records.pop(int(tree.child_hi[node]))
        records[node] = rec
    return records[0]


def forest_to_json(forest: Forest) -> str:
    """Serialise a forest to a versioned JSON document.

    Mondrian trees appear as nested cut records and Voronoi partitions as
    nucleus coordinate lists; identical forests serialise to identical
    strings, which is what reproducibility checks compare.
    """
    parts = []
    for part in forest.partitions:
        if isinstance(part, MondrianTree):
            parts.append({"tree": _tree_record(part)})
        else:
            parts.append({"nuclei": part.nuclei.tolist()})
    doc = {
        "format": "esikit-forest",
        "version": 1,
        "kind": forest.kind,
        "lambda": forest.lam,
        "alpha": forest.alpha,
        "trained": forest.trained,
        "seed": forest.seed,
        "domain": {
            "lower": forest.domain.lower.tolist(),
            "upper": forest.domain.upper.tolist(),
        },
        "n_partitions": forest.n_partitions,
        "partitions": parts,
    }
    return json.dumps(doc, sort_keys=True)
