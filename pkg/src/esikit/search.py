"""Cross-validated hyperparameter search over configuration grids.

Scenarios are the strict cartesian product of the candidate lists, scored
by k-fold cross validation on the conditioning points: per fold, the
held-out points are estimated from the remaining ones with the scenario's
configuration, and the scenario's score is the mean fold error. Fold
membership is one seeded shuffle shared by every scenario so scores stay
comparable.

Per-scenario randomness is keyed by a digest of the scenario's parameter
values (not its position), so reordering candidate lists relabels the
records without changing any score. Scenarios that differ only in their
aggregation function share the same partitions and sample cube, because
aggregation happens after the cube is built.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree

from . import aggregation
from .engine import EsiConfig, IdwCubeBuilder, generate_cube
from .errors import UnsupportedCombination
from .geometry import ConditioningData, GridSpec, LocationSet, as_conditioning, as_location_set, enclosing_domain
from .idw_baseline import GlobalIdwParams, _idw_at
from .interpolators import IdwParams, KrigingParams
from .partition import sample_forest

__all__ = [
    "SearchGrid",
    "IdwSearchGrid",
    "SearchRecord",
    "SearchResult",
    "CvErrorReport",
    "esi_hparams_search",
    "idw_hparams_search",
]

#: A scenario whose held-out predictions are missing more often than this
#: fraction scores an infinite cv error instead of a partial one.
MAX_MISSING_FRACTION = 0.1

_METRICS = {
    "mse": lambda err: float(np.mean(err**2)),
    "mae": lambda err: float(np.mean(np.abs(err))),
}


def _digest(*parts) -> int:
    text = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class SearchGrid:
    """Candidate lists for an ensemble-estimation search.

    ``p_process`` and ``local_interpolator`` are fixed; the remaining fields
    are candidate lists expanded as a cartesian product. ``data_cond``
    defaults to both settings for voronoi partitions and to conditioned
    only for mondrian. ``agg_function`` maps selector names to callables
    and defaults to the mean.
    """

    p_process: str = "mondrian"
    local_interpolator: str = "idw"
    n_partitions: tuple = (500,)
    alpha: tuple = (0.8,)
    data_cond: tuple | None = None
    exponent: tuple = (2.0,)
    model: tuple = ("spherical",)
    nugget: tuple = (0.1,)
    range: tuple = (5000.0,)
    sill: tuple = (1.0,)
    agg_function: dict | None = None


@dataclass(frozen=True)
class IdwSearchGrid:
    """Candidate lists for the plain radius-limited IDW baseline."""

    radius: tuple = (1.0,)
    exponent: tuple = (2.0,)


@dataclass(frozen=True)
class SearchRecord:
    """One scored scenario: its runnable parameters and cv error."""

    params: object
    cv_error: float
    result_data_index: int
    agg: str = ""


@dataclass(frozen=True)
class CvErrorReport:
    """Plot-ready summary of a search: error histogram plus per-scenario series."""

    bin_edges: np.ndarray
    counts: np.ndarray
    series: np.ndarray


@dataclass(frozen=True)
class SearchResult:
    """All scored scenarios of one search, in expansion order."""

    records: tuple
    k: int
    metric: str
    seed: int

    def best_result(self):
        """Parameters of the lowest-error scenario (ties: lowest index).

        The returned object feeds straight back into the matching
        estimation entry point.
        """
        errors = np.asarray([r.cv_error for r in self.records])
        return self.records[int(np.argmin(errors))].params

    def cv_error_report(self) -> CvErrorReport:
        """Histogram and series of the cv errors, ready for plotting.

        Non-finite errors (from scenarios exceeding the missing-prediction
        budget) land in one extra overflow bin so the counts always sum to
        the record count.
        """
        series = np.asarray([r.cv_error for r in self.records], dtype=np.float64)
        finite = series[np.isfinite(series)]
        n_bins = max(1, math.ceil(math.sqrt(series.size)))
        if finite.size:
            counts, edges = np.histogram(finite, bins=n_bins)
        else:
            counts, edges = np.zeros(n_bins, dtype=np.int64), np.linspace(0.0, 1.0, n_bins + 1)
        overflow = series.size - finite.size
        if overflow:
            counts = np.append(counts, overflow)
            edges = np.append(edges, np.inf)
        return CvErrorReport(bin_edges=edges, counts=counts, series=series)


def _make_folds(n: int, k: int, seed: int) -> list:
    if k == -1:
        k = n
    if not (2 <= k <= n):
        raise ValueError(f"k must be -1 or between 2 and the sample count ({n}); got {k}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF01D5]))
    perm = rng.permutation(n)
    return [fold for fold in np.array_split(perm, k)]


def _metric_fn(metric: str):
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}; got {metric!r}")
    return _METRICS[metric]


def _scenario_error(fold_errors: list, n_missing: int, n_total: int) -> float:
    if n_total and n_missing / n_total > MAX_MISSING_FRACTION:
        return float("inf")
    errors = np.asarray(fold_errors, dtype=np.float64)
    valid = errors[np.isfinite(errors)]
    if valid.size == 0:
        return float("inf")
    return float(valid.mean())


def _expand_esi(grid: SearchGrid):
    """Expand a grid into scenario tuples in deterministic product order.

    Nesting order (outer to inner): data_cond, n_partitions, alpha, local
    parameters, aggregation. Scenarios sharing everything but aggregation
    are adjacent, which is what lets them share one sample cube.
    """
    if grid.p_process not in ("mondrian", "voronoi"):
        raise ValueError("p_process must be 'mondrian' or 'voronoi'")
    if grid.local_interpolator not in ("idw", "kriging"):
        raise ValueError("local_interpolator must be 'idw' or 'kriging'")
    if grid.local_interpolator == "kriging" and grid.p_process == "voronoi":
        raise UnsupportedCombination(
            "kriging voters are only available with mondrian partitions"
        )
    data_cond = grid.data_cond
    if data_cond is None:
        data_cond = (True, False) if grid.p_process == "voronoi" else (True,)
    aggs = grid.agg_function or {"mean": aggregation.mean}
    if grid.local_interpolator == "idw":
        local_lists = [[("exponent", e) for e in grid.exponent]]
    else:
        local_lists = [
            [("model", m) for m in grid.model],
            [("nugget", n) for n in grid.nugget],
            [("range", r) for r in grid.range],
            [("sill", s) for s in grid.sill],
        ]
    scenarios = []
    for combo in product(
        [("data_cond", dc) for dc in data_cond],
        [("n_partitions", m) for m in grid.n_partitions],
        [("alpha", a) for a in grid.alpha],
        *local_lists,
    ):
        base = dict(combo)
        key = "|".join(
            f"{name}={value!r}"
            for name, value in sorted(
                [("p_process", grid.p_process), ("local", grid.local_interpolator)]
                + list(base.items())
            )
        )
        for agg_label, agg_fn in aggs.items():
            scenarios.append((base, key, agg_label, agg_fn))
    return scenarios


def _scenario_config(grid: SearchGrid, base: dict, agg_fn, seed: int) -> EsiConfig:
    if grid.local_interpolator == "idw":
        local = IdwParams(exponent=base["exponent"])
    else:
        local = KrigingParams(
            model=base["model"], nugget=base["nugget"], range=base["range"], sill=base["sill"]
        )
    return EsiConfig(
        p_process=grid.p_process,
        n_partitions=base["n_partitions"],
        alpha=base["alpha"],
        data_cond=base["data_cond"],
        local=local,
        agg_function=agg_fn,
        seed=seed,
    )


def esi_hparams_search(
    data,
    targets,
    grid: SearchGrid,
    k: int = 10,
    griddata: bool = False,
    seed: int = 0,
    metric: str = "mse",
    n_threads: int = 1,
) -> SearchResult:
    """Score every configuration of ``grid`` by k-fold cross validation.

    ``targets`` (a grid when ``griddata`` is set, explicit locations
    otherwise) only fixes the estimation geometry the winning configuration
    will be used with; fold scoring always happens at held-out conditioning
    points. ``k = -1`` requests leave-one-out. Records appear in expansion
    order; ``best_result()`` of the returned object is an ``EsiConfig``
    ready for the estimation entry points.
    """
    data = as_conditioning(data)
    if griddata and not isinstance(targets, GridSpec):
        targets = GridSpec(tuple(targets))
    score = _metric_fn(metric)
    folds = _make_folds(len(data), k, seed)
    scenarios = _expand_esi(grid)
    n_scen = len(scenarios)
    fold_errors = [[] for _ in range(n_scen)]
    missing = np.zeros(n_scen, dtype=np.int64)
    totals = np.zeros(n_scen, dtype=np.int64)

    # Group adjacent scenarios that share partitions and voter parameters.
    groups: dict[str, list[int]] = {}
    for idx, (_, key, _, _) in enumerate(scenarios):
        groups.setdefault(key, []).append(idx)

    all_idx = np.arange(len(data))
    for fold_no, held_out in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, held_out, assume_unique=True)
        train = ConditioningData(data.points[train_idx], data.values[train_idx])
        held_pts = LocationSet(data.points[held_out])
        truth = data.values[held_out]
        domain = enclosing_domain(LocationSet(train.points), held_pts)
        builders: dict[float, IdwCubeBuilder] = {}
        for key, members in groups.items():
            base = scenarios[members[0]][0]
            fold_seed = _digest(seed, key, "fold", fold_no)
            forest = sample_forest(
                grid.p_process,
                domain,
                base["n_partitions"],
                base["alpha"],
                data=train,
                data_cond=base["data_cond"],
                seed=fold_seed,
            )
            if grid.local_interpolator == "idw":
                builder = builders.get(base["exponent"])
                if builder is None:
                    builder = IdwCubeBuilder(train, held_pts, IdwParams(base["exponent"]))
                    builders[base["exponent"]] = builder
                cube = builder.fill(forest, n_threads)
            else:
                local = KrigingParams(
                    model=base["model"],
                    nugget=base["nugget"],
                    range=base["range"],
                    sill=base["sill"],
                )
                cube = generate_cube(forest, train, held_pts, local, n_threads)
            for idx in members:
                agg_fn = scenarios[idx][3]
                est = np.asarray(agg_fn(cube), dtype=np.float64)
                ok = np.isfinite(est)
                totals[idx] += est.size
                missing[idx] += int(est.size - ok.sum())
                fold_errors[idx].append(score(est[ok] - truth[ok]) if ok.any() else np.nan)

    records = []
    for idx, (base, key, agg_label, agg_fn) in enumerate(scenarios):
        config = _scenario_config(grid, base, agg_fn, _digest(seed, key) % 2**64)
        records.append(
            SearchRecord(
                params=config,
                cv_error=_scenario_error(fold_errors[idx], missing[idx], totals[idx]),
                result_data_index=idx,
                agg=agg_label,
            )
        )
    return SearchResult(records=tuple(records), k=len(folds), metric=metric, seed=int(seed))


def idw_hparams_search(
    data,
    targets,
    grid: IdwSearchGrid,
    k: int = 10,
    griddata: bool = False,
    seed: int = 0,
    metric: str = "mse",
) -> SearchResult:
    """Cross-validated search over the radius-limited IDW baseline.

    Scenarios enumerate radius (outer) by exponent (inner). Held-out points
    with no neighbour inside the radius count as missing; a scenario whose
    missing fraction exceeds the budget scores an infinite error.
    """
    data = as_conditioning(data)
    if griddata:
        if not isinstance(targets, GridSpec):
            GridSpec(tuple(targets))  # validate early; scoring itself is grid-free
    elif targets is not None:
        as_location_set(targets)
    score = _metric_fn(metric)
    folds = _make_folds(len(data), k, seed)
    scenarios = [
        GlobalIdwParams(radius=r, exponent=e) for r, e in product(grid.radius, grid.exponent)
    ]
    fold_errors = [[] for _ in scenarios]
    missing = np.zeros(len(scenarios), dtype=np.int64)
    totals = np.zeros(len(scenarios), dtype=np.int64)

    all_idx = np.arange(len(data))
    for held_out in folds:
        train_idx = np.setdiff1d(all_idx, held_out, assume_unique=True)
        tree = cKDTree(data.points[train_idx])
        held_pts = data.points[held_out]
        truth = data.values[held_out]
        neighbours = {r: tree.query_ball_point(held_pts, r) for r in grid.radius}
        for idx, params in enumerate(scenarios):
            est = _idw_at(
                held_pts,
                data.points[train_idx],
                data.values[train_idx],
                neighbours[params.radius],
                params.exponent,
            )
            ok = np.isfinite(est)
            totals[idx] += est.size
            missing[idx] += int(est.size - ok.sum())
            fold_errors[idx].append(score(est[ok] - truth[ok]) if ok.any() else np.nan)

    records = [
        SearchRecord(
            params=params,
            cv_error=_scenario_error(fold_errors[idx], missing[idx], totals[idx]),
            result_data_index=idx,
        )
        for idx, params in enumerate(scenarios)
    ]
    return SearchResult(records=tuple(records), k=len(folds), metric=metric, seed=int(seed))
