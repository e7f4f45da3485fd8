"""Ensemble estimation engine.

For every partition in a forest, targets are grouped by cell and estimated
from the conditioning points sharing that cell, producing an (N_targets,
n_partitions) sample cube. Cells without conditioning data contribute NaN
entries. Aggregating the cube across partitions yields the estimate; the
cube itself stays available for re-aggregation and precision analysis.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import aggregation
from .errors import UnsupportedCombination
from .geometry import (
    ConditioningData,
    Domain,
    GridSpec,
    LocationSet,
    as_conditioning,
    as_location_set,
    enclosing_domain,
    flatten_grid,
)
from .interpolators import EPS_COINCIDE, IdwParams, KrigingParams, idw_estimate, kriging_estimate
from .partition import Forest, cell_ids, sample_forest
from .precision import LossFunction, mse_cube, mse_loss

__all__ = [
    "EsiConfig",
    "EstimationResult",
    "generate_cube",
    "esi_griddata",
    "esi_nongriddata",
    "re_estimate",
    "DEFAULT_PAD_FRACTION",
]

DEFAULT_PAD_FRACTION = 1e-9

_TARGET_BLOCK = 4096  # rows per block in the vectorised IDW fill

_LOCAL_KINDS = {"idw": IdwParams, "kriging": KrigingParams}


@dataclass
class EsiConfig:
    """Settings of one ensemble estimation run.

    ``p_process`` picks the partition family, ``n_partitions`` the ensemble
    size, ``alpha`` in [0, 1) the partition granularity and ``data_cond``
    whether partitions are conditioned on the measured locations. ``local``
    selects and parameterises the in-cell voter. ``agg_function`` reduces
    the sample cube to the estimate and ``seed`` fixes all randomness.
    """

    p_process: str = "mondrian"
    n_partitions: int = 500
    alpha: float = 0.8
    data_cond: bool = True
    local: IdwParams | KrigingParams = field(default_factory=IdwParams)
    agg_function: object = None
    seed: int = 0

    def __post_init__(self):
        if self.p_process not in ("mondrian", "voronoi"):
            raise ValueError("p_process must be 'mondrian' or 'voronoi'")
        if not (isinstance(self.n_partitions, (int, np.integer)) and self.n_partitions >= 1):
            raise ValueError("n_partitions must be a positive integer")
        if not (np.isfinite(self.alpha) and 0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must lie in [0, 1)")
        if not isinstance(self.local, (IdwParams, KrigingParams)):
            raise ValueError("local must be IdwParams or KrigingParams")
        if isinstance(self.local, KrigingParams) and self.p_process == "voronoi":
            raise UnsupportedCombination(
                "kriging voters are only available with mondrian partitions"
            )
        if self.agg_function is None:
            self.agg_function = aggregation.mean
        elif isinstance(self.agg_function, str):
            self.agg_function = aggregation.resolve(self.agg_function, seed=self.seed)
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.n_partitions = int(self.n_partitions)
        self.seed = int(self.seed)

    def to_dict(self) -> dict:
        """Flat JSON-friendly view of the configuration."""
        out = {
            "p_process": self.p_process,
            "n_partitions": self.n_partitions,
            "alpha": float(self.alpha),
            "data_cond": bool(self.data_cond),
            "seed": self.seed,
            "agg_function": aggregation.agg_name(self.agg_function),
        }
        if isinstance(self.local, IdwParams):
            out["local_interpolator"] = "idw"
            out["exponent"] = float(self.local.exponent)
        else:
            out["local_interpolator"] = "kriging"
            out["model"] = self.local.model
            out["nugget"] = float(self.local.nugget)
            out["range"] = float(self.local.range)
            out["sill"] = float(self.local.sill)
        return out

    @staticmethod
    def from_dict(doc: dict) -> "EsiConfig":
        doc = dict(doc)
        kind = doc.pop("local_interpolator", "idw")
        if kind == "idw":
            local = IdwParams(exponent=doc.pop("exponent", 2.0))
        elif kind == "kriging":
            local = KrigingParams(
                model=doc.pop("model", "spherical"),
                nugget=doc.pop("nugget", 0.1),
                range=doc.pop("range", 5000.0),
                sill=doc.pop("sill", 1.0),
            )
        else:
            raise ValueError(f"unknown local interpolator {kind!r}")
        return EsiConfig(local=local, **doc)


def _apply_agg(fn, cube: np.ndarray, grid: GridSpec | None) -> np.ndarray:
    if getattr(fn, "wants_grid_shape", False):
        shape = grid.shape if grid is not None else None
        return np.asarray(fn(cube, grid_shape=shape), dtype=np.float64)
    return np.asarray(fn(cube), dtype=np.float64)


class EstimationResult:
    """A sample cube together with its current aggregated estimate."""

    def __init__(
        self,
        cube: np.ndarray,
        config: EsiConfig,
        targets: LocationSet,
        grid: GridSpec | None = None,
        domain: Domain | None = None,
        diagnostics: dict | None = None,
    ):
        cube = np.asarray(cube, dtype=np.float64)
        cube.flags.writeable = False
        self.cube = cube
        self.config = config
        self.targets = targets
        self.grid = grid
        self.domain = domain
        self.diagnostics = dict(diagnostics or {})
        self._precision_cache: dict = {}
        self._estimate = _apply_agg(config.agg_function, cube, grid)

    @property
    def estimate(self) -> np.ndarray:
        """Current aggregated estimate, flat (one entry per target)."""
        return self._estimate

    @property
    def n_targets(self) -> int:
        return self.cube.shape[0]

    @property
    def n_partitions(self) -> int:
        return self.cube.shape[1]

    def _shaped(self, flat: np.ndarray) -> np.ndarray:
        if self.grid is None:
            return flat
        if flat.ndim == 1 and flat.size == self.grid.size:
            return flat.reshape(self.grid.shape)
        if flat.ndim == 2 and flat.shape[0] == self.grid.size:
            return flat.reshape(*self.grid.shape, flat.shape[1])
        return flat

    def esi_samples(self) -> np.ndarray:
        """The sample cube; gridded results are shaped (*grid shape, m)."""
        return self._shaped(self.cube)

    def estimation(self) -> np.ndarray:
        """The current estimate, reshaped to the grid when one is attached."""
        return self._shaped(self._estimate)

    def re_estimate(self, agg_function) -> np.ndarray:
        """Re-aggregate the stored cube, replacing the estimate in place."""
        if isinstance(agg_function, str):
            agg_function = aggregation.resolve(agg_function, seed=self.config.seed)
        self._estimate = _apply_agg(agg_function, self.cube, self.grid)
        self._precision_cache.clear()
        return self.estimation()

    def precision(self, loss_function: LossFunction | None = None) -> np.ndarray:
        """Per-location precision of the estimate under an aggregating loss.

        Defaults to mean squared deviation of the ensemble members from the
        estimate. Values are cached per loss object until ``re_estimate``.
        """
        if loss_function is None:
            loss_function = mse_loss
        key = id(loss_function)
        if key not in self._precision_cache:
            self._precision_cache[key] = loss_function(self._estimate, self.cube)
        return self._shaped(self._precision_cache[key])

    def precision_cube(self, loss_function: LossFunction | None = None) -> np.ndarray:
        """Elementwise precision with the cube's own shape (identity aggregator)."""
        if loss_function is None:
            loss_function = mse_cube
        if not getattr(loss_function, "is_cube", False):
            raise ValueError("precision_cube needs a loss whose aggregator is identity")
        return self._shaped(loss_function(self._estimate, self.cube))


class IdwCubeBuilder:
    """Vectorised IDW cube fill, reusable across forests on fixed data.

    Distances between targets and conditioning points do not depend on the
    partition, so they are computed once per target block and combined with
    a per-partition cell mask. Weights are normalised by each target's
    nearest non-coincident distance, which keeps large exponents finite;
    rows whose in-cell weights still underflow fall back to the exact
    per-cell computation.
    """

    def __init__(self, data: ConditioningData, targets: LocationSet, params: IdwParams):
        self.data = data
        self.targets = targets
        self.params = params
        self._blocks = None

    def _block_stats(self):
        if self._blocks is not None:
            return self._blocks
        coords = self.targets.coords
        pts = self.data.points
        blocks = []
        for start in range(0, coords.shape[0], _TARGET_BLOCK):
            t_blk = coords[start : start + _TARGET_BLOCK]
            d = cdist(t_blk, pts)
            coincide = d < EPS_COINCIDE
            d_safe = np.where(coincide, np.inf, d)
            d_min = d_safe.min(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = d_min[:, None] / d_safe
            ratio = np.where(np.isfinite(ratio), ratio, 0.0)
            weights = ratio**self.params.exponent
            blocks.append((start, t_blk, weights, coincide))
        self._blocks = blocks
        return blocks

    def fill(self, forest: Forest, n_threads: int = 1) -> np.ndarray:
        values = self.data.values
        cube = np.full((len(self.targets), forest.n_partitions), np.nan)
        point_cells = [cell_ids(part, self.data.points) for part in forest.partitions]
        self._block_stats()  # materialise before any worker touches it

        def fill_column(k: int) -> None:
            part = forest.partitions[k]
            p_cells = point_cells[k]
            for start, t_blk, weights, coincide in self._block_stats():
                t_cells = cell_ids(part, t_blk)
                mask = t_cells[:, None] == p_cells[None, :]
                w = weights * mask
                den = w.sum(axis=1)
                with np.errstate(invalid="ignore", divide="ignore"):
                    col = (w @ values) / den
                # Non-empty cells whose weights all underflowed: exact redo.
                stuck = np.flatnonzero((den == 0.0) & mask.any(axis=1))
                for row in stuck:
                    in_cell = np.flatnonzero(mask[row])
                    col[row] = idw_estimate(
                        t_blk[row : row + 1],
                        self.data.points[in_cell],
                        values[in_cell],
                        self.params,
                    )[0]
                # Coinciding targets copy the sample's value exactly.
                hits = coincide & mask
                exact = np.flatnonzero(hits.any(axis=1))
                if exact.size:
                    col[exact] = values[np.argmax(hits[exact], axis=1)]
                cube[start : start + t_blk.shape[0], k] = col

        if n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                list(pool.map(fill_column, range(forest.n_partitions)))
        else:
            for k in range(forest.n_partitions):
                fill_column(k)
        return cube


def _group_indices(ids: np.ndarray) -> dict:
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    cells, starts = np.unique(sorted_ids, return_index=True)
    bounds = np.append(starts, sorted_ids.size)
    return {int(cells[i]): order[bounds[i] : bounds[i + 1]] for i in range(cells.size)}


def _fill_kriging(
    forest: Forest,
    data: ConditioningData,
    targets: LocationSet,
    params: KrigingParams,
    n_threads: int,
    stats: dict,
) -> np.ndarray:
    coords = targets.coords
    cube = np.full((len(targets), forest.n_partitions), np.nan)

    def fill_column(k: int) -> None:
        part = forest.partitions[k]
        point_groups = _group_indices(cell_ids(part, data.points))
        target_groups = _group_indices(cell_ids(part, coords))
        for cell, t_idx in target_groups.items():
            p_idx = point_groups.get(cell)
            if p_idx is None:
                continue
            cube[t_idx, k] = kriging_estimate(
                coords[t_idx], data.points[p_idx], data.values[p_idx], params, stats
            )

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(fill_column, range(forest.n_partitions)))
    else:
        for k in range(forest.n_partitions):
            fill_column(k)
    return cube


def generate_cube(
    forest: Forest,
    data: ConditioningData,
    targets,
    local: IdwParams | KrigingParams,
    n_threads: int = 1,
    stats: dict | None = None,
) -> np.ndarray:
    """Evaluate the in-cell voter over every partition of the forest.

    Returns an (N_targets, n_partitions) float cube, row-major over the
    targets, with NaN wherever a target's cell holds no conditioning data.
    Column k depends only on partition k, so dropping a partition removes
    exactly one column.
    """
    data = as_conditioning(data)
    targets = as_location_set(targets)
    if isinstance(local, KrigingParams) and forest.kind == "voronoi":
        raise UnsupportedCombination(
            "kriging voters are only available with mondrian partitions"
        )
    if stats is None:
        stats = {}
    if isinstance(local, IdwParams):
        return IdwCubeBuilder(data, targets, local).fill(forest, n_threads)
    if isinstance(local, KrigingParams):
        return _fill_kriging(forest, data, targets, local, n_threads, stats)
    raise ValueError("local must be IdwParams or KrigingParams")


def _run(data, targets: LocationSet, config: EsiConfig, grid, n_threads) -> EstimationResult:
    data = as_conditioning(data)
    if data.ndim != targets.ndim:
        raise ValueError("conditioning data and targets must share the same dimension")
    if isinstance(config.local, KrigingParams) and data.ndim > 3:
        raise UnsupportedCombination("kriging voters support at most three dimensions")
    domain = enclosing_domain(
        LocationSet(data.points), targets, pad_fraction=DEFAULT_PAD_FRACTION
    )
    forest = sample_forest(
        config.p_process,
        domain,
        config.n_partitions,
        config.alpha,
        data=data,
        data_cond=config.data_cond,
        seed=config.seed,
    )
    stats: dict = {}
    cube = generate_cube(forest, data, targets, config.local, n_threads, stats)
    stats["missing_entries"] = int(np.isnan(cube).sum())
    return EstimationResult(
        cube=cube,
        config=config,
        targets=targets,
        grid=grid,
        domain=domain,
        diagnostics=stats,
    )


def esi_nongriddata(data, targets, config: EsiConfig, n_threads: int = 1) -> EstimationResult:
    """Ensemble estimation at an explicit list of target locations."""
    return _run(data, as_location_set(targets), config, None, n_threads)


def esi_griddata(data, grid, config: EsiConfig, n_threads: int = 1) -> EstimationResult:
    """Ensemble estimation over a rectilinear grid.

    Exactly equivalent to flattening the grid row-major, estimating the
    explicit locations and reshaping the outputs.
    """
    if not isinstance(grid, GridSpec):
        grid = GridSpec(tuple(grid))
    return _run(data, flatten_grid(grid), config, grid, n_threads)


def re_estimate(result: EstimationResult, agg_function) -> np.ndarray:
    """Re-aggregate a result's cube with a different aggregation function."""
    return result.re_estimate(agg_function)
