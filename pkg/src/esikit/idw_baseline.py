"""Radius-limited global inverse-distance weighting, the non-ensemble baseline.

Each target is estimated from every conditioning point within a fixed
radius, weighted by inverse distance to the target's nearest neighbour
(same weighting as the ensemble's IDW voter). Targets with no neighbour in
range stay missing. A k-d tree is built once per call for the radius
queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import GridSpec, LocationSet, as_conditioning, as_location_set, flatten_grid
from .interpolators import EPS_COINCIDE

__all__ = ["GlobalIdwParams", "IdwResult", "idw_griddata", "idw_nongriddata"]


@dataclass(frozen=True)
class GlobalIdwParams:
    """Neighbourhood radius and distance exponent of the IDW baseline."""

    radius: float
    exponent: float = 2.0

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError("radius must be positive")
        if not (np.isfinite(self.exponent) and self.exponent >= 0):
            raise ValueError("exponent must be finite and >= 0")

    def to_dict(self) -> dict:
        return {"radius": float(self.radius), "exponent": float(self.exponent)}


class IdwResult:
    """Estimate vector of a baseline run, grid-aware like the ensemble result."""

    def __init__(self, estimate, targets: LocationSet, params: GlobalIdwParams,
                 grid: GridSpec | None = None):
        estimate = np.asarray(estimate, dtype=np.float64)
        estimate.flags.writeable = False
        self.estimate = estimate
        self.targets = targets
        self.params = params
        self.grid = grid

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.estimate).sum())

    def estimation(self) -> np.ndarray:
        if self.grid is not None:
            return self.estimate.reshape(self.grid.shape)
        return self.estimate


def _idw_at(targets, points, values, neighbour_lists, exponent: float) -> np.ndarray:
    """Estimate each target from its listed neighbours; empty list means NaN."""
    out = np.full(len(neighbour_lists), np.nan)
    for j, idx in enumerate(neighbour_lists):
        if len(idx) == 0:
            continue
        idx = np.asarray(idx, dtype=np.int64)
        d = np.sqrt(((points[idx] - targets[j]) ** 2).sum(axis=1))
        near = d < EPS_COINCIDE
        if near.any():
            out[j] = values[idx[np.argmax(near)]]
            continue
        ratio = d.min() / d
        w = ratio**exponent
        out[j] = (w @ values[idx]) / w.sum()
    return out


def idw_nongriddata(data, targets, params: GlobalIdwParams) -> IdwResult:
    """Baseline IDW at explicit target locations."""
    data = as_conditioning(data)
    targets = as_location_set(targets)
    if data.ndim != targets.ndim:
        raise ValueError("conditioning data and targets must share the same dimension")
    tree = cKDTree(data.points)
    neighbours = tree.query_ball_point(targets.coords, params.radius)
    estimate = _idw_at(targets.coords, data.points, data.values, neighbours, params.exponent)
    return IdwResult(estimate, targets, params)


def idw_griddata(data, grid, params: GlobalIdwParams) -> IdwResult:
    """Baseline IDW over a rectilinear grid (flatten, estimate, reshape)."""
    if not isinstance(grid, GridSpec):
        grid = GridSpec(tuple(grid))
    targets = flatten_grid(grid)
    result = idw_nongriddata(data, targets, params)
    return IdwResult(result.estimate, targets, params, grid=grid)
