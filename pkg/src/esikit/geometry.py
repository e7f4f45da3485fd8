"""Axis-aligned domains, grids and measurement containers.

All containers are immutable after construction: arrays are copied on the
way in and marked read-only, so instances can be shared freely between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Domain",
    "GridSpec",
    "LocationSet",
    "ConditioningData",
    "measure",
    "enclosing_domain",
    "flatten_grid",
    "as_location_set",
    "as_conditioning",
]


def _frozen_array(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box given by per-dimension lower and upper bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _frozen_array(np.atleast_1d(self.lower))
        upper = _frozen_array(np.atleast_1d(self.upper))
        if lower.ndim != 1 or upper.ndim != 1:
            raise ValueError("domain bounds must be one-dimensional")
        if lower.shape != upper.shape or lower.size == 0:
            raise ValueError("domain bounds must be non-empty and equally sized")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("domain bounds must be finite")
        if np.any(upper < lower):
            raise ValueError("each upper bound must be >= its lower bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def ndim(self) -> int:
        return self.lower.size

    def side_lengths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, coords) -> np.ndarray:
        """Boolean array telling which rows of ``coords`` fall inside the box."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        if coords.shape[1] != self.ndim:
            raise ValueError(
                f"coordinates have {coords.shape[1]} columns, domain has {self.ndim}"
            )
        return np.all((coords >= self.lower) & (coords <= self.upper), axis=1)


def measure(box: Domain) -> float:
    """Linear measure of a box: the sum of its side lengths.

    This is the rate that drives the exponential cut clock of Mondrian
    sampling, so a degenerate box (all sides zero) has measure 0 and never
    gets cut.
    """
    return float(np.sum(box.side_lengths()))


@dataclass(frozen=True)
class GridSpec:
    """Rectilinear grid described by one strictly increasing vector per axis.

    The grid's points are the cartesian product of the axes in row-major
    (last axis fastest) order, matching ``np.meshgrid(..., indexing='ij')``.
    """

    axes: tuple

    def __post_init__(self):
        axes = []
        for i, ax in enumerate(self.axes):
            arr = _frozen_array(np.atleast_1d(ax))
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"grid axis {i} must be a non-empty vector")
            if not np.isfinite(arr).all():
                raise ValueError(f"grid axis {i} contains non-finite values")
            if arr.size > 1 and not np.all(np.diff(arr) > 0):
                raise ValueError(f"grid axis {i} must be strictly increasing")
            axes.append(arr)
        if not axes:
            raise ValueError("a grid needs at least one axis")
        object.__setattr__(self, "axes", tuple(axes))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class LocationSet:
    """A set of target locations as an (N, d) coordinate matrix."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] == 0:
            raise ValueError("locations must form a non-empty (N, d) matrix")
        if not np.isfinite(coords).all():
            raise ValueError("locations must be finite")
        object.__setattr__(self, "coords", _frozen_array(coords))

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def ndim(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class ConditioningData:
    """Measured samples: an (N, d) coordinate matrix plus one value per row."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        values = np.asarray(self.values, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("conditioning points must form a non-empty (N, d) matrix")
        if values.shape != (points.shape[0],):
            raise ValueError("need exactly one value per conditioning point")
        if not np.isfinite(points).all():
            raise ValueError("conditioning points must be finite")
        if not np.isfinite(values).all():
            raise ValueError("conditioning values must be finite (no missing data)")
        object.__setattr__(self, "points", _frozen_array(points))
        object.__setattr__(self, "values", _frozen_array(values))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def ndim(self) -> int:
        return self.points.shape[1]


def as_location_set(obj) -> LocationSet:
    """Coerce a LocationSet, GridSpec or raw coordinate array to locations."""
    if isinstance(obj, LocationSet):
        return obj
    if isinstance(obj, GridSpec):
        return flatten_grid(obj)
    return LocationSet(np.asarray(obj))


def as_conditioning(obj, values=None) -> ConditioningData:
    """Coerce ConditioningData or a (points, values) pair."""
    if isinstance(obj, ConditioningData):
        if values is not None:
            raise ValueError("values given twice")
        return obj
    if values is None:
        points, values = obj
    else:
        points = obj
    return ConditioningData(np.asarray(points), np.asarray(values))


def enclosing_domain(points, targets, pad_fraction: float = 1e-9) -> Domain:
    """Smallest padded box containing both point sets.

    Each side is inflated by ``pad_fraction`` times its length on both ends;
    degenerate sides (zero length) are inflated by ``pad_fraction`` times one
    absolute unit so the box always has positive measure around the data.
    """
    if not (np.isfinite(pad_fraction) and pad_fraction >= 0):
        raise ValueError("pad_fraction must be a non-negative finite number")
    pts = as_location_set(points).coords
    tgt = as_location_set(targets).coords
    if pts.shape[1] != tgt.shape[1]:
        raise ValueError("points and targets must share the same dimension")
    stacked = np.vstack([pts, tgt])
    lower = stacked.min(axis=0)
    upper = stacked.max(axis=0)
    span = upper - lower
    pad = pad_fraction * np.where(span > 0, span, 1.0)
    return Domain(lower - pad, upper + pad)


def flatten_grid(grid: GridSpec) -> LocationSet:
    """Expand a grid into its explicit (N, d) coordinate list, row-major."""
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    coords = np.column_stack([m.ravel(order="C") for m in mesh])
    return LocationSet(coords)
