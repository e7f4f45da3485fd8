"""Aggregation functions reducing a sample cube to one estimate per location.

A sample cube is an (N, m) float array with one row per target location and
one column per ensemble member; missing entries are NaN. An aggregation
function maps such a cube to a length-N vector (``identity`` is the one
exception and returns the cube itself, which is how cube-shaped losses are
expressed). All aggregations ignore missing entries and return NaN for rows
with no valid samples.
"""

from __future__ import annotations

import math
import re

import numpy as np

__all__ = [
    "mean",
    "median",
    "Percentile",
    "percentile",
    "map_mode",
    "WeightedAverage",
    "weighted_average",
    "BilateralFilter",
    "bilateral_filter",
    "identity",
    "resolve",
    "agg_name",
]


def _as_cube(samples) -> np.ndarray:
    cube = np.asarray(samples, dtype=np.float64)
    if cube.ndim != 2:
        raise ValueError("expected an (N, m) sample cube")
    return cube


def mean(samples) -> np.ndarray:
    """Per-location average of the valid samples."""
    cube = _as_cube(samples)
    valid = ~np.isnan(cube)
    counts = valid.sum(axis=1)
    totals = np.where(valid, cube, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = totals / counts
    out[counts == 0] = np.nan
    return out


class Percentile:
    """Per-location percentile of the valid samples (linear interpolation)."""

    def __init__(self, q: float):
        q = float(q)
        if not (np.isfinite(q) and 0.0 <= q <= 100.0):
            raise ValueError("percentile must lie in [0, 100]")
        self.q = q

    def __call__(self, samples) -> np.ndarray:
        cube = _as_cube(samples)
        out = np.full(cube.shape[0], np.nan)
        rows = np.flatnonzero((~np.isnan(cube)).any(axis=1))
        if rows.size:
            out[rows] = np.nanpercentile(cube[rows], self.q, axis=1)
        return out

    @property
    def agg_name(self) -> str:
        return f"p{self.q:g}"

    def __repr__(self):
        return f"Percentile({self.q:g})"


def percentile(q: float) -> Percentile:
    """Factory form of :class:`Percentile`."""
    return Percentile(q)


def median(samples) -> np.ndarray:
    """Per-location median; exactly the 50th percentile."""
    return Percentile(50.0)(samples)


def map_mode(samples) -> np.ndarray:
    """Histogram mode of each location's empirical sample distribution.

    Each row is binned into ceil(sqrt(m)) equal-width bins over its own
    value range; the output is the average of the samples falling in the
    densest bin (ties go to the lowest bin). Constant rows return their
    value unchanged.
    """
    cube = _as_cube(samples)
    n_bins = max(1, math.ceil(math.sqrt(cube.shape[1])))
    out = np.full(cube.shape[0], np.nan)
    for j in range(cube.shape[0]):
        row = cube[j]
        vals = row[~np.isnan(row)]
        if vals.size == 0:
            continue
        lo, hi = vals.min(), vals.max()
        if lo == hi:
            out[j] = lo
            continue
        counts, edges = np.histogram(vals, bins=n_bins, range=(lo, hi))
        b = int(np.argmax(counts))
        upper = edges[b + 1]
        if b == n_bins - 1:
            members = vals[(vals >= edges[b]) & (vals <= upper)]
        else:
            members = vals[(vals >= edges[b]) & (vals < upper)]
        out[j] = members.mean()
    return out


class WeightedAverage:
    """Random-weight convex combination of the ensemble members.

    Weights come from a flat Dirichlet draw over the columns unless fixed
    ones are supplied. With ``force_resample`` (the default) every call
    draws fresh weights, so repeated aggregation explores the spread of the
    ensemble. Weights are renormalised per row over the valid entries.

    With ``normalize`` the output is affinely rescaled to span the cube's
    own value range.
    """

    agg_name = "wavg"

    def __init__(self, weights=None, normalize: bool = False,
                 force_resample: bool = True, seed=None):
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.ndim != 1 or weights.size == 0:
                raise ValueError("weights must be a non-empty vector")
            if np.any(weights < 0) or not np.isfinite(weights).all():
                raise ValueError("weights must be finite and non-negative")
            if abs(weights.sum() - 1.0) > 1e-9:
                raise ValueError("weights must sum to one")
        self.weights = weights
        self.normalize = bool(normalize)
        self.force_resample = bool(force_resample)
        self._rng = np.random.default_rng(seed)
        self._drawn = None

    def _weights_for(self, m: int) -> np.ndarray:
        if self.weights is not None:
            if self.weights.size != m:
                raise ValueError(
                    f"got {self.weights.size} weights for a cube with {m} columns"
                )
            return self.weights
        if self.force_resample or self._drawn is None or self._drawn.size != m:
            self._drawn = self._rng.dirichlet(np.ones(m))
        return self._drawn

    def __call__(self, samples) -> np.ndarray:
        cube = _as_cube(samples)
        w = self._weights_for(cube.shape[1])
        valid = ~np.isnan(cube)
        den = (valid * w).sum(axis=1)
        num = (np.where(valid, cube, 0.0) * w).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = num / den
        out[den == 0] = np.nan
        if self.normalize:
            finite = np.isfinite(out)
            if finite.any():
                o_lo, o_hi = out[finite].min(), out[finite].max()
                c_lo, c_hi = np.nanmin(cube), np.nanmax(cube)
                if o_hi > o_lo:
                    out[finite] = c_lo + (out[finite] - o_lo) * (c_hi - c_lo) / (o_hi - o_lo)
        return out


def weighted_average(weights=None, normalize=False, force_resample=True, seed=None):
    """Factory form of :class:`WeightedAverage`."""
    return WeightedAverage(weights, normalize, force_resample, seed)


class BilateralFilter:
    """Edge-preserving smoothing aggregation for two-axis gridded cubes.

    The output at a grid cell is a weighted average over the samples of all
    cells in a square window, weighted jointly by a spatial Gaussian in grid
    distance (``sigma_spatial``, in cell units) and a range Gaussian in the
    difference between the neighbour's sample value and the centre cell's
    per-location mean. ``sigma_range`` defaults to 0.1 times the cube's
    dynamic range. Smoothing happens across space and across ensemble
    members at once, and value jumps wider than a few ``sigma_range`` are
    preserved rather than blurred.
    """

    agg_name = "bilateral"
    wants_grid_shape = True

    def __init__(self, sigma_spatial: float = 1.5, sigma_range: float | None = None):
        if not (np.isfinite(sigma_spatial) and sigma_spatial > 0):
            raise ValueError("sigma_spatial must be positive")
        if sigma_range is not None and not (np.isfinite(sigma_range) and sigma_range > 0):
            raise ValueError("sigma_range must be positive when given")
        self.sigma_spatial = float(sigma_spatial)
        self.sigma_range = sigma_range

    def __call__(self, samples, grid_shape=None) -> np.ndarray:
        cube = _as_cube(samples)
        if grid_shape is None or len(grid_shape) != 2:
            raise ValueError("bilateral filtering needs a two-axis grid")
        d1, d2 = int(grid_shape[0]), int(grid_shape[1])
        if d1 * d2 != cube.shape[0]:
            raise ValueError("grid shape does not match the cube's row count")
        m = cube.shape[1]
        grid = cube.reshape(d1, d2, m)
        valid = ~np.isnan(grid)
        counts = valid.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            center_mean = np.where(valid, grid, 0.0).sum(axis=2) / counts
        center_mean[counts == 0] = np.nan

        lo, hi = np.nanmin(cube), np.nanmax(cube)
        sigma_r = self.sigma_range if self.sigma_range is not None else 0.1 * (hi - lo)
        if not sigma_r > 0:  # constant cube: nothing to smooth
            return center_mean.ravel()

        half = math.ceil(2.0 * self.sigma_spatial)
        padded = np.full((d1 + 2 * half, d2 + 2 * half, m), np.nan)
        padded[half : half + d1, half : half + d2] = grid
        num = np.zeros((d1, d2))
        den = np.zeros((d1, d2))
        inv_2s2 = 1.0 / (2.0 * self.sigma_spatial**2)
        inv_2r2 = 1.0 / (2.0 * sigma_r**2)
        for di in range(-half, half + 1):
            for dj in range(-half, half + 1):
                w_s = math.exp(-(di * di + dj * dj) * inv_2s2)
                if w_s == 0.0:
                    continue
                vals = padded[half + di : half + di + d1, half + dj : half + dj + d2]
                ok = ~np.isnan(vals) & ~np.isnan(center_mean)[:, :, None]
                diff = np.where(ok, vals - center_mean[:, :, None], 0.0)
                w = np.where(ok, w_s * np.exp(-diff * diff * inv_2r2), 0.0)
                num += (w * np.where(ok, vals, 0.0)).sum(axis=2)
                den += w.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = num / den
        out[den == 0] = np.nan
        return out.ravel()


bilateral_filter = BilateralFilter()


def identity(samples) -> np.ndarray:
    """Return the cube unchanged (used as a cube-shaped loss aggregator)."""
    return _as_cube(samples)


_PERCENTILE_RE = re.compile(r"^p(\d+(?:\.\d+)?)$")


def resolve(selector: str, seed=None):
    """Look an aggregation up by its selector string.

    Accepted selectors: ``mean``, ``median``, ``map``, ``p<q>`` (for example
    ``p25``), ``wavg``, ``bilateral`` and ``identity``. ``seed`` feeds the
    random generator of selectors that draw weights.
    """
    if not isinstance(selector, str):
        raise ValueError("aggregation selector must be a string")
    name = selector.strip().lower()
    if name == "mean":
        return mean
    if name == "median":
        return median
    if name == "map":
        return map_mode
    if name == "wavg":
        return WeightedAverage(seed=seed)
    if name == "bilateral":
        return BilateralFilter()
    if name == "identity":
        return identity
    match = _PERCENTILE_RE.match(name)
    if match:
        return Percentile(float(match.group(1)))
    raise ValueError(f"unknown aggregation selector {selector!r}")


_FUNCTION_NAMES = {"mean": "mean", "median": "median", "map_mode": "map", "identity": "identity"}


def agg_name(fn) -> str:
    """Selector-style name of an aggregation callable (``custom`` if unknown)."""
    direct = getattr(fn, "agg_name", None)
    if isinstance(direct, str):
        return direct
    py_name = getattr(fn, "__name__", None)
    return _FUNCTION_NAMES.get(py_name, py_name or "custom")
