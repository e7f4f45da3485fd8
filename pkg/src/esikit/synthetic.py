"""Synthetic benchmark surface and sampling helpers.

A smooth but strongly anisotropic test function on the unit square, used by
the examples, the command line ``synth`` generator and the acceptance
checks. It vanishes on the left, right and bottom edges and oscillates
faster towards larger y.
"""

from __future__ import annotations

import numpy as np

from .geometry import ConditioningData, GridSpec

__all__ = ["benchmark_surface", "sample_surface", "benchmark_grid", "surface_on_grid"]


def benchmark_surface(x, y):
    """x (1 - x) cos(4 pi x) sin(4 pi y^2)^2, elementwise over broadcastable inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return x * (1.0 - x) * np.cos(4.0 * np.pi * x) * np.sin(4.0 * np.pi * y**2) ** 2


def sample_surface(n_points: int = 1000, seed: int = 0) -> ConditioningData:
    """Measure the benchmark surface at uniform random points in [0, 1]^2."""
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    rng = np.random.default_rng(seed)
    pts = rng.random((n_points, 2))
    return ConditioningData(pts, benchmark_surface(pts[:, 0], pts[:, 1]))


def benchmark_grid(n_x: int = 100, n_y: int = 200) -> GridSpec:
    """The reference evaluation grid over the unit square."""
    return GridSpec((np.linspace(0.0, 1.0, n_x), np.linspace(0.0, 1.0, n_y)))


def surface_on_grid(grid: GridSpec) -> np.ndarray:
    """True surface values over a two-axis grid, flattened row-major."""
    if grid.ndim != 2:
        raise ValueError("the benchmark surface is two-dimensional")
    gx, gy = np.meshgrid(grid.axes[0], grid.axes[1], indexing="ij")
    return benchmark_surface(gx, gy).ravel(order="C")
