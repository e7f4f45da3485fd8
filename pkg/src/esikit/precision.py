"""Precision of an ensemble estimate, expressed through loss functions.

A loss function is an elementwise discrepancy between the aggregated
estimate and each ensemble member, composed with an aggregation over the
sample axis. With the ``mean`` aggregator the result is a per-location
scalar; with ``identity`` it keeps the full (N, m) cube shape. Missing cube
entries propagate as NaN and are ignored by aggregating losses.

Build custom losses either through :func:`make_loss` or with the decorator
idiom::

    @loss(mean)
    def squared(estimate, samples):
        return (estimate - samples) ** 2
"""

from __future__ import annotations

import re

import numpy as np

from .aggregation import identity, mean

__all__ = [
    "LossFunction",
    "loss",
    "make_loss",
    "mse_loss",
    "mae_loss",
    "mse_cube",
    "mae_cube",
    "OperationalErrorLoss",
    "operational_error_loss",
    "resolve_loss",
    "precision",
    "precision_cube",
]


class LossFunction:
    """Elementwise loss composed with an aggregation over the sample axis."""

    def __init__(self, elementwise, aggregator, name: str = "custom"):
        self.elementwise = elementwise
        self.aggregator = aggregator
        self.name = name

    @property
    def is_cube(self) -> bool:
        """True when the aggregator keeps the (N, m) cube shape."""
        return self.aggregator is identity

    def __call__(self, estimate, samples) -> np.ndarray:
        cube = np.asarray(samples, dtype=np.float64)
        est = np.asarray(estimate, dtype=np.float64)
        if est.ndim == 1:
            est = est[:, None]
        if est.shape[0] != cube.shape[0]:
            raise ValueError("estimate and sample cube must have matching rows")
        return self.aggregator(self.elementwise(est, cube))

    def __repr__(self):
        return f"LossFunction({self.name!r})"


def make_loss(elementwise, aggregator, name: str = "custom") -> LossFunction:
    """Compose an elementwise discrepancy with a sample-axis aggregator."""
    return LossFunction(elementwise, aggregator, name)


def loss(aggregator):
    """Decorator turning an elementwise discrepancy into a LossFunction."""

    def decorate(fn):
        return LossFunction(fn, aggregator, getattr(fn, "__name__", "custom"))

    return decorate


mse_loss = make_loss(lambda e, s: (e - s) ** 2, mean, "mse")
mae_loss = make_loss(lambda e, s: np.abs(e - s), mean, "mae")
mse_cube = make_loss(lambda e, s: (e - s) ** 2, identity, "mse_cube")
mae_cube = make_loss(lambda e, s: np.abs(e - s), identity, "mae_cube")


class OperationalErrorLoss(LossFunction):
    """Absolute deviation scaled by a dynamic range.

    The per-location precision is the mean of |sample - estimate| divided by
    ``dyn_range``. When no range is given it is taken from the estimate's
    spread, falling back to the cube's spread, and finally to a precision of
    identically zero when both are constant. ``use_cube`` keeps the full
    (N, m) shape instead of averaging over the samples.
    """

    def __init__(self, dyn_range: float | None = None, use_cube: bool = False):
        if dyn_range is not None and not (np.isfinite(dyn_range) and dyn_range > 0):
            raise ValueError("dyn_range must be positive when given")
        super().__init__(None, identity if use_cube else mean, "operr")
        self.dyn_range = dyn_range
        self.use_cube = bool(use_cube)

    def _resolve_range(self, est: np.ndarray, cube: np.ndarray) -> float:
        if self.dyn_range is not None:
            return float(self.dyn_range)
        finite = est[np.isfinite(est)]
        if finite.size:
            spread = float(finite.max() - finite.min())
            if spread > 0:
                return spread
        finite = cube[np.isfinite(cube)]
        if finite.size:
            spread = float(finite.max() - finite.min())
            if spread > 0:
                return spread
        return 0.0

    def __call__(self, estimate, samples) -> np.ndarray:
        cube = np.asarray(samples, dtype=np.float64)
        est = np.asarray(estimate, dtype=np.float64)
        col = est[:, None] if est.ndim == 1 else est
        if col.shape[0] != cube.shape[0]:
            raise ValueError("estimate and sample cube must have matching rows")
        d_r = self._resolve_range(est, cube)
        if d_r == 0.0:
            scaled = np.where(np.isnan(cube - col), np.nan, 0.0)
        else:
            scaled = np.abs(cube - col) / d_r
        return self.aggregator(scaled)


def operational_error_loss(dyn_range: float | None = None, use_cube: bool = False):
    """Factory form of :class:`OperationalErrorLoss`."""
    return OperationalErrorLoss(dyn_range, use_cube)


_OPERR_RE = re.compile(r"^operr(?::(\d+(?:\.\d+)?))?$")


def resolve_loss(selector: str) -> LossFunction:
    """Look a loss up by selector: mse | mae | mse_cube | mae_cube | operr[:range]."""
    if not isinstance(selector, str):
        raise ValueError("loss selector must be a string")
    name = selector.strip().lower()
    table = {"mse": mse_loss, "mae": mae_loss, "mse_cube": mse_cube, "mae_cube": mae_cube}
    if name in table:
        return table[name]
    match = _OPERR_RE.match(name)
    if match:
        rng = match.group(1)
        return OperationalErrorLoss(float(rng) if rng else None)
    raise ValueError(f"unknown loss selector {selector!r}")


def precision(result, loss_function: LossFunction | None = None) -> np.ndarray:
    """Per-location precision of a result under an aggregating loss (default mse)."""
    return result.precision(loss_function)


def precision_cube(result, loss_function: LossFunction | None = None) -> np.ndarray:
    """Elementwise precision cube of a result (loss aggregator must be identity)."""
    return result.precision_cube(loss_function)
