"""Cell-level interpolators: inverse-distance weighting and ordinary kriging.

These are the weak voters applied independently inside every partition
cell. Both take the cell's conditioning subset and a batch of target
locations and return one estimate per target.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.spatial.distance import cdist

__all__ = [
    "IdwParams",
    "KrigingParams",
    "COVARIANCE_MODELS",
    "EPS_COINCIDE",
    "covariance",
    "idw_estimate",
    "kriging_estimate",
    "kriging_weights",
]

#: Distances below this threshold count as coincident locations.
EPS_COINCIDE = 1e-12

#: Pivots below this threshold mark the kriging system as singular.
SINGULAR_PIVOT = 1e-12

COVARIANCE_MODELS = ("spherical", "exponential", "cubic", "gaussian")


@dataclass(frozen=True)
class IdwParams:
    """Inverse-distance weighting settings.

    ``exponent`` 0 averages the cell; large exponents approach the nearest
    neighbour. A target coinciding with a sample always receives that
    sample's value exactly.
    """

    exponent: float = 2.0

    def __post_init__(self):
        if not (np.isfinite(self.exponent) and self.exponent >= 0):
            raise ValueError("exponent must be finite and >= 0")


@dataclass(frozen=True)
class KrigingParams:
    """Ordinary kriging settings: covariance model plus nugget/range/sill."""

    model: str = "spherical"
    nugget: float = 0.1
    range: float = 5000.0
    sill: float = 1.0

    def __post_init__(self):
        if self.model not in COVARIANCE_MODELS:
            raise ValueError(
                f"unknown covariance model {self.model!r}; pick one of {COVARIANCE_MODELS}"
            )
        if not (np.isfinite(self.nugget) and 0.0 <= self.nugget <= 1.0):
            raise ValueError("nugget must lie in [0, 1]")
        if not (np.isfinite(self.range) and self.range > 0):
            raise ValueError("range must be positive")
        if not (np.isfinite(self.sill) and self.sill > 0):
            raise ValueError("sill must be positive")


def covariance(h, params: KrigingParams):
    """Isotropic covariance of separation distance ``h``.

    The normalised structure is m(h) = (1 - nugget) * (1 - model(h/range))
    with the model curve one of:

    ==============  ====================================================
    spherical       1.5 u - 0.5 u^3, held at 1 for u >= 1
    exponential     1 - exp(-3 u)
    cubic           u^2 (7 - 8.75 u + 3.5 u^3 - 0.75 u^5), held at 1 for u >= 1
    gaussian        1 - exp(-3 u^2)
    ==============  ====================================================

    The output is sill * m(h) clamped to [0, sill]. The compact-support
    models are pinned to zero covariance beyond the range; the clamp alone
    would let the spherical polynomial resurface past it.
    """
    h = np.asarray(h, dtype=np.float64)
    scalar = h.ndim == 0
    h = np.atleast_1d(h)
    if h.size and np.nanmin(h) < 0:
        raise ValueError("separation distances must be non-negative")
    u = h / params.range
    if params.model == "spherical":
        base = np.where(u >= 1.0, 1.0, 1.5 * u - 0.5 * u**3)
    elif params.model == "exponential":
        base = 1.0 - np.exp(-3.0 * u)
    elif params.model == "cubic":
        poly = u**2 * (7.0 - 8.75 * u + 3.5 * u**3 - 0.75 * u**5)
        base = np.where(u >= 1.0, 1.0, poly)
    else:  # gaussian
        base = 1.0 - np.exp(-3.0 * u**2)
    m = (1.0 - params.nugget) * (1.0 - base)
    out = params.sill * np.clip(m, 0.0, 1.0)
    return float(out[0]) if scalar else out


def _coerce_cell(targets, cell_points, cell_values=None):
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    p = np.atleast_2d(np.asarray(cell_points, dtype=np.float64))
    if p.shape[0] == 0:
        raise ValueError("a cell must contain at least one conditioning point")
    if t.shape[1] != p.shape[1]:
        raise ValueError("targets and points must share the same dimension")
    if cell_values is None:
        return t, p, None
    z = np.asarray(cell_values, dtype=np.float64)
    if z.shape != (p.shape[0],):
        raise ValueError("need exactly one value per conditioning point")
    return t, p, z


def idw_estimate(targets, cell_points, cell_values, params: IdwParams) -> np.ndarray:
    """Inverse-distance weighted estimates at ``targets``.

    Weights are (d_min / d_i)^exponent, i.e. normalised by each target's
    nearest non-coincident distance so that arbitrarily large exponents do
    not overflow. Targets within ``EPS_COINCIDE`` of a sample short-circuit
    to that sample's value (lowest index if several coincide).
    """
    t, p, z = _coerce_cell(targets, cell_points, cell_values)
    d = cdist(t, p)
    coincide = d < EPS_COINCIDE
    d_safe = np.where(coincide, np.inf, d)
    d_min = d_safe.min(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = d_min[:, None] / d_safe
    ratio = np.where(np.isfinite(ratio), ratio, 0.0)
    w = ratio**params.exponent
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (w @ z) / w.sum(axis=1)
    exact_rows = np.flatnonzero(coincide.any(axis=1))
    if exact_rows.size:
        out[exact_rows] = z[np.argmax(coincide[exact_rows], axis=1)]
    return out


def _dedupe_cell(p: np.ndarray, z: np.ndarray | None):
    """Merge coincident conditioning points, averaging their values."""
    n = p.shape[0]
    if n == 1:
        return p, z
    close = cdist(p, p) < EPS_COINCIDE
    rep = np.full(n, -1, dtype=np.int64)
    reps = []
    for i in range(n):
        owners = np.flatnonzero(close[i, : i + 1])
        first = owners[0]
        if first == i:
            rep[i] = len(reps)
            reps.append(i)
        else:
            rep[i] = rep[first]
    if len(reps) == n:
        return p, z
    p2 = p[reps]
    if z is None:
        return p2, None
    sums = np.zeros(len(reps))
    counts = np.zeros(len(reps))
    np.add.at(sums, rep, z)
    np.add.at(counts, rep, 1.0)
    return p2, sums / counts


def _solve_ok(p: np.ndarray, t: np.ndarray, params: KrigingParams):
    """Factor and solve the ordinary kriging system for a batch of targets.

    Returns ``(weights, lagrange)`` with ``weights`` of shape (n_targets,
    n_points), or ``None`` when the bordered covariance matrix is singular
    (smallest pivot below ``SINGULAR_PIVOT``).
    """
    n = p.shape[0]
    a = np.empty((n + 1, n + 1))
    a[:n, :n] = covariance(cdist(p, p), params)
    a[:n, n] = 1.0
    a[n, :n] = 1.0
    a[n, n] = 0.0
    b = np.empty((n + 1, t.shape[0]))
    b[:n] = covariance(cdist(p, t), params)
    b[n] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a, check_finite=False)
    if np.abs(np.diag(lu)).min() < SINGULAR_PIVOT:
        return None
    sol = lu_solve((lu, piv), b, check_finite=False)
    # One refinement step: smooth models with tiny nuggets make the
    # bordered matrix ill-conditioned, and the raw solve can lose the
    # exactness-at-data property worth several digits.
    sol += lu_solve((lu, piv), b - a @ sol, check_finite=False)
    return sol[:n].T, sol[n]


def kriging_estimate(
    targets, cell_points, cell_values, params: KrigingParams, stats: dict | None = None
) -> np.ndarray:
    """Ordinary kriging estimates at ``targets`` from one cell's data.

    Coincident conditioning points are merged (values averaged) before the
    solve, and a target within ``EPS_COINCIDE`` of a conditioning point
    short-circuits to that point's value — the unit weight vector solves
    the system exactly there, so this just sidesteps round-off on badly
    conditioned covariance matrices. If the system is singular anyway, the
    cell falls back to its arithmetic mean value and, when ``stats`` is
    given, increments its ``"kriging_singular_fallbacks"`` counter; the
    voter stays usable either way.
    """
    t, p, z = _coerce_cell(targets, cell_points, cell_values)
    p, z = _dedupe_cell(p, z)
    coincide = cdist(t, p) < EPS_COINCIDE
    exact_rows = np.flatnonzero(coincide.any(axis=1))
    solved = _solve_ok(p, t, params)
    if solved is None:
        if stats is not None:
            stats["kriging_singular_fallbacks"] = stats.get("kriging_singular_fallbacks", 0) + 1
        out = np.full(t.shape[0], float(np.mean(z)))
    else:
        weights, _ = solved
        out = weights @ z
    if exact_rows.size:
        out[exact_rows] = z[np.argmax(coincide[exact_rows], axis=1)]
    return out


def kriging_weights(targets, cell_points, params: KrigingParams):
    """Kriging weight rows and Lagrange multipliers for a batch of targets.

    Weights refer to the cell's distinct conditioning locations (coincident
    points are merged first). Each row sums to one by construction of the
    constrained system. Raises ``ValueError`` if the system is singular,
    since no meaningful weights exist then.
    """
    t, p, _ = _coerce_cell(targets, cell_points)
    p, _ = _dedupe_cell(p, None)
    solved = _solve_ok(p, t, params)
    if solved is None:
        raise ValueError("kriging system is singular for this cell")
    return solved
