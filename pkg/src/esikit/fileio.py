"""Delimited and binary file formats used by the command line tools.

Text formats are UTF-8 with LF line endings. Floats are written with
Python's shortest round-trip representation, so loading and re-saving a
file reproduces it byte for byte. Sample cubes are stored as raw
little-endian IEEE-754 doubles in location-major order next to a JSON
sidecar describing their shape and provenance.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .engine import EsiConfig, EstimationResult
from .errors import SchemaError
from .geometry import ConditioningData, GridSpec, LocationSet

__all__ = [
    "save_points_csv",
    "load_points_csv",
    "save_targets_csv",
    "load_targets_csv",
    "save_grid_json",
    "load_grid_json",
    "save_estimate_csv",
    "save_cube",
    "load_cube",
    "save_search_csv",
    "save_cv_report",
]

CUBE_FORMAT = "esikit-cube"
CUBE_VERSION = 1


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def save_points_csv(path, data: ConditioningData) -> None:
    """Write measured points as ``x0,...,x{d-1},value`` rows."""
    d = data.ndim
    lines = [",".join([f"x{i}" for i in range(d)] + ["value"])]
    for row, val in zip(data.points, data.values):
        lines.append(",".join([_fmt(c) for c in row] + [_fmt(val)]))
    _write_text(path, "\n".join(lines) + "\n")


def _read_csv(path, expect_value: bool):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        cols = header.split(",") if header else []
        want_tail = ["value"] if expect_value else []
        d = len(cols) - len(want_tail)
        if d < 1 or cols != [f"x{i}" for i in range(d)] + want_tail:
            raise SchemaError(f"{path}: malformed header {header!r}")
        rows = []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise SchemaError(f"{path}:{line_no}: expected {len(cols)} fields")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), d


def load_points_csv(path) -> ConditioningData:
    """Read a measured-points file back into conditioning data."""
    table, d = _read_csv(path, expect_value=True)
    return ConditioningData(table[:, :d], table[:, d])


def save_targets_csv(path, targets: LocationSet) -> None:
    """Write bare target locations as ``x0,...,x{d-1}`` rows."""
    d = targets.ndim
    lines = [",".join(f"x{i}" for i in range(d))]
    for row in targets.coords:
        lines.append(",".join(_fmt(c) for c in row))
    _write_text(path, "\n".join(lines) + "\n")


def load_targets_csv(path) -> LocationSet:
    table, _ = _read_csv(path, expect_value=False)
    return LocationSet(table)


def save_grid_json(path, grid: GridSpec) -> None:
    """Write a uniform grid as per-axis origin, step and count."""
    origins, steps, counts = [], [], []
    for i, ax in enumerate(grid.axes):
        step = 0.0
        if ax.size > 1:
            diffs = np.diff(ax)
            step = float(diffs[0])
            if not np.allclose(diffs, step, rtol=1e-9, atol=0.0):
                raise ValueError(f"grid axis {i} is not uniform; cannot store as origin/step/count")
        origins.append(float(ax[0]))
        steps.append(step)
        counts.append(int(ax.size))
    doc = {"origin": origins, "step": steps, "count": counts}
    _write_text(path, json.dumps(doc, indent=2) + "\n")


def load_grid_json(path) -> GridSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or set(doc) != {"origin", "step", "count"}:
        raise SchemaError(f"{path}: grid file needs exactly origin, step and count")
    origin, step, count = doc["origin"], doc["step"], doc["count"]
    if not (isinstance(origin, list) and isinstance(step, list) and isinstance(count, list)):
        raise SchemaError(f"{path}: origin, step and count must be lists")
    if not len(origin) == len(step) == len(count) or not origin:
        raise SchemaError(f"{path}: origin, step and count must be equally sized")
    axes = []
    for o, s, c in zip(origin, step, count):
        if not isinstance(c, int) or c < 1:
            raise SchemaError(f"{path}: counts must be positive integers")
        axes.append(float(o) + float(s) * np.arange(c))
    return GridSpec(tuple(axes))


def save_estimate_csv(path, coords: np.ndarray, estimate: np.ndarray,
                      precision: np.ndarray | None = None) -> None:
    """Write estimates in long form: coordinates, estimate, optional precision."""
    d = coords.shape[1]
    header = [f"x{i}" for i in range(d)] + ["estimate"]
    if precision is not None:
        header.append("precision")
    lines = [",".join(header)]
    for j in range(coords.shape[0]):
        fields = [_fmt(c) for c in coords[j]] + [_fmt(estimate[j])]
        if precision is not None:
            fields.append(_fmt(precision[j]))
        lines.append(",".join(fields))
    _write_text(path, "\n".join(lines) + "\n")


def _sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def save_cube(path, result: EstimationResult) -> None:
    """Persist a result's sample cube as raw doubles plus a JSON sidecar.

    The binary file holds the (N, m) cube row by row (location-major) as
    little-endian doubles; the sidecar records the shape, the grid (when
    one is attached), the configuration and the seed needed to regenerate
    it.
    """
    cube = np.ascontiguousarray(result.cube, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(cube.tobytes())
    meta = {
        "format": CUBE_FORMAT,
        "version": CUBE_VERSION,
        "n_targets": int(cube.shape[0]),
        "m": int(cube.shape[1]),
        "grid": None,
        "config": result.config.to_dict(),
        "seed": result.config.seed,
    }
    if result.grid is not None:
        origins, steps, counts = [], [], []
        for ax in result.grid.axes:
            origins.append(float(ax[0]))
            steps.append(float(ax[1] - ax[0]) if ax.size > 1 else 0.0)
            counts.append(int(ax.size))
        meta["grid"] = {"origin": origins, "step": steps, "count": counts}
    _write_text(_sidecar_path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_cube(path):
    """Load a persisted cube; returns ``(cube, meta)``."""
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise SchemaError(f"{sidecar}: cube sidecar not found")
    with open(sidecar, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{sidecar}: {exc}") from None
    if meta.get("format") != CUBE_FORMAT or meta.get("version") != CUBE_VERSION:
        raise SchemaError(f"{sidecar}: not a version-{CUBE_VERSION} {CUBE_FORMAT} sidecar")
    n, m = int(meta["n_targets"]), int(meta["m"])
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != n * m:
        raise SchemaError(f"{path}: expected {n * m} doubles, found {raw.size}")
    return raw.reshape(n, m), meta


def grid_from_meta(meta: dict) -> GridSpec | None:
    """Rebuild the grid recorded in a cube sidecar, if any."""
    spec = meta.get("grid")
    if spec is None:
        return None
    axes = [
        float(o) + float(s) * np.arange(int(c))
        for o, s, c in zip(spec["origin"], spec["step"], spec["count"])
    ]
    return GridSpec(tuple(axes))


def save_search_csv(path, result) -> None:
    """Write one row per scored scenario, parameters flattened to columns."""
    param_keys: list[str] = []
    rows = []
    for rec in result.records:
        params = rec.params
        if isinstance(params, EsiConfig):
            doc = params.to_dict()
            doc.pop("seed", None)
        else:
            doc = params.to_dict()
        for key in doc:
            if key not in param_keys:
                param_keys.append(key)
        rows.append((rec.result_data_index, doc, rec.cv_error))
    lines = [",".join(["result_data_index"] + param_keys + ["cv_error"])]
    for index, doc, err in rows:
        fields = [str(index)]
        for key in param_keys:
            val = doc.get(key, "")
            fields.append(_fmt(val) if isinstance(val, float) else str(val))
        fields.append(_fmt(err))
        lines.append(",".join(fields))
    _write_text(path, "\n".join(lines) + "\n")


def save_cv_report(hist_path, series_path, report) -> None:
    """Write the cv-error histogram and the per-scenario error series."""
    lines = ["bin_lower,bin_upper,count"]
    for i in range(report.counts.size):
        lines.append(
            f"{_fmt(report.bin_edges[i])},{_fmt(report.bin_edges[i + 1])},{int(report.counts[i])}"
        )
    _write_text(hist_path, "\n".join(lines) + "\n")
    lines = ["result_data_index,cv_error"]
    for i, err in enumerate(report.series):
        lines.append(f"{i},{_fmt(err)}")
    _write_text(series_path, "\n".join(lines) + "\n")
