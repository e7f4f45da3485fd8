"""Command line front end.

Four subcommands cover the library's workflows:

* ``esikit synth`` — generate the built-in benchmark data set.
* ``esikit estimate`` — run an ensemble (or plain IDW) estimation from a
  JSON config and write the estimates as CSV.
* ``esikit search`` — cross-validated hyperparameter search; writes the
  scored scenario table and a cv-error report.
* ``esikit precision`` — recompute precision offline from a stored cube.

Configs are JSON objects validated key by key; unknown or inapplicable
keys are rejected before anything runs, and all inputs are read before
any output file is written. Each command also renders figures next to
its delimited outputs unless ``--no-figures`` is given. Exit code is 0 on
success, nonzero on any error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import aggregation, fileio
from .engine import EsiConfig, EstimationResult, esi_griddata, esi_nongriddata
from .errors import EsikitError, SchemaError
from .geometry import LocationSet, flatten_grid
from .idw_baseline import GlobalIdwParams, idw_griddata, idw_nongriddata
from .precision import resolve_loss
from .search import IdwSearchGrid, SearchGrid, esi_hparams_search, idw_hparams_search
from .synthetic import benchmark_grid, sample_surface, surface_on_grid

__all__ = ["main", "build_parser"]

_COMMON_KEYS = {"points", "grid", "targets", "method", "seed", "threads"}
_ESI_KEYS = {
    "p_process",
    "local_interpolator",
    "data_cond",
    "n_partitions",
    "alpha",
    "agg_function",
    "precision",
    "save_cube",
}
_IDW_LOCAL_KEYS = {"exponent"}
_KRIGING_LOCAL_KEYS = {"model", "nugget", "range", "sill"}
_SEARCH_KEYS = {"points", "grid", "targets", "method", "k", "metric", "grid_search", "seed", "threads"}
_ESI_SEARCH_GRID_KEYS = {"n_partitions", "alpha", "data_cond", "agg_function"}
_BASELINE_KEYS = {"radius", "exponent"}


# ---------------------------------------------------------------- config


def _load_config(path) -> tuple[dict, str]:
    if not os.path.exists(path):
        raise SchemaError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: config must be a JSON object")
    return doc, os.path.dirname(os.path.abspath(path))


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"{where}: unknown or inapplicable keys: {', '.join(unknown)}")


def _get_str(doc: dict, key: str, default=None, choices=None):
    val = doc.get(key, default)
    if val is None:
        raise SchemaError(f"config needs a {key!r} entry")
    if not isinstance(val, str):
        raise SchemaError(f"{key} must be a string")
    if choices is not None and val not in choices:
        raise SchemaError(f"{key} must be one of {sorted(choices)}; got {val!r}")
    return val


def _get_number(doc: dict, key: str, default):
    val = doc.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(f"{key} must be a number")
    return val


def _get_int(doc: dict, key: str, default):
    val = doc.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise SchemaError(f"{key} must be an integer")
    return val


def _get_bool(doc: dict, key: str, default):
    val = doc.get(key, default)
    if not isinstance(val, bool):
        raise SchemaError(f"{key} must be true or false")
    return val


def _get_list(doc: dict, key: str, required: bool = False):
    if key not in doc:
        if required:
            raise SchemaError(f"grid_search needs a {key!r} list")
        return None
    val = doc[key]
    if not isinstance(val, list) or not val:
        raise SchemaError(f"{key} must be a non-empty list")
    return val


def _input_path(doc: dict, key: str, base: str) -> str:
    rel = _get_str(doc, key)
    path = rel if os.path.isabs(rel) else os.path.join(base, rel)
    if not os.path.exists(path):
        raise SchemaError(f"input file not found: {path}")
    return path


def _load_field_inputs(doc: dict, base: str):
    """Load the points plus exactly one of grid / targets."""
    if ("grid" in doc) == ("targets" in doc):
        raise SchemaError("config needs exactly one of 'grid' or 'targets'")
    data = fileio.load_points_csv(_input_path(doc, "points", base))
    grid = targets = None
    if "grid" in doc:
        grid = fileio.load_grid_json(_input_path(doc, "grid", base))
    else:
        targets = fileio.load_targets_csv(_input_path(doc, "targets", base))
    return data, grid, targets


def _resolve_seed(args, doc: dict) -> int:
    if args.seed is not None:
        return args.seed
    return _get_int(doc, "seed", 0)


def _resolve_threads(args, doc: dict | None) -> int:
    n = args.threads
    if n is None and doc is not None and "threads" in doc:
        n = _get_int(doc, "threads", 1)
    if n is None:
        env = os.environ.get("ESIKIT_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise SchemaError(f"ESIKIT_THREADS must be an integer; got {env!r}") from None
    if n is None:
        n = 1
    if n < 1:
        raise SchemaError("threads must be at least 1")
    return n


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------- synth


def _cmd_synth(args) -> int:
    if args.rows < 1:
        raise SchemaError("rows must be at least 1")
    seed = args.seed if args.seed is not None else 0
    data = sample_surface(n_points=args.rows, seed=seed)
    grid = benchmark_grid()
    truth = surface_on_grid(grid)
    out = _out_dir(args)
    points_path = os.path.join(out, "points.csv")
    grid_path = os.path.join(out, "grid.json")
    truth_path = os.path.join(out, "truth.csv")
    fileio.save_points_csv(points_path, data)
    fileio.save_grid_json(grid_path, grid)
    fileio.save_estimate_csv(truth_path, flatten_grid(grid).coords, truth)
    written = [points_path, grid_path, truth_path]
    if not args.no_figures:
        from . import plots

        truth_png = os.path.join(out, "truth.png")
        points_png = os.path.join(out, "points.png")
        plots.save_field_map(truth_png, grid, truth, title="benchmark surface")
        plots.save_scatter_map(points_png, data.points, data.values, title="sampled points")
        written += [truth_png, points_png]
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- estimate


def _esi_config_from(doc: dict, seed: int) -> EsiConfig:
    kind = _get_str(doc, "local_interpolator", "idw", choices={"idw", "kriging"})
    flat = {
        "p_process": _get_str(doc, "p_process", "mondrian"),
        "local_interpolator": kind,
        "data_cond": _get_bool(doc, "data_cond", True),
        "n_partitions": _get_int(doc, "n_partitions", 500),
        "alpha": float(_get_number(doc, "alpha", 0.8)),
        "agg_function": _get_str(doc, "agg_function", "mean"),
        "seed": seed,
    }
    if kind == "idw":
        flat["exponent"] = float(_get_number(doc, "exponent", 2.0))
    else:
        flat["model"] = _get_str(doc, "model", "spherical")
        flat["nugget"] = float(_get_number(doc, "nugget", 0.1))
        flat["range"] = float(_get_number(doc, "range", 5000.0))
        flat["sill"] = float(_get_number(doc, "sill", 1.0))
    return EsiConfig.from_dict(flat)


def _cmd_estimate(args) -> int:
    doc, base = _load_config(args.config)
    method = _get_str(doc, "method", "esi", choices={"esi", "idw-baseline"})
    if method == "esi":
        kind = _get_str(doc, "local_interpolator", "idw", choices={"idw", "kriging"})
        local_keys = _IDW_LOCAL_KEYS if kind == "idw" else _KRIGING_LOCAL_KEYS
        _check_keys(doc, _COMMON_KEYS | _ESI_KEYS | local_keys, "estimate config")
    else:
        _check_keys(doc, _COMMON_KEYS | _BASELINE_KEYS, "estimate config")
    seed = _resolve_seed(args, doc)
    threads = _resolve_threads(args, doc)
    data, grid, targets = _load_field_inputs(doc, base)

    out = _out_dir(args)
    estimate_path = os.path.join(out, "estimate.csv")
    written = [estimate_path]
    precision = None
    if method == "esi":
        loss = None
        if "precision" in doc:
            loss = resolve_loss(_get_str(doc, "precision"))
            if loss.is_cube:
                raise SchemaError(
                    "precision selectors on the command line must aggregate to one "
                    "value per location; cube losses are library-only"
                )
        config = _esi_config_from(doc, seed)
        if grid is not None:
            result = esi_griddata(data, grid, config, n_threads=threads)
            coords = flatten_grid(grid).coords
        else:
            result = esi_nongriddata(data, targets, config, n_threads=threads)
            coords = targets.coords
        estimate = result.estimate
        if loss is not None:
            precision = np.asarray(result.precision(loss)).reshape(-1)
        fileio.save_estimate_csv(estimate_path, coords, estimate, precision)
        if _get_bool(doc, "save_cube", False):
            cube_path = os.path.join(out, "cube.bin")
            fileio.save_cube(cube_path, result)
            written += [cube_path, cube_path + ".json"]
    else:
        if "radius" not in doc:
            raise SchemaError("idw-baseline configs need a 'radius' entry")
        params = GlobalIdwParams(
            radius=float(_get_number(doc, "radius", None)),
            exponent=float(_get_number(doc, "exponent", 2.0)),
        )
        if grid is not None:
            result = idw_griddata(data, grid, params)
            coords = flatten_grid(grid).coords
        else:
            result = idw_nongriddata(data, targets, params)
            coords = targets.coords
        estimate = result.estimate
        fileio.save_estimate_csv(estimate_path, coords, estimate)

    if not args.no_figures:
        from . import plots

        est_png = os.path.join(out, "estimate.png")
        if grid is not None:
            plots.save_field_map(est_png, grid, estimate, title="estimate")
        else:
            plots.save_scatter_map(est_png, coords, estimate, title="estimate")
        written.append(est_png)
        if precision is not None:
            prec_png = os.path.join(out, "precision.png")
            if grid is not None:
                plots.save_field_map(prec_png, grid, precision, title="precision")
            else:
                plots.save_scatter_map(prec_png, coords, precision, title="precision")
            written.append(prec_png)
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- search


def _cmd_search(args) -> int:
    doc, base = _load_config(args.config)
    method = _get_str(doc, "method", "esi", choices={"esi", "idw-baseline"})
    seed = _resolve_seed(args, doc)
    threads = _resolve_threads(args, doc)
    k = _get_int(doc, "k", 10)
    metric = _get_str(doc, "metric", "mse", choices={"mse", "mae"})
    if "grid_search" not in doc or not isinstance(doc["grid_search"], dict):
        raise SchemaError("search configs need a 'grid_search' object")
    gs = doc["grid_search"]

    if method == "esi":
        _check_keys(doc, _SEARCH_KEYS | {"p_process", "local_interpolator"}, "search config")
        kind = _get_str(doc, "local_interpolator", "idw", choices={"idw", "kriging"})
        local_keys = _IDW_LOCAL_KEYS if kind == "idw" else _KRIGING_LOCAL_KEYS
        _check_keys(gs, _ESI_SEARCH_GRID_KEYS | local_keys, "grid_search")
        kwargs = {
            "p_process": _get_str(doc, "p_process", "mondrian"),
            "local_interpolator": kind,
        }
        for key in ("n_partitions", "alpha", "exponent", "model", "nugget", "range", "sill"):
            vals = _get_list(gs, key)
            if vals is not None:
                kwargs[key] = tuple(vals)
        dc = _get_list(gs, "data_cond")
        if dc is not None:
            if not all(isinstance(v, bool) for v in dc):
                raise SchemaError("data_cond candidates must be booleans")
            kwargs["data_cond"] = tuple(dc)
        aggs = _get_list(gs, "agg_function")
        if aggs is not None:
            kwargs["agg_function"] = {
                sel: aggregation.resolve(sel, seed=seed) for sel in aggs
            }
        sgrid = SearchGrid(**kwargs)
    else:
        _check_keys(doc, _SEARCH_KEYS, "search config")
        _check_keys(gs, _BASELINE_KEYS, "grid_search")
        sgrid = IdwSearchGrid(
            radius=tuple(_get_list(gs, "radius", required=True)),
            exponent=tuple(_get_list(gs, "exponent") or (2.0,)),
        )

    data, grid, targets = _load_field_inputs(doc, base)
    xi = grid if grid is not None else targets
    if method == "esi":
        result = esi_hparams_search(
            data, xi, sgrid, k=k, griddata=grid is not None, seed=seed,
            metric=metric, n_threads=threads,
        )
    else:
        result = idw_hparams_search(
            data, xi, sgrid, k=k, griddata=grid is not None, seed=seed, metric=metric
        )

    out = _out_dir(args)
    search_path = os.path.join(out, "search.csv")
    hist_path = os.path.join(out, "cv_hist.csv")
    series_path = os.path.join(out, "cv_series.csv")
    fileio.save_search_csv(search_path, result)
    report = result.cv_error_report()
    fileio.save_cv_report(hist_path, series_path, report)
    written = [search_path, hist_path, series_path]
    if not args.no_figures:
        from . import plots

        cv_png = os.path.join(out, "cv_error.png")
        plots.save_cv_error_figure(cv_png, report)
        written.append(cv_png)
    errors = [r.cv_error for r in result.records]
    best = int(np.argmin(errors))
    print(f"scored {len(result.records)} scenarios; best index {best} "
          f"(cv_error {errors[best]:.6g})")
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- precision


def _cmd_precision(args) -> int:
    loss = resolve_loss(args.loss)
    if loss.is_cube:
        raise SchemaError(
            "precision selectors on the command line must aggregate to one "
            "value per location; cube losses are library-only"
        )
    if not os.path.exists(args.cube):
        raise SchemaError(f"input file not found: {args.cube}")
    cube, meta = fileio.load_cube(args.cube)
    config = EsiConfig.from_dict(meta["config"])
    grid = fileio.grid_from_meta(meta)
    if grid is not None:
        targets = flatten_grid(grid)
    else:
        targets = LocationSet(np.arange(cube.shape[0], dtype=np.float64)[:, None])
    result = EstimationResult(cube=cube, config=config, targets=targets, grid=grid)
    prec = np.asarray(result.precision(loss)).reshape(-1)

    out = _out_dir(args)
    prec_path = os.path.join(out, "precision.csv")
    if grid is not None:
        d = targets.coords.shape[1]
        header = [f"x{i}" for i in range(d)] + ["precision"]
        lines = [",".join(header)]
        for j in range(targets.coords.shape[0]):
            lines.append(",".join([_fmt(c) for c in targets.coords[j]] + [_fmt(prec[j])]))
    else:
        lines = ["index,precision"]
        lines += [f"{j},{_fmt(prec[j])}" for j in range(prec.size)]
    with open(prec_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    written = [prec_path]
    if not args.no_figures:
        from . import plots

        prec_png = os.path.join(out, "precision.png")
        if grid is not None:
            plots.save_field_map(prec_png, grid, prec, title="precision")
        else:
            plots.save_scatter_map(prec_png, targets.coords, prec, title="precision")
        written.append(prec_png)
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esikit",
        description="Ensemble spatial interpolation: estimation, search and reporting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=os.curdir, help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: config, then ESIKIT_THREADS, then 1)")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p_synth = sub.add_parser("synth", help="generate the built-in benchmark data set")
    p_synth.add_argument("--rows", type=int, default=1000, help="number of sampled points")
    common(p_synth)
    p_synth.set_defaults(func=_cmd_synth)

    p_est = sub.add_parser("estimate", help="run an estimation from a JSON config")
    p_est.add_argument("--config", required=True, help="JSON config file")
    common(p_est)
    p_est.set_defaults(func=_cmd_estimate)

    p_search = sub.add_parser("search", help="cross-validated hyperparameter search")
    p_search.add_argument("--config", required=True, help="JSON config file")
    common(p_search)
    p_search.set_defaults(func=_cmd_search)

    p_prec = sub.add_parser("precision", help="recompute precision from a stored cube")
    p_prec.add_argument("--cube", required=True, help="cube file written by estimate")
    p_prec.add_argument("--loss", required=True,
                        help="loss selector: mse | mae | operr[:dyn_range]")
    common(p_prec)
    p_prec.set_defaults(func=_cmd_precision)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EsikitError, ValueError, OSError) as exc:
        print(f"esikit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
