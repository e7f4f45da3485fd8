import numpy as np
import pytest

from esikit.engine import EsiConfig, esi_nongriddata
from esikit.errors import UnsupportedCombination
from esikit.geometry import ConditioningData
from esikit.idw_baseline import GlobalIdwParams
from esikit.search import (
    IdwSearchGrid,
    SearchGrid,
    SearchRecord,
    SearchResult,
    _make_folds,
    esi_hparams_search,
    idw_hparams_search,
)
from esikit import aggregation


def smooth_data(seed=0, n=24):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (n, 2))
    vals = np.sin(2 * np.pi * pts[:, 0]) + np.cos(2 * np.pi * pts[:, 1])
    return ConditioningData(pts, vals + rng.normal(0, 0.05, n))


TARGETS = [[0.5, 0.5], [0.25, 0.75]]


def small_grid(**overrides):
    base = dict(
        p_process="voronoi",
        local_interpolator="idw",
        n_partitions=(6,),
        alpha=(0.5, 0.8),
        exponent=(1.0, 2.0),
        agg_function={"mean": aggregation.mean, "median": aggregation.median},
    )
    base.update(overrides)
    return SearchGrid(**base)


def test_scenario_count_and_expansion_order():
    # voronoi leaves data_cond at both settings: 2 * 1 * 2 * 2 * 2 = 16
    res = esi_hparams_search(smooth_data(), TARGETS, small_grid(), k=3, seed=1)
    assert len(res.records) == 16
    assert [r.result_data_index for r in res.records] == list(range(16))
    # aggregation is the innermost axis, data_cond the outermost
    assert [r.agg for r in res.records[:4]] == ["mean", "median", "mean", "median"]
    assert res.records[0].params.data_cond is True
    assert res.records[8].params.data_cond is False
    assert res.records[0].params.local.exponent == 1.0
    assert res.records[2].params.local.exponent == 2.0
    assert all(r.cv_error >= 0 for r in res.records)
    assert res.k == 3 and res.metric == "mse" and res.seed == 1


def test_mondrian_defaults_to_conditioned_only():
    res = esi_hparams_search(
        smooth_data(), TARGETS, small_grid(p_process="mondrian"), k=3, seed=1
    )
    assert len(res.records) == 8
    assert all(r.params.data_cond is True for r in res.records)


def test_kriging_grid_expansion():
    grid = SearchGrid(
        p_process="mondrian",
        local_interpolator="kriging",
        n_partitions=(5,),
        alpha=(0.7,),
        model=("spherical", "gaussian"),
        nugget=(0.1,),
        range=(0.5, 1.0),
        sill=(1.0,),
    )
    res = esi_hparams_search(smooth_data(), TARGETS, grid, k=3, seed=2)
    assert len(res.records) == 4
    combos = [(r.params.local.model, r.params.local.range) for r in res.records]
    assert combos == [
        ("spherical", 0.5), ("spherical", 1.0), ("gaussian", 0.5), ("gaussian", 1.0)
    ]


def test_voronoi_kriging_rejected():
    grid = SearchGrid(p_process="voronoi", local_interpolator="kriging")
    with pytest.raises(UnsupportedCombination):
        esi_hparams_search(smooth_data(), TARGETS, grid, k=3)


def test_grid_validation():
    with pytest.raises(ValueError):
        esi_hparams_search(
            smooth_data(), TARGETS, small_grid(p_process="hexagonal"), k=3
        )
    with pytest.raises(ValueError):
        esi_hparams_search(
            smooth_data(), TARGETS, small_grid(local_interpolator="rbf"), k=3
        )
    with pytest.raises(ValueError):
        esi_hparams_search(smooth_data(), TARGETS, small_grid(), k=3, metric="rmse")


def test_fold_maker_partitions_the_data():
    folds = _make_folds(20, 4, seed=0)
    assert len(folds) == 4
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1
    joined = np.sort(np.concatenate(folds))
    assert np.array_equal(joined, np.arange(20))
    again = _make_folds(20, 4, seed=0)
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))
    shuffled = _make_folds(20, 4, seed=1)
    assert not all(np.array_equal(a, b) for a, b in zip(folds, shuffled))


def test_leave_one_out_uses_one_fold_per_sample():
    data = smooth_data(n=12)
    res = esi_hparams_search(
        data, TARGETS, small_grid(alpha=(0.5,), exponent=(2.0,),
                                  agg_function={"mean": aggregation.mean}),
        k=-1, seed=3,
    )
    assert res.k == 12


def test_k_validation():
    data = smooth_data(n=12)
    for bad in (0, 1, 13, -2):
        with pytest.raises(ValueError):
            esi_hparams_search(data, TARGETS, small_grid(), k=bad)
        with pytest.raises(ValueError):
            idw_hparams_search(data, TARGETS, IdwSearchGrid(), k=bad)


def test_best_result_is_argmin_with_lowest_index_ties():
    records = tuple(
        SearchRecord(params=f"cfg{i}", cv_error=e, result_data_index=i)
        for i, e in enumerate([1.0, 0.5, 0.8, 0.5])
    )
    res = SearchResult(records=records, k=3, metric="mse", seed=0)
    assert res.best_result() == "cfg1"


def test_search_is_deterministic():
    a = esi_hparams_search(smooth_data(), TARGETS, small_grid(), k=3, seed=4)
    b = esi_hparams_search(smooth_data(), TARGETS, small_grid(), k=3, seed=4)
    assert [r.cv_error for r in a.records] == [r.cv_error for r in b.records]
    c = esi_hparams_search(smooth_data(), TARGETS, small_grid(), k=3, seed=5)
    assert [r.cv_error for r in a.records] != [r.cv_error for r in c.records]


def test_scores_do_not_depend_on_candidate_order():
    """Reordering candidate lists relabels records, never rescores them."""
    data = smooth_data()
    fwd = esi_hparams_search(data, TARGETS, small_grid(alpha=(0.5, 0.8)), k=3, seed=6)
    rev = esi_hparams_search(data, TARGETS, small_grid(alpha=(0.8, 0.5)), k=3, seed=6)

    def table(result):
        return {
            (r.params.data_cond, r.params.alpha, r.params.local.exponent, r.agg): r.cv_error
            for r in result.records
        }

    assert table(fwd) == table(rev)
    assert fwd.best_result().to_dict() == rev.best_result().to_dict()


def test_scores_do_not_depend_on_the_aggregation_set():
    """Extra aggregations ride on the shared cube without reseeding it."""
    data = smooth_data()
    both = esi_hparams_search(data, TARGETS, small_grid(), k=3, seed=7)
    only_mean = esi_hparams_search(
        data, TARGETS, small_grid(agg_function={"mean": aggregation.mean}), k=3, seed=7
    )
    mean_scores = [r.cv_error for r in both.records if r.agg == "mean"]
    assert mean_scores == [r.cv_error for r in only_mean.records]


def test_best_params_feed_back_into_estimation():
    data = smooth_data()
    res = esi_hparams_search(data, TARGETS, small_grid(), k=3, seed=8)
    best = res.best_result()
    assert isinstance(best, EsiConfig)
    out = esi_nongriddata(data, TARGETS, best)
    assert out.cube.shape == (2, 6)


def test_gridded_targets_accepted():
    axes = (np.linspace(0, 1, 4), np.linspace(0, 1, 3))
    res = esi_hparams_search(
        smooth_data(), axes, small_grid(), k=3, seed=9, griddata=True
    )
    assert len(res.records) == 16
    with pytest.raises(ValueError):
        esi_hparams_search(
            smooth_data(), ([0.0, 0.0, 1.0],), small_grid(), k=3, griddata=True
        )


def test_report_shapes_and_overflow_bin():
    data = smooth_data(n=30)
    # radius 0.01 strands nearly every held-out point -> infinite error
    res = idw_hparams_search(data, None, IdwSearchGrid(radius=(0.01, 0.5), exponent=(2.0,)), k=3)
    errors = [r.cv_error for r in res.records]
    assert np.isinf(errors[0])
    assert np.isfinite(errors[1])
    report = res.cv_error_report()
    assert report.series.shape == (2,)
    assert report.counts.sum() == 2
    assert np.isinf(report.bin_edges[-1])  # the overflow bin
    assert report.counts[-1] == 1
    # and the best scenario is the finite one
    assert res.best_result().radius == 0.5


def test_report_without_overflow():
    res = idw_hparams_search(
        smooth_data(n=30), None, IdwSearchGrid(radius=(0.4, 0.6), exponent=(1.0, 2.0)), k=3
    )
    report = res.cv_error_report()
    assert report.counts.sum() == 4
    assert np.isfinite(report.bin_edges).all()
    assert len(report.bin_edges) == len(report.counts) + 1
    assert report.series.min() == min(r.cv_error for r in res.records)


def test_idw_search_expansion_and_determinism():
    grid = IdwSearchGrid(radius=(0.3, 0.5), exponent=(1.0, 2.0, 3.0))
    a = idw_hparams_search(smooth_data(), None, grid, k=4, seed=10)
    assert len(a.records) == 6
    combos = [(r.params.radius, r.params.exponent) for r in a.records]
    assert combos == [(0.3, 1.0), (0.3, 2.0), (0.3, 3.0), (0.5, 1.0), (0.5, 2.0), (0.5, 3.0)]
    assert all(isinstance(r.params, GlobalIdwParams) for r in a.records)
    b = idw_hparams_search(smooth_data(), None, grid, k=4, seed=10)
    assert [r.cv_error for r in a.records] == [r.cv_error for r in b.records]


def test_metrics_actually_differ():
    data = smooth_data()
    grid = IdwSearchGrid(radius=(0.5,), exponent=(2.0,))
    mse = idw_hparams_search(data, None, grid, k=3, metric="mse")
    mae = idw_hparams_search(data, None, grid, k=3, metric="mae")
    assert mse.records[0].cv_error != mae.records[0].cv_error
    assert mae.metric == "mae"


def test_ensemble_size_reduces_cv_error_on_smooth_data():
    data = smooth_data(seed=11, n=40)
    grid = small_grid(
        p_process="mondrian",
        n_partitions=(1, 40),
        alpha=(0.8,),
        exponent=(2.0,),
        agg_function={"mean": aggregation.mean},
    )
    res = esi_hparams_search(data, TARGETS, grid, k=4, seed=12)
    errors = {r.params.n_partitions: r.cv_error for r in res.records}
    assert errors[40] < errors[1]
    assert res.best_result().n_partitions == 40
