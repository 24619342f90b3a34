import numpy as np
import pytest

from rcfair.analysis import (
    allocation_curve,
    cost_sweep,
    default_rate_grid,
    parameter_sweep,
    perfect_model_check,
    split_budget,
)
from rcfair.enforce import enforce_dp
from rcfair.metrics import metric_at_r
from rcfair.synth import SynthConfig, generate


def test_grid():
    grid = default_rate_grid()
    assert len(grid) == 100 and grid[0] == 0.01 and grid[-1] == 1.0


def test_cost_sweep_d1(d1):
    rep = cost_sweep(d1, ["dp"], [0.5])
    assert rep.rows[0].loss["dp"]["precision"] == 0.25
    full = cost_sweep(d1, ["dp", "eo"], [1.0])
    assert all(v == 0 for n in ("dp", "eo") for v in full.rows[0].loss[n].values())


def test_cost_sweep_columns(d1):
    rep = cost_sweep(d1, ["dp", "eo"], default_rate_grid(4))
    cols = rep.columns()
    assert cols[:5] == ["rate", "K", "default_precision", "default_recall", "default_accuracy"]
    assert cols[5:9] == ["dp_precision_loss", "dp_recall_loss", "dp_accuracy_loss", "dp_p_swap"]
    assert cols[-2:] == ["bound_accuracy", "bound_recall"]
    assert all(len(row) == len(cols) for row in rep.table())


def test_averages_are_row_means():
    ds = generate(SynthConfig(n=4000))
    rep = cost_sweep(ds)
    losses = np.array([row.loss["dp"]["precision"] for row in rep.rows])
    assert rep.averages["dp"]["precision"] == pytest.approx(losses.mean())
    mean = rep.mean_row()
    assert mean[0] == "mean"
    assert mean[rep.columns().index("dp_precision_loss")] == pytest.approx(losses.mean())


def test_default_config_ordering():
    avg = cost_sweep(generate(SynthConfig())).averages
    for m in ("precision", "recall", "accuracy"):
        assert avg["eo"][m] < avg["dp"][m]


def test_transfer_sweep_spends_exact_budget():
    ds = generate(SynthConfig(n=3000))
    rep = cost_sweep(ds.split("test"), fit_ds=ds.split("validation"))
    n = ds.split("test").n
    assert all(sum(c.values()) == row.budget == int(np.floor(row.rate * n + 1e-9))
               for row in rep.rows for c in row.fair_counts.values())


def test_split_budget():
    assert split_budget(10, 0.25, 100, 100) == (2, 8)
    assert split_budget(10, 1.0, 4, 100) == (4, 6)
    assert split_budget(10, 0.0, 100, 3) == (7, 3)


def test_curve_d1(d1):
    curve = allocation_curve(d1, 4, np.linspace(0, 1, 5), "B")
    assert curve.markers["all_advantaged"].counts == {"A": 4, "B": 0}
    assert curve.markers["all_advantaged"].precision == 0.5
    assert len(curve.points) == 5
    assert all(sum(p.counts.values()) == 4 for p in curve.points)
    dp = enforce_dp(d1, 4).allocation
    half = next(p for p in curve.points if p.alpha == 0.5)
    assert half.counts == dp.counts
    assert half.precision == metric_at_r(d1, dp).precision == curve.markers["dp"].precision


def test_curve_full_budget_flat(d1):
    curve = allocation_curve(d1, 8, np.linspace(0, 1, 5), "B")
    assert {p.precision for p in curve.points} == {0.5}


def test_curve_interior_optimum():
    ds = generate(SynthConfig())
    curve = allocation_curve(ds, ds.n // 4, np.linspace(0, 1, 101), "B")
    best = curve.markers["optimum"].precision
    assert best > curve.markers["all_advantaged"].precision
    assert best > curve.markers["all_disadvantaged"].precision


def test_parameter_sweep_validation():
    cfg = SynthConfig(n=500)
    with pytest.raises(ValueError, match="at least 3"):
        parameter_sweep(cfg, "disparity", [0.0, 0.1], 3)
    with pytest.raises(ValueError, match="sorted"):
        parameter_sweep(cfg, "disparity", [0.0, 0.2, 0.1], 3)
    with pytest.raises(ValueError, match="noise"):
        parameter_sweep(cfg, "global_noise", [0.0, 0.3, 0.6], 3)
    with pytest.raises(ValueError, match="unknown parameter"):
        parameter_sweep(cfg, "colour", [0.0, 0.1, 0.2], 3)


def test_parameter_sweep_order_independent_of_workers():
    cfg = SynthConfig(n=1000)
    grid = default_rate_grid(10)
    one = parameter_sweep(cfg, "disparity", [0.0, 0.1, 0.2], 3, rate_grid=grid)
    two = parameter_sweep(cfg, "disparity", [0.0, 0.1, 0.2], 3, rate_grid=grid, workers=2)
    assert one.to_dict() == two.to_dict()


def test_disparity_trend_descending_levels():
    cfg = SynthConfig(n=2000)
    table = parameter_sweep(cfg, "disparity", [0.3, 0.2, 0.1, 0.0], 3, rate_grid=default_rate_grid(20))
    assert table.rank_correlation["dp"] > 0


def test_perfect_model_examples():
    flat = perfect_model_check({"A": 0.3, "B": 0.3}, {"A": 0.5, "B": 0.5}, 1000)
    assert max(abs(c) for c in flat.costs) < 1e-12 and flat.between is None
    rep = perfect_model_check({"A": 0.4, "B": 0.2}, {"A": 0.5, "B": 0.5}, 2000)
    assert 0.2 < rep.argmax_rate < 0.4
    assert rep.costs == pytest.approx(rep.oracle_costs)
    assert rep.disparity == pytest.approx(0.2)
    # continuous peak at the global base rate
    assert rep.continuous_argmax == pytest.approx(0.3)
    assert rep.max_cost == pytest.approx(rep.continuous_max_cost, abs=0.01)
