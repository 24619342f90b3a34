"""Experiment engines: cost-of-fairness sweeps, allocation curves, trend studies."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from . import synth
from .bounds import compliance_limit
from .dataset import ScoredDataset, group_stats
from .enforce import apportion, budget_for_rate, enforce, enforce_dp, enforce_harm_cap, transfer_proportions
from .metrics import EO, Allocation, MetricAtR, metric_at_r, notion_spec, topk_default

PERF_METRICS = ("precision", "recall", "accuracy")
PARAMS = ("disparity", "global_noise", "subgroup_noise", "subgroup_size")


def default_rate_grid(points: int = 100) -> np.ndarray:
    """``points`` evenly spaced rates ending at 1.0 (1%, 2%, ..., 100% for 100)."""
    if points < 1:
        raise ValueError("grid needs at least one point")
    return np.arange(1, points + 1) / points


@dataclass(frozen=True)
class CostRow:
    rate: float
    budget: int
    default: MetricAtR
    fair: dict[str, MetricAtR]
    fair_counts: dict[str, dict[str, int]]
    loss: dict[str, dict[str, float]]
    p_swap: dict[str, float]
    bounds: dict[str, float | None]


@dataclass
class CostReport:
    notions: tuple[str, ...]
    rows: list[CostRow] = field(default_factory=list)

    @property
    def averages(self) -> dict[str, dict[str, float]]:
        return {
            n: {m: float(np.mean([row.loss[n][m] for row in self.rows])) for m in PERF_METRICS}
            for n in self.notions
        }

    def columns(self) -> list[str]:
        cols = ["rate", "K", "default_precision", "default_recall", "default_accuracy"]
        for n in self.notions:
            cols += [f"{n}_{m}_loss" for m in PERF_METRICS] + [f"{n}_p_swap"]
        return cols + ["bound_accuracy", "bound_recall"]

    def table(self) -> list[list]:
        out = []
        for row in self.rows:
            line = [row.rate, row.budget] + [getattr(row.default, m) for m in PERF_METRICS]
            for n in self.notions:
                line += [row.loss[n][m] for m in PERF_METRICS] + [row.p_swap[n]]
            line += [row.bounds["accuracy"], row.bounds["recall"]]
            out.append(line)
        return out

    def mean_row(self) -> list:
        """Column means, labelled ``mean`` in the rate column."""
        body = np.array(
            [[np.nan if v is None else v for v in line[2:]] for line in self.table()], dtype=float
        )
        return ["mean", ""] + [float(v) for v in np.nanmean(body, axis=0)]

    def to_dict(self) -> dict:
        return {
            "notions": list(self.notions),
            "averages": self.averages,
            "rows": [
                {
                    "rate": row.rate,
                    "K": row.budget,
                    "default": row.default.as_dict(),
                    "fair": {n: m.as_dict() for n, m in row.fair.items()},
                    "fair_counts": row.fair_counts,
                    "loss": row.loss,
                    "p_swap": row.p_swap,
                    "bounds": row.bounds,
                }
                for row in self.rows
            ],
        }


def cost_sweep(
    ds: ScoredDataset,
    notions: Sequence[str] = ("dp", "eo"),
    rate_grid: Iterable[float] | None = None,
    fit_ds: ScoredDataset | None = None,
    exact: bool | None = None,
) -> CostReport:
    """Loss of each metric when the top-K allocation is replaced by a fair one.

    With ``fit_ds`` the fair per-group shares are fitted there at the same rate
    and transferred to ``ds``; otherwise the fair allocation is computed on ``ds``.
    """
    grid = default_rate_grid() if rate_grid is None else np.asarray(list(rate_grid), dtype=float)
    specs = {n: notion_spec(n) for n in notions}
    b = ds.total_positives / ds.n
    g = min(s.weight for s in group_stats(ds).values())
    report = CostReport(tuple(notions))
    for r in grid:
        if not 0.0 < r <= 1.0:
            raise ValueError(f"rate {r} outside (0, 1]")
        k = budget_for_rate(float(r), ds.n)
        default_alloc = topk_default(ds, k)
        default = metric_at_r(ds, default_alloc)
        fair, counts, loss, p_swap = {}, {}, {}, {}
        for n, spec in specs.items():
            if fit_ds is None:
                alloc = enforce(ds, spec, k, exact=exact).allocation
            else:
                fitted = enforce(fit_ds, spec, budget_for_rate(float(r), fit_ds.n), exact=exact)
                alloc = transfer_proportions(fitted, ds, k)
            if alloc.budget != k:
                raise AssertionError(f"fair allocation spends {alloc.budget}, budget is {k}")
            m = metric_at_r(ds, alloc)
            fair[n] = m
            counts[n] = dict(alloc.counts)
            loss[n] = {x: getattr(default, x) - getattr(m, x) for x in PERF_METRICS}
            p_swap[n] = _swap(default_alloc, alloc, ds.n)
        bounds = {}
        for metric in ("accuracy", "recall"):
            if metric == "recall" and not 0.0 < b < 1.0:
                bounds[metric] = None
                continue
            _, family, _ = compliance_limit(metric, b, float(r), min(g, 0.5), 0.0, ds.n, len(ds.groups))
            bounds[metric] = family
        report.rows.append(CostRow(float(r), k, default, fair, counts, loss, p_swap, bounds))
    return report


def _swap(a: Allocation, b: Allocation, n: int) -> float:
    return np.setdiff1d(a.selected_indices, b.selected_indices, assume_unique=True).size / n


# -- allocation curves ----------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    alpha: float
    counts: dict[str, int]
    precision: float

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "counts": dict(self.counts), "precision": self.precision}


@dataclass(frozen=True)
class AllocationCurve:
    budget: int
    advantaged: str
    disadvantaged: str
    points: list[CurvePoint]
    markers: dict[str, CurvePoint]

    def to_dict(self) -> dict:
        return {
            "K": self.budget,
            "advantaged": self.advantaged,
            "disadvantaged": self.disadvantaged,
            "points": [p.to_dict() for p in self.points],
            "markers": {k: v.to_dict() for k, v in self.markers.items()},
        }


def split_budget(k: int, alpha: float, adv_size: int, dis_size: int) -> tuple[int, int]:
    """Advantaged share ``floor(alpha K)``; whatever a group cannot hold goes to the other."""
    adv = min(int(math.floor(alpha * k + 1e-9)), adv_size)
    dis = k - adv
    if dis > dis_size:
        dis = dis_size
        adv = k - dis
    return adv, dis


def allocation_curve(
    ds: ScoredDataset,
    k: int,
    alpha_grid: Iterable[float],
    disadvantaged: str,
    exact: bool | None = None,
) -> AllocationCurve:
    """Precision of every two-group split of ``k`` along ``alpha_grid``.

    ``alpha`` is the advantaged group's share of the budget.  Markers: both
    extremes, the unconstrained top-K split, the DP and EO splits, and the grid
    point of highest precision (first one on ties).
    """
    if len(ds.groups) != 2:
        raise ValueError("allocation curves need exactly two groups")
    if disadvantaged not in ds.groups:
        raise KeyError(f"unknown group {disadvantaged!r}")
    if not 0 <= k <= ds.n:
        raise ValueError(f"budget {k} outside [0, {ds.n}]")
    adv = next(g for g in ds.groups if g != disadvantaged)
    n_adv, n_dis = ds.group_size(adv), ds.group_size(disadvantaged)

    def point(alpha: float, counts: dict[str, int]) -> CurvePoint:
        alloc = Allocation.from_counts(ds, counts)
        return CurvePoint(float(alpha), dict(alloc.counts), metric_at_r(ds, alloc).precision)

    def at_alpha(alpha: float) -> CurvePoint:
        a, d = split_budget(k, alpha, n_adv, n_dis)
        return point(alpha, {adv: a, disadvantaged: d})

    def from_alloc(alloc: Allocation) -> CurvePoint:
        alpha = alloc.counts[adv] / k if k else 0.0
        return point(alpha, alloc.counts)

    points = [at_alpha(float(a)) for a in alpha_grid]
    if not points:
        raise ValueError("empty alpha grid")
    best = max(range(len(points)), key=lambda i: (points[i].precision, -i))
    markers = {
        "all_advantaged": at_alpha(1.0),
        "all_disadvantaged": at_alpha(0.0),
        "unconstrained": from_alloc(topk_default(ds, k)),
        "dp": from_alloc(enforce_dp(ds, k).allocation),
        "eo": from_alloc(enforce_harm_cap(ds, EO, k, exact=exact).allocation),
        "optimum": points[best],
    }
    return AllocationCurve(k, adv, disadvantaged, points, markers)


# -- parameter trend studies ---------------------------------------------------


@dataclass(frozen=True)
class TrendTable:
    param: str
    levels: list[float]
    seeds: list[int]
    notions: tuple[str, ...]
    metric: str
    # cells[(level_index, seed_index)][notion] = average cost over the rate grid
    cells: dict[tuple[int, int], dict[str, float]]

    @property
    def level_means(self) -> dict[str, list[float]]:
        return {
            n: [
                float(np.mean([self.cells[(i, j)][n] for j in range(len(self.seeds))]))
                for i in range(len(self.levels))
            ]
            for n in self.notions
        }

    @property
    def rank_correlation(self) -> dict[str, float]:
        return {n: spearman(self.levels, means) for n, means in self.level_means.items()}

    def rows(self) -> list[list]:
        means = self.level_means
        return [[lvl] + [means[n][i] for n in self.notions] for i, lvl in enumerate(self.levels)]

    def to_dict(self) -> dict:
        return {
            "param": self.param,
            "metric": self.metric,
            "levels": self.levels,
            "seeds": self.seeds,
            "level_means": self.level_means,
            "rank_correlation": self.rank_correlation,
            "cells": [
                {"level": self.levels[i], "seed": self.seeds[j], **self.cells[(i, j)]}
                for i, j in sorted(self.cells)
            ],
        }


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    rho = spearmanr(x, y).statistic
    return 0.0 if np.isnan(rho) else float(rho)


def perturbed_dataset(config: synth.SynthConfig, param: str, level: float, seed: int) -> ScoredDataset:
    cfg = synth.with_seed(config, seed)
    if param == "disparity":
        return synth.generate(synth.perturb_disparity(cfg, level))
    if param == "global_noise":
        return synth.generate(synth.perturb_noise(cfg, level))
    if param == "subgroup_noise":
        return synth.generate(synth.perturb_subgroup_noise(cfg, cfg.disadvantaged, level))
    if param == "subgroup_size":
        return synth.subsample_group(synth.generate(cfg), cfg.disadvantaged, level, seed)
    raise ValueError(f"unknown parameter {param!r}; expected one of {PARAMS}")


def _cell(job) -> dict[str, float]:
    config, param, level, seed, notions, grid, metric = job
    ds = perturbed_dataset(config, param, level, seed)
    avgs = cost_sweep(ds, notions, grid).averages
    return {n: avgs[n][metric] for n in notions}


def parameter_sweep(
    config: synth.SynthConfig,
    param: str,
    levels: Sequence[float],
    seeds: Sequence[int] | int,
    notions: Sequence[str] = ("dp", "eo"),
    rate_grid: Iterable[float] | None = None,
    metric: str = "precision",
    workers: int = 1,
) -> TrendTable:
    """Average fairness cost at each perturbation level, for several seeds.

    Cells are independent; with ``workers > 1`` they run in a process pool and
    are collected in (level, seed) order regardless of completion order.
    """
    if param not in PARAMS:
        raise ValueError(f"unknown parameter {param!r}; expected one of {PARAMS}")
    if metric not in PERF_METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    levels = [float(x) for x in levels]
    if isinstance(seeds, int):
        seeds = [config.seed + i for i in range(seeds)]
    seeds = [int(s) for s in seeds]
    if len(levels) < 3 or len(seeds) < 3:
        raise ValueError("need at least 3 levels and 3 seeds")
    if levels != sorted(levels) and levels != sorted(levels, reverse=True):
        raise ValueError("levels must be sorted")
    if param in ("global_noise", "subgroup_noise") and not all(0.0 <= x <= 0.5 for x in levels):
        raise ValueError("noise levels must lie in [0, 0.5]")
    if param == "subgroup_size" and not all(0.0 < x <= 1.0 for x in levels):
        raise ValueError("subgroup size levels are keep fractions in (0, 1]")
    grid = default_rate_grid() if rate_grid is None else np.asarray(list(rate_grid), dtype=float)
    jobs = [
        (config, param, lvl, s, tuple(notions), grid, metric) for lvl in levels for s in seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(job) for job in jobs]
    cells = {}
    for idx, res in enumerate(results):
        cells[(idx // len(seeds), idx % len(seeds))] = res
    return TrendTable(param, levels, seeds, tuple(notions), metric, cells)


# -- perfect classifier ------------------------------------------------------


@dataclass(frozen=True)
class PerfectModelReport:
    base_rates: dict[str, float]
    weights: dict[str, float]
    rates: list[float]
    costs: list[float]
    argmax_rate: float
    max_cost: float
    disparity: float
    oracle_costs: list[float]
    oracle_max_cost: float
    continuous_argmax: float
    continuous_max_cost: float
    between: bool | None

    def to_dict(self) -> dict:
        return {
            "base_rates": self.base_rates,
            "weights": self.weights,
            "argmax_rate": self.argmax_rate,
            "max_cost": self.max_cost,
            "disparity": self.disparity,
            "oracle_max_cost": self.oracle_max_cost,
            "continuous_argmax": self.continuous_argmax,
            "continuous_max_cost": self.continuous_max_cost,
            "argmax_between_base_rates": self.between,
            "rates": self.rates,
            "costs": self.costs,
        }


def perfect_model_check(
    base_rates: dict[str, float],
    weights: dict[str, float],
    n: int,
    rate_grid: Iterable[float] | None = None,
    seed: int = 0,
) -> PerfectModelReport:
    """DP precision cost of a classifier whose scores reproduce the labels.

    The cost curve is measured through the allocation machinery, and checked
    against a count formula (top-K takes min(K, P) positives, a group that
    selects k_g takes min(k_g, P_g)) and its continuous limit, whose peak is
    at the global base rate B with height w_lo * w_hi * (b_hi - b_lo) / B.
    """
    if len(base_rates) != 2:
        raise ValueError("perfect-model check takes exactly two groups")
    grid = default_rate_grid() if rate_grid is None else np.asarray(list(rate_grid), dtype=float)
    ds = synth.perfect_dataset(base_rates, weights, n, seed)
    stats = group_stats(ds)
    groups = list(ds.groups)
    sizes = [stats[g].size for g in groups]
    positives = [stats[g].positives for g in groups]
    total_pos = sum(positives)

    costs, oracle = [], []
    for r in grid:
        k = budget_for_rate(float(r), ds.n)
        default = metric_at_r(ds, topk_default(ds, k)).precision
        fair = metric_at_r(ds, enforce_dp(ds, k).allocation).precision
        costs.append(default - fair)
        if k:
            ks = apportion(k, sizes, sizes, sizes)
            tp_fair = sum(min(kg, pg) for kg, pg in zip(ks, positives))
            oracle.append((min(k, total_pos) - tp_fair) / k)
        else:
            oracle.append(0.0)
    i_max = int(np.argmax(costs))
    lo, hi = sorted(groups, key=lambda g: stats[g].base_rate)
    b_lo, b_hi = stats[lo].base_rate, stats[hi].base_rate
    big_b = total_pos / ds.n
    cont_max = stats[lo].weight * stats[hi].weight * (b_hi - b_lo) / big_b if big_b else 0.0
    between = None if b_lo == b_hi else bool(b_lo < grid[i_max] < b_hi)
    return PerfectModelReport(
        dict(base_rates),
        dict(weights),
        [float(r) for r in grid],
        costs,
        float(grid[i_max]),
        float(costs[i_max]),
        b_hi - b_lo,
        oracle,
        float(max(oracle)),
        big_b,
        cont_max,
        between,
    )
