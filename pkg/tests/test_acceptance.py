"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_dataset
from rcfair import synth
from rcfair.analysis import allocation_curve, cost_sweep, default_rate_grid, parameter_sweep, perfect_model_check
from rcfair.bounds import check_bound_compliance
from rcfair.cli import main
from rcfair.enforce import budget_for_rate, enforce_dp, enforce_harm_cap, rate_spread, transfer_proportions
from rcfair.metrics import EO
from rcfair.minimax import objective_of, oracle_table, solve_minimax
from rcfair.solver import MIN_GAP, MINIMAX

D1 = str(Path(__file__).parent / "data" / "d1.csv")
GRID = default_rate_grid(100)

# budget sums observed by suites 1, 2 and the cost sweeps, checked by criterion 3
BUDGET_LOG: dict[str, list[tuple[int, int]]] = {"suite1": [], "suite2": [], "sweeps": []}


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def multi_group_config(i: int) -> synth.SynthConfig:
    rng = np.random.default_rng(1000 + i)
    n_groups = 2 + i % 3
    names = [chr(ord("A") + j) for j in range(n_groups)]
    weights = rng.uniform(0.5, 1.5, n_groups)
    weights = weights / weights.sum()
    return synth.SynthConfig(
        n=20_000,
        group_weights=dict(zip(names, weights)),
        base_rates=dict(zip(names, rng.uniform(0.15, 0.5, n_groups))),
        seed=i,
        disadvantaged="A",
    )


def test_c01_equality_of_harm(verdict):
    start = time.perf_counter()
    worst, failures = 0.0, []
    for i in range(50):
        ds = synth.generate(multi_group_config(i))
        min_pos = min(int(ds.cum_positives[g][-1]) for g in ds.groups)
        for r in (0.1, 0.3, 0.5, 0.7):
            k = budget_for_rate(r, ds.n)
            res = solve_minimax(ds, EO, k)
            BUDGET_LOG["suite1"].append((res.allocation.budget, k))
            ratio = res.gap / (2 / min_pos)
            worst = max(worst, ratio)
            if res.gap > 2 / min_pos:
                failures.append((i, r, res.gap))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30
    verdict(1, ok, f"200 solves, worst gap / (2/min positives) = {worst:.3f}, {len(failures)} over, {elapsed:.1f}s")


def test_c02_oracle_equivalence(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    agree = 0
    for _ in range(200):
        ds = random_dataset(rng, int(rng.integers(6, 25)), int(rng.integers(2, 4)), ties=bool(rng.integers(0, 2)))
        gap_table = oracle_table(ds, EO, MIN_GAP)
        max_table = oracle_table(ds, EO, MINIMAX)
        same = True
        for k in range(ds.n + 1):
            cap = enforce_harm_cap(ds, EO, k)
            mm = solve_minimax(ds, EO, k)
            BUDGET_LOG["suite2"] += [(cap.allocation.budget, k), (mm.allocation.budget, k)]
            same &= abs(cap.gap - gap_table[k][1]) < 1e-12
            same &= abs(objective_of(mm)[0] - max_table[k][0]) < 1e-12
        agree += same
    elapsed = time.perf_counter() - start
    verdict(2, agree == 200 and elapsed < 10, f"{agree}/200 instances match the oracle, {elapsed:.1f}s")


def _bound_datasets():
    return [synth.generate(synth.SynthConfig(n=10_000, seed=s)) for s in range(20)]


def test_c03_full_budget(verdict):
    for ds in _bound_datasets()[:5] + [random_dataset(np.random.default_rng(s), 24, 3) for s in range(5)]:
        rep = cost_sweep(ds, ("dp", "eo"), GRID)
        for row in rep.rows:
            for counts in row.fair_counts.values():
                BUDGET_LOG["sweeps"].append((sum(counts.values()), row.budget))
    if not BUDGET_LOG["suite1"]:
        test_c01_equality_of_harm(lambda *a: None)
    if not BUDGET_LOG["suite2"]:
        test_c02_oracle_equivalence(lambda *a: None)
    checked = sum(len(v) for v in BUDGET_LOG.values())
    off = sum(spent != k for v in BUDGET_LOG.values() for spent, k in v)
    verdict(3, off == 0 and checked > 0, f"{checked} allocations checked, {off} off budget")


def test_c04_bound_compliance(verdict):
    violations, rows = 0, 0
    for ds in _bound_datasets():
        for notion in ("dp", "eo"):
            for metric in ("accuracy", "recall"):
                rep = check_bound_compliance(ds, notion, metric, GRID)
                rows += len(rep.rows)
                violations += len(rep.violations)
    verdict(4, violations == 0, f"{rows} (dataset, notion, metric, rate) rows, {violations} violations")


def test_c05_zero_cost_at_full_rate(verdict):
    datasets = _bound_datasets()[:5] + [synth.generate(multi_group_config(i)) for i in range(3)]
    datasets += [random_dataset(np.random.default_rng(s), 20, 3, ties=True) for s in range(10)]
    nonzero = 0
    for ds in datasets:
        row = cost_sweep(ds, ("dp", "eo"), [1.0]).rows[0]
        nonzero += sum(v != 0 for n in ("dp", "eo") for v in row.loss[n].values())
        for metric in ("fpr", "specificity", "fnr"):
            for notion in ("dp", "eo"):
                nonzero += check_bound_compliance(ds, notion, metric, [1.0]).rows[0].cost != 0
    verdict(5, nonzero == 0, f"{len(datasets)} datasets, {nonzero} non-zero costs at r=1")


def test_c06_dp_granularity(verdict):
    datasets = _bound_datasets() + [synth.generate(multi_group_config(i)) for i in range(10)]
    bad, total = 0, 0
    for ds in datasets:
        limit = 1 / min(ds.group_size(g) for g in ds.groups)
        for r in GRID:
            total += 1
            bad += not rate_spread(ds, enforce_dp(ds, budget_for_rate(r, ds.n)).allocation) < limit
    verdict(6, bad == 0, f"{total} (dataset, rate) pairs, {bad} with spread >= 1/min|g|")


TREND_LEVELS = {
    "disparity": [0.0, 0.05, 0.1, 0.15, 0.2],
    "global_noise": [0.0, 0.125, 0.25, 0.375, 0.5],
    "subgroup_noise": [0.0, 0.125, 0.25, 0.375, 0.5],
    "subgroup_size": [0.2, 0.4, 0.6, 0.8, 1.0],
}
TREND_SIGNS = {"disparity": 1, "global_noise": -1, "subgroup_noise": 1, "subgroup_size": 1}


def test_c07_parameter_trends(verdict):
    start = time.perf_counter()
    cfg = synth.SynthConfig()
    parts, ok = [], True
    for param, levels in TREND_LEVELS.items():
        rho = parameter_sweep(cfg, param, levels, [42, 43, 44, 45, 46], ("dp", "eo"), GRID).rank_correlation
        for notion in ("dp", "eo"):
            good = np.sign(rho[notion]) == TREND_SIGNS[param] and abs(rho[notion]) >= 0.8
            ok &= bool(good)
            parts.append(f"{param}/{notion} rho={rho[notion]:+.1f}{'' if good else ' (wrong)'}")
        if param == "subgroup_noise":
            faster = abs(rho["eo"]) >= abs(rho["dp"])
            ok &= faster
            parts.append(f"|rho_eo|>=|rho_dp| {faster}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    verdict(7, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


def test_c08_eo_cheaper_than_dp(verdict):
    avg = cost_sweep(synth.generate(synth.SynthConfig()), ("dp", "eo"), GRID).averages
    ok = all(avg["eo"][m] < avg["dp"][m] for m in ("precision", "recall", "accuracy"))
    detail = ", ".join(f"{m} eo {avg['eo'][m]:.4f} vs dp {avg['dp'][m]:.4f}" for m in ("precision", "recall", "accuracy"))
    verdict(8, ok, detail)


def test_c09_perfect_model_location(verdict):
    pairs = [(0.4, 0.2), (0.5, 0.2), (0.3, 0.1), (0.6, 0.4), (0.7, 0.3),
             (0.25, 0.15), (0.8, 0.5), (0.45, 0.25), (0.55, 0.35), (0.9, 0.6)]
    lines, ok = [], True
    for hi, lo in pairs:
        rep = perfect_model_check({"A": hi, "B": lo}, {"A": 0.5, "B": 0.5}, 10_000)
        ok &= bool(rep.between)
        lines.append(
            f"({hi},{lo}) argmax {rep.argmax_rate:.2f} max {rep.max_cost:.4f} "
            f"oracle {rep.oracle_max_cost:.4f} disparity {rep.disparity:.2f}"
        )
    verdict(9, ok, f"10 pairs, argmax strictly between base rates: {ok}; " + "; ".join(lines))


def test_c10_interior_optimum(verdict):
    alphas = np.linspace(0, 1, 101)
    wins = 0
    for seed in range(10):
        ds = synth.generate(synth.with_seed(synth.SynthConfig(), seed))
        curve = allocation_curve(ds, ds.n // 4, alphas, "B")
        best = curve.markers["optimum"].precision
        wins += best > curve.markers["all_advantaged"].precision and best > curve.markers["all_disadvantaged"].precision
    verdict(10, wins == 10, f"interior optimum beats both extremes on {wins}/10 seeds")


def test_c11_transfer_fidelity(verdict):
    worst, off, over = 0.0, 0, 0
    for seed in range(20):
        ds = synth.generate(synth.SynthConfig(seed=seed))
        val, test = ds.split("validation"), ds.split("test")
        granularity = 1 / min(test.group_size(g) for g in test.groups)
        for r in GRID:
            fitted = enforce_dp(val, budget_for_rate(r, val.n))
            k_test = budget_for_rate(r, test.n)
            alloc = transfer_proportions(fitted, test, k_test)
            off += alloc.budget != k_test
            gap = rate_spread(test, alloc)
            worst = max(worst, gap / granularity)
            over += gap > 3 * granularity
    verdict(11, off == 0 and over == 0, f"20 seeds x 100 rates, worst gap {worst:.2f} x granularity, {off} off budget")


CLI_RUNS = [
    ["synth", "--seed", "42", "--n", "2000", "--output", "{o}/synth.csv"],
    ["perturb", "--param", "disparity", "--level", "0.1", "--n", "2000", "--output", "{o}/perturb.csv"],
    ["enforce", "--input", D1, "--notion", "dp", "--rate", "0.5", "--output", "{o}/enforce.json"],
    ["enforce", "--input", "{o}/synth.csv", "--notion", "eo", "--rate", "0.3", "--transfer-from-split",
     "--output", "{o}/transfer.csv"],
    ["cost-sweep", "--input", "{o}/synth.csv", "--output", "{o}/sweep.csv", "--svg", "{o}/svg"],
    ["minimax", "--input", "{o}/synth.csv", "--rate", "0.3", "--output", "{o}/minimax.json"],
    ["bounds", "--metric", "recall", "--b", "0.2393", "--r", "0.3", "--g", "0.1", "--output", "{o}/bounds.json"],
    ["alloc-curve", "--input", "{o}/synth.csv", "--k", "500", "--output", "{o}/curve.csv", "--svg", "{o}/curve.svg"],
    ["sweep-params", "--param", "global_noise", "--levels", "0,0.25,0.5", "--seeds", "3", "--n", "1000",
     "--grid", "20", "--output", "{o}/trend.json", "--svg", "{o}/trend.svg"],
    ["report", "--input", "{o}/synth.csv", "--output", "{o}/report.json", "--svg", "{o}/report"],
]


def _cli_outputs(root: Path) -> dict:
    root.mkdir()
    for args in CLI_RUNS:
        code = main([a.format(o=root) for a in args])
        assert code == 0, args
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c12_cli_determinism(tmp_path, verdict):
    first = _cli_outputs(tmp_path / "a")
    second = _cli_outputs(tmp_path / "b")
    differing = [str(k) for k in first if first[k] != second.get(k)]
    ok = first.keys() == second.keys() and not differing
    verdict(12, ok, f"{len(first)} output files over {len(CLI_RUNS)} commands, {len(differing)} differ")
