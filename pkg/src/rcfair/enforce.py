"""Fair allocations at an exact budget via per-group thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import solver
from .dataset import ScoredDataset
from .metrics import (
    DP,
    DECREASING,
    ONE_MINUS_SELECTION_RATE,
    Allocation,
    HarmSpec,
    harm_curve,
)

__all__ = [
    "Allocation",
    "EnforcementResult",
    "apportion",
    "budget_for_rate",
    "enforce",
    "enforce_dp",
    "enforce_harm_cap",
    "sweep_rates",
    "transfer_proportions",
]


@dataclass(frozen=True, eq=False)
class EnforcementResult:
    allocation: Allocation
    achieved_harms: dict[str, float]
    gap: float
    harm_cap: float
    spec: HarmSpec

    def to_dict(self) -> dict:
        return {
            "harm": self.spec.kind,
            "harm_cap": self.harm_cap,
            "gap": self.gap,
            "harms": dict(self.achieved_harms),
            **self.allocation.to_dict(),
        }


def budget_for_rate(rate: float, n: int) -> int:
    """K = floor(rate * n), tolerant of binary rounding (0.29 * 100 -> 29)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate {rate} outside [0, 1]")
    return min(n, int(math.floor(rate * n + 1e-9)))


def apportion(
    total: int,
    weights: Sequence,
    capacities: Sequence[int] | None = None,
    sizes: Sequence[int] | None = None,
) -> list[int]:
    """Largest-remainder split of ``total`` proportional to ``weights``.

    Remainder ties go to the smaller ``sizes`` entry first, then to the earlier
    position.  A share above its capacity is clipped and the excess spilled over
    the groups with room, proportionally to their sizes.
    """
    n = len(weights)
    caps = list(capacities) if capacities is not None else [total] * n
    sizes = list(sizes) if sizes is not None else caps
    if total < 0 or total > sum(caps):
        raise ValueError(f"cannot place {total} units in capacity {sum(caps)}")
    weights = [Fraction(w) for w in weights]
    if any(w < 0 for w in weights):
        raise ValueError("negative weight")
    if sum(weights) == 0:
        weights = [Fraction(s) for s in sizes]

    counts = _largest_remainder(total, weights, sizes)
    while True:
        excess = sum(max(0, c - cap) for c, cap in zip(counts, caps))
        if excess == 0:
            return counts
        counts = [min(c, cap) for c, cap in zip(counts, caps)]
        open_ = [i for i in range(n) if counts[i] < caps[i]]
        extra = _largest_remainder(
            excess, [Fraction(sizes[i]) for i in open_], [sizes[i] for i in open_]
        )
        for i, e in zip(open_, extra):
            counts[i] += e


def _largest_remainder(total: int, weights: Sequence[Fraction], sizes: Sequence[int]) -> list[int]:
    wsum = sum(weights)
    if wsum == 0:
        raise ValueError("all weights are zero")
    quotas = [total * w / wsum for w in weights]
    counts = [math.floor(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), sizes[i], i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def _result(ds: ScoredDataset, counts: Mapping[str, int], spec: HarmSpec, cap: float | None = None):
    alloc = Allocation.from_counts(ds, counts)
    harms = {g: float(harm_curve(ds, spec, g, empty_precision=0.0)[alloc.counts[g]]) for g in ds.groups}
    top = max(harms.values())
    return EnforcementResult(alloc, harms, top - min(harms.values()), top if cap is None else cap, spec)


def _check_budget(ds: ScoredDataset, k: int) -> None:
    if not 0 <= k <= ds.n:
        raise ValueError(f"budget {k} outside [0, {ds.n}]")


def enforce_dp(ds: ScoredDataset, k: int) -> EnforcementResult:
    """Demographic parity: the top share of every group, sized by apportionment."""
    _check_budget(ds, k)
    sizes = [ds.group_size(g) for g in ds.groups]
    counts = apportion(k, sizes, sizes, sizes)
    return _result(ds, dict(zip(ds.groups, counts)), DP)


def curves_for(ds: ScoredDataset, spec: HarmSpec) -> solver.Curves:
    harms, tps, prios = [], [], []
    for g in ds.groups:
        harms.append(harm_curve(ds, spec, g, empty_precision=0.0))
        tps.append(ds.cum_positives[g])
        prios.append(ds.scores[ds.per_group_index[g]])
    return solver.Curves(harms, tps, prios)


def enforce_harm_cap(
    ds: ScoredDataset, spec: HarmSpec, k: int, exact: bool | None = None
) -> EnforcementResult:
    """Per-group thresholds with the smallest harm gap that spend exactly ``k``.

    The cap ``h`` is swept over every achievable group harm; each group keeps its
    threshold where its harm sits just under ``h``, and slots left over are placed
    without leaving the band between ``h`` and the best attainable harm floor.
    Among equally fair solutions the lowest cap wins.
    """
    if spec.direction != DECREASING:
        raise ValueError(f"{spec.kind} increases with the selection rate; use solve_minimax")
    _check_budget(ds, k)
    sol = solver.solve(curves_for(ds, spec), k, solver.MIN_GAP, exact=exact)
    return _result(ds, dict(zip(ds.groups, sol.counts)), spec, sol.upper)


def enforce(ds: ScoredDataset, spec: HarmSpec, k: int, exact: bool | None = None) -> EnforcementResult:
    if spec.kind == ONE_MINUS_SELECTION_RATE:
        return enforce_dp(ds, k)
    return enforce_harm_cap(ds, spec, k, exact=exact)


def sweep_rates(
    ds: ScoredDataset, spec: HarmSpec, rates: Sequence[float], exact: bool | None = None
) -> list[EnforcementResult]:
    out = []
    for r in rates:
        if not 0.0 < r <= 1.0:
            raise ValueError(f"rate {r} outside (0, 1]")
        out.append(enforce(ds, spec, budget_for_rate(r, ds.n), exact=exact))
    return out


def transfer_proportions(
    val_result: EnforcementResult | Allocation, test_ds: ScoredDataset, k_test: int
) -> Allocation:
    """Re-use validation budget shares ``k_g / K`` on the test split at budget ``k_test``."""
    alloc = val_result.allocation if isinstance(val_result, EnforcementResult) else val_result
    missing = [g for g in alloc.counts if g not in test_ds.per_group_index]
    if missing:
        raise KeyError(f"groups {missing} absent from the test split")
    extra = [g for g in test_ds.groups if g not in alloc.counts]
    if extra:
        raise KeyError(f"groups {extra} absent from the validation split")
    _check_budget(test_ds, k_test)
    sizes = [test_ds.group_size(g) for g in test_ds.groups]
    weights = [alloc.counts[g] for g in test_ds.groups]
    counts = apportion(k_test, weights, sizes, sizes)
    return Allocation.from_counts(test_ds, dict(zip(test_ds.groups, counts)))


def fit_and_transfer(
    val_ds: ScoredDataset, test_ds: ScoredDataset, spec: HarmSpec, rate: float, exact: bool | None = None
) -> Allocation:
    fitted = enforce(val_ds, spec, budget_for_rate(rate, val_ds.n), exact=exact)
    return transfer_proportions(fitted, test_ds, budget_for_rate(rate, test_ds.n))


def rate_spread(ds: ScoredDataset, alloc: Allocation) -> float:
    rates = np.array(list(alloc.rates(ds).values()))
    return float(rates.max() - rates.min())

