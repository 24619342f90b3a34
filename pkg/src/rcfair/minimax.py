"""Minimise the worst group harm under a fixed budget, plus a brute-force referee."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import solver
from .dataset import ScoredDataset
from .enforce import EnforcementResult, _result, curves_for
from .metrics import (
    DECREASING,
    FALSE_POSITIVE_RATE,
    ONE_MINUS_PRECISION,
    ONE_MINUS_RECALL,
    ONE_MINUS_SELECTION_RATE,
    HarmSpec,
)

EXACT = "exact"
AT_MOST = "at_most"

ORACLE_LIMIT = 10**6


class InstanceTooLargeError(ValueError):
    pass


def solve_minimax(
    ds: ScoredDataset,
    spec: HarmSpec,
    k: int,
    budget_mode: str = EXACT,
    exact: bool | None = None,
) -> EnforcementResult:
    """Allocation of ``k`` positives minimising the largest group harm.

    Ties among optima go to the smallest gap, then most true positives, then the
    lexicographically smallest count vector.  Harms that grow with the selection
    rate are handled on the complementary selection (budget ``N - k``) and mapped
    back.  ``budget_mode="at_most"`` lets the solver spend fewer than ``k``; for
    growing harms that means selecting nobody.
    """
    if not 0 <= k <= ds.n:
        raise ValueError(f"budget {k} outside [0, {ds.n}]")
    if budget_mode not in (EXACT, AT_MOST):
        raise ValueError(f"unknown budget mode {budget_mode!r}")
    curves = curves_for(ds, spec)
    if spec.direction == DECREASING:
        # spending less never lowers a decreasing harm, so both modes coincide
        sol = solver.solve(curves, k, solver.MINIMAX, exact=exact)
        counts = sol.counts
    elif budget_mode == AT_MOST:
        counts = [0] * len(ds.groups)
    else:
        sizes = curves.sizes
        sol = solver.solve(curves.reversed(), ds.n - k, solver.MINIMAX, exact=exact, lex_largest=True)
        counts = [n - c for n, c in zip(sizes, sol.counts)]
    res = _result(ds, dict(zip(ds.groups, counts)), spec)
    return res


def _direct_harms(labels: list[int], kind: str) -> list[float]:
    """Harm for every prefix length, counted straight from the labels."""
    size = len(labels)
    pos = sum(labels)
    out = []
    for k in range(size + 1):
        tp = sum(labels[:k])
        if kind == ONE_MINUS_SELECTION_RATE:
            out.append(1.0 - k / size)
        elif kind == ONE_MINUS_RECALL:
            out.append(1.0 - tp / pos if pos else 0.0)
        elif kind == ONE_MINUS_PRECISION:
            out.append(1.0 - tp / k if k else 0.0)
        elif kind == FALSE_POSITIVE_RATE:
            neg = size - pos
            out.append((k - tp) / neg if neg else 0.0)
        else:
            raise ValueError(kind)
    return out


def oracle_table(ds: ScoredDataset, spec: HarmSpec, objective: str = solver.MINIMAX) -> dict[int, tuple]:
    """Best count vector for every budget by exhaustive enumeration.

    Returns ``{K: (max_harm, gap, true_positives, counts)}``.  The ranking is
    (max harm, gap, -TP, counts) for ``minimax`` and (gap, max harm, -TP, counts)
    for ``min_gap``.
    """
    sizes = [ds.group_size(g) for g in ds.groups]
    if math.prod(s + 1 for s in sizes) > ORACLE_LIMIT:
        raise InstanceTooLargeError(f"{math.prod(s + 1 for s in sizes)} count vectors")
    labels = [[int(ds.labels[i]) for i in ds.per_group_index[g]] for g in ds.groups]
    harms = [_direct_harms(lab, spec.kind) for lab in labels]
    tps = [[sum(lab[:k]) for k in range(len(lab) + 1)] for lab in labels]
    best: dict[int, tuple] = {}
    for counts in itertools.product(*(range(s + 1) for s in sizes)):
        hs = [h[c] for h, c in zip(harms, counts)]
        top, gap = max(hs), max(hs) - min(hs)
        tp = sum(t[c] for t, c in zip(tps, counts))
        if objective == solver.MINIMAX:
            key = (round(top, 12), round(gap, 12), -tp, counts)
        else:
            key = (round(gap, 12), round(top, 12), -tp, counts)
        budget = sum(counts)
        if budget not in best or key < best[budget][0]:
            best[budget] = (key, (top, gap, tp, list(counts)))
    return {k: v[1] for k, v in best.items()}


def oracle_minimax(
    ds: ScoredDataset, spec: HarmSpec, k: int, objective: str = solver.MINIMAX
) -> EnforcementResult:
    if not 0 <= k <= ds.n:
        raise ValueError(f"budget {k} outside [0, {ds.n}]")
    counts = oracle_table(ds, spec, objective)[k][3]
    return _result(ds, dict(zip(ds.groups, counts)), spec)


@dataclass(frozen=True)
class EqualityReport:
    gap: float
    tolerance: float
    within: bool

    def to_dict(self) -> dict:
        return {"gap": self.gap, "tolerance": self.tolerance, "within": self.within}


def granularity(ds: ScoredDataset, result: EnforcementResult) -> float:
    """Largest single-step harm change over groups: max_g 1 / |denominator population|."""
    steps = []
    for g in ds.groups:
        pos = int(ds.cum_positives[g][-1])
        size = ds.group_size(g)
        denom = {
            ONE_MINUS_SELECTION_RATE: size,
            ONE_MINUS_RECALL: pos,
            ONE_MINUS_PRECISION: result.allocation.counts[g],
            FALSE_POSITIVE_RATE: size - pos,
        }[result.spec.kind]
        if denom:
            steps.append(1.0 / denom)
    return max(steps) if steps else 0.0


def check_equality_at_optimum(
    result: EnforcementResult, ds: ScoredDataset | None = None, granularity_tol: float | None = None
) -> EqualityReport:
    if granularity_tol is None:
        if ds is None:
            raise ValueError("need ds or granularity_tol")
        granularity_tol = granularity(ds, result)
    return EqualityReport(result.gap, granularity_tol, bool(result.gap <= granularity_tol + 1e-12))


def objective_of(result: EnforcementResult) -> tuple[float, float]:
    harms = np.array(list(result.achieved_harms.values()))
    return float(harms.max()), float(harms.max() - harms.min())
