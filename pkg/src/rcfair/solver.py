"""Exact-budget search over per-group prefix counts.

Each group is described by a harm curve ``harm[k]`` (harm when the group's top
``k`` members are selected), an integer ``tp[k]`` used to break ties towards
higher precision, and a ``priority[j]`` for the ``j``-th candidate used by the
greedy fill.  Solutions are described by a band ``[lower, upper]``: every group
harm lies inside it, ``upper`` is the maximum harm and ``lower`` the minimum.

Two objectives:

``minimax``
    smallest possible maximum harm, then smallest gap.
``min_gap``
    smallest possible gap, then smallest maximum harm.

Non-increasing curves use a threshold search (``O(N log N)``).  Other curves
fall back to subset-sum feasibility over the achievable harm grid.  Inside the
optimal band the leftover budget is placed either greedily by priority (large
monotone instances) or by an exact dynamic program that maximises ``sum(tp)``
and then picks the lexicographically smallest count vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MINIMAX = "minimax"
MIN_GAP = "min_gap"

# Above this many samples the band fill is greedy rather than an exact DP.
EXACT_FILL_LIMIT = 2000

_GAP_TOL = 1e-12


@dataclass(frozen=True)
class Curves:
    harms: Sequence[np.ndarray]
    tps: Sequence[np.ndarray]
    priorities: Sequence[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [len(h) - 1 for h in self.harms]

    def reversed(self) -> "Curves":
        """Curves of the complementary selection: ``k' = n - k``."""
        return Curves(
            [h[::-1].copy() for h in self.harms],
            [t[::-1].copy() for t in self.tps],
            [-p[::-1].copy() for p in self.priorities],
        )


@dataclass(frozen=True)
class Solution:
    counts: list[int]
    upper: float
    lower: float

    @property
    def gap(self) -> float:
        return self.upper - self.lower


class InfeasibleError(ValueError):
    pass


def is_nonincreasing(curves: Curves) -> bool:
    return all(np.all(np.diff(h) <= 0) for h in curves.harms)


def solve(
    curves: Curves,
    budget: int,
    objective: str = MINIMAX,
    exact: bool | None = None,
    lex_largest: bool = False,
) -> Solution:
    sizes = curves.sizes
    if not 0 <= budget <= sum(sizes):
        raise InfeasibleError(f"budget {budget} outside [0, {sum(sizes)}]")
    if objective not in (MINIMAX, MIN_GAP):
        raise ValueError(f"unknown objective {objective!r}")
    if any(np.isnan(h).any() for h in curves.harms):
        raise ValueError("harm curves contain NaN")
    if exact is None:
        exact = sum(sizes) <= EXACT_FILL_LIMIT

    if is_nonincreasing(curves):
        upper, lower = _band_monotone(curves, budget, objective)
        lo = [_lo(h, upper) for h in curves.harms]
        hi = [_cap(h, lower) for h in curves.harms]
        allowed = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    else:
        upper, lower = _band_generic(curves, budget, objective)
        allowed = [np.flatnonzero((h <= upper) & (h >= lower)) for h in curves.harms]
        # bands need not be contiguous here, so the greedy fill does not apply
        exact = True

    if exact:
        counts = _fill_dp(curves, allowed, budget, lex_largest)
    else:
        counts = _fill_greedy(curves, allowed, budget)
    harms = [float(h[k]) for h, k in zip(curves.harms, counts)]
    return Solution(counts, max(harms), min(harms))


# -- monotone threshold search -------------------------------------------------


def _lo(harm: np.ndarray, u: float) -> int:
    """Fewest selections bringing the harm to at most ``u``."""
    return int(np.searchsorted(-harm, -u, side="left"))


def _cap(harm: np.ndarray, m: float) -> int:
    """Most selections keeping the harm at least ``m`` (-1 if none)."""
    return int(np.searchsorted(-harm, -m, side="right")) - 1


def _band_monotone(curves: Curves, budget: int, objective: str) -> tuple[float, float]:
    harms = curves.harms
    grid = np.unique(np.concatenate(harms))

    # smallest cap h whose minimal counts fit the budget
    a, b = 0, len(grid) - 1
    while a < b:
        mid = (a + b) // 2
        if sum(_lo(h, grid[mid]) for h in harms) <= budget:
            b = mid
        else:
            a = mid + 1
    h_star = a

    # largest floor m whose maximal counts still reach the budget
    ceiling = min(float(h[0]) for h in harms)
    a, b = 0, int(np.searchsorted(grid, ceiling, side="right")) - 1
    while a < b:
        mid = (a + b + 1) // 2
        if sum(_cap(h, grid[mid]) for h in harms) >= budget:
            a = mid
        else:
            b = mid - 1
    m_budget = grid[a]

    uppers = grid[h_star:] if objective == MIN_GAP else grid[h_star : h_star + 1]
    floor_at = np.full(len(uppers), np.inf)
    for h in harms:
        lo = np.searchsorted(-h, -uppers, side="left")
        floor_at = np.minimum(floor_at, h[lo])
    lowers = np.minimum(floor_at, m_budget)
    gaps = uppers - lowers
    best = int(np.flatnonzero(gaps <= gaps.min() + _GAP_TOL)[0])
    return float(uppers[best]), float(lowers[best])


# -- generic search ------------------------------------------------------------


def _reachable(allowed: Sequence[np.ndarray], budget: int) -> bool:
    mask = (1 << (budget + 1)) - 1
    reach = 1
    for ks in allowed:
        nxt = 0
        for k in ks:
            if k > budget:
                break
            nxt |= reach << int(k)
        reach = nxt & mask
        if not reach:
            return False
    return bool(reach >> budget & 1)


def _feasible(curves: Curves, budget: int, u: float, m: float) -> bool:
    allowed = [np.flatnonzero((h <= u) & (h >= m)) for h in curves.harms]
    if any(len(a) == 0 for a in allowed):
        return False
    return _reachable(allowed, budget)


def _band_generic(curves: Curves, budget: int, objective: str) -> tuple[float, float]:
    grid = np.unique(np.concatenate(curves.harms))
    a, b = 0, len(grid) - 1
    while a < b:
        mid = (a + b) // 2
        if _feasible(curves, budget, grid[mid], -np.inf):
            b = mid
        else:
            a = mid + 1
    h_star = a
    candidates = range(h_star, len(grid)) if objective == MIN_GAP else [h_star]
    best = None
    for iu in candidates:
        u = grid[iu]
        a, b = 0, iu
        while a < b:
            mid = (a + b + 1) // 2
            if _feasible(curves, budget, u, grid[mid]):
                a = mid
            else:
                b = mid - 1
        gap = u - grid[a]
        if best is None or gap < best[0] - _GAP_TOL:
            best = (gap, float(u), float(grid[a]))
    return best[1], best[2]


# -- filling the band ----------------------------------------------------------


def _fill_greedy(curves: Curves, allowed: Sequence[np.ndarray], budget: int) -> list[int]:
    """Start at each group's smallest allowed count; add candidates by priority.

    Only valid for contiguous allowed ranges (the monotone case); generic bands
    always go through the DP.
    """
    counts = [int(a[0]) for a in allowed]
    left = budget - sum(counts)
    if left == 0:
        return counts
    prio, grp, pos = [], [], []
    for g, (a, p) in enumerate(zip(allowed, curves.priorities)):
        start, stop = int(a[0]), int(a[-1])
        if stop > start:
            prio.append(p[start:stop])
            grp.append(np.full(stop - start, g))
            pos.append(np.arange(start, stop))
    prio, grp, pos = (np.concatenate(x) for x in (prio, grp, pos))
    order = np.lexsort((pos, grp, -prio))[:left]
    for g in grp[order]:
        counts[g] += 1
    return counts


_NEG = np.iinfo(np.int64).min // 4


def _fill_dp(
    curves: Curves, allowed: Sequence[np.ndarray], budget: int, lex_largest: bool
) -> list[int]:
    n_groups = len(allowed)
    suffix = [None] * (n_groups + 1)
    last = np.full(budget + 1, _NEG, dtype=np.int64)
    last[0] = 0
    suffix[n_groups] = last
    for i in range(n_groups - 1, -1, -1):
        nxt = suffix[i + 1]
        cur = np.full(budget + 1, _NEG, dtype=np.int64)
        tp = curves.tps[i]
        for k in allowed[i]:
            k = int(k)
            if k > budget:
                break
            cand = nxt[: budget + 1 - k] + int(tp[k])
            np.maximum(cur[k:], cand, out=cur[k:])
        cur[cur < _NEG // 2] = _NEG
        suffix[i] = cur
    if suffix[0][budget] == _NEG:
        raise InfeasibleError("no allocation inside the optimal band")
    counts, t = [], budget
    for i in range(n_groups):
        target = suffix[i][t]
        ks = allowed[i][::-1] if lex_largest else allowed[i]
        for k in ks:
            k = int(k)
            if k <= t and suffix[i + 1][t - k] != _NEG and curves.tps[i][k] + suffix[i + 1][t - k] == target:
                counts.append(k)
                t -= k
                break
    return counts
