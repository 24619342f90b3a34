"""Upper bounds on the cost of fairness at a fixed selection rate.

Moving between two allocations with the same budget is a sequence of swaps
(one selected instance dropped, one unselected instance added).  With ``p`` the
proportion of the dataset swapped and ``c`` the cost of one swap in units of
the metric, cost = p * c.  ``p`` is at most r, 1 - r, 1/2 and (for two groups)
the smallest-group proportion g, which gives the bound family below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import ScoredDataset, group_stats
from .enforce import budget_for_rate, enforce
from .metrics import Allocation, HarmSpec, metric_at_r, notion_spec, topk_default, true_positives

METRICS = ("accuracy", "recall", "fpr", "specificity", "fnr", "precision")

# A swap moves accuracy by up to two instances (a lost TP becomes an FN and the
# added negative becomes an FP); the other metrics see only one side of it.
SWAP_MULTIPLIER = {"accuracy": 2.0}

NOT_GUARANTEED = "not-guaranteed"


def swap_cost_factor(metric: str, b: float | None = None, r: float | None = None) -> float:
    """Per-swap cost ``c``: N divided by the number of instances the metric counts."""
    if metric == "accuracy":
        return 1.0
    if metric == "precision":
        if r is None or not 0.0 < r <= 1.0:
            raise ValueError("precision needs a selection rate in (0, 1]")
        return 1.0 / r
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if b is None or not 0.0 < b < 1.0:
        raise ValueError(f"{metric} needs a base rate strictly inside (0, 1), got {b!r}")
    if metric in ("recall", "fnr"):
        return 1.0 / b
    return 1.0 / (1.0 - b)


@dataclass(frozen=True)
class BoundReport:
    metric: str
    c_factor: float
    bounds: dict[str, float]
    applicable: dict[str, bool] = field(default_factory=dict)

    @property
    def effective(self) -> float:
        return min(v for k, v in self.bounds.items() if self.applicable.get(k, True))

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "c": self.c_factor,
            "bounds": dict(self.bounds),
            "applicable": dict(self.applicable),
            "effective": self.effective,
        }


def cost_upper_bound(
    metric: str,
    b: float | None,
    r: float,
    g: float,
    p: float | None = None,
    n_groups: int = 2,
) -> BoundReport:
    """The bound family {c/2, r c, (1-r) c, g c} (and p c when ``p`` is given).

    For precision ``r c = 1`` says nothing and is left out.  ``g c`` relies on
    every swap touching the smallest group, which holds for two groups only.
    """
    if not 0.0 < r <= 1.0:
        raise ValueError(f"selection rate {r} outside (0, 1]")
    if not 0.0 < g <= 0.5:
        raise ValueError(f"smallest-group proportion {g} outside (0, 0.5]")
    c = swap_cost_factor(metric, b, r)
    bounds = {"half_c": c / 2, "one_minus_r_c": (1.0 - r) * c, "g_c": g * c}
    applicable = {"half_c": True, "one_minus_r_c": True, "g_c": n_groups == 2}
    if metric == "precision":
        applicable["r_c"] = False
    else:
        bounds["r_c"] = r * c
        applicable["r_c"] = True
    if p is not None:
        bounds["p_c"] = p * c
        applicable["p_c"] = True
    return BoundReport(metric, c, bounds, applicable)


def swap_proportion(alloc_a: Allocation, alloc_b: Allocation, n: int | ScoredDataset) -> float:
    """Share of the dataset selected by ``alloc_a`` but not by ``alloc_b``."""
    if isinstance(n, ScoredDataset):
        n = n.n
    if alloc_a.budget != alloc_b.budget:
        raise ValueError(
            f"swaps need equal budgets, got {alloc_a.budget} and {alloc_b.budget}"
        )
    only_a = np.setdiff1d(alloc_a.selected_indices, alloc_b.selected_indices, assume_unique=True)
    return only_a.size / n


def leveling_up_bound(metric: str, r: float, g: float):
    """Extra selection needed to reach parity without touching the advantaged group."""
    if not 0.0 < r < 1.0 or not 0.0 < g < 1.0:
        raise ValueError("r and g must lie in (0, 1)")
    if metric == "dp":
        return g * r / (1.0 - g)
    if metric == "eo":
        return g
    if metric == "precision":
        return NOT_GUARANTEED
    raise ValueError(f"unknown metric {metric!r}")


def compliance_limit(metric: str, b: float, r: float, g: float, p: float, n: int, n_groups: int) -> tuple[float, float, float]:
    """(p-based bound, closed-form bound, slack) under the swap multiplier convention."""
    report = cost_upper_bound(metric, b, r, g, n_groups=n_groups)
    mult = SWAP_MULTIPLIER.get(metric, 1.0)
    return mult * p * report.c_factor, mult * report.effective, report.c_factor / n


@dataclass(frozen=True)
class ComplianceRow:
    rate: float
    budget: int
    cost: float
    p: float
    p_bound: float
    family_bound: float
    slack: float

    @property
    def violated(self) -> bool:
        return self.cost > min(self.p_bound, self.family_bound) + self.slack


@dataclass(frozen=True)
class ComplianceReport:
    metric: str
    notion: str
    rows: list[ComplianceRow]

    @property
    def violations(self) -> list[ComplianceRow]:
        return [row for row in self.rows if row.violated]

    @property
    def compliant(self) -> bool:
        return not self.violations


def check_bound_compliance(
    ds: ScoredDataset,
    spec: HarmSpec | str,
    metric: str,
    rates: Sequence[float],
    exact: bool | None = None,
) -> ComplianceReport:
    """Compare observed fairness costs with p c and the closed-form family.

    Accuracy uses the two-sided multiplier of 2, other metrics 1; ``c / N``
    slack absorbs the floor in K = floor(r N).
    """
    if isinstance(spec, str):
        notion, spec = spec, notion_spec(spec)
    else:
        notion = spec.kind
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    stats = group_stats(ds)
    b = ds.total_positives / ds.n
    g = min(s.weight for s in stats.values())
    rows = []
    for r in rates:
        k = budget_for_rate(r, ds.n)
        default = topk_default(ds, k)
        fair = enforce(ds, spec, k, exact=exact).allocation
        cost = abs(_metric(ds, default, metric) - _metric(ds, fair, metric))
        p = swap_proportion(default, fair, ds.n)
        p_bound, family, slack = compliance_limit(metric, b, r, min(g, 0.5), p, ds.n, len(ds.groups))
        rows.append(ComplianceRow(r, k, cost, p, p_bound, family, slack))
    return ComplianceReport(metric, notion, rows)


def _metric(ds: ScoredDataset, alloc: Allocation, metric: str) -> float:
    m = metric_at_r(ds, alloc)
    if metric in ("accuracy", "recall", "precision"):
        return getattr(m, metric)
    tp = true_positives(ds, alloc)
    fp = alloc.budget - tp
    neg = ds.n - ds.total_positives
    fpr = fp / neg if neg else 0.0
    return {"fpr": fpr, "specificity": 1.0 - fpr, "fnr": 1.0 - m.recall}[metric]
