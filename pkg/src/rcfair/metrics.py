"""Performance and fairness measurements at a fixed budget (top-R semantics)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .dataset import ScoredDataset

ONE_MINUS_SELECTION_RATE = "one_minus_selection_rate"
ONE_MINUS_RECALL = "one_minus_recall"
ONE_MINUS_PRECISION = "one_minus_precision"
FALSE_POSITIVE_RATE = "false_positive_rate"

DECREASING = "decreasing"
INCREASING = "increasing"

_KINDS = {
    ONE_MINUS_SELECTION_RATE: (DECREASING, "group_size"),
    ONE_MINUS_RECALL: (DECREASING, "group_positives"),
    ONE_MINUS_PRECISION: (INCREASING, "group_selected"),
    FALSE_POSITIVE_RATE: (INCREASING, "group_negatives"),
}


class UndefinedHarmError(ValueError):
    """Harm is undefined for the allocation (e.g. precision of an empty selection)."""


@dataclass(frozen=True)
class HarmSpec:
    """Which per-group harm is measured; direction and denominator follow from ``kind``."""

    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown harm kind {self.kind!r}; expected one of {sorted(_KINDS)}")

    @property
    def direction(self) -> str:
        return _KINDS[self.kind][0]

    @property
    def denominator_population(self) -> str:
        return _KINDS[self.kind][1]


DP = HarmSpec(ONE_MINUS_SELECTION_RATE)
EO = HarmSpec(ONE_MINUS_RECALL)
NOTIONS = {"dp": DP, "eo": EO}


def notion_spec(name: str) -> HarmSpec:
    try:
        return NOTIONS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown fairness notion {name!r}; expected dp or eo") from None


@dataclass(frozen=True, eq=False)
class Allocation:
    """Per-group selected counts; each group selects the top ``counts[g]`` of its sorted list.

    ``thresholds[g]`` is the score of the last selected member, ``inf`` when nobody
    in the group is selected.
    """

    counts: dict[str, int]
    thresholds: dict[str, float]
    selected_indices: np.ndarray
    budget: int

    @classmethod
    def from_counts(cls, ds: ScoredDataset, counts: Mapping[str, int]) -> "Allocation":
        if set(counts) != set(ds.groups):
            raise ValueError(f"count keys {sorted(counts)} do not match groups {list(ds.groups)}")
        clean, thresholds, chosen = {}, {}, []
        for g in ds.groups:
            k = int(counts[g])
            idx = ds.per_group_index[g]
            if not 0 <= k <= len(idx):
                raise ValueError(f"count {k} for group {g!r} outside [0, {len(idx)}]")
            clean[g] = k
            thresholds[g] = float(ds.scores[idx[k - 1]]) if k else math.inf
            chosen.append(idx[:k])
        sel = np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)
        sel.setflags(write=False)
        return cls(clean, thresholds, sel, sum(clean.values()))

    def rates(self, ds: ScoredDataset) -> dict[str, float]:
        return {g: self.counts[g] / ds.group_size(g) for g in ds.groups}

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.selected_indices] = True
        return m

    def __eq__(self, other):
        if not isinstance(other, Allocation):
            return NotImplemented
        return self.counts == other.counts and np.array_equal(
            self.selected_indices, other.selected_indices
        )

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "counts": dict(self.counts),
            "thresholds": {g: (None if math.isinf(t) else t) for g, t in self.thresholds.items()},
            "selected_indices": [int(i) for i in self.selected_indices],
        }


@dataclass(frozen=True)
class MetricAtR:
    precision: float
    recall: float
    accuracy: float
    selected: int
    budget_rate: float
    # False when nothing is selected and precision is reported by convention
    precision_defined: bool = True

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
            "selected": self.selected,
            "budget_rate": self.budget_rate,
            "precision_defined": self.precision_defined,
        }


def topk_default(ds: ScoredDataset, k: int) -> Allocation:
    """The unconstrained allocation: the ``k`` highest scores overall."""
    if not 0 <= k <= ds.n:
        raise ValueError(f"budget {k} outside [0, {ds.n}]")
    chosen = ds.global_order[:k]
    counts = np.bincount(ds.group_codes[chosen], minlength=len(ds.groups))
    return Allocation.from_counts(ds, dict(zip(ds.groups, counts.tolist())))


def true_positives(ds: ScoredDataset, alloc: Allocation) -> int:
    return int(sum(ds.cum_positives[g][k] for g, k in alloc.counts.items()))


def metric_at_r(ds: ScoredDataset, alloc: Allocation) -> MetricAtR:
    selected = alloc.budget
    tp = true_positives(ds, alloc)
    positives = ds.total_positives
    fp = selected - tp
    fn = positives - tp
    if selected:
        precision, defined = tp / selected, True
    else:
        precision, defined = 1.0, False
    recall = tp / positives if positives else 1.0
    accuracy = 1.0 - (fp + fn) / ds.n
    return MetricAtR(precision, recall, accuracy, selected, selected / ds.n, defined)


def harm_curve(
    ds: ScoredDataset, spec: HarmSpec, group: str, empty_precision: float | None = None
) -> np.ndarray:
    """Harm of ``group`` when it selects its top ``k`` members, for ``k = 0..|g|``.

    ``empty_precision`` is the harm used for ``one_minus_precision`` at ``k = 0``;
    when None that entry is NaN.
    """
    tp = ds.cum_positives[group].astype(float)
    size = len(tp) - 1
    k = np.arange(size + 1, dtype=float)
    pos = tp[-1]
    if spec.kind == ONE_MINUS_SELECTION_RATE:
        return 1.0 - k / size
    if spec.kind == ONE_MINUS_RECALL:
        if pos == 0:
            return np.zeros(size + 1)
        return 1.0 - tp / pos
    if spec.kind == FALSE_POSITIVE_RATE:
        neg = size - pos
        if neg == 0:
            return np.zeros(size + 1)
        return (k - tp) / neg
    out = np.empty(size + 1)
    out[1:] = 1.0 - tp[1:] / k[1:]
    out[0] = np.nan if empty_precision is None else empty_precision
    return out


def group_harm(
    ds: ScoredDataset,
    alloc: Allocation,
    spec: HarmSpec,
    group: str,
    empty_precision: float | None = None,
) -> float:
    if group not in alloc.counts:
        raise KeyError(f"unknown group {group!r}")
    k = alloc.counts[group]
    if spec.kind == ONE_MINUS_PRECISION and k == 0:
        if empty_precision is None:
            raise UndefinedHarmError(f"precision undefined: nothing selected in group {group!r}")
        return float(empty_precision)
    return float(harm_curve(ds, spec, group)[k])


def group_harms(
    ds: ScoredDataset, alloc: Allocation, spec: HarmSpec, empty_precision: float | None = None
) -> dict[str, float]:
    return {g: group_harm(ds, alloc, spec, g, empty_precision) for g in ds.groups}


def fairness_gap(
    ds: ScoredDataset, alloc: Allocation, spec: HarmSpec, empty_precision: float | None = None
) -> float:
    harms = group_harms(ds, alloc, spec, empty_precision).values()
    return max(harms) - min(harms)


def auc(ds: ScoredDataset, scope: str | None = None) -> float:
    """P(score(pos) > score(neg)) over all positive/negative pairs, ties count 1/2.

    ``scope`` is a group key, or None for the whole dataset.
    """
    if scope is None:
        scores, labels = ds.scores, ds.labels
    else:
        idx = ds.per_group_index[scope] if scope in ds.per_group_index else None
        if idx is None:
            raise KeyError(f"unknown group {scope!r}")
        scores, labels = ds.scores[idx], ds.labels[idx]
    return auc_from_arrays(scores, labels)


def auc_from_arrays(scores, labels) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    # Mann-Whitney U via average ranks handles ties as 1/2
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def global_selection_rate(per_group_rates: Mapping[str, float], weights: Mapping[str, float]) -> float:
    """Size-weighted mean of per-group selection rates."""
    if set(per_group_rates) != set(weights):
        raise KeyError("rate and weight keys differ")
    return float(sum(per_group_rates[g] * weights[g] for g in per_group_rates))
