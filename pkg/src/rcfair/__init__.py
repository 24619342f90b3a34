"""Fairness under a fixed selection budget.

Allocate K positive decisions across groups with per-group thresholds, enforce
demographic parity or equal opportunity at exactly K, minimise the worst group
harm, and measure what fairness costs in precision, recall and accuracy.
"""

from .dataset import DatasetError, ScoredDataset, load_csv
from .enforce import EnforcementResult, apportion, budget_for_rate, enforce, enforce_dp, enforce_harm_cap
from .metrics import DP, EO, Allocation, HarmSpec, metric_at_r, notion_spec, topk_default
from .minimax import solve_minimax

__version__ = "0.1.0"

__all__ = [
    "DP",
    "EO",
    "Allocation",
    "DatasetError",
    "EnforcementResult",
    "HarmSpec",
    "ScoredDataset",
    "apportion",
    "budget_for_rate",
    "enforce",
    "enforce_dp",
    "enforce_harm_cap",
    "load_csv",
    "metric_at_r",
    "notion_spec",
    "solve_minimax",
    "topk_default",
]
