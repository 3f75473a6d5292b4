"""Optimal and drift-maximizing mutation rates for (1+lambda) RLS and EAs on OneMax."""
from __future__ import annotations

from .dp import Criterion, PolicyTable, RateGrid, TimeSlice, build_policy, policy_diff, remaining_time
from .kernel import Backend, Dist, ProblemContext, TransitionRow, best_of_lambda, drift, ea_row, rls_row
from .regret import RegretGrid, build_grid, export_heatmap, modality
from .sim import Oracle, Static, TwoRate, bench, run_once

__version__ = "0.1.0"

__all__ = [
    "Backend", "Criterion", "Dist", "Oracle", "PolicyTable", "ProblemContext", "RateGrid",
    "RegretGrid", "Static", "TimeSlice", "TransitionRow", "TwoRate", "bench", "best_of_lambda",
    "build_grid", "build_policy", "drift", "ea_row", "export_heatmap", "modality", "policy_diff",
    "remaining_time", "rls_row", "run_once",
]
