"""Outer approximation of the preprocessed secant model via withheld rows.

Chord rows for unlikely-low and unlikely-high effort levels start outside the
model; whenever a candidate incumbent violates one, the row is reinstated and
the candidate rejected.  Reinstated rows never go back to the pool.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .formulations import LinearizedHandles, build_csp_l, secant_row, secant_value
from .milp import MilpModel, SolveControls, SolveOutcome, solve
from .model import SearchInstance, effort_bounds
from .targets import ConditionalTargetModel


@dataclass(frozen=True)
class LazyConfig:
    """Band of active chord indices; rows outside [low+1, high] start lazy."""

    enabled: bool
    low: int = 0
    high: int = 0
    violation_tol: float = 1e-6

    def lazy_indices(self, level_cap: int) -> list[int]:
        if not self.enabled:
            return []
        return list(range(0, self.low + 1)) + list(range(self.high + 1, level_cap))


def select_lazy_band(
    inst: SearchInstance,
    cond: ConditionalTargetModel | None = None,
    override: tuple[int, int] | None = None,
) -> LazyConfig:
    """Band endpoints: overrides win; defaults keep rows near typical effort.

    With fewer than three chord rows no band leaves a nonempty active middle,
    so the band is disabled and every row stays in the model.
    """
    del cond  # the default depends only on the effort total
    N = effort_bounds(inst).total
    if override is not None:
        low, high = int(override[0]), int(override[1])
        if not (0 < low < high < N):
            raise ValueError(f"band ({low}, {high}) must satisfy 0 < b1 < b2 < N={N}")
        return LazyConfig(True, low, high)
    if N < 3:
        return LazyConfig(False)
    low = max(1, N // 10)
    high = -(-2 * N // 3)
    if not (0 < low < high < N):
        return LazyConfig(False)
    return LazyConfig(True, low, high)


@dataclass
class OaRun:
    outcome: SolveOutcome
    model: MilpModel
    handles: LinearizedHandles
    band: LazyConfig
    initial_lazy: int
    reinstated: int
    events: list[dict] = field(default_factory=list)

    @property
    def pool_sizes(self) -> list[int]:
        return [e["pool_after"] for e in self.events]


def max_secant_violation(handles: LinearizedHandles, values: np.ndarray) -> float:
    """Largest violation of any chord row at the given solution values."""
    worst = 0.0
    rate = handles.base_rate
    for w, y_col in enumerate(handles.y_cols):
        y = handles.path_effort(w, values)
        yv = float(values[y_col])
        for i in range(handles.level_cap):
            worst = max(worst, secant_value(i, rate, y) - yv)
    return worst


def run_oa(
    inst: SearchInstance,
    cond: ConditionalTargetModel,
    controls: SolveControls | None = None,
    band: LazyConfig | None = None,
) -> OaRun:
    """Solve the preprocessed secant model with the banded rows lazy.

    The registered source checks every pooled row at each candidate and
    returns the violated ones; the final incumbent therefore satisfies the
    full row set and matches the plain model's value within solver tolerance.
    """
    controls = controls or SolveControls()
    if band is None:
        band = select_lazy_band(inst, cond)
    lazy_i = set()
    row_filter = None
    if band.enabled:
        n_levels = effort_bounds(inst).total
        lazy_i = set(band.lazy_indices(n_levels))
        row_filter = lambda w, i: i not in lazy_i  # noqa: E731

    model, handles = build_csp_l(inst, cond, preprocess=True, row_filter=row_filter)
    pool: list[set[int]] = [set(lazy_i) for _ in range(cond.path_count)]
    events: list[dict] = []
    start = time.perf_counter()

    def source(values: np.ndarray):
        violated = []
        for w in range(cond.path_count):
            if not pool[w]:
                continue
            y = handles.path_effort(w, values)
            yv = float(values[handles.y_cols[w]])
            hits = [i for i in sorted(pool[w]) if secant_value(i, handles.base_rate, y) - yv > band.violation_tol]
            for i in hits:
                pool[w].discard(i)
                violated.append(secant_row(handles, w, i))
        events.append(
            {
                "at_seconds": time.perf_counter() - start,
                "violated": len(violated),
                "pool_after": sum(len(p) for p in pool),
            }
        )
        return violated

    initial_lazy = sum(len(p) for p in pool)
    if band.enabled:
        model.lazy_source = source
    outcome = solve(model, controls)
    return OaRun(outcome, model, handles, band, initial_lazy, outcome.lazy_added, events)
