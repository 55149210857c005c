"""MILP builders: movement/effort constraint block, the two path-list
linearizations (effort-level selection and secant envelopes), their
preprocessed variants, and the information-state model for Markov targets.

Every builder returns the model plus handle maps from column ids back to the
(class, state, period) coordinates needed for plan extraction and cuts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .evaluate import pooled_effort
from .milp import MilpModel, ModelError, SolveControls, SolveOutcome, solve
from .model import (
    EffortBounds,
    EffortMap,
    SearchInstance,
    SearchPlan,
    check_plan_feasibility,
    derive_effort,
    effort_bounds,
)
from .targets import ConditionalTargetModel, MarkovTargetModel, occupancy

DEFAULT_LEVEL_CAP = 20_000


class ExtractionError(RuntimeError):
    """Solver values cannot be turned into an integral feasible plan."""


@dataclass
class SpHandles:
    """Column maps for the shared movement/effort block."""

    model: MilpModel
    x_cols: dict[tuple[int, int, int, int], int]  # (l, s, s2, t) -> column
    m_cols: dict[tuple[int, int], int]  # (l, t) -> column
    z_cols: dict[tuple[int, int, int], int]  # (l, s, t) -> column
    bounds: EffortBounds
    x_relaxed: bool

    def effort_from_values(self, inst: SearchInstance, values: np.ndarray) -> np.ndarray:
        Z = np.zeros((inst.class_count, inst.state_count, inst.horizon))
        for (l, s, t), col in self.z_cols.items():
            Z[l, s, t - 1] = values[col]
        return Z


def _uniform_unit_weights(inst: SearchInstance) -> bool:
    return all(set(np.unique(cls.weight)) <= {0, 1} for cls in inst.classes)


def build_sp_block(
    inst: SearchInstance,
    model: MilpModel,
    z_pairs: Iterable[tuple[int, int]] | None = None,
    z_integer: Callable[[int, int], bool] | None = None,
) -> SpHandles:
    """Add movement, mission-start, endurance, cap, and effort variables/rows.

    ``z_pairs`` restricts which (state, period) pairs carry effort variables
    (preprocessing / bundling); ``None`` keeps every pair.  Pairs whose effort
    bound is zero never get a column: their effort is identically zero.
    Movement variables relax to continuous when every look weight is 0/1.
    """
    T = inst.horizon
    motion = inst.motion
    s_plus = motion.s_plus
    special = motion.special_states()
    bounds = effort_bounds(inst)
    relax_x = _uniform_unit_weights(inst)
    x_cols: dict[tuple[int, int, int, int], int] = {}
    m_cols: dict[tuple[int, int], int] = {}
    z_cols: dict[tuple[int, int, int], int] = {}

    for l, cls in enumerate(inst.classes):
        for s, s2, d in motion.arcs[l]:
            for t in range(0, T + 1):
                if t == 0 and s != s_plus:
                    continue  # all searchers start at s_plus
                ub = min(cls.count, inst.cap(s, t))
                x_cols[(l, s, s2, t)] = model.add_variable(
                    0.0, ub, integer=not relax_x, name=f"X_{l}_{s}_{s2}_{t}"
                )

    # route continuity and initial conditions
    for l in range(inst.class_count):
        init_cols = [x_cols[(l, s_plus, s2, 0)] for s2, _, _ in motion.forward(l, s_plus)]
        model.add_row(init_cols, [1.0] * len(init_cols), inst.classes[l].count, inst.classes[l].count)
        for t in range(1, T + 1):
            for s in range(inst.state_count):
                cols, coefs = [], []
                for s1, d, _ in motion.reverse(l, s):
                    td = t - d
                    if td >= 0 and (td > 0 or s1 == s_plus):
                        cols.append(x_cols[(l, s1, s, td)])
                        coefs.append(1.0)
                for s2, _, _ in motion.forward(l, s):
                    cols.append(x_cols[(l, s, s2, t)])
                    coefs.append(-1.0)
                if cols:
                    model.add_row(cols, coefs, 0.0, 0.0)

    # mission starts (arrivals at the first searched state) and endurance
    for l, cls in enumerate(inst.classes):
        if cls.endurance >= T:
            continue  # the window always covers the whole horizon
        for t in range(0, T + 1):
            m_cols[(l, t)] = model.add_variable(
                0.0, min(cls.count, inst.cap(s_plus, t)), integer=not relax_x, name=f"M_{l}_{t}"
            )
        for t in range(0, T + 1):
            cols, coefs = [m_cols[(l, t)]], [1.0]
            for s2, d, _ in motion.forward(l, s_plus):
                if s2 in special:
                    continue
                td = t - d
                if td >= 0:
                    cols.append(x_cols[(l, s_plus, s2, td)])
                    coefs.append(-1.0)
            model.add_row(cols, coefs, 0.0, 0.0)
        tau = cls.endurance
        for t in range(0, T + 1):
            cols, coefs = [], []
            for s in range(inst.state_count):
                if s in special:
                    continue
                for s2, _, _ in motion.forward(l, s):
                    key = (l, s, s2, t)
                    if key in x_cols:
                        cols.append(x_cols[key])
                        coefs.append(1.0)
            for t2 in range(max(0, t - tau + 1), t + 1):
                cols.append(m_cols[(l, t2)])
                coefs.append(-1.0)
            if cols:
                model.add_row(cols, coefs, -math.inf, 0.0)

    # state occupancy caps
    if inst.limits.cap is not None:
        for t in range(1, T + 1):
            for s in range(inst.state_count):
                cols, coefs = [], []
                for l in range(inst.class_count):
                    for s1, d, _ in motion.reverse(l, s):
                        td = t - d
                        if td >= 0 and (td > 0 or s1 == s_plus):
                            cols.append(x_cols[(l, s1, s, td)])
                            coefs.append(1.0)
                if cols:
                    model.add_row(cols, coefs, -math.inf, float(inst.limits.cap[s, t]))

    # effort definition
    if z_pairs is None:
        pairs = [(s, t) for t in range(1, T + 1) for s in range(inst.state_count)]
    else:
        pairs = sorted(set((int(s), int(t)) for s, t in z_pairs))
    for s, t in pairs:
        for l, cls in enumerate(inst.classes):
            cap = int(bounds.per_class[l, s, t - 1])
            if cap == 0:
                continue
            integer = True if z_integer is None else bool(z_integer(s, t))
            col = model.add_variable(0.0, cap, integer=integer, name=f"Z_{l}_{s}_{t}")
            z_cols[(l, s, t)] = col
            cols, coefs = [col], [1.0]
            for s1, d, ai in motion.reverse(l, s):
                td = t - d
                if td >= 0 and (td > 0 or s1 == s_plus):
                    w = float(cls.weight[ai, t - 1])
                    if w:
                        cols.append(x_cols[(l, s1, s, td)])
                        coefs.append(-w)
            model.add_row(cols, coefs, 0.0, 0.0)

    return SpHandles(model, x_cols, m_cols, z_cols, bounds, relax_x)


@dataclass
class LinearizedHandles:
    """Path-model linearization bookkeeping shared by both variants."""

    kind: str  # "levels" or "secant"
    sp: SpHandles
    level_cap: int  # N
    base_rate: float
    w_cols: list[np.ndarray] = field(default_factory=list)  # per path, cols for i = 0..N
    y_cols: list[int] = field(default_factory=list)  # per path
    path_z_cols: list[list[int]] = field(default_factory=list)  # effort columns per path
    preprocessed: bool = False

    def path_effort(self, path_idx: int, values: np.ndarray) -> float:
        cols = self.path_z_cols[path_idx]
        return float(values[cols].sum()) if cols else 0.0


def secant_coefficients(i: int, base_rate: float) -> tuple[float, float]:
    """Intercept and slope of the chord of exp(-rate*y) through y = i, i+1."""
    e_i = math.exp(-i * base_rate)
    drop = 1.0 - math.exp(-base_rate)
    return e_i * (1.0 + i - i * math.exp(-base_rate)), e_i * drop


def secant_value(i: int, base_rate: float, y: float) -> float:
    intercept, slope = secant_coefficients(i, base_rate)
    return intercept - slope * y


def _path_z_columns(inst: SearchInstance, cond: ConditionalTargetModel, sp: SpHandles) -> list[list[int]]:
    out: list[list[int]] = []
    for w in range(cond.path_count):
        cols: list[int] = []
        for t in range(1, cond.horizon + 1):
            if cond.modes[w, t - 1] != 0:
                continue
            s = int(cond.states[w, t - 1])
            for l in range(inst.class_count):
                col = sp.z_cols.get((l, s, t))
                if col is not None:
                    cols.append(col)
        out.append(cols)
    return out


def _level_guard(total: int, cap: int) -> None:
    if total > cap:
        raise ModelError(f"effort level count {total} exceeds the configured cap {cap}")


def build_csp_u(
    inst: SearchInstance,
    cond: ConditionalTargetModel,
    *,
    binary_w: bool = False,
    preprocess: bool = False,
    level_cap: int = DEFAULT_LEVEL_CAP,
) -> tuple[MilpModel, LinearizedHandles]:
    """Effort-level selection linearization: one weight per path and level.

    Minimizes sum_w q(w) sum_i W_i(w) exp(-i*rate) with the level average tied
    to the path's collected effort.  Exact because the exponential is strictly
    convex, so optimal weights land on a single level.
    """
    model = MilpModel("csp-u-pre" if preprocess else "csp-u")
    bounds = effort_bounds(inst)
    _level_guard(bounds.total, level_cap)
    pairs = None
    if preprocess:
        mask = cond.detectable_pairs(inst.state_count)
        pairs = [(s, t + 1) for s, t in zip(*np.nonzero(mask))]
    sp = build_sp_block(inst, model, z_pairs=pairs)
    handles = LinearizedHandles("levels", sp, bounds.total, inst.detection.base_rate, preprocessed=preprocess)
    handles.path_z_cols = _path_z_columns(inst, cond, sp)

    N = bounds.total
    level_values = np.exp(-inst.detection.base_rate * np.arange(N + 1))
    for w in range(cond.path_count):
        q = float(cond.weights[w])
        cols = np.array(
            [
                model.add_variable(0.0, 1.0, integer=binary_w, objective=q * float(level_values[i]), name=f"W_{w}_{i}")
                for i in range(N + 1)
            ]
        )
        handles.w_cols.append(cols)
        zc = handles.path_z_cols[w]
        model.add_row(
            [int(c) for c in cols[1:]] + zc,
            [float(i) for i in range(1, N + 1)] + [-1.0] * len(zc),
            0.0,
            0.0,
        )
        model.add_row([int(c) for c in cols], [1.0] * (N + 1), 1.0, 1.0)
    return model, handles


def build_csp_l(
    inst: SearchInstance,
    cond: ConditionalTargetModel,
    *,
    preprocess: bool = False,
    level_cap: int = DEFAULT_LEVEL_CAP,
    row_filter: Callable[[int, int], bool] | None = None,
) -> tuple[MilpModel, LinearizedHandles]:
    """Secant-envelope linearization: per-path value bounded by chord cuts.

    Adds rows for i = 0..N-1 (``row_filter`` can withhold some, as the lazy
    outer-approximation run does); each chord touches exp(-rate*y) exactly at
    consecutive integers, so the envelope is exact at integer effort.
    """
    model = MilpModel("csp-l-pre" if preprocess else "csp-l")
    bounds = effort_bounds(inst)
    _level_guard(bounds.total, level_cap)
    pairs = None
    if preprocess:
        mask = cond.detectable_pairs(inst.state_count)
        pairs = [(s, t + 1) for s, t in zip(*np.nonzero(mask))]
    sp = build_sp_block(inst, model, z_pairs=pairs)
    handles = LinearizedHandles("secant", sp, bounds.total, inst.detection.base_rate, preprocessed=preprocess)
    handles.path_z_cols = _path_z_columns(inst, cond, sp)

    for w in range(cond.path_count):
        y_col = model.add_variable(-math.inf, math.inf, objective=float(cond.weights[w]), name=f"Y_{w}")
        handles.y_cols.append(y_col)
        for i in range(bounds.total):
            if row_filter is not None and not row_filter(w, i):
                continue
            cols, coefs, lo, hi = secant_row(handles, w, i)
            model.add_row(cols, coefs, lo, hi)
    return model, handles


def secant_row(handles: LinearizedHandles, path_idx: int, i: int):
    """Row data for one chord cut: intercept - slope*effort <= Y."""
    intercept, slope = secant_coefficients(i, handles.base_rate)
    zc = handles.path_z_cols[path_idx]
    cols = [handles.y_cols[path_idx]] + zc
    coefs = [-1.0] + [-slope] * len(zc)
    return cols, coefs, -math.inf, -intercept


@dataclass
class MspHandles:
    """Information-state model bookkeeping."""

    sp: SpHandles
    v_cols: dict[tuple[int, int], list[int]]  # (s, t) -> columns for j = 0..m_st
    p_cols: dict[tuple[int, int, int], int]  # (s, c, t) -> column
    q_cols: dict[tuple[int, int, int, int], int]  # (s, c, t, j) -> column
    w_cols: dict[tuple[int, int, int], int]  # (s, c, t) -> column
    occupancy: np.ndarray  # (T, S, 2)

    def effort_from_values(self, inst: SearchInstance, values: np.ndarray) -> np.ndarray:
        z = np.zeros((inst.state_count, inst.horizon))
        for (s, t), cols in self.v_cols.items():
            z[s, t - 1] = sum(j * values[c] for j, c in enumerate(cols))
        return z


def build_msp(inst: SearchInstance, markov: MarkovTargetModel) -> tuple[MilpModel, MspHandles]:
    """Information-state MILP: binary per-level effort selectors drive the
    undetected-occupancy recursion, with occupancy probabilities as big-M.

    Level sets get an explicit zero level so zero effort stays representable
    under the pick-exactly-one row.  Movement variables stay integer here.
    """
    model = MilpModel("msp")
    occ = occupancy(markov)
    T, S = inst.horizon, inst.state_count
    rate = inst.detection.base_rate
    sp = build_sp_block(inst, model, z_pairs=[])
    for col in sp.x_cols.values():
        model.set_integer(col, True)
    for col in sp.m_cols.values():
        model.set_integer(col, True)
    bounds = sp.bounds
    m_st = bounds.pooled  # (S, T)

    handles = MspHandles(sp, {}, {}, {}, {}, occ)

    for t in range(1, T + 1):
        for s in range(S):
            m = int(m_st[s, t - 1])
            if m == 0:
                continue
            cols = [model.add_binary(name=f"V_{s}_{t}_{j}") for j in range(m + 1)]
            handles.v_cols[(s, t)] = cols
            model.add_row(cols, [1.0] * len(cols), 1.0, 1.0)
            link_cols = [c for c in cols[1:]]
            link_coefs = [-float(j) for j in range(1, m + 1)]
            for l, cls in enumerate(inst.classes):
                for s1, d, ai in inst.motion.reverse(l, s):
                    td = t - d
                    if td >= 0 and (td > 0 or s1 == inst.motion.s_plus):
                        w = float(cls.weight[ai, t - 1])
                        if w:
                            link_cols.append(sp.x_cols[(l, s1, s, td)])
                            link_coefs.append(w)
            model.add_row(link_cols, link_coefs, 0.0, 0.0)

    for t in range(1, T + 1):
        for s in range(S):
            for c in (0, 1):
                q = float(occ[t - 1, s, c])
                if q <= 0.0:
                    continue
                p_col = model.add_variable(0.0, q, name=f"P_{s}_{c}_{t}")
                handles.p_cols[(s, c, t)] = p_col
                if t == 1:
                    model.fix_variable(p_col, q)
                if t < T:
                    w_col = model.add_variable(0.0, q, name=f"Wv_{s}_{c}_{t}")
                    handles.w_cols[(s, c, t)] = w_col
                    model.add_row([w_col, p_col], [1.0, -1.0], -math.inf, 0.0)
                levels = handles.v_cols.get((s, t))
                if levels is None or c == 1:
                    continue
                for j in range(1, len(levels)):
                    drop = 1.0 - math.exp(-rate * j)
                    q_col = model.add_variable(0.0, q * drop, objective=-1.0, name=f"Q_{s}_{c}_{t}_{j}")
                    handles.q_cols[(s, c, t, j)] = q_col
                    model.add_row([q_col, levels[j]], [1.0, -q * drop], -math.inf, 0.0)
                    model.add_row([q_col, p_col], [1.0, -drop], -math.inf, 0.0)
                    if t < T:
                        w_col = handles.w_cols[(s, c, t)]
                        model.add_row(
                            [w_col, p_col, levels[j]],
                            [1.0, -math.exp(-rate * j), q * drop],
                            -math.inf,
                            q * drop,
                        )

    K = 2 * S
    for t in range(1, T):
        gamma = markov.transitions[t - 1]
        for s in range(S):
            for c in (0, 1):
                p_col = handles.p_cols.get((s, c, t + 1))
                if p_col is None:
                    continue
                cols, coefs = [p_col], [1.0]
                k_to = 2 * s + c
                for s1 in range(S):
                    for c1 in (0, 1):
                        w_col = handles.w_cols.get((s1, c1, t))
                        if w_col is None:
                            continue
                        g = float(gamma[2 * s1 + c1, k_to])
                        if g:
                            cols.append(w_col)
                            coefs.append(-g)
                model.add_row(cols, coefs, 0.0, 0.0)

    model.objective_constant = 1.0
    return model, handles


# ---------------------------------------------------------------------------
# plan extraction


def plan_from_flow_values(
    inst: SearchInstance, sp: SpHandles, values: np.ndarray, tol: float = 1e-6
) -> SearchPlan:
    """Round movement values to counts; raise when any value is off-integer."""
    moves: list[dict[tuple[int, int, int], int]] = [dict() for _ in range(inst.class_count)]
    worst = 0.0
    for (l, s, s2, t), col in sp.x_cols.items():
        v = float(values[col])
        r = round(v)
        worst = max(worst, abs(v - r))
        if r:
            moves[l][(s, s2, t)] = int(r)
    if worst > tol:
        raise ExtractionError(f"movement values deviate from integers by {worst:.3e}")
    return SearchPlan(moves)


def extract_plan(
    outcome: SolveOutcome,
    handles: LinearizedHandles | MspHandles,
    inst: SearchInstance,
    *,
    model: MilpModel | None = None,
    controls: SolveControls | None = None,
) -> tuple[SearchPlan, EffortMap]:
    """Integral plan and effort from an incumbent, verified against handles.

    When movement variables were relaxed and the incumbent is fractional, a
    repair solve (effort fixed to the incumbent levels, movement re-declared
    integer) recovers an integral flow with identical effort; requires the
    original model.
    """
    if not outcome.has_incumbent:
        raise ExtractionError("outcome carries no incumbent")
    sp = handles.sp
    values = outcome.values
    try:
        plan = plan_from_flow_values(inst, sp, values)
    except ExtractionError:
        if model is None:
            raise
        if isinstance(handles, MspHandles):
            fix_cols = [c for cols in handles.v_cols.values() for c in cols]
        else:
            fix_cols = list(sp.z_cols.values())
        values = repair_integrality(sp, fix_cols, model, values, controls)
        plan = plan_from_flow_values(inst, sp, values)

    effort = derive_effort(plan, inst)
    if isinstance(handles, MspHandles):
        stated = handles.effort_from_values(inst, values)
        actual = pooled_effort(effort.levels)
    else:
        stated = sp.effort_from_values(inst, values)
        actual = effort.levels.astype(np.float64)
        mask = np.zeros_like(stated, dtype=bool)
        for (l, s, t) in sp.z_cols:
            mask[l, s, t - 1] = True
        actual = np.where(mask, actual, 0.0)
    if np.abs(stated - actual).max() > 1e-6:
        raise ExtractionError("derived effort disagrees with the incumbent's effort variables")
    feasible, violations = check_plan_feasibility(plan, inst)
    if not feasible:
        raise ExtractionError(f"extracted plan infeasible: {violations[0]}")
    return plan, effort


def repair_integrality(
    sp: SpHandles,
    fix_cols: Iterable[int],
    model: MilpModel,
    values: np.ndarray,
    controls: SolveControls | None = None,
) -> np.ndarray:
    """Re-solve with effort pinned to the incumbent and movement integral.

    Used when relaxed movement variables come back fractional: the effort
    levels (``fix_cols``) are kept, so the recovered flow realises the same
    objective value.
    """
    repair = model.clone("repair")
    repair.lazy_source = None
    for col in fix_cols:
        repair.fix_variable(col, round(float(values[col])))
    for col in sp.x_cols.values():
        repair.set_integer(col, True)
    for col in sp.m_cols.values():
        repair.set_integer(col, True)
    out = solve(repair, controls or SolveControls(rel_gap=1e-9, time_limit=120.0))
    if not out.has_incumbent:
        raise ExtractionError("integrality repair found no matching integral flow")
    return out.values
