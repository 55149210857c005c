"""Ground truth: exhaustive plan optimization and Monte Carlo plan evaluation.

Enumeration walks per-searcher trajectories depth-first and assembles joint
plans per class as multisets (identical searchers make permutations
redundant).  Endurance and deconfliction are enforced on the assembled plan,
matching the flow model's aggregate semantics rather than a stricter
per-searcher reading.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .evaluate import f_conditional, pooled_effort
from .model import SearchInstance, SearchPlan, derive_effort, check_plan_feasibility, plan_from_trajectories
from .targets import ConditionalTargetModel, MarkovTargetModel, enumerate_paths, make_rng, sample_paths


class BudgetExceededError(RuntimeError):
    """The joint plan space is larger than the oracle budget allows."""


@dataclass(frozen=True)
class OracleBudget:
    max_joint: int = 10_000_000
    max_paths: int = 1_000_000


@dataclass(frozen=True)
class Trajectory:
    """One searcher's occupancy trace with its per-period look weights."""

    occupancy: tuple  # length T+1, state index or None while in transit
    looks: np.ndarray  # (T,) weight of the look taken in each period (0 if none)
    on_mission: np.ndarray  # (T+1,) 1 when occupying a non-special state
    start: int  # first on-mission period, 0 if the searcher never deploys


@dataclass
class OracleResult:
    min_value: float
    plans: list[SearchPlan]
    joint_count: int
    trajectory_counts: list[int] = field(default_factory=list)


def feasible_trajectories(inst: SearchInstance, cls_index: int) -> list[Trajectory]:
    """All structurally legal occupancy traces for one searcher of a class."""
    T = inst.horizon
    motion = inst.motion
    special = motion.special_states()
    weight = inst.classes[cls_index].weight
    out: list[Trajectory] = []

    def emit(occ: list[int | None]) -> None:
        looks = np.zeros(T, dtype=np.int64)
        prev_s = motion.s_plus
        for t in range(1, T + 1):
            s = occ[t]
            if s is None:
                continue
            ai = motion.arc_id(cls_index, prev_s, s)
            looks[t - 1] = weight[ai, t - 1]
            prev_s = s
        on = np.fromiter((1 if (s is not None and s not in special) else 0 for s in occ), dtype=np.int64, count=T + 1)
        start = int(np.argmax(on)) if on.any() else 0
        out.append(Trajectory(tuple(occ), looks, on, start))

    def walk(s: int, t: int, occ: list[int | None]) -> None:
        if t == T:
            emit(occ)
            return
        left_horizon = False
        for s2, d, _ in sorted(inst.motion.forward(cls_index, s)):
            t2 = t + d
            if t2 > T:
                if not left_horizon:
                    left_horizon = True
                    emit(occ + [None] * (T - t))
                continue
            walk(s2, t2, occ + [None] * (d - 1) + [s2])

    walk(motion.s_plus, 0, [motion.s_plus])
    return out


def _window_slack(inst: SearchInstance, cls_index: int, trajs: list[Trajectory]) -> np.ndarray:
    """Per trajectory and period: on-mission indicator minus own start window sum.

    A class of searchers is endurance-feasible iff the summed slack stays <= 0
    in every period.
    """
    T = inst.horizon
    tau = inst.classes[cls_index].endurance
    slack = np.empty((len(trajs), T + 1), dtype=np.int64)
    for i, traj in enumerate(trajs):
        starts = np.zeros(T + 1, dtype=np.int64)
        if traj.on_mission.any():
            starts[traj.start] = 1
        window = np.array([starts[max(0, t - tau + 1) : t + 1].sum() for t in range(T + 1)], dtype=np.int64)
        slack[i] = traj.on_mission - window
    return slack


def _single_feasible(inst: SearchInstance, cls_index: int, trajs: list[Trajectory]) -> np.ndarray:
    ok = _window_slack(inst, cls_index, trajs).max(axis=1) <= 0
    if inst.limits.cap is not None:
        for i, traj in enumerate(trajs):
            if not ok[i]:
                continue
            for t, s in enumerate(traj.occupancy):
                if s is not None and inst.limits.cap[s, t] < 1:
                    ok[i] = False
                    break
    return ok


def _conditional_view(inst: SearchInstance, budget: OracleBudget) -> ConditionalTargetModel:
    if isinstance(inst.target, ConditionalTargetModel):
        return inst.target
    return enumerate_paths(inst.markov_target(), 0.0, budget.max_paths)


def _match_matrix(trajs: list[Trajectory], cond: ConditionalTargetModel) -> np.ndarray:
    """(n_traj, n_paths) weighted look coincidences with visible path positions."""
    T = cond.horizon
    vis = cond.visible()
    out = np.zeros((len(trajs), cond.path_count), dtype=np.float64)
    for i, traj in enumerate(trajs):
        acc = out[i]
        for t in range(1, T + 1):
            s = traj.occupancy[t]
            if s is None or traj.looks[t - 1] == 0:
                continue
            acc += traj.looks[t - 1] * ((cond.states[:, t - 1] == s) & vis[:, t - 1])
    return out


def _collision_free(a: Trajectory, b: Trajectory, inst: SearchInstance) -> bool:
    cap = inst.limits.cap
    if cap is None:
        return True
    for t, (sa, sb) in enumerate(zip(a.occupancy, b.occupancy)):
        if sa is not None and sa == sb and cap[sa, t] < 2:
            return False
    return True


def brute_force_optimum(inst: SearchInstance, budget: OracleBudget | None = None) -> OracleResult:
    """Exact minimum non-detection probability over every feasible plan.

    Joint plans are multisets of per-searcher trajectories within each class.
    Only total searcher counts of one or two get the vectorized path; larger
    instances fall back to direct depth-first products under the budget.
    """
    budget = budget or OracleBudget()
    cond = _conditional_view(inst, budget)
    rate = inst.detection.base_rate
    trajs = [feasible_trajectories(inst, l) for l in range(inst.class_count)]
    counts = [inst.classes[l].count for l in range(inst.class_count)]

    joint = 1
    for l, n in enumerate(counts):
        joint *= math.comb(len(trajs[l]) + n - 1, n)
    if joint > budget.max_joint:
        raise BudgetExceededError(f"{joint} joint plans exceed the budget {budget.max_joint}")

    active = [l for l, n in enumerate(counts) if n > 0]
    total = sum(counts)
    if total == 1:
        result = _optimize_single(inst, cond, rate, trajs, active[0])
    elif total == 2 and len(active) == 1:
        result = _optimize_pair_same(inst, cond, rate, trajs, active[0])
    elif total == 2 and len(active) == 2:
        result = _optimize_pair_cross(inst, cond, rate, trajs, active)
    else:
        result = _optimize_general(inst, cond, rate, trajs, counts, budget)
    result.joint_count = joint
    result.trajectory_counts = [len(ts) for ts in trajs]
    return result


def _plan_of(inst: SearchInstance, picks: list[list[Trajectory]]) -> SearchPlan:
    return plan_from_trajectories(inst, [[t.occupancy for t in cls_picks] for cls_picks in picks])


def _optimize_single(inst, cond, rate, trajs, l) -> OracleResult:
    ok = _single_feasible(inst, l, trajs[l])
    match = _match_matrix(trajs[l], cond)
    vals = np.exp(-rate * match) @ cond.weights
    vals[~ok] = np.inf
    best = float(vals.min())
    picks = np.flatnonzero(vals <= best + 1e-12)
    plans = [_plan_of(inst, [[trajs[l][i]] if k == l else [] for k in range(inst.class_count)]) for i in picks]
    return OracleResult(best, plans, 0)


def _pair_endurance_ok(inst, l, trajs) -> np.ndarray:
    """Boolean (n, n): the two-searcher aggregate endurance window holds."""
    slack = _window_slack(inst, l, trajs)
    n = len(trajs)
    ok = np.empty((n, n), dtype=bool)
    block = 256
    for i0 in range(0, n, block):
        part = slack[i0 : i0 + block, None, :] + slack[None, :, :]
        ok[i0 : i0 + block] = part.max(axis=2) <= 0
    return ok


def _optimize_pair_same(inst, cond, rate, trajs, l) -> OracleResult:
    ts = trajs[l]
    n = len(ts)
    surv = np.exp(-rate * _match_matrix(ts, cond))
    weighted = surv * cond.weights
    feas = _pair_endurance_ok(inst, l, ts)
    if inst.limits.cap is not None:
        for i in range(n):
            for j in range(i, n):
                if feas[i, j] and not _collision_free(ts[i], ts[j], inst):
                    feas[i, j] = feas[j, i] = False
    best = np.inf
    argbest: list[tuple[int, int]] = []
    block = 256
    for collect in (False, True):
        for i0 in range(0, n, block):
            vals = weighted[i0 : i0 + block] @ surv.T
            sub = feas[i0 : i0 + block].copy()
            for r in range(sub.shape[0]):
                sub[r, : i0 + r] = False  # enforce i <= j once
            vals = np.where(sub, vals, np.inf)
            if not collect:
                m = float(vals.min()) if vals.size else np.inf
                best = min(best, m)
            else:
                argbest.extend((i0 + int(a), int(b)) for a, b in np.argwhere(vals <= best + 1e-12))
    plans = [
        _plan_of(inst, [[ts[i], ts[j]] if k == l else [] for k in range(inst.class_count)]) for i, j in argbest
    ]
    return OracleResult(float(best), plans, 0)


def _optimize_pair_cross(inst, cond, rate, trajs, active) -> OracleResult:
    la, lb = active
    ta = [t for t, ok in zip(trajs[la], _single_feasible(inst, la, trajs[la])) if ok]
    tb = [t for t, ok in zip(trajs[lb], _single_feasible(inst, lb, trajs[lb])) if ok]
    sa = np.exp(-rate * _match_matrix(ta, cond)) * cond.weights
    sb = np.exp(-rate * _match_matrix(tb, cond))
    vals = sa @ sb.T
    if inst.limits.cap is not None:
        for i, x in enumerate(ta):
            for j, y in enumerate(tb):
                if not _collision_free(x, y, inst):
                    vals[i, j] = np.inf
    best = float(vals.min())
    plans = []
    for i, j in np.argwhere(vals <= best + 1e-12):
        picks = [[] for _ in range(inst.class_count)]
        picks[la] = [ta[int(i)]]
        picks[lb] = [tb[int(j)]]
        plans.append(_plan_of(inst, picks))
    return OracleResult(best, plans, 0)


def _optimize_general(inst, cond, rate, trajs, counts, budget) -> OracleResult:
    surv = [np.exp(-rate * _match_matrix(ts, cond)) for ts in trajs]
    best = np.inf
    kept: list[tuple[float, tuple[tuple[int, ...], ...]]] = []

    combos_per_class = [
        list(itertools.combinations_with_replacement(range(len(trajs[l])), counts[l]))
        for l in range(inst.class_count)
    ]

    for combo in itertools.product(*combos_per_class):
        agg = np.ones(cond.path_count, dtype=np.float64)
        for l, picks in enumerate(combo):
            for i in picks:
                agg *= surv[l][i]
        val = float(agg @ cond.weights)
        if val > best + 1e-12:
            continue
        plan = _plan_of(inst, [[trajs[l][i] for i in picks] for l, picks in enumerate(combo)])
        feasible, _ = check_plan_feasibility(plan, inst)
        if not feasible:
            continue
        best = min(best, val)
        kept.append((val, combo))
    plans = [
        _plan_of(inst, [[trajs[l][i] for i in picks] for l, picks in enumerate(combo)])
        for val, combo in kept
        if val <= best + 1e-12
    ]
    return OracleResult(float(best), plans, 0)


def monte_carlo_eval(
    plan: SearchPlan, inst: SearchInstance, count: int, seed: int
) -> tuple[float, tuple[float, float]]:
    """Simulated detection probability with a normal-approximation 95% CI.

    Simulates target trajectories from the instance's Markov model and, per
    period, one aggregated glimpse outcome whose failure probability is the
    product of the co-located looks' miss probabilities.
    """
    if count < 1:
        raise ValueError("simulation count must be positive")
    markov = inst.markov_target()
    z = pooled_effort(derive_effort(plan, inst).levels)
    paths = sample_paths(markov, count, seed)
    rate = inst.detection.base_rate
    cols = np.arange(inst.horizon)
    eff = np.where(paths.modes == 0, z[paths.states, cols[None, :]], 0.0)
    hit_prob = 1.0 - np.exp(-rate * eff)
    draws = make_rng(seed ^ 0x9E3779B97F4A7C15).random((count, inst.horizon))
    detected = (draws < hit_prob).any(axis=1)
    p = float(detected.mean())
    half = 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / count)
    return p, (p - half, p + half)
