"""Iterative chord-cut methods over the Markov target model.

Three variants share one loop: the plain method cuts over every effort
coordinate; the bundled method drops coordinates where detection is provably
impossible; the relaxed-bundled method additionally keeps integrality only on
the per-period most-likely target states and restores it afterwards through a
small fix-and-resolve problem.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .evaluate import DetectabilityIndex, build_detectability, cut_data, secant_delta_table
from .formulations import SpHandles, build_sp_block, plan_from_flow_values, repair_integrality
from .milp import MilpModel, SolveControls, relative_gap, solve
from .model import SearchInstance, SearchPlan, derive_effort, plan_from_trajectories
from .targets import MarkovTargetModel

MASTER_DELTA_CAP = 0.03
INTEGER_TOL = 1e-6


def master_tolerance(iteration: int, gap: float, previous: float, repeated: bool) -> float:
    """Per-iteration master gap: 0 first, then min(0.03, gap/3), halved on
    revisited effort vectors."""
    if iteration == 1:
        return 0.0
    delta = MASTER_DELTA_CAP if not math.isfinite(gap) else min(MASTER_DELTA_CAP, gap / 3.0)
    if repeated:
        delta = min(delta, previous / 2.0)
    return delta


@dataclass
class CuttingControls:
    """Outer loop tolerances; the solver time limit is the global budget.

    ``master_gap_override`` replaces the adaptive per-iteration master
    tolerance with a fixed value (0 solves every master exactly); mainly a
    diagnostic for comparing variants iterate-by-iterate.
    """

    tolerance: float = 1e-4
    iteration_cap: int = 200
    solver: SolveControls = field(default_factory=SolveControls)
    upsilon: int | None = None
    master_gap_override: float | None = None


@dataclass
class IterationRecord:
    iteration: int
    upper: float
    lower: float
    gap: float
    delta_i: float
    master_seconds: float
    cut_count: int
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "upper": self.upper,
            "lower": self.lower,
            "gap": self.gap,
            "delta_i": self.delta_i,
            "master_seconds": self.master_seconds,
            "cut_count": self.cut_count,
            "note": self.note,
        }


@dataclass
class CuttingResult:
    status: str
    min_value: float
    lower_bound: float
    plan: SearchPlan
    effort: np.ndarray  # (L, S, T) integer levels
    trace: list[IterationRecord]
    iterations: int
    wall_seconds: float
    variant: str
    master_variables: int

    @property
    def rel_gap(self) -> float:
        g = relative_gap(self.min_value, self.lower_bound)
        return math.inf if g is None else g


class _Master:
    """Cut-collecting master around the shared movement/effort block."""

    def __init__(self, inst: SearchInstance, z_pairs, z_integer):
        self.inst = inst
        self.model = MilpModel("cut-master")
        self.xi = self.model.add_variable(0.0, 1.0, objective=1.0, name="xi")
        self.sp: SpHandles = build_sp_block(inst, self.model, z_pairs=z_pairs, z_integer=z_integer)
        self.cut_count = 0

    def add_cut(self, anchor: np.ndarray, value: float, deltas: np.ndarray) -> None:
        """Row: xi >= value + sum deltas[s,t] * (Z_{l,s,t} - anchor_{l,s,t})."""
        cols = [self.xi]
        coefs = [1.0]
        rhs = value
        for (l, s, t), col in self.sp.z_cols.items():
            d = float(deltas[s, t - 1])
            if d:
                cols.append(col)
                coefs.append(-d)
                rhs -= d * float(anchor[l, s, t - 1])
        self.model.add_row(cols, coefs, rhs, math.inf)
        self.cut_count += 1


def build_master_sca(
    inst: SearchInstance, cuts: list[tuple[np.ndarray, float, np.ndarray]]
) -> MilpModel:
    """Standalone master with the given (anchor effort, value, deltas) cuts."""
    master = _Master(inst, None, None)
    for anchor, value, deltas in cuts:
        master.add_cut(np.asarray(anchor), float(value), np.asarray(deltas))
    return master.model


def top_states(index: DetectabilityIndex, upsilon: int) -> dict[int, set[int]]:
    """Per detectable period, the upsilon most likely visible target states.

    Ordered by descending visible occupancy with ties broken toward lower
    state indices.
    """
    out: dict[int, set[int]] = {}
    for t in index.periods_d:
        cand = index.states_d(t)
        ranked = sorted(cand, key=lambda s: (-index.visible_occupancy[s, t - 1], s))
        out[t] = set(int(s) for s in ranked[:upsilon])
    return out


def default_upsilon(index: DetectabilityIndex) -> int:
    sizes = [len(index.states_d(t)) for t in index.periods_d]
    biggest = max(sizes, default=0)
    return max(5, -(-biggest // 5))


def _wait_plan(inst: SearchInstance) -> SearchPlan:
    stay = tuple([inst.motion.s_plus] * (inst.horizon + 1))
    return plan_from_trajectories(inst, [[stay] * cls.count for cls in inst.classes])


def _integral(values: np.ndarray, cols: list[int]) -> bool:
    if not cols:
        return True
    v = values[cols]
    return bool(np.abs(v - np.round(v)).max() <= INTEGER_TOL)


def _run(inst: SearchInstance, markov: MarkovTargetModel, controls: CuttingControls, variant: str) -> CuttingResult:
    start = time.perf_counter()
    rate = inst.detection.base_rate
    index = None
    z_pairs = None
    z_integer = None
    relaxed_pairs: set[tuple[int, int]] = set()
    if variant in ("bsca", "oabsca"):
        index = build_detectability(inst, markov)
        z_pairs = index.pair_list()
    if variant == "oabsca":
        ups = controls.upsilon if controls.upsilon is not None else default_upsilon(index)
        keep = top_states(index, ups)
        relaxed_pairs = {(s, t) for (s, t) in z_pairs if s not in keep.get(t, set())}
        z_integer = lambda s, t: (s, t) not in relaxed_pairs  # noqa: E731

    master = _Master(inst, z_pairs, z_integer)
    z_cols_list = list(master.sp.z_cols.values())
    L, S, T = inst.class_count, inst.state_count, inst.horizon

    xi_lo, xi_hi = 0.0, 1.0
    Zi = np.zeros((L, S, T), dtype=np.int64)
    plan_values: np.ndarray | None = None  # master values realising Zi
    best_plan_values: np.ndarray | None = None
    fingerprints: set[bytes] = set()
    delta_prev = 0.0
    trace: list[IterationRecord] = []
    status = "feasible_time_limit"
    iteration = 0

    for iteration in range(1, controls.iteration_cap + 1):
        note = ""
        cd = cut_data(Zi, markov, rate, index)
        fi = cd.value()
        if fi < xi_hi:
            xi_hi = fi
            best_plan_values = plan_values
        gap = math.inf if xi_lo <= 0 else (xi_hi - xi_lo) / xi_lo  # g_i, drives delta_i
        if xi_hi - xi_lo <= controls.tolerance * xi_lo:
            status = "optimal"
            trace.append(IterationRecord(iteration, xi_hi, xi_lo, gap, 0.0, 0.0, master.cut_count, "converged"))
            break

        repeated = Zi.tobytes() in fingerprints
        fingerprints.add(Zi.tobytes())
        delta_i = master_tolerance(iteration, gap, delta_prev, repeated)
        if controls.master_gap_override is not None:
            delta_i = controls.master_gap_override
        delta_prev = delta_i

        master.add_cut(Zi, fi, secant_delta_table(cd))

        remaining = controls.solver.time_limit - (time.perf_counter() - start)
        if remaining <= 0:
            break
        out = solve(master.model, SolveControls(rel_gap=delta_i, time_limit=remaining, threads=controls.solver.threads))
        seconds = out.wall_seconds
        if not out.has_incumbent:
            note = f"master stopped: {out.status}"
            trace.append(IterationRecord(iteration, xi_hi, xi_lo, gap, delta_i, seconds, master.cut_count, note))
            break
        if out.bound is not None and out.bound > xi_lo:
            xi_lo = min(out.bound, 1.0)
        if xi_hi - xi_lo <= controls.tolerance * xi_lo:
            status = "optimal"
            trace.append(IterationRecord(iteration, xi_hi, xi_lo, gap, delta_i, seconds, master.cut_count, "converged"))
            break

        values = out.values
        if variant == "oabsca" and not _integral(values, z_cols_list):
            values, note = _restore_integrality(inst, master, values, relaxed_pairs, delta_i, controls, start)
            if values is None:
                trace.append(IterationRecord(iteration, xi_hi, xi_lo, gap, delta_i, seconds, master.cut_count, note))
                break
        Znext = np.zeros((L, S, T), dtype=np.int64)
        for (l, s, t), col in master.sp.z_cols.items():
            Znext[l, s, t - 1] = round(float(values[col]))
        Zi = Znext
        plan_values = values
        trace.append(IterationRecord(iteration, xi_hi, xi_lo, gap, delta_i, seconds, master.cut_count, note))

    wall = time.perf_counter() - start
    plan = _best_plan(inst, master, best_plan_values)
    effort = derive_effort(plan, inst).levels
    return CuttingResult(
        status,
        xi_hi,
        xi_lo,
        plan,
        effort,
        trace,
        iteration,
        wall,
        variant,
        master.model.num_variables,
    )


def _restore_integrality(inst, master, values, relaxed_pairs, delta_i, controls, start):
    """Fix integral effort coordinates, re-impose integrality on the rest."""
    restore = master.model.clone("restore")
    fractional = 0
    for (l, s, t), col in master.sp.z_cols.items():
        v = float(values[col])
        if abs(v - round(v)) <= INTEGER_TOL:
            restore.fix_variable(col, round(v))
        else:
            restore.set_integer(col, True)
            fractional += 1
    remaining = controls.solver.time_limit - (time.perf_counter() - start)
    if remaining <= 0:
        return None, "time exhausted before restoration"
    out = solve(restore, SolveControls(rel_gap=max(delta_i, 1e-9), time_limit=remaining, threads=controls.solver.threads))
    if out.has_incumbent:
        return out.values, f"restored integrality on {fractional} coordinates"
    # fixed coordinates can be unreachable by any flow: fall back to a fully
    # integral master under the current cuts
    fallback = master.model.clone("restore-fallback")
    for col in master.sp.z_cols.values():
        fallback.set_integer(col, True)
    remaining = controls.solver.time_limit - (time.perf_counter() - start)
    if remaining <= 0:
        return None, "time exhausted before restoration fallback"
    out = solve(fallback, SolveControls(rel_gap=max(delta_i, 1e-9), time_limit=remaining, threads=controls.solver.threads))
    if out.has_incumbent:
        return out.values, "restoration infeasible; solved the fully integral master"
    return None, f"restoration failed: {out.status}"


def _best_plan(inst: SearchInstance, master: _Master, values: np.ndarray | None) -> SearchPlan:
    if values is None:
        return _wait_plan(inst)
    try:
        return plan_from_flow_values(inst, master.sp, values)
    except Exception:
        repaired = repair_integrality(master.sp, list(master.sp.z_cols.values()), master.model, values)
        return plan_from_flow_values(inst, master.sp, repaired)


def run_sca(inst: SearchInstance, markov: MarkovTargetModel, controls: CuttingControls | None = None) -> CuttingResult:
    """Plain chord-cut loop: cuts over every effort coordinate."""
    return _run(inst, markov, controls or CuttingControls(), "sca")


def run_bsca(inst: SearchInstance, markov: MarkovTargetModel, controls: CuttingControls | None = None) -> CuttingResult:
    """Bundled variant: effort variables only where detection is possible."""
    return _run(inst, markov, controls or CuttingControls(), "bsca")


def run_oabsca(inst: SearchInstance, markov: MarkovTargetModel, controls: CuttingControls | None = None) -> CuttingResult:
    """Relaxed-bundled variant with post-hoc integrality restoration."""
    return _run(inst, markov, controls or CuttingControls(), "oabsca")
