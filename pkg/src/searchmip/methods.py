"""One entry point per solution method, returning a uniform report.

Method names: csp-u, csp-l, csp-u-pre, csp-l-pre, oa, msp, sca, bsca,
oabsca, oracle.  Path-list methods on a Markov-target instance enumerate the
exact path set by default (or sample, when a sample size is given); the
Markov-only methods refuse explicit path-list instances since the chain
cannot be reconstructed from paths.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import cutting, oa
from .evaluate import f_conditional, f_markov
from .fileio import render_plan
from .formulations import build_csp_l, build_csp_u, build_msp, extract_plan
from .milp import SolveControls, relative_gap, solve
from .model import SearchInstance, SearchPlan, check_plan_feasibility, derive_effort
from .oracle import OracleBudget, brute_force_optimum
from .targets import ConditionalTargetModel, MarkovTargetModel, enumerate_paths, sample_paths

CONDITIONAL_METHODS = ("csp-u", "csp-l", "csp-u-pre", "csp-l-pre", "oa")
MARKOV_METHODS = ("msp", "sca", "bsca", "oabsca")
ALL_METHODS = CONDITIONAL_METHODS + MARKOV_METHODS + ("oracle",)


class UnknownMethodError(ValueError):
    pass


@dataclass
class MethodOptions:
    """Controls shared by every method; unused fields are ignored."""

    gap: float = 1e-4
    time_limit: float = 900.0
    seed: int | None = None
    sample_count: int | None = None  # sample instead of enumerating paths
    prob_floor: float = 0.0
    enumeration_cap: int = 1_000_000
    binary_levels: bool = False
    upsilon: int | None = None
    band: tuple[int, int] | None = None
    iteration_cap: int = 200
    delta: float | None = None  # outer tolerance for the cutting methods
    oracle_budget: int = 10_000_000

    def solver(self) -> SolveControls:
        return SolveControls(rel_gap=self.gap, time_limit=self.time_limit)


@dataclass
class SolveReport:
    method: str
    status: str
    min_value: float | None
    lower_bound: float | None
    rel_gap: float | None
    objective: float | None
    wall_seconds: float
    plan: SearchPlan | None = None
    effort: np.ndarray | None = None
    trace: list[dict] = field(default_factory=list)
    seed: int | None = None
    extras: dict = field(default_factory=dict)

    def run_record(self, inst: SearchInstance, options: MethodOptions) -> dict:
        return {
            "instance": {
                "name": inst.name,
                "states": inst.state_count,
                "horizon": inst.horizon,
                "classes": [cls.count for cls in inst.classes],
                "target": type(inst.target).__name__,
            },
            "method": self.method,
            "controls": {
                "gap": options.gap,
                "time_limit": options.time_limit,
                "delta": options.delta,
                "sample_count": options.sample_count,
            },
            "status": self.status,
            "min_value": self.min_value,
            "bound": self.lower_bound,
            "rel_gap": self.rel_gap,
            "objective": self.objective,
            "seed": self.seed,
            "extras": {k: v for k, v in self.extras.items() if not isinstance(v, (np.ndarray, SearchPlan))},
            "timing": {"wall_seconds": self.wall_seconds},
        }


def conditional_view(inst: SearchInstance, options: MethodOptions) -> ConditionalTargetModel:
    """The path list a path-model method should run against."""
    if isinstance(inst.target, ConditionalTargetModel):
        return inst.target
    markov = inst.markov_target()
    if options.sample_count:
        seed = options.seed if options.seed is not None else 0
        return sample_paths(markov, options.sample_count, seed)
    return enumerate_paths(markov, options.prob_floor, options.enumeration_cap)


def run_method(inst: SearchInstance, method: str, options: MethodOptions | None = None) -> SolveReport:
    options = options or MethodOptions()
    if method not in ALL_METHODS:
        raise UnknownMethodError(f"unknown method {method!r}; choose from {', '.join(ALL_METHODS)}")
    if method == "oracle":
        return _run_oracle(inst, options)
    if method in CONDITIONAL_METHODS:
        cond = conditional_view(inst, options)
        if method == "oa":
            return _run_oa(inst, cond, options)
        return _run_path_milp(inst, cond, method, options)
    markov = inst.markov_target()
    if method == "msp":
        return _run_msp(inst, markov, options)
    return _run_cutting(inst, markov, method, options)


def _run_oracle(inst: SearchInstance, options: MethodOptions) -> SolveReport:
    start = time.perf_counter()
    result = brute_force_optimum(inst, OracleBudget(max_joint=options.oracle_budget, max_paths=options.enumeration_cap))
    wall = time.perf_counter() - start
    plan = result.plans[0]
    return SolveReport(
        "oracle",
        "optimal",
        result.min_value,
        result.min_value,
        0.0,
        result.min_value,
        wall,
        plan=plan,
        effort=derive_effort(plan, inst).levels,
        trace=[{"joint_plans": result.joint_count, "optima": len(result.plans)}],
        seed=options.seed,
        extras={"optima_count": len(result.plans)},
    )


def _run_path_milp(inst, cond: ConditionalTargetModel, method: str, options: MethodOptions) -> SolveReport:
    pre = method.endswith("-pre")
    if method.startswith("csp-u"):
        model, handles = build_csp_u(inst, cond, binary_w=options.binary_levels, preprocess=pre)
    else:
        model, handles = build_csp_l(inst, cond, preprocess=pre)
    outcome = solve(model, options.solver())
    return _milp_report(inst, method, outcome, model, handles, options, cond=cond)


def _run_msp(inst, markov: MarkovTargetModel, options: MethodOptions) -> SolveReport:
    model, handles = build_msp(inst, markov)
    outcome = solve(model, options.solver())
    return _milp_report(inst, "msp", outcome, model, handles, options, markov=markov)


def _run_oa(inst, cond: ConditionalTargetModel, options: MethodOptions) -> SolveReport:
    band = None
    if options.band is not None:
        band = oa.select_lazy_band(inst, cond, override=options.band)
    run = oa.run_oa(inst, cond, options.solver(), band=band)
    report = _milp_report(inst, "oa", run.outcome, run.model, run.handles, options, cond=cond)
    worst = oa.max_secant_violation(run.handles, run.outcome.values) if run.outcome.has_incumbent else None
    report.extras.update(
        {
            "band": [run.band.low, run.band.high] if run.band.enabled else None,
            "initial_lazy_rows": run.initial_lazy,
            "reinstated_rows": run.reinstated,
            "candidate_events": len(run.events),
            "lazy_clean": run.outcome.lazy_clean,
            "max_secant_violation": worst,
        }
    )
    merged = []
    for i, hist in enumerate(run.outcome.lazy_history):
        row = dict(hist)
        if i < len(run.events):
            row["violated"] = run.events[i]["violated"]
            row["pool_after"] = run.events[i]["pool_after"]
        merged.append(row)
    report.trace = merged or report.trace
    return report


def _milp_report(inst, method, outcome, model, handles, options, cond=None, markov=None) -> SolveReport:
    plan = None
    effort = None
    min_value = None
    if outcome.has_incumbent:
        plan, effort_map = extract_plan(outcome, handles, inst, model=model, controls=SolveControls(rel_gap=1e-9, time_limit=min(options.time_limit, 300.0)))
        effort = effort_map.levels
        if cond is not None:
            min_value = f_conditional(effort, cond, inst.detection.base_rate)
        else:
            min_value = f_markov(effort, markov, inst.detection.base_rate)
    report = SolveReport(
        method,
        outcome.status,
        min_value,
        outcome.bound,
        relative_gap(outcome.objective, outcome.bound),
        outcome.objective,
        outcome.wall_seconds,
        plan=plan,
        effort=effort,
        trace=[
            {
                "status": outcome.status,
                "objective": outcome.objective,
                "bound": outcome.bound,
                "variables": model.num_variables,
                "rows": model.num_rows,
            }
        ],
        seed=options.seed,
        extras={"variables": model.num_variables, "rows": model.num_rows},
    )
    return report


def _run_cutting(inst, markov: MarkovTargetModel, method: str, options: MethodOptions) -> SolveReport:
    controls = cutting.CuttingControls(
        tolerance=options.delta if options.delta is not None else options.gap,
        iteration_cap=options.iteration_cap,
        solver=options.solver(),
        upsilon=options.upsilon,
    )
    runner = {"sca": cutting.run_sca, "bsca": cutting.run_bsca, "oabsca": cutting.run_oabsca}[method]
    result = runner(inst, markov, controls)
    return SolveReport(
        method,
        result.status,
        result.min_value,
        result.lower_bound,
        result.rel_gap,
        result.min_value,
        result.wall_seconds,
        plan=result.plan,
        effort=result.effort,
        trace=[r.as_dict() for r in result.trace],
        seed=options.seed,
        extras={"iterations": result.iterations, "master_variables": result.master_variables, "variant": result.variant},
    )


def evaluate_plan(inst: SearchInstance, plan: SearchPlan) -> dict:
    """Feasibility plus exact values under whichever target models apply."""
    feasible, violations = check_plan_feasibility(plan, inst)
    out: dict = {
        "feasible": feasible,
        "violations": [{"family": v.family, "location": list(v.location), "message": v.message} for v in violations],
    }
    effort = derive_effort(plan, inst).levels
    rate = inst.detection.base_rate
    if isinstance(inst.target, ConditionalTargetModel):
        nd = f_conditional(effort, inst.target, rate)
    else:
        nd = f_markov(effort, inst.markov_target(), rate)
    out["non_detection"] = nd
    out["detection"] = 1.0 - nd
    return out


def plan_text(report: SolveReport, inst: SearchInstance) -> str:
    if report.plan is None:
        return ""
    return render_plan(report.plan, inst)
