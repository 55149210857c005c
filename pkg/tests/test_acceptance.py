"""Acceptance criteria, one test per criterion with a printed PASS/FAIL line.

Run `pytest tests/test_acceptance.py -v -s` to see the lines as they pass.
The final (stretch) criterion exceeds desk scale and only runs with
SEARCHMIP_STRETCH=1 in the environment.
"""

import math
import os
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from searchmip.evaluate import cut_data, detection_prob_forward, f_conditional, f_markov, secant_delta
from searchmip.formulations import build_csp_u, secant_value
from searchmip.generators import grid_instance
from searchmip.methods import MethodOptions, run_method
from searchmip.milp import SolveControls, solve
from searchmip.model import (
    DetectionModel,
    SearcherClass,
    SearchInstance,
    check_plan_feasibility,
    plan_from_trajectories,
)
from searchmip.oracle import brute_force_optimum
from searchmip.targets import enumerate_paths

from conftest import line_graph_instance
from test_targets import random_chain

METHODS = ("csp-u", "csp-l", "csp-u-pre", "csp-l-pre", "oa", "msp", "sca", "bsca", "oabsca")
DELTA = 1e-6  # configured outer tolerance for the cutting methods
GAP = 1e-9  # solver relative gap for the exact runs

SUITE_SPECS = [
    dict(searchers=1, horizon=2),
    dict(searchers=1, horizon=3),
    dict(searchers=1, horizon=3, camouflage=True),
    dict(searchers=1, horizon=3, entry_mode="single"),
    dict(searchers=1, horizon=3, class_weights=(2,)),
    dict(searchers=1, horizon=4),
    dict(searchers=1, horizon=4, camouflage=True),
    dict(searchers=1, horizon=4, class_weights=(2,)),
    dict(searchers=1, horizon=4, terminal_row=True, endurance=(2,)),
    dict(searchers=1, horizon=5),
    dict(searchers=1, horizon=5, camouflage=True),
    dict(searchers=1, horizon=5, terminal_row=True, endurance=(3,)),
    dict(searchers=2, horizon=3),
    dict(searchers=2, horizon=3, camouflage=True),
    dict(searchers=2, horizon=3, class_weights=(2,)),
    dict(searchers=2, horizon=3, two_class=True),
    dict(searchers=2, horizon=4, two_class=True),
    dict(searchers=2, horizon=4, two_class=True, camouflage=True),
    dict(searchers=2, horizon=4, two_class=True, quality_split=True),
    dict(searchers=2, horizon=4, camouflage=True),
    dict(searchers=2, horizon=5, two_class=True, camouflage=True),
]


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} -- {detail}")
    assert ok, f"{criterion}: {detail}"


@dataclass
class SuiteRun:
    instances: list = field(default_factory=list)
    oracle: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)  # (idx, method) -> SolveReport
    seconds: float = 0.0


@pytest.fixture(scope="module")
def suite() -> SuiteRun:
    run = SuiteRun()
    start = time.perf_counter()
    for spec in SUITE_SPECS:
        spec = dict(spec)
        inst = grid_instance(3, spec.pop("searchers"), spec.pop("horizon"), **spec)
        run.instances.append(inst)
        run.oracle.append(brute_force_optimum(inst).min_value)
    for idx, inst in enumerate(run.instances):
        for method in METHODS:
            options = MethodOptions(gap=GAP, delta=DELTA, time_limit=300.0)
            run.reports[(idx, method)] = run_method(inst, method, options)
    run.seconds = time.perf_counter() - start
    return run


class TestCriterion1:
    def test_oracle_equivalence_across_all_methods(self, suite):
        worst = 0.0
        for idx, inst in enumerate(suite.instances):
            for method in METHODS:
                err = abs(suite.reports[(idx, method)].min_value - suite.oracle[idx])
                worst = max(worst, err)
        ok = worst <= 1e-6 and suite.seconds <= 600.0 and len(suite.instances) >= 20
        _report(
            "1 oracle-equivalence",
            ok,
            f"{len(suite.instances)} instances x {len(METHODS)} methods, "
            f"worst |err| = {worst:.2e}, runtime {suite.seconds:.0f}s (<= 600s)",
        )


class TestCriterion2:
    def test_linearization_identities(self):
        inst = grid_instance(3, 2, 4, camouflage=True)
        alpha = inst.detection.base_rate
        from searchmip.model import effort_bounds

        N = effort_bounds(inst).total
        worst = 0.0
        for i in range(N):
            worst = max(worst, abs(secant_value(i, alpha, i) - math.exp(-i * alpha)))
            worst = max(worst, abs(secant_value(i, alpha, i + 1) - math.exp(-(i + 1) * alpha)))
        secant_ok = worst <= 1e-12

        cond = enumerate_paths(inst.markov_target())
        res = brute_force_optimum(inst)
        from searchmip.model import derive_effort

        plan = res.plans[0]
        Z = derive_effort(plan, inst).levels
        model, handles = build_csp_u(inst, cond)
        for (l, s, t), col in handles.sp.z_cols.items():
            model.fix_variable(col, float(Z[l, s, t - 1]))
        out = solve(model, SolveControls(rel_gap=GAP, time_limit=120))
        reproduce_err = abs(out.objective - f_conditional(Z, cond, alpha))
        reproduce_ok = reproduce_err <= 1e-10

        free_model, free_handles = build_csp_u(inst, cond)
        free_out = solve(free_model, SolveControls(rel_gap=GAP, time_limit=120))
        w_err = 0.0
        for cols in free_handles.w_cols:
            vals = free_out.values[cols]
            w_err = max(w_err, float(np.abs(vals - np.round(vals)).max()))
        w_ok = w_err <= 1e-6

        _report(
            "2 linearization-identities",
            secant_ok and reproduce_ok and w_ok,
            f"chord error {worst:.1e} (<=1e-12), fixed-effort reproduction {reproduce_err:.1e} (<=1e-10), "
            f"weight integrality {w_err:.1e} (<=1e-6)",
        )


class TestCriterion3:
    def test_evaluator_consistency(self):
        rng = np.random.default_rng(2024)
        worst_anchor = worst_complement = worst_agreement = 0.0
        for k in range(10):
            states = int(rng.integers(2, 4))
            horizon = int(rng.integers(2, 5))
            chain = random_chain(rng, states=states, horizon=horizon, camouflage=bool(k % 2))
            alpha = float(rng.uniform(0.2, 1.2))
            Z = rng.integers(0, 3, size=(1, states, horizon)).astype(float)
            data = cut_data(Z, chain, alpha)
            vals = [data.value(t) for t in range(1, horizon + 1)]
            worst_anchor = max(worst_anchor, max(vals) - min(vals))
            fm = f_markov(Z, chain, alpha)
            worst_complement = max(worst_complement, abs(1.0 - detection_prob_forward(Z, chain, alpha) - fm))
            cond = enumerate_paths(chain)
            worst_agreement = max(worst_agreement, abs(f_conditional(Z, cond, alpha) - fm))
        ok = worst_anchor <= 1e-10 and worst_complement <= 1e-10 and worst_agreement <= 1e-10
        _report(
            "3 evaluator-consistency",
            ok,
            f"anchor spread {worst_anchor:.1e}, complement {worst_complement:.1e}, "
            f"path-list agreement {worst_agreement:.1e} (all <= 1e-10)",
        )


class TestCriterion4:
    def test_secant_delta_matches_reevaluation(self):
        rng = np.random.default_rng(77)
        worst = 0.0
        for k in range(5):
            states = int(rng.integers(2, 4))
            horizon = int(rng.integers(2, 5))
            chain = random_chain(rng, states=states, horizon=horizon, camouflage=True)
            alpha = float(rng.uniform(0.3, 1.0))
            L = int(rng.integers(1, 3))
            Z = rng.integers(0, 3, size=(L, states, horizon)).astype(float)
            data = cut_data(Z, chain, alpha)
            base = f_markov(Z, chain, alpha)
            for l in range(L):
                for s in range(states):
                    for t in range(1, horizon + 1):
                        Z2 = Z.copy()
                        Z2[l, s, t - 1] += 1
                        direct = f_markov(Z2, chain, alpha) - base
                        worst = max(worst, abs(secant_delta(data, l, s, t) - direct))
        _report("4 secant-delta", worst <= 1e-12, f"worst |delta - reevaluation| = {worst:.1e} (<= 1e-12)")


class TestCriterion5:
    def test_bound_sandwich_and_final_gap(self, suite):
        worst_low = worst_high = 0.0
        gap_ok = True
        for idx, inst in enumerate(suite.instances):
            opt = suite.oracle[idx]
            for method in ("sca", "bsca", "oabsca"):
                rep = suite.reports[(idx, method)]
                for row in rep.trace:
                    worst_low = max(worst_low, row["lower"] - opt)
                    worst_high = max(worst_high, opt - row["upper"])
                final_gap = (rep.min_value - rep.lower_bound) / rep.lower_bound
                if not (rep.status == "optimal" and final_gap <= DELTA + 1e-15):
                    gap_ok = False
        ok = worst_low <= 1e-9 and worst_high <= 1e-9 and gap_ok
        _report(
            "5 bound-sandwich",
            ok,
            f"max lower-bound excess {worst_low:.1e}, max upper-bound deficit {worst_high:.1e} "
            f"(<= 1e-9), every final gap <= {DELTA}",
        )


class TestCriterion6:
    def test_preprocessing_and_lazy_rows_are_safe(self, suite):
        worst_rel = 0.0
        worst_violation = 0.0
        for idx, inst in enumerate(suite.instances):
            vals = [suite.reports[(idx, m)].min_value for m in ("csp-l", "csp-l-pre", "oa")]
            spread = (max(vals) - min(vals)) / min(vals)
            worst_rel = max(worst_rel, spread)
            violation = suite.reports[(idx, "oa")].extras.get("max_secant_violation")
            worst_violation = max(worst_violation, violation if violation is not None else math.inf)
        ok = worst_rel <= 2e-4 and worst_violation <= 1e-6
        _report(
            "6 preprocessing-and-lazy-safety",
            ok,
            f"worst relative spread {worst_rel:.1e} (<= 2e-4), "
            f"worst chord violation at incumbents {worst_violation:.1e} (<= 1e-6)",
        )


def _with_classes(inst: SearchInstance, counts, rate=None) -> SearchInstance:
    classes = [
        SearcherClass(count, cls.endurance, cls.weight) for cls, count in zip(inst.classes, counts)
    ]
    detection = inst.detection if rate is None else DetectionModel(rate)
    return SearchInstance(
        inst.motion, classes, detection, inst.limits, inst.horizon, inst.target, name=inst.name, grid_side=inst.grid_side
    )


def _exact_value(inst: SearchInstance) -> float:
    rep = run_method(inst, "csp-u-pre", MethodOptions(gap=GAP, time_limit=600.0))
    assert rep.status == "optimal"
    return rep.min_value


class TestCriterion7:
    def test_relaxation_monotonicity_and_pairing(self, suite):
        worst_mono = -math.inf
        worst_pair = -math.inf
        for idx, inst in enumerate(suite.instances):
            base = suite.oracle[idx]
            counts = [cls.count for cls in inst.classes]
            plus = _with_classes(inst, [counts[0] + 1] + counts[1:])
            worst_mono = max(worst_mono, _exact_value(plus) - base)
            paired = _with_classes(inst, [2 * c for c in counts], rate=inst.detection.base_rate / 2.0)
            worst_pair = max(worst_pair, _exact_value(paired) - base)
        ok = worst_mono <= 1e-9 and worst_pair <= 1e-9
        _report(
            "7 relaxation-monotonicity",
            ok,
            f"max increase from an extra searcher {worst_mono:.1e}, "
            f"max pairing excess {worst_pair:.1e} (both <= 1e-9)",
        )


class TestCriterion8:
    def test_endurance_semantics_on_the_line_graph(self):
        inst = line_graph_instance(horizon=6, endurance=3)
        good = plan_from_trajectories(inst, [[(0, 0, 1, 2, 3, 4, 4)]])
        ok_good, _ = check_plan_feasibility(good, inst)
        bad = plan_from_trajectories(inst, [[(0, 1, 2, 3, 3, 4, 4)]])
        ok_bad, violations = check_plan_feasibility(bad, inst)
        endurance_cited = any(v.family == "endurance" for v in violations)
        ok = ok_good and (not ok_bad) and endurance_cited
        _report(
            "8 endurance-semantics",
            ok,
            "published trajectory accepted; 4-period variant rejected citing endurance",
        )


class TestCriterion9:
    def test_sample_average_error_shrinks_with_sample_size(self):
        start = time.perf_counter()
        inst = grid_instance(5, 2, 8)
        markov = inst.markov_target()
        rate = inst.detection.base_rate
        sizes = (100, 500, 2000)
        medians = []
        for size in sizes:
            errors = []
            for seed in range(5):
                options = MethodOptions(gap=1e-6, time_limit=900.0, seed=seed, sample_count=size)
                rep = run_method(inst, "csp-u-pre", options)
                exact = f_markov(rep.effort, markov, rate)
                errors.append(abs(rep.min_value - exact))
            medians.append(statistics.median(errors))
        elapsed = time.perf_counter() - start
        ok = medians[0] >= medians[1] >= medians[2] and elapsed <= 1800.0
        _report(
            "9 sample-average-trend",
            ok,
            f"median |SAA - exact| by size {dict(zip(sizes, [f'{m:.4f}' for m in medians]))}, "
            f"runtime {elapsed:.0f}s (<= 1800s)",
        )


class TestCriterion10:
    @pytest.mark.skipif(
        not os.environ.get("SEARCHMIP_STRETCH"),
        reason="stretch criterion (hours-long desk-scale+ run); set SEARCHMIP_STRETCH=1",
    )
    def test_published_min_value_reproduction(self):
        inst = grid_instance(9, 5, 15, camouflage=True, two_class=True)
        options = MethodOptions(gap=1e-4, time_limit=3600.0, seed=0, sample_count=1000)
        rep = run_method(inst, "oa", options)
        err = abs(rep.min_value - 0.4561)
        _report(
            "10 stretch-reproduction",
            err <= 0.03,
            f"min-value {rep.min_value:.4f} vs published 0.4561 (tolerance 0.03, seed mismatch expected)",
        )
