import math

import numpy as np
import pytest

from searchmip.evaluate import f_conditional, f_markov
from searchmip.generators import cell_index, grid_instance
from searchmip.model import (
    DetectionModel,
    MotionGraph,
    OperationalLimits,
    SearcherClass,
    SearchInstance,
    derive_effort,
    plan_from_trajectories,
)
from searchmip.oracle import (
    BudgetExceededError,
    OracleBudget,
    brute_force_optimum,
    feasible_trajectories,
    monte_carlo_eval,
)
from searchmip.targets import ConditionalTargetModel, MarkovTargetModel, enumerate_paths

from conftest import single_path_target


def two_cell_instance(horizon=2, alpha=math.log(2.0)):
    """Start state 2 feeding cells 0 and 1; stay-or-hop between the cells."""
    arcs = [(0, 0, 1), (0, 1, 1), (1, 0, 1), (1, 1, 1), (2, 0, 1), (2, 1, 1), (2, 2, 1)]
    motion = MotionGraph(3, 2, None, [arcs])
    weight = np.ones((len(arcs), horizon), dtype=np.int64)
    weight[6] = 0  # the start state is never searched
    cls = SearcherClass(1, horizon, weight)
    step = np.zeros((6, 6))
    step[0, 0] = step[2, 2] = 1.0  # target parked in its cell
    step[1, 1] = step[3, 3] = step[4, 4] = step[5, 5] = 1.0
    initial = np.zeros((3, 2))
    initial[0, 0] = 1.0
    target = MarkovTargetModel(initial, np.repeat(step[None], horizon - 1, axis=0), horizon)
    return SearchInstance(motion, [cls], DetectionModel(alpha), OperationalLimits(None), horizon, target)


class TestBruteForce:
    def test_zero_weights_make_every_plan_optimal(self):
        inst = grid_instance(3, 1, 2)
        zero = SearcherClass(1, 2, np.zeros_like(inst.classes[0].weight))
        inst = SearchInstance(
            inst.motion, [zero], inst.detection, inst.limits, inst.horizon, inst.target
        )
        res = brute_force_optimum(inst)
        assert res.min_value == pytest.approx(1.0, abs=1e-12)
        assert len(res.plans) == len(feasible_trajectories(inst, 0))

    def test_two_cell_hand_enumeration(self):
        # single deterministic target parked in cell 0: the searcher should sit
        # on it both periods, giving 2 matching looks of weight 1
        inst = two_cell_instance()
        res = brute_force_optimum(inst)
        assert res.min_value == pytest.approx(0.25, abs=1e-12)
        plan = res.plans[0]
        Z = derive_effort(plan, inst).levels
        assert Z[0, 0, :].sum() == 2

    def test_symmetric_optima_both_returned(self):
        # mirror-symmetric target: parked in cell 0 or cell 1 with equal odds;
        # covering both cells (in either order) is optimal and both orders are
        # reported
        inst = two_cell_instance()
        states = np.array([[0, 0], [1, 1]], dtype=np.int32)
        modes = np.zeros((2, 2), dtype=np.int8)
        cond = ConditionalTargetModel(states, modes, np.array([0.5, 0.5]))
        inst = SearchInstance(
            inst.motion, inst.classes, inst.detection, inst.limits, inst.horizon, cond
        )
        res = brute_force_optimum(inst)
        assert res.min_value == pytest.approx(0.5, abs=1e-12)
        orders = set()
        for plan in res.plans:
            Z = derive_effort(plan, inst).levels
            if Z[0, 0, 0] and Z[0, 1, 1]:
                orders.add("01")
            if Z[0, 1, 0] and Z[0, 0, 1]:
                orders.add("10")
        assert orders == {"01", "10"}

    def test_budget_guard(self):
        inst = grid_instance(3, 2, 4)
        with pytest.raises(BudgetExceededError):
            brute_force_optimum(inst, OracleBudget(max_joint=10))

    def test_value_consistent_under_both_target_models(self):
        inst = grid_instance(3, 1, 3, camouflage=True)
        res = brute_force_optimum(inst)
        cond = enumerate_paths(inst.markov_target())
        rate = inst.detection.base_rate
        for plan in res.plans:
            Z = derive_effort(plan, inst).levels
            assert f_conditional(Z, cond, rate) == pytest.approx(res.min_value, abs=1e-12)
            assert f_markov(Z, inst.markov_target(), rate) == pytest.approx(res.min_value, abs=1e-12)

    def test_pair_endurance_licensing(self):
        # one searcher may outstay its own window only if a classmate's fresh
        # start covers the aggregate count; the flow model allows exactly that
        inst = grid_instance(3, 2, 4, terminal_row=True, endurance=(2,))
        res = brute_force_optimum(inst)
        from searchmip.model import check_plan_feasibility

        for plan in res.plans:
            ok, violations = check_plan_feasibility(plan, inst)
            assert ok, violations


class TestMonteCarlo:
    def test_zero_effort_estimates_zero(self):
        inst = grid_instance(3, 1, 3)
        stay = tuple([inst.motion.s_plus] * 4)
        plan = plan_from_trajectories(inst, [[stay]])
        est, (lo, hi) = monte_carlo_eval(plan, inst, 2000, seed=3)
        assert est == 0.0 and lo <= 0.0 <= hi

    def test_guaranteed_colocated_look(self):
        # deterministic parked target + camping searcher + alpha = ln 2 per
        # look gives detection probability 1 - 2^-T
        inst = two_cell_instance(horizon=1)
        res = brute_force_optimum(inst)
        markov = inst.markov_target()
        est, (lo, hi) = monte_carlo_eval(res.plans[0], inst, 100_000, seed=5)
        assert lo <= 0.5 <= hi
        assert est == pytest.approx(0.5, abs=0.01)

    def test_matches_exact_value_within_4_sigma(self):
        inst = grid_instance(3, 1, 3)
        res = brute_force_optimum(inst)
        plan = res.plans[0]
        exact = 1.0 - res.min_value
        n = 200_000
        est, _ = monte_carlo_eval(plan, inst, n, seed=11)
        sigma = math.sqrt(exact * (1 - exact) / n)
        assert abs(est - exact) <= 4 * sigma

    def test_root_n_convergence(self):
        inst = grid_instance(3, 1, 3)
        plan = brute_force_optimum(inst).plans[0]
        exact = 1.0 - brute_force_optimum(inst).min_value
        reps = 24
        rmse = {}
        for n in (1_000, 10_000, 100_000):
            errs = [monte_carlo_eval(plan, inst, n, seed=100 + r)[0] - exact for r in range(reps)]
            rmse[n] = math.sqrt(sum(e * e for e in errs) / reps)
        expected = math.sqrt(10.0)
        for a, b in ((1_000, 10_000), (10_000, 100_000)):
            ratio = rmse[a] / rmse[b]
            assert expected / 2 <= ratio <= expected * 2

    def test_zero_count_rejected(self):
        inst = grid_instance(3, 1, 3)
        stay = tuple([inst.motion.s_plus] * 4)
        plan = plan_from_trajectories(inst, [[stay]])
        with pytest.raises(ValueError):
            monte_carlo_eval(plan, inst, 0, seed=1)
