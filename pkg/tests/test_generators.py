import math

import numpy as np
import pytest

from searchmip.generators import cell_index, grid_instance
from searchmip.model import derive_effort, effort_bounds, plan_from_trajectories, validate_instance
from searchmip.oracle import feasible_trajectories
from searchmip.targets import occupancy


class TestGridShapes:
    def test_nine_grid_state_count_and_rate(self):
        inst = grid_instance(9, 3, 10)
        assert inst.state_count == 82  # 81 cells + start, no terminal state
        assert inst.detection.base_rate == pytest.approx(-math.log(0.4), abs=1e-12)

    def test_three_grid_without_terminal(self):
        inst = grid_instance(3, 1, 3)
        assert inst.state_count == 10

    def test_two_class_split_and_endurance(self):
        inst = grid_instance(9, 5, 15, two_class=True)
        assert [c.count for c in inst.classes] == [2, 3]
        assert [c.endurance for c in inst.classes] == [12, 9]
        assert inst.motion.s_minus is not None

    def test_quality_split_weights_and_rate(self):
        inst = grid_instance(3, 2, 4, two_class=True, quality_split=True)
        assert int(np.unique(inst.classes[0].weight[:-1])[1]) == 5 or (inst.classes[0].weight.max() == 5)
        assert inst.classes[1].weight.max() == 4
        assert inst.detection.base_rate == pytest.approx(-3 * math.log(0.4) / 2 / 5, abs=1e-15)

    def test_even_side_rejected(self):
        with pytest.raises(ValueError):
            grid_instance(4, 1, 3)

    def test_single_entry_mode_uses_mid_left_cell(self):
        inst = grid_instance(9, 1, 3, entry_mode="single")
        entries = [s2 for s2, _, _ in inst.motion.forward(0, inst.motion.s_plus) if s2 != inst.motion.s_plus]
        assert entries == [cell_index(9, 4, 1)]

    def test_corner_entry_mode_uses_three_cells(self):
        inst = grid_instance(9, 1, 3)
        entries = {s2 for s2, _, _ in inst.motion.forward(0, inst.motion.s_plus) if s2 != inst.motion.s_plus}
        assert entries == {cell_index(9, 1, 1), cell_index(9, 1, 2), cell_index(9, 2, 1)}


class TestTargetKinematics:
    @pytest.mark.parametrize("camouflage", [False, True])
    def test_rows_sum_to_one(self, camouflage):
        inst = grid_instance(5, 1, 4, camouflage=camouflage)
        trans = inst.markov_target().transitions
        assert np.abs(trans.sum(axis=2) - 1.0).max() <= 1e-12

    def test_interior_split_without_camouflage(self):
        inst = grid_instance(5, 1, 3)
        step = inst.markov_target().transitions[0]
        center = cell_index(5, 3, 3)
        k = 2 * center
        assert step[k, k] == pytest.approx(0.6)
        for nbr in (center - 5, center + 5, center - 1, center + 1):
            assert step[k, 2 * nbr] == pytest.approx(0.1)

    def test_corner_split_without_camouflage(self):
        inst = grid_instance(5, 1, 3)
        step = inst.markov_target().transitions[0]
        corner = cell_index(5, 1, 1)
        k = 2 * corner
        assert step[k, k] == pytest.approx(0.6)
        for nbr in (corner + 5, corner + 1):
            assert step[k, 2 * nbr] == pytest.approx(0.2)  # residual mass split over 2 neighbours

    def test_camouflage_transitions(self):
        inst = grid_instance(5, 1, 3, camouflage=True)
        step = inst.markov_target().transitions[0]
        center = cell_index(5, 3, 3)
        k = 2 * center
        assert step[k, k + 1] == pytest.approx(0.1)
        assert step[k, k] == pytest.approx(0.5)
        assert step[k + 1, k + 1] == pytest.approx(1.0 / 6.0)
        assert step[k + 1, k] == pytest.approx(5.0 / 6.0)

    def test_target_starts_at_center_visible(self):
        inst = grid_instance(5, 1, 3)
        occ = occupancy(inst.markov_target())
        center = cell_index(5, 3, 3)
        assert occ[0, center, 0] == 1.0
        assert occ[0].sum() == 1.0

    def test_generated_instances_validate(self):
        for kwargs in (dict(), dict(camouflage=True), dict(two_class=True), dict(two_class=True, quality_split=True)):
            inst = grid_instance(3, 2, 4, **kwargs)
            assert validate_instance(inst) == []


class TestEffortCapProperty:
    def test_feasible_plans_respect_the_per_class_caps(self):
        rng = np.random.default_rng(23)
        for kwargs in (dict(), dict(camouflage=True), dict(two_class=True)):
            inst = grid_instance(3, 2, 4, **kwargs)
            caps = effort_bounds(inst).per_class
            trajsets = [feasible_trajectories(inst, l) for l in range(inst.class_count)]
            for _ in range(40):
                picks = [
                    [ts[rng.integers(len(ts))].occupancy for _ in range(inst.classes[l].count)]
                    for l, ts in enumerate(trajsets)
                ]
                plan = plan_from_trajectories(inst, picks)
                Z = derive_effort(plan, inst).levels
                assert (Z <= caps).all()
