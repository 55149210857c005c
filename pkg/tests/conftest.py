import numpy as np
import pytest

from searchmip.generators import grid_instance
from searchmip.model import (
    DetectionModel,
    MotionGraph,
    OperationalLimits,
    SearcherClass,
    SearchInstance,
)
from searchmip.targets import ConditionalTargetModel, MarkovTargetModel


def line_graph_instance(horizon=6, endurance=3, state_count=5):
    """Five states in a row: start at 1, terminal at 5, unit travel times.

    Forward stars: 1 -> {1,2}, 2 -> {2,3}, 3/4 -> {prev, self, next}, 5 -> {5}.
    The target walks states 2..4 (never the start/terminal states).
    """
    arcs = []
    arcs += [(0, 0, 1), (0, 1, 1)]
    arcs += [(1, 1, 1), (1, 2, 1)]
    arcs += [(2, 1, 1), (2, 2, 1), (2, 3, 1)]
    arcs += [(3, 2, 1), (3, 3, 1), (3, 4, 1)]
    arcs += [(4, 4, 1)]
    motion = MotionGraph(state_count, 0, 4, [arcs])
    weight = np.ones((len(arcs), horizon), dtype=np.int64)
    for ai, (_, dest, _) in enumerate(arcs):
        if dest in (0, 4):
            weight[ai] = 0
    cls = SearcherClass(1, endurance, weight)
    K = 2 * state_count
    step = np.zeros((K, K))
    for s in range(state_count):
        step[2 * s + 1, 2 * s + 1] = 1.0
        if s in (0, 4):
            step[2 * s, 2 * s] = 1.0
            continue
        nbrs = [n for n in (s - 1, s + 1) if n not in (0, 4) and 0 <= n < state_count]
        step[2 * s, 2 * s] = 0.6
        for n in nbrs:
            step[2 * s, 2 * n] = 0.4 / len(nbrs)
    initial = np.zeros((state_count, 2))
    initial[2, 0] = 1.0
    target = MarkovTargetModel(initial, np.repeat(step[None], horizon - 1, axis=0), horizon)
    return SearchInstance(
        motion,
        [cls],
        DetectionModel(np.log(2.0)),
        OperationalLimits(None),
        horizon,
        target,
        name="line5",
    )


def single_path_target(states, horizon, modes=None, state_count=None):
    s = np.asarray(states, dtype=np.int32).reshape(1, horizon)
    m = np.zeros((1, horizon), dtype=np.int8) if modes is None else np.asarray(modes, dtype=np.int8).reshape(1, horizon)
    return ConditionalTargetModel(s, m, np.array([1.0]))


@pytest.fixture
def tiny_grid():
    return grid_instance(3, 1, 3)


@pytest.fixture
def tiny_grid_camo():
    return grid_instance(3, 1, 3, camouflage=True)


@pytest.fixture
def line_inst():
    return line_graph_instance()


def trajectory_to_occ(states, horizon):
    """Occupancy list over periods 0..T from a period-indexed state list."""
    occ = list(states)
    assert len(occ) == horizon + 1
    return tuple(occ)
