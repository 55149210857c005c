"""Grid-world instance families used throughout the benchmark harness.

Cells of an odd-sided square grid are indexed row-major (1-based (row, col)
maps to ``(row-1)*side + col-1``), followed by the searcher start state and,
when endurance is active, the terminal state.  Searchers move to 4-adjacent
cells or stay, one period per move; the target starts in the center cell.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    DetectionModel,
    MotionGraph,
    OperationalLimits,
    SearcherClass,
    SearchInstance,
)
from .targets import MarkovTargetModel


def cell_index(side: int, row: int, col: int) -> int:
    return (row - 1) * side + (col - 1)


def cell_name(side: int, state: int) -> tuple[int, int]:
    return state // side + 1, state % side + 1


def _neighbours(side: int, s: int) -> list[int]:
    r, c = divmod(s, side)
    out = []
    if r > 0:
        out.append(s - side)
    if r < side - 1:
        out.append(s + side)
    if c > 0:
        out.append(s - 1)
    if c < side - 1:
        out.append(s + 1)
    return out


def _grid_markov(
    side: int, s_plus: int, s_minus: int | None, state_count: int, horizon: int, camouflage: bool
) -> MarkovTargetModel:
    """Stationary chain: stay 0.6 / move 0.4 split evenly; the camouflage
    variant trades the stay mass for hide/stay/move = 0.1/0.5/0.4 and leaves
    hiding with probability 5/6 per period."""
    K = 2 * state_count
    step = np.zeros((K, K))
    cells = side * side
    for s in range(state_count):
        if s >= cells:  # searcher start/terminal states: unreachable self-loops
            step[2 * s, 2 * s] = 1.0
            step[2 * s + 1, 2 * s + 1] = 1.0
            continue
        nbrs = _neighbours(side, s)
        if camouflage:
            step[2 * s, 2 * s + 1] = 0.1
            step[2 * s, 2 * s] = 0.5
            for n in nbrs:
                step[2 * s, 2 * n] = 0.4 / len(nbrs)
            step[2 * s + 1, 2 * s + 1] = 1.0 / 6.0
            step[2 * s + 1, 2 * s] = 5.0 / 6.0
        else:
            step[2 * s, 2 * s] = 0.6
            for n in nbrs:
                step[2 * s, 2 * n] = 0.4 / len(nbrs)
            step[2 * s + 1, 2 * s + 1] = 1.0
    initial = np.zeros((state_count, 2))
    center = cell_index(side, side // 2 + 1, side // 2 + 1)
    initial[center, 0] = 1.0
    transitions = np.repeat(step[None, :, :], max(horizon - 1, 0), axis=0)
    return MarkovTargetModel(initial, transitions, horizon)


def grid_instance(
    side: int,
    searchers: int,
    horizon: int,
    *,
    camouflage: bool = False,
    two_class: bool = False,
    entry_mode: str = "corner",
    terminal_row: bool | None = None,
    endurance: tuple[int, ...] | None = None,
    class_weights: tuple[int, ...] | None = None,
    quality_split: bool = False,
    name: str | None = None,
) -> SearchInstance:
    """Square-grid benchmark instance.

    ``entry_mode='corner'`` lets searchers enter through the three upper-left
    boundary cells; ``'single'`` through the one mid-left cell (row side//2,
    column 1).  ``two_class`` splits the searchers 30/70 with endurances
    floor(0.8T)/floor(0.6T) and adds the terminal state reachable from the
    bottom row.  ``quality_split`` makes class-two sensors 80% as capable via
    integer weights 5/4 at one fifth of the base rate.
    """
    if side < 3 or side % 2 == 0:
        raise ValueError("grid side must be an odd integer >= 3")
    if searchers < 1:
        raise ValueError("at least one searcher required")
    if two_class and searchers < 2:
        raise ValueError("the two-class split needs at least two searchers")
    if quality_split and not two_class:
        raise ValueError("quality_split applies to two-class instances")

    cells = side * side
    if terminal_row is None:
        terminal_row = two_class
    s_plus = cells
    s_minus = cells + 1 if terminal_row else None
    state_count = cells + (2 if terminal_row else 1)

    if entry_mode == "corner":
        entries = [cell_index(side, 1, 1), cell_index(side, 1, 2), cell_index(side, 2, 1)]
    elif entry_mode == "single":
        entries = [cell_index(side, max(1, side // 2), 1)]
    else:
        raise ValueError(f"unknown entry mode {entry_mode!r}")

    arcs: list[tuple[int, int, int]] = []
    for s in range(cells):
        arcs.append((s, s, 1))
        arcs.extend((s, n, 1) for n in _neighbours(side, s))
    arcs.append((s_plus, s_plus, 1))
    arcs.extend((s_plus, e, 1) for e in entries)
    if s_minus is not None:
        bottom = [cell_index(side, side, c) for c in range(1, side + 1)]
        arcs.extend((b, s_minus, 1) for b in bottom)
        arcs.append((s_minus, s_minus, 1))
    arcs = sorted(arcs)

    if two_class:
        j2 = int(0.7 * searchers)
        counts = (searchers - j2, j2)
        taus = (int(0.8 * horizon), int(0.6 * horizon))
    else:
        counts = (searchers,)
        taus = (horizon,)
    if endurance is not None:
        if len(endurance) != len(counts):
            raise ValueError("one endurance value per class required")
        taus = tuple(int(v) for v in endurance)

    if class_weights is None:
        class_weights = (5, 4) if quality_split else tuple(1 for _ in counts)
    if len(class_weights) != len(counts):
        raise ValueError("one weight value per class required")

    base_rate = -3.0 * math.log(0.4) / searchers
    if quality_split:
        base_rate /= 5.0

    motion = MotionGraph(state_count, s_plus, s_minus, [arcs] * len(counts))
    classes = []
    for count, tau, w in zip(counts, taus, class_weights):
        weight = np.full((len(arcs), horizon), w, dtype=np.int64)
        for ai, (_, dest, _) in enumerate(arcs):
            if dest == s_plus or (s_minus is not None and dest == s_minus):
                weight[ai] = 0  # the target never sits there; no looks to take
        classes.append(SearcherClass(count, tau, weight))

    target = _grid_markov(side, s_plus, s_minus, state_count, horizon, camouflage)
    label = name or (
        f"grid{side}-J{searchers}-T{horizon}"
        + ("-camo" if camouflage else "")
        + ("-2cls" if two_class else "")
        + ("-q" if quality_split else "")
    )
    return SearchInstance(
        motion,
        classes,
        DetectionModel(base_rate),
        OperationalLimits(None),
        horizon,
        target,
        name=label,
        grid_side=side,
    )
