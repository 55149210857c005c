"""Core problem objects: motion graphs, searcher classes, plans, and their checks.

State indexing is dense 0..S-1. Grid-generated instances use row-major cell
order followed by the start state and, when present, the terminal state; that
convention lives in :mod:`searchmip.generators` and the file schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import targets

#: (origin state, destination state, travel periods)
Arc = tuple[int, int, int]

MODE_VISIBLE = 0
MODE_HIDDEN = 1


class DimensionError(ValueError):
    """Plan and instance shapes do not line up."""


@dataclass(frozen=True)
class Violation:
    """One broken invariant or constraint, with enough context to locate it."""

    family: str
    location: tuple
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"[{self.family}] {self.location}: {self.message}"


class MotionGraph:
    """Per-class movement structure over a shared state set.

    ``arcs[l]`` lists the forward star of every state for class ``l`` as
    ``(s, s', d)`` triples; travel time ``d`` covers the move plus the one
    period of search at the destination, so ``d >= 1`` always.
    """

    def __init__(
        self,
        state_count: int,
        s_plus: int,
        s_minus: int | None,
        arcs: Sequence[Sequence[Arc]],
    ):
        self.state_count = int(state_count)
        self.s_plus = int(s_plus)
        self.s_minus = None if s_minus is None else int(s_minus)
        self.arcs: tuple[tuple[Arc, ...], ...] = tuple(
            tuple((int(a), int(b), int(d)) for a, b, d in cls_arcs) for cls_arcs in arcs
        )
        self._forward: list[list[list[tuple[int, int, int]]]] = []
        self._reverse: list[list[list[tuple[int, int, int]]]] = []
        self._arc_index: list[dict[tuple[int, int], int]] = []
        for cls_arcs in self.arcs:
            fwd = [[] for _ in range(self.state_count)]
            rev = [[] for _ in range(self.state_count)]
            index: dict[tuple[int, int], int] = {}
            for ai, (s, s2, d) in enumerate(cls_arcs):
                fwd[s].append((s2, d, ai))
                rev[s2].append((s, d, ai))
                index[(s, s2)] = ai
            self._forward.append(fwd)
            self._reverse.append(rev)
            self._arc_index.append(index)

    @property
    def class_count(self) -> int:
        return len(self.arcs)

    def forward(self, cls: int, s: int) -> list[tuple[int, int, int]]:
        """Moves out of ``s``: list of (destination, travel, arc index)."""
        return self._forward[cls][s]

    def reverse(self, cls: int, s: int) -> list[tuple[int, int, int]]:
        """Moves into ``s``: list of (origin, travel, arc index)."""
        return self._reverse[cls][s]

    def arc_id(self, cls: int, s: int, s2: int) -> int | None:
        return self._arc_index[cls].get((s, s2))

    def special_states(self) -> set[int]:
        out = {self.s_plus}
        if self.s_minus is not None:
            out.add(self.s_minus)
        return out


class SearcherClass:
    """A pool of identical searchers: size, endurance, and look weights.

    ``weight[ai, t-1]`` is the nonnegative integer rate-modification factor
    applied when a searcher arrives over arc ``ai`` and looks in period ``t``.
    """

    def __init__(self, count: int, endurance: int, weight: np.ndarray):
        self.count = int(count)
        self.endurance = int(endurance)
        self.weight = np.asarray(weight, dtype=np.int64)
        self.weight.setflags(write=False)

    @staticmethod
    def uniform(count: int, endurance: int, n_arcs: int, horizon: int, value: int = 1) -> "SearcherClass":
        return SearcherClass(count, endurance, np.full((n_arcs, horizon), value, dtype=np.int64))


@dataclass(frozen=True)
class DetectionModel:
    """Base detection rate; one look detects with probability 1-exp(-rate*weight)."""

    base_rate: float

    def glimpse(self, weight: float) -> float:
        return 1.0 - math.exp(-self.base_rate * weight)


@dataclass(frozen=True)
class OperationalLimits:
    """Per state-period cap on simultaneous searchers; ``None`` leaves it inactive."""

    cap: np.ndarray | None = None  # (S, T+1) nonnegative ints when present

    def value(self, s: int, t: int, default: int) -> int:
        if self.cap is None:
            return default
        return int(self.cap[s, t])


class SearchInstance:
    """Immutable problem definition shared by every formulation and method."""

    def __init__(
        self,
        motion: MotionGraph,
        classes: Sequence[SearcherClass],
        detection: DetectionModel,
        limits: OperationalLimits,
        horizon: int,
        target,
        name: str = "",
        grid_side: int | None = None,
    ):
        self.motion = motion
        self.classes: tuple[SearcherClass, ...] = tuple(classes)
        self.detection = detection
        self.limits = limits
        self.horizon = int(horizon)
        self.target = target
        self.name = name
        self.grid_side = grid_side

    # -- shared shorthand -------------------------------------------------
    @property
    def state_count(self) -> int:
        return self.motion.state_count

    @property
    def class_count(self) -> int:
        return len(self.classes)

    @property
    def total_searchers(self) -> int:
        return sum(c.count for c in self.classes)

    def cap(self, s: int, t: int) -> int:
        return self.limits.value(s, t, self.total_searchers)

    def search_states(self) -> list[int]:
        special = self.motion.special_states()
        return [s for s in range(self.state_count) if s not in special]

    def conditional_target(self) -> "targets.ConditionalTargetModel":
        if isinstance(self.target, targets.ConditionalTargetModel):
            return self.target
        raise DimensionError("instance carries a Markov target model, not a path list")

    def markov_target(self) -> "targets.MarkovTargetModel":
        if isinstance(self.target, targets.MarkovTargetModel):
            return self.target
        raise DimensionError("instance carries an explicit path list, not a Markov model")


@dataclass(frozen=True)
class EffortBounds:
    """Per-class and pooled caps on search effort, plus the global total N."""

    per_class: np.ndarray  # (L, S, T) ints
    pooled: np.ndarray  # (S, T) ints
    total: int  # N


class SearchPlan:
    """Flow counts per class: ``moves[l][(s, s2, t)] = number of searchers``.

    ``t`` is the period in which the searchers occupy ``s`` and declare the
    move to ``s2``; they arrive (and look) ``d`` periods later.  Optional
    per-searcher occupancy traces are kept when the plan was assembled from
    trajectories; ``None`` entries mark periods spent in transit.
    """

    def __init__(
        self,
        moves: Sequence[Mapping[tuple[int, int, int], int]],
        trajectories: Sequence[Sequence[Sequence[int | None]]] | None = None,
    ):
        self.moves: tuple[dict[tuple[int, int, int], int], ...] = tuple(
            {k: int(v) for k, v in cls_moves.items() if v} for cls_moves in moves
        )
        self.trajectories = (
            None
            if trajectories is None
            else tuple(tuple(tuple(traj) for traj in cls_trajs) for cls_trajs in trajectories)
        )

    @property
    def class_count(self) -> int:
        return len(self.moves)

    @property
    def horizon(self) -> int:
        """Largest declared move period; equals T for any complete plan."""
        return max((t for m in self.moves for (_, _, t) in m), default=0)

    def fingerprint(self) -> tuple:
        return tuple(tuple(sorted(m.items())) for m in self.moves)


def plan_from_trajectories(
    inst: SearchInstance, trajectories: Sequence[Sequence[Sequence[int | None]]]
) -> SearchPlan:
    """Assemble a flow plan from per-searcher occupancy traces.

    Each trace lists the occupied state for t = 0..T with ``None`` for transit
    periods.  The declared move out of the last occupied period is chosen
    canonically (stay if the self-arc exists, else the smallest destination
    whose travel time matches or exits the horizon).
    """
    if len(trajectories) != inst.class_count:
        raise DimensionError("one trajectory list per searcher class required")
    T = inst.horizon
    moves: list[dict[tuple[int, int, int], int]] = [dict() for _ in range(inst.class_count)]
    for l, cls_trajs in enumerate(trajectories):
        for traj in cls_trajs:
            if len(traj) != T + 1:
                raise DimensionError(f"trajectory must list periods 0..{T}")
            if traj[0] != inst.motion.s_plus:
                raise DimensionError("searchers start at the initial state in period 0")
            occupied = [(t, s) for t, s in enumerate(traj) if s is not None]
            for (t, s), (t2, s2) in zip(occupied, occupied[1:]):
                ai = inst.motion.arc_id(l, s, s2)
                if ai is None or inst.motion.arcs[l][ai][2] != t2 - t:
                    raise DimensionError(f"no class-{l} arc {s}->{s2} taking {t2 - t} periods")
                key = (s, s2, t)
                moves[l][key] = moves[l].get(key, 0) + 1
            # declared exit from the final occupied period
            t_last, s_last = occupied[-1]
            if t_last < T and any(v is None for v in traj[t_last + 1 :]):
                choice = _exit_arc(inst, l, s_last, t_last, beyond=True)
            elif t_last == T:
                choice = _exit_arc(inst, l, s_last, t_last, beyond=False)
            else:
                raise DimensionError("trajectory ends early without transit periods")
            key = (s_last, choice, t_last)
            moves[l][key] = moves[l].get(key, 0) + 1
    return SearchPlan(moves, trajectories)


def _exit_arc(inst: SearchInstance, l: int, s: int, t: int, beyond: bool) -> int:
    options = inst.motion.forward(l, s)
    if not options:
        raise DimensionError(f"state {s} has an empty forward star for class {l}")
    if beyond:
        fits = [s2 for s2, d, _ in options if t + d > inst.horizon]
        if not fits:
            raise DimensionError(f"no move out of state {s} leaves the horizon at period {t}")
        return min(fits)
    stays = [s2 for s2, _, _ in options if s2 == s]
    return stays[0] if stays else min(s2 for s2, _, _ in options)


def plan_trajectories(plan: SearchPlan, inst: SearchInstance) -> list[list[tuple[int | None, ...]]]:
    """Decompose class flows into per-searcher occupancy traces.

    Deterministic: at every occupied node the searcher takes the remaining
    move with the smallest destination.  Returns one list per class with
    ``J_l`` traces of length T+1 (``None`` marks transit periods).
    """
    if plan.trajectories is not None:
        return [list(cls) for cls in plan.trajectories]
    T = inst.horizon
    out: list[list[tuple[int | None, ...]]] = []
    for l, cls in enumerate(inst.classes):
        remaining = dict(plan.moves[l])
        traces: list[tuple[int | None, ...]] = []
        for _ in range(cls.count):
            occ: list[int | None] = [inst.motion.s_plus]
            s, t = inst.motion.s_plus, 0
            while t <= T:
                options = sorted(
                    s2
                    for s2, _, _ in inst.motion.forward(l, s)
                    if remaining.get((s, s2, t), 0) > 0
                )
                if not options:
                    raise DimensionError(f"flow for class {l} cannot be decomposed at state {s}, period {t}")
                s2 = options[0]
                remaining[(s, s2, t)] -= 1
                d = inst.motion.arcs[l][inst.motion.arc_id(l, s, s2)][2]
                if t + d > T:
                    occ.extend([None] * (T - t))
                    break
                occ.extend([None] * (d - 1) + [s2])
                s, t = s2, t + d
            traces.append(tuple(occ))
        out.append(traces)
    return out


@dataclass(frozen=True)
class EffortMap:
    """Search effort per class, state, and period; ``levels[l, s, t-1]``."""

    levels: np.ndarray  # (L, S, T) int64

    @property
    def pooled(self) -> np.ndarray:
        return self.levels.sum(axis=0)


def derive_effort(plan: SearchPlan, inst: SearchInstance) -> EffortMap:
    """Accumulate weighted looks: each arrival over an arc adds its weight."""
    if plan.class_count != inst.class_count:
        raise DimensionError("plan and instance class counts differ")
    if plan.horizon != inst.horizon:
        raise DimensionError(f"plan horizon {plan.horizon} differs from instance horizon {inst.horizon}")
    T = inst.horizon
    Z = np.zeros((inst.class_count, inst.state_count, T), dtype=np.int64)
    for l, cls_moves in enumerate(plan.moves):
        weight = inst.classes[l].weight
        for (s, s2, t), count in cls_moves.items():
            ai = inst.motion.arc_id(l, s, s2)
            if ai is None:
                raise DimensionError(f"plan uses undefined class-{l} arc {s}->{s2}")
            arrive = t + inst.motion.arcs[l][ai][2]
            if 1 <= arrive <= T:
                Z[l, s2, arrive - 1] += weight[ai, arrive - 1] * count
    return EffortMap(Z)


# ---------------------------------------------------------------------------
# instance validation


def validate_instance(inst: SearchInstance) -> list[Violation]:
    """Report every broken structural invariant; empty list means well formed."""
    out: list[Violation] = []
    motion = inst.motion
    S, T = inst.state_count, inst.horizon

    if T < 1:
        out.append(Violation("horizon", (), "planning horizon must be at least 1"))
    if not (0 <= motion.s_plus < S):
        out.append(Violation("motion", (motion.s_plus,), "initial state out of range"))
    if motion.s_minus is not None and not (0 <= motion.s_minus < S):
        out.append(Violation("motion", (motion.s_minus,), "terminal state out of range"))
    if len(motion.arcs) != inst.class_count:
        out.append(Violation("motion", (), "one arc list per searcher class required"))

    for l in range(min(len(motion.arcs), inst.class_count)):
        for ai, (s, s2, d) in enumerate(motion.arcs[l]):
            if d < 1:
                out.append(Violation("travel-time", (l, s, s2), f"travel time {d} < 1"))
            if not (0 <= s < S and 0 <= s2 < S):
                out.append(Violation("motion", (l, s, s2), "arc endpoint out of range"))
        rev_plus = {s for s, _, _ in motion.reverse(l, motion.s_plus)}
        if rev_plus != {motion.s_plus}:
            out.append(
                Violation(
                    "motion",
                    (l, motion.s_plus),
                    f"reverse star of the initial state must be itself, got {sorted(rev_plus)}",
                )
            )
        if motion.s_minus is not None:
            fwd_minus = {s2 for s2, _, _ in motion.forward(l, motion.s_minus)}
            if fwd_minus != {motion.s_minus}:
                out.append(
                    Violation(
                        "motion",
                        (l, motion.s_minus),
                        f"forward star of the terminal state must be itself, got {sorted(fwd_minus)}",
                    )
                )

    for l, cls in enumerate(inst.classes):
        if cls.count < 1:
            out.append(Violation("searchers", (l,), "class must contain at least one searcher"))
        if cls.endurance < 1:
            out.append(Violation("endurance", (l,), "endurance must be at least 1"))
        n_arcs = len(motion.arcs[l]) if l < len(motion.arcs) else 0
        if cls.weight.shape != (n_arcs, T):
            out.append(Violation("weights", (l,), f"weight table must be ({n_arcs}, {T})"))
        elif (cls.weight < 0).any():
            bad = tuple(int(v) for v in np.argwhere(cls.weight < 0)[0])
            out.append(Violation("weights", (l,) + bad, "negative rate-modification factor"))

    if not (inst.detection.base_rate > 0):
        out.append(Violation("detection", (), "base detection rate must be positive"))

    if inst.limits.cap is not None:
        if inst.limits.cap.shape != (S, T + 1):
            out.append(Violation("limits", (), f"cap table must be ({S}, {T + 1})"))
        elif (inst.limits.cap < 0).any():
            out.append(Violation("limits", (), "negative searcher cap"))

    out.extend(_validate_target(inst))
    return out


def _validate_target(inst: SearchInstance) -> list[Violation]:
    out: list[Violation] = []
    special = inst.motion.special_states()
    tgt = inst.target
    if isinstance(tgt, targets.ConditionalTargetModel):
        if tgt.horizon != inst.horizon:
            out.append(Violation("target", (), "path length differs from the horizon"))
            return out
        mass = float(math.fsum(tgt.weights.tolist()))
        if abs(mass - 1.0) > 1e-9:
            out.append(Violation("target", (), f"q mass != 1 (sum={mass!r})"))
        if (tgt.weights <= 0).any():
            out.append(Violation("target", (), "path weights must be positive"))
        if ((tgt.modes != MODE_VISIBLE) & (tgt.modes != MODE_HIDDEN)).any():
            out.append(Violation("target", (), "path modes must be 0 or 1"))
        for sp in special:
            hits = np.argwhere(tgt.states == sp)
            if hits.size:
                w, t = (int(v) for v in hits[0])
                out.append(
                    Violation("target", (w, t + 1), "target path enters a searcher start/terminal state")
                )
        if tgt.states.size and (tgt.states.min() < 0 or tgt.states.max() >= inst.state_count):
            out.append(Violation("target", (), "path state out of range"))
    elif isinstance(tgt, targets.MarkovTargetModel):
        out.extend(
            Violation("target", loc, msg) for loc, msg in tgt.structural_errors(inst.state_count, inst.horizon)
        )
        support = tgt.initial.reshape(-1) > 0
        occupied = support.reshape(inst.state_count, 2).any(axis=1)
        for t in range(tgt.transitions.shape[0]):
            support = (support.astype(np.float64) @ (tgt.transitions[t] > 0)) > 0
            occupied |= support.reshape(inst.state_count, 2).any(axis=1)
        for sp in special:
            if occupied[sp]:
                out.append(Violation("target", (sp,), "target mass can reach a searcher start/terminal state"))
    else:
        out.append(Violation("target", (), f"unsupported target model {type(tgt).__name__}"))
    return out


# ---------------------------------------------------------------------------
# effort bounds


def effort_bounds(inst: SearchInstance) -> EffortBounds:
    """Tight per-(class, state, period) effort caps and the global total.

    ``m[l, s, t] = min(J_l, cap(s, t)) * max weight over in-arcs usable at t``:
    no more searchers than the class holds (or the deconfliction cap admits)
    can look in a state at once, each over its best arc.
    """
    L, S, T = inst.class_count, inst.state_count, inst.horizon
    per_class = np.zeros((L, S, T), dtype=np.int64)
    for l, cls in enumerate(inst.classes):
        for s in range(S):
            inbound = inst.motion.reverse(l, s)
            for t in range(1, T + 1):
                best = 0
                for _, d, ai in inbound:
                    if t - d >= 0:
                        w = int(cls.weight[ai, t - 1])
                        if w > best:
                            best = w
                if best:
                    per_class[l, s, t - 1] = min(cls.count, inst.cap(s, t)) * best
    pooled = per_class.sum(axis=0)
    special = sorted(inst.motion.special_states())
    searchable = np.ones(S, dtype=bool)
    searchable[special] = False
    if searchable.any():
        total = int(per_class[:, searchable, :].max(axis=1).sum())
    else:
        total = 0
    return EffortBounds(per_class, pooled, total)


# ---------------------------------------------------------------------------
# plan feasibility


def mission_starts(plan: SearchPlan, inst: SearchInstance) -> np.ndarray:
    """Arrivals at the first searched state, per class and period (M_{l,t})."""
    T = inst.horizon
    M = np.zeros((inst.class_count, T + 1), dtype=np.int64)
    special = inst.motion.special_states()
    s_plus = inst.motion.s_plus
    for l, cls_moves in enumerate(plan.moves):
        for (s, s2, t), count in cls_moves.items():
            if s == s_plus and s2 not in special:
                ai = inst.motion.arc_id(l, s, s2)
                if ai is None:
                    continue
                arrive = t + inst.motion.arcs[l][ai][2]
                if arrive <= T:
                    M[l, arrive] += count
    return M


def check_plan_feasibility(plan: SearchPlan, inst: SearchInstance) -> tuple[bool, list[Violation]]:
    """Evaluate every plan constraint family; cite each breach."""
    out: list[Violation] = []
    if plan.class_count != inst.class_count:
        return False, [Violation("dimensions", (), "plan and instance class counts differ")]
    motion, T = inst.motion, inst.horizon
    s_plus = motion.s_plus
    special = motion.special_states()

    inflow = [np.zeros((inst.state_count, T + 1), dtype=np.int64) for _ in range(inst.class_count)]
    outflow = [np.zeros((inst.state_count, T + 1), dtype=np.int64) for _ in range(inst.class_count)]

    for l, cls_moves in enumerate(plan.moves):
        J = inst.classes[l].count
        for (s, s2, t), count in cls_moves.items():
            loc = (l, s, s2, t)
            ai = motion.arc_id(l, s, s2)
            if ai is None:
                out.append(Violation("motion", loc, "move not in the forward star"))
                continue
            if not (0 <= t <= T):
                out.append(Violation("bounds", loc, "move period outside the horizon"))
                continue
            if count < 0:
                out.append(Violation("bounds", loc, "negative searcher count"))
            if count > min(J, inst.cap(s, t)):
                out.append(Violation("bounds", loc, f"count {count} exceeds min(J, cap)"))
            if t == 0 and s != s_plus:
                out.append(Violation("initialization", loc, "period-0 moves must originate at the start state"))
                continue
            outflow[l][s, t] += count
            arrive = t + motion.arcs[l][ai][2]
            if arrive <= T:
                inflow[l][s2, arrive] += count

    for l in range(inst.class_count):
        J = inst.classes[l].count
        start_out = int(outflow[l][s_plus, 0])
        if start_out != J:
            out.append(Violation("initialization", (l,), f"{start_out} searchers leave the start state, need {J}"))
        for t in range(1, T + 1):
            for s in range(inst.state_count):
                if inflow[l][s, t] != outflow[l][s, t]:
                    out.append(
                        Violation(
                            "flow",
                            (l, s, t),
                            f"inflow {int(inflow[l][s, t])} != outflow {int(outflow[l][s, t])}",
                        )
                    )

    M = mission_starts(plan, inst)
    for l, cls in enumerate(inst.classes):
        for t in range(T + 1):
            if M[l, t] > min(cls.count, inst.cap(s_plus, t)):
                out.append(Violation("mission-starts", (l, t), f"{int(M[l, t])} starts exceed the class bound"))
        tau = cls.endurance
        for t in range(T + 1):
            on_mission = int(sum(outflow[l][s, t] for s in range(inst.state_count) if s not in special))
            window = int(M[l, max(0, t - tau + 1) : t + 1].sum())
            if on_mission > window:
                out.append(
                    Violation(
                        "endurance",
                        (l, t),
                        f"{on_mission} searchers on mission but only {window} started within {tau} periods",
                    )
                )

    if inst.limits.cap is not None:
        for t in range(1, T + 1):
            occupants = sum(f[:, t] for f in inflow)
            for s in range(inst.state_count):
                if occupants[s] > inst.limits.cap[s, t]:
                    out.append(
                        Violation(
                            "deconfliction",
                            (s, t),
                            f"{int(occupants[s])} searchers exceed the cap {int(inst.limits.cap[s, t])}",
                        )
                    )

    return (not out), out
