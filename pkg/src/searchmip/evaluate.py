"""Exact non-detection evaluation and the one-step secant increments.

Works on pooled effort ``z[s, t-1] = sum over classes of class effort``; the
exponent of every survival factor is ``base_rate * z`` for a visible target
and zero for a camouflaged one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SearchInstance
from .targets import ConditionalTargetModel, MarkovTargetModel, occupancy

#: path counts above this use compensated summation for reproducible totals
_FSUM_THRESHOLD = 10_000


def pooled_effort(levels: np.ndarray) -> np.ndarray:
    """Accept (L, S, T) or already-pooled (S, T) effort."""
    arr = np.asarray(levels, dtype=np.float64)
    if arr.ndim == 3:
        return arr.sum(axis=0)
    if arr.ndim == 2:
        return arr
    raise ValueError("effort must be (L, S, T) or (S, T)")


def path_efforts(z: np.ndarray, cond: ConditionalTargetModel) -> np.ndarray:
    """Weighted looks coinciding with each path while the target is visible."""
    T = cond.horizon
    cols = np.arange(T)
    gathered = z[cond.states, cols[None, :]]
    return np.where(cond.modes == 0, gathered, 0.0).sum(axis=1)


def f_conditional(levels: np.ndarray, cond: ConditionalTargetModel, base_rate: float) -> float:
    """Probability no searcher ever detects the target, path-list model."""
    z = pooled_effort(levels)
    terms = cond.weights * np.exp(-base_rate * path_efforts(z, cond))
    if terms.size > _FSUM_THRESHOLD:
        return float(math.fsum(terms.tolist()))
    return float(terms.sum())


@dataclass(frozen=True)
class DetectabilityIndex:
    """Where detection is possible at all: searcher reach times visible mass.

    ``detectable[s, t-1]`` is true when some searcher can occupy ``s`` by
    period ``t`` and the target can be there unhidden.  ``periods_nd`` lists
    the periods with no detectable state; ``states_nd[t-1]`` the per-period
    undetectable states (only meaningful for detectable periods).
    """

    reachable: np.ndarray  # (S, T) bool
    visible_occupancy: np.ndarray  # (S, T) float, q_{s,0,t}
    detectable: np.ndarray  # (S, T) bool

    @property
    def periods_nd(self) -> list[int]:
        return [t + 1 for t in range(self.detectable.shape[1]) if not self.detectable[:, t].any()]

    @property
    def periods_d(self) -> list[int]:
        return [t + 1 for t in range(self.detectable.shape[1]) if self.detectable[:, t].any()]

    def states_d(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.detectable[:, t - 1])

    def pair_list(self) -> list[tuple[int, int]]:
        """All (state, period) pairs carrying effort variables in reduced models."""
        out: list[tuple[int, int]] = []
        for t in self.periods_d:
            out.extend((int(s), t) for s in self.states_d(t))
        return out


def searcher_reachability(inst: SearchInstance) -> np.ndarray:
    """Boolean (S, T): some searcher of some class can occupy s in period t."""
    S, T = inst.state_count, inst.horizon
    reach = np.zeros((S, T + 1), dtype=bool)
    for l in range(inst.class_count):
        seen = np.zeros((S, T + 1), dtype=bool)
        frontier = [(inst.motion.s_plus, 0)]
        seen[inst.motion.s_plus, 0] = True
        while frontier:
            s, t = frontier.pop()
            for s2, d, _ in inst.motion.forward(l, s):
                t2 = t + d
                if t2 <= T and not seen[s2, t2]:
                    seen[s2, t2] = True
                    frontier.append((s2, t2))
        reach |= seen
    return reach[:, 1:]


def build_detectability(inst: SearchInstance, markov: MarkovTargetModel) -> DetectabilityIndex:
    occ = occupancy(markov)
    visible = occ[:, :, 0].T.copy()  # (S, T)
    reach = searcher_reachability(inst)
    return DetectabilityIndex(reach, visible, reach & (visible > 0.0))


def _survival(z: np.ndarray, base_rate: float, index: DetectabilityIndex | None) -> np.ndarray:
    """(T, S, 2) per-period survival factors exp(-rate_c * z)."""
    S, T = z.shape
    surv = np.ones((T, S, 2), dtype=np.float64)
    if index is None:
        surv[:, :, 0] = np.exp(-base_rate * z.T)
    else:
        mask = index.detectable.T
        surv[:, :, 0] = np.where(mask, np.exp(-base_rate * z.T), 1.0)
    return surv


@dataclass(frozen=True)
class CutData:
    """Reach/survive-after probabilities at a fixed effort, for cut building.

    ``reach[t-1, s, c]`` is the chance the target sits at (s, c) in period t
    undetected so far; ``after[t-1, s, c]`` the chance it stays undetected in
    the periods following t given it is there.
    """

    reach: np.ndarray  # (T, S, 2)
    after: np.ndarray  # (T, S, 2)
    survival: np.ndarray  # (T, S, 2)
    base_rate: float
    effort: np.ndarray  # pooled (S, T)

    def value(self, anchor_t: int = 1) -> float:
        """Non-detection probability; identical for every anchor period."""
        i = anchor_t - 1
        return float((self.reach[i] * self.survival[i] * self.after[i]).sum())


def cut_data(
    levels: np.ndarray,
    markov: MarkovTargetModel,
    base_rate: float,
    index: DetectabilityIndex | None = None,
) -> CutData:
    z = pooled_effort(levels)
    S, T = z.shape
    surv = _survival(z, base_rate, index)
    qmask = None
    if index is not None:
        occ = occupancy(markov)  # zero-occupancy pairs carry exactly zero reach mass
        qmask = occ > 0.0

    reach = np.empty((T, S, 2), dtype=np.float64)
    reach[0] = markov.initial
    row = markov.initial.reshape(-1)
    for t in range(1, T):
        row = (row * surv[t - 1].reshape(-1)) @ markov.transitions[t - 1]
        if qmask is not None:
            row = np.where(qmask[t].reshape(-1), row, 0.0)
        reach[t] = row.reshape(S, 2)

    after = np.empty((T, S, 2), dtype=np.float64)
    after[T - 1] = 1.0
    back = np.ones(2 * S, dtype=np.float64)
    for t in range(T - 2, -1, -1):
        back = markov.transitions[t] @ (back * surv[t + 1].reshape(-1))
        if qmask is not None:
            back = np.where(qmask[t].reshape(-1), back, 0.0)
        after[t] = back.reshape(S, 2)

    return CutData(reach, after, surv, base_rate, z)


def f_markov(
    levels: np.ndarray,
    markov: MarkovTargetModel,
    base_rate: float,
    anchor_t: int = 1,
    index: DetectabilityIndex | None = None,
) -> float:
    """Probability of never detecting the target, Markov model."""
    return cut_data(levels, markov, base_rate, index).value(anchor_t)


def detection_prob_forward(levels: np.ndarray, markov: MarkovTargetModel, base_rate: float) -> float:
    """Forward information-state sweep; complements :func:`f_markov`."""
    z = pooled_effort(levels)
    S, T = z.shape
    surv = _survival(z, base_rate, None)
    row = markov.initial.reshape(-1)
    total = 0.0
    for t in range(T):
        sv = surv[t].reshape(-1)
        total += float((row * (1.0 - sv)).sum())
        if t < T - 1:
            row = (row * sv) @ markov.transitions[t]
    return total


def secant_delta(
    data: CutData, searcher_class: int, s: int, t: int
) -> float:
    """Change in the non-detection value from one extra unit of effort at (s, t).

    The value does not depend on which class supplies the unit; the class
    argument is accepted for signature symmetry with the effort tensor.
    """
    del searcher_class
    z = float(data.effort[s, t - 1])
    rate = data.base_rate
    factor = math.exp(-rate * (z + 1.0)) - math.exp(-rate * z)
    return float(data.reach[t - 1, s, 0] * factor * data.after[t - 1, s, 0])


def secant_delta_table(data: CutData) -> np.ndarray:
    """All one-unit increments at once, shape (S, T)."""
    rate = data.base_rate
    z = data.effort
    factor = np.exp(-rate * (z + 1.0)) - np.exp(-rate * z)
    return data.reach[:, :, 0].T * factor * data.after[:, :, 0].T
