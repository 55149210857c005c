"""Target motion models: explicit path lists and Markov chains over (state, mode).

The joint index ``k = 2*s + c`` flattens (state, mode) pairs; mode 0 means the
target is visible, mode 1 that it is camouflaged and undetectable.  All
stochastic operations take an explicit seed and use numpy's counter-based
Philox generator, so every sampled path set is reproducible.
"""

from __future__ import annotations

import math

import numpy as np


class PathExplosionError(RuntimeError):
    """Exhaustive path enumeration would exceed the configured cap."""


class ConditionalTargetModel:
    """Explicit list of target paths with probabilities.

    ``states[i, t-1]`` and ``modes[i, t-1]`` give path ``i``'s position and
    mode in period ``t``; ``weights`` are positive and normally sum to one
    (enumeration with a positive probability floor intentionally truncates).
    """

    def __init__(self, states, modes, weights):
        self.states = np.ascontiguousarray(states, dtype=np.int32)
        self.modes = np.ascontiguousarray(modes, dtype=np.int8)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape != self.modes.shape:
            raise ValueError("states and modes must be matching (paths, horizon) arrays")
        if self.weights.shape != (self.states.shape[0],):
            raise ValueError("one weight per path required")
        for arr in (self.states, self.modes, self.weights):
            arr.setflags(write=False)

    @property
    def path_count(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def visible(self) -> np.ndarray:
        """Boolean (paths, horizon) mask of the detectable path positions."""
        return self.modes == 0

    def detectable_pairs(self, state_count: int) -> np.ndarray:
        """Boolean (S, T) mask: some path is visible in the state-period."""
        out = np.zeros((state_count, self.horizon), dtype=bool)
        vis = self.visible()
        for t in range(self.horizon):
            out[self.states[vis[:, t], t], t] = True
        return out

    def occupancy(self, state_count: int) -> np.ndarray:
        """Weighted (T, S, 2) marginal occupancy of the listed paths."""
        out = np.zeros((self.horizon, state_count, 2), dtype=np.float64)
        for t in range(self.horizon):
            np.add.at(out[t], (self.states[:, t], self.modes[:, t]), self.weights)
        return out


class MarkovTargetModel:
    """Chain over joint (state, mode) indices.

    ``initial[s, c]`` is the period-1 law; ``transitions[t-1, k, k']`` moves
    period ``t`` mass to period ``t+1`` for t = 1..T-1.
    """

    def __init__(self, initial, transitions, horizon: int):
        self.initial = np.ascontiguousarray(initial, dtype=np.float64)
        self.transitions = np.ascontiguousarray(transitions, dtype=np.float64)
        self.horizon = int(horizon)
        self.initial.setflags(write=False)
        self.transitions.setflags(write=False)

    @property
    def state_count(self) -> int:
        return self.initial.shape[0]

    def structural_errors(self, state_count: int, horizon: int) -> list[tuple[tuple, str]]:
        out: list[tuple[tuple, str]] = []
        K = 2 * state_count
        if self.horizon != horizon:
            out.append(((), f"model horizon {self.horizon} differs from instance horizon {horizon}"))
        if self.initial.shape != (state_count, 2):
            out.append(((), f"initial law must be ({state_count}, 2)"))
            return out
        if self.transitions.shape != (max(horizon - 1, 0), K, K):
            out.append(((), f"transitions must be ({horizon - 1}, {K}, {K})"))
            return out
        if (self.initial < 0).any() or (self.transitions < 0).any():
            out.append(((), "negative probability entry"))
        if abs(float(self.initial.sum()) - 1.0) > 1e-9:
            out.append(((), f"initial law mass {float(self.initial.sum())!r} != 1"))
        if self.transitions.size:
            sums = self.transitions.sum(axis=2)
            bad = np.argwhere(np.abs(sums - 1.0) > 1e-12)
            if bad.size:
                t, k = (int(v) for v in bad[0])
                out.append(((t + 1, k >> 1, k & 1), f"transition row sums to {sums[t, k]!r}"))
        return out


def occupancy(markov: MarkovTargetModel) -> np.ndarray:
    """Unconditional (T, S, 2) occupancy via the forward recursion."""
    S = markov.state_count
    T = markov.horizon
    out = np.empty((T, S, 2), dtype=np.float64)
    row = markov.initial.reshape(-1).copy()
    out[0] = row.reshape(S, 2)
    for t in range(1, T):
        row = row @ markov.transitions[t - 1]
        out[t] = row.reshape(S, 2)
    return out


def make_rng(seed: int) -> np.random.Generator:
    """The pinned counter-based generator used by every stochastic operation."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def sample_paths(markov: MarkovTargetModel, count: int, seed: int) -> ConditionalTargetModel:
    """Draw ``count`` i.i.d. trajectories; each keeps weight 1/count.

    Duplicate draws stay as distinct paths so the path count is exactly
    ``count``.  Deterministic for a fixed seed (Philox, fixed step order).
    """
    if count < 1:
        raise ValueError("path sample size must be positive")
    T = markov.horizon
    rng = make_rng(seed)
    cum0 = np.cumsum(markov.initial.reshape(-1))
    ks = np.empty((count, T), dtype=np.int64)
    ks[:, 0] = np.minimum((cum0 <= rng.random(count)[:, None]).sum(axis=1), cum0.size - 1)
    for t in range(1, T):
        cum = np.cumsum(markov.transitions[t - 1], axis=1)
        rows = cum[ks[:, t - 1]]
        ks[:, t] = np.minimum((rows <= rng.random(count)[:, None]).sum(axis=1), rows.shape[1] - 1)
    return ConditionalTargetModel(ks >> 1, (ks & 1).astype(np.int8), np.full(count, 1.0 / count))


def enumerate_paths(
    markov: MarkovTargetModel, prob_floor: float = 0.0, cap: int = 1_000_000
) -> ConditionalTargetModel:
    """Exhaustive path list: every trajectory with probability > ``prob_floor``.

    Weights are exact transition products (never renormalised, so a positive
    floor leaves total mass below one).  Raises :class:`PathExplosionError`
    once more than ``cap`` paths qualify.
    """
    if prob_floor < 0:
        raise ValueError("probability floor must be nonnegative")
    T = markov.horizon
    K = 2 * markov.state_count
    paths: list[tuple[int, ...]] = []
    probs: list[float] = []
    init = markov.initial.reshape(-1)

    stack: list[tuple[int, float, tuple[int, ...]]] = []
    for k in range(K - 1, -1, -1):
        p = float(init[k])
        if p > prob_floor:
            stack.append((1, p, (k,)))
    while stack:
        t, p, prefix = stack.pop()
        if t == T:
            paths.append(prefix)
            probs.append(p)
            if len(paths) > cap:
                raise PathExplosionError(f"more than {cap} paths above the probability floor")
            continue
        row = markov.transitions[t - 1][prefix[-1]]
        for k in range(K - 1, -1, -1):
            q = p * float(row[k])
            if q > prob_floor:
                stack.append((t + 1, q, prefix + (k,)))
    ks = np.asarray(paths, dtype=np.int64).reshape(len(paths), T)
    w = np.asarray(probs, dtype=np.float64)
    return ConditionalTargetModel(ks >> 1, (ks & 1).astype(np.int8), w)


def conditional_mass(cond: ConditionalTargetModel) -> float:
    """Compensated total path weight."""
    return float(math.fsum(cond.weights.tolist()))
