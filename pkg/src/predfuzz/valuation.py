"""Seed valuation and the path-transition bookkeeping behind rewards.

A discovered execution path is scored on four features: closeness to the
target block, estimated ease of flipping its unexplored branches, execution
speed, and favored status. Feature weights come from the entropy weight
method over the current queue, so whichever feature currently separates
seeds the most gets the most say. The reward of a path transition is the
value difference between destination and source.

Also hosts a small tabularMDP value-iteration oracle used to pin down the
Bellman semantics (discounted backups, terminal states valued at zero)
that the learned critics are checked against.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .program import StaticInfo

N_FEATURES = 4
_EWM_EPS = 1e-6


@dataclass
class PathRecord:
    """Queue entry for one discovered path."""

    path_id: int
    seed: bytes
    branches: frozenset[int]          # raw branch ids covered
    trace_bits: dict[int, int]
    exec_steps: int
    closeness: float = 0.0            # d_s in [0, 1], 1 means on target
    difficulty_ease: float = 1.0      # ED_s in (0, 1], 1 means easy
    speed: float = 1.0                # Ex_s in (0, 1]
    favored: float = 0.0              # Fv_s in {0, 1}
    value: float = 0.0
    terminal: bool = False
    self_streak: int = 0
    discovered_at: int = 0            # execution index of first sighting

    def features(self) -> np.ndarray:
        return np.array([self.closeness, self.difficulty_ease,
                         self.speed, self.favored])


class BranchStats:
    """Global raw hit counts and the explored-branch set."""

    def __init__(self) -> None:
        self.hits: dict[int, int] = {}
        self.explored: set[int] = set()

    def update(self, trace_raw: Mapping[int, int]) -> None:
        for branch, count in trace_raw.items():
            self.hits[branch] = self.hits.get(branch, 0) + count
            self.explored.add(branch)


def branch_probability(stats: BranchStats, info: StaticInfo, branch: int) -> float:
    """Chance of flipping into an unexplored branch.

    One over (total hits of the enclosing condition's branches plus one).
    Only defined for an unexplored branch with at least one explored
    sibling; anything else is a caller bug and raises.
    """
    if branch in stats.explored:
        raise ValueError(f"branch {branch} is already explored")
    sibs = info.siblings.get(branch)
    if not sibs or not (sibs & stats.explored):
        raise ValueError(f"branch {branch} has no explored sibling")
    total = stats.hits.get(branch, 0)
    for s in sibs:
        total += stats.hits.get(s, 0)
    return 1.0 / (total + 1.0)


def unexplored_neighbors(record: PathRecord, stats: BranchStats,
                         info: StaticInfo) -> set[int]:
    """Unexplored siblings of the branches this path covers."""
    out: set[int] = set()
    for branch in record.branches:
        for s in info.siblings.get(branch, ()):
            if s not in stats.explored:
                out.add(s)
    return out


def estimated_difficulty(record: PathRecord, stats: BranchStats,
                         info: StaticInfo) -> float:
    """Mean flip probability over the path's unexplored siblings.

    A path with nothing left to flip scores 1.0 (nothing is blocking it),
    matching the convention that higher means easier.
    """
    branches = unexplored_neighbors(record, stats, info)
    if not branches:
        return 1.0
    # sorted() pins the float summation order for bit-level reproducibility
    return sum(branch_probability(stats, info, b) for b in sorted(branches)) / len(branches)


def closeness(record_blocks: Iterable[int], info: StaticInfo) -> float:
    """1 - (mean distance of reachable executed blocks) / max distance.

    Blocks with no path to the target are skipped; a trace touching none
    of them scores 0. Hitting the target itself scores 1.
    """
    dists = [info.bb_distance[b] for b in record_blocks if b in info.bb_distance]
    if not dists:
        return 0.0
    if 0 in dists:
        return 1.0
    if info.max_distance == 0:
        return 1.0
    return 1.0 - (sum(dists) / len(dists)) / info.max_distance


def entropy_weights(matrix: np.ndarray) -> np.ndarray:
    """Entropy-weight-method feature weights for an n x m sample matrix.

    Columns are min-max scaled and shifted by a small epsilon, normalized
    into per-column distributions, scored by normalized Shannon entropy,
    and weighted by normalized divergence (1 - entropy). A constant
    column carries no information and gets weight ~0. If every column is
    constant the divergences all vanish and no normalization exists, so
    that degenerate matrix is an error, as is a single-sample matrix.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a 2-D sample matrix")
    n, cols = m.shape
    if n < 2:
        raise ValueError("need at least 2 samples to spread entropy over")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite values")

    span = m.max(axis=0) - m.min(axis=0)
    scaled = np.where(span > 0.0, (m - m.min(axis=0)) / np.where(span > 0.0, span, 1.0), 0.0)
    scaled += _EWM_EPS
    p = scaled / scaled.sum(axis=0)
    entropy = -(p * np.log(p)).sum(axis=0) / math.log(n)
    divergence = 1.0 - entropy
    divergence = np.clip(divergence, 0.0, None)  # guard float fuzz at E ~ 1
    total = divergence.sum()
    if total <= 0.0:
        raise ValueError("all feature columns are constant; weights undefined")
    return divergence / total


def seed_value(features: Sequence[float], weights: Sequence[float]) -> float:
    """Weighted sum of the four seed features."""
    f = np.asarray(features, dtype=float)
    w = np.asarray(weights, dtype=float)
    if f.shape != w.shape:
        raise ValueError("feature/weight length mismatch")
    return float(f @ w)


def transition_reward(value_from: float, value_to: float) -> float:
    """r = V(destination) - V(source)."""
    return value_to - value_from


@dataclass
class Transition:
    """One observed or predicted path transition."""

    p_t: int
    a_t: float
    p_next: int
    reward: float
    testcase_id: int
    emb_t: Optional[np.ndarray] = None
    emb_next: Optional[np.ndarray] = None
    terminal_next: bool = False
    byte_index: int = -1

    def log_line(self) -> str:
        return (f"{self.p_t} {self.a_t!r} {self.p_next} "
                f"{self.reward!r} {self.testcase_id}")


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling."""

    def __init__(self, capacity: int, kind: str = "historical"):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if kind not in ("historical", "predicted"):
            raise ValueError("kind must be 'historical' or 'predicted'")
        self.capacity = capacity
        self.kind = kind
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def append(self, t: Transition) -> None:
        self._items.append(t)

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]

    def recent(self, n: int) -> list[Transition]:
        k = min(n, len(self._items))
        return [self._items[i] for i in range(len(self._items) - k, len(self._items))]

    def __iter__(self):
        return iter(self._items)


DEFAULT_TERMINAL_STREAK = 256


def record_transition(buffer: ReplayBuffer, t: Transition,
                      paths: Optional[Mapping[int, PathRecord]] = None,
                      terminal_streak: int = DEFAULT_TERMINAL_STREAK) -> None:
    """Append a transition and maintain the source's terminal streak.

    A seed whose last ``terminal_streak`` mutations all came back to the
    same path is marked terminal: nothing new is reachable from it at
    current energy, so planning should treat it as absorbing.
    """
    buffer.append(t)
    if paths is None:
        return
    rec = paths.get(t.p_t)
    if rec is None:
        return
    if t.p_next == t.p_t:
        rec.self_streak += 1
        if rec.self_streak >= terminal_streak:
            rec.terminal = True
    else:
        rec.self_streak = 0


@dataclass(frozen=True)
class TabularMDP:
    """Explicit finite MDP for oracle value computation.

    transitions maps (state, action) to a list of (probability,
    next_state, reward) triples; probabilities per pair must sum to 1.
    """

    states: tuple[int, ...]
    actions: tuple[int, ...]
    transitions: Mapping[tuple[int, int], Sequence[tuple[float, int, float]]]
    terminal: frozenset[int] = frozenset()

    def validate(self) -> None:
        if len(self.states) > 64 or len(self.actions) > 16:
            raise ValueError("oracle is meant for small MDPs (<=64 states, <=16 actions)")
        for s in self.states:
            if s in self.terminal:
                continue
            for a in self.actions:
                triples = self.transitions.get((s, a))
                if not triples:
                    raise ValueError(f"missing transitions for ({s}, {a})")
                total = sum(p for p, _, _ in triples)
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(f"probabilities for ({s}, {a}) sum to {total}")


def tabular_value_oracle(
    mdp: TabularMDP,
    gamma: float,
    policy: Optional[Mapping[int, Mapping[int, float]]] = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> tuple[dict[tuple[int, int], float], dict[int, float]]:
    """Value iteration (or policy evaluation) to sup-norm tolerance.

    Terminal states have V = 0 and all their Q values 0. With ``policy``
    given (state -> action distribution) the fixed point is that policy's
    value; otherwise the optimal one. Raises if not converged within
    ``max_iter`` sweeps.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    mdp.validate()
    v = {s: 0.0 for s in mdp.states}
    q = {(s, a): 0.0 for s in mdp.states for a in mdp.actions}
    for _ in range(max_iter):
        delta = 0.0
        new_q = {}
        for s in mdp.states:
            if s in mdp.terminal:
                for a in mdp.actions:
                    new_q[(s, a)] = 0.0
                continue
            for a in mdp.actions:
                total = 0.0
                for p, s2, r in mdp.transitions[(s, a)]:
                    total += p * (r + gamma * v[s2])
                new_q[(s, a)] = total
                delta = max(delta, abs(total - q[(s, a)]))
        q = new_q
        for s in mdp.states:
            if s in mdp.terminal:
                v[s] = 0.0
            elif policy is not None:
                v[s] = sum(policy[s].get(a, 0.0) * q[(s, a)] for a in mdp.actions)
            else:
                v[s] = max(q[(s, a)] for a in mdp.actions)
        if delta < tol:
            return q, v
    raise RuntimeError(f"value iteration did not converge (last delta {delta:.3e})")
