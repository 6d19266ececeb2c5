"""Per-seed fuzzing strategies evolved by a particle swarm.

Each queue seed owns one particle: a 27-dimensional action group holding
its selection score SS (gate probability, [0.01, 1]), seed energy SE
(mutation budget, [1, 1024]), a 7-way distribution HR over havoc round
counts {2, 4, 8, 16, 32, 64, 128}, a 16-way distribution MT over the
mutator catalogue, and a 2-way distribution LC over byte-location classes
(optimal vs common). Particles move by the standard velocity rule with
per-dimension random coefficients and a linearly increasing inertia
weight, then get projected back onto the feasible set (scalar clamps,
simplex repair).

Fitness is mutation efficiency: mean of (reward + gamma * V(next)) per
mutation, tracked per particle (local) and across the swarm (global).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mutators import N_MUTATORS

HAVOC_ROUNDS = (2, 4, 8, 16, 32, 64, 128)
N_ROUNDS = len(HAVOC_ROUNDS)

SS_IDX = 0
SE_IDX = 1
HR_SLICE = slice(2, 2 + N_ROUNDS)
MT_SLICE = slice(HR_SLICE.stop, HR_SLICE.stop + N_MUTATORS)
LC_SLICE = slice(MT_SLICE.stop, MT_SLICE.stop + 2)
GROUP_DIM = LC_SLICE.stop  # 27

SS_MIN, SS_MAX = 0.01, 1.0
SE_MIN, SE_MAX = 1.0, 1024.0

OMEGA_START = 0.4
OMEGA_END = 0.9


def repair_simplex(x: np.ndarray) -> np.ndarray:
    """Project onto the probability simplex: exact identity when already valid,
    otherwise clamp negatives and renormalize (uniform if everything vanished)."""
    x = np.asarray(x, dtype=float)
    if np.all(x >= 0.0):
        total = x.sum()
        if abs(total - 1.0) <= 1e-12:
            return x
        if total > 0.0:
            return x / total
        return np.full(x.shape, 1.0 / x.size)
    x = np.clip(x, 0.0, None)
    total = x.sum()
    if total <= 0.0:
        return np.full(x.shape, 1.0 / x.size)
    return x / total


def project_group(x: np.ndarray) -> np.ndarray:
    """Clamp the scalar dims and repair the three distribution blocks."""
    if x.shape != (GROUP_DIM,):
        raise ValueError(f"action group must have {GROUP_DIM} dimensions")
    out = x.astype(float).copy()
    out[SS_IDX] = min(SS_MAX, max(SS_MIN, out[SS_IDX]))
    out[SE_IDX] = min(SE_MAX, max(SE_MIN, out[SE_IDX]))
    out[HR_SLICE] = repair_simplex(out[HR_SLICE])
    out[MT_SLICE] = repair_simplex(out[MT_SLICE])
    out[LC_SLICE] = repair_simplex(out[LC_SLICE])
    return out


@dataclass
class ActionGroup:
    """One particle: position, velocity, personal best, fitness bookkeeping."""

    x: np.ndarray
    v: np.ndarray
    lbest_x: np.ndarray
    lbest_eff: float = -np.inf
    g: int = 0               # lifetime mutations performed with this seed
    budget: int = 0          # G: mutation budget implied by SE at selection
    sum_reward: float = 0.0  # cycle accumulators for local efficiency
    sum_value: float = 0.0
    count: int = 0
    locations: Optional[tuple] = None  # (optimal, common) byte pools, engine-owned

    @property
    def ss(self) -> float:
        return float(self.x[SS_IDX])

    @property
    def se(self) -> float:
        return float(self.x[SE_IDX])

    @property
    def hr(self) -> np.ndarray:
        return self.x[HR_SLICE]

    @property
    def mt(self) -> np.ndarray:
        return self.x[MT_SLICE]

    @property
    def lc(self) -> np.ndarray:
        return self.x[LC_SLICE]

    def reset_cycle_stats(self) -> None:
        self.sum_reward = 0.0
        self.sum_value = 0.0
        self.count = 0

    def record_mutation(self, reward: float, v_next: float) -> None:
        self.sum_reward += reward
        self.sum_value += v_next
        self.count += 1

    def cycle_efficiency(self, gamma: float) -> float:
        if self.count == 0:
            raise ValueError("no mutations recorded this cycle")
        return (self.sum_reward + gamma * self.sum_value) / self.count


def init_action_group(exec_steps: int, seed_length: int,
                      queue_speed_scores: Sequence[float],
                      mean_exec_steps: float) -> ActionGroup:
    """Fresh particle for a newly queued seed.

    SS is the seed's speed score 1 / (steps * length) rank-normalized
    against the queue into [0.01, 1] (fast small seeds gate high). SE is
    an AFL-flavored energy: 64 scaled by how fast this seed runs versus
    the queue mean, clamped to [1, 1024]. The three distributions start
    uniform; velocity starts at zero.
    """
    score = 1.0 / (max(1, exec_steps) * max(1, seed_length))
    scores = list(queue_speed_scores)
    if score not in scores:
        scores.append(score)
    frac = sum(1 for s in scores if s <= score) / len(scores)
    x = np.empty(GROUP_DIM)
    x[SS_IDX] = SS_MIN + (SS_MAX - SS_MIN) * frac
    x[SE_IDX] = min(SE_MAX, max(SE_MIN, 64.0 * mean_exec_steps / max(1, exec_steps)))
    x[HR_SLICE] = 1.0 / N_ROUNDS
    x[MT_SLICE] = 1.0 / N_MUTATORS
    x[LC_SLICE] = 0.5
    return ActionGroup(x=x, v=np.zeros(GROUP_DIM), lbest_x=x.copy())


def ldiw_inertia(g: int, big_g: int) -> float:
    """Linearly increasing inertia: 0.4 at g=0 up to 0.9 at g=G."""
    if big_g < 1:
        raise ValueError("G must be at least 1")
    if not 0 <= g <= big_g:
        raise ValueError("need 0 <= g <= G")
    return OMEGA_START - (OMEGA_START - OMEGA_END) * (g / big_g)


def update_particle(p: ActionGroup, gbest_x: np.ndarray, omega: float,
                    rng: np.random.Generator, shared_r: bool = False) -> ActionGroup:
    """One velocity/position step toward personal and global bests.

    v <- omega*v + r1*(lbest - x) + r2*(gbest - x) with r1, r2 fresh
    uniform [0, 1] scalars drawn independently per term (``shared_r``
    reuses a single draw for both). Position is re-projected after the
    move; velocity itself is unconstrained.
    """
    r1 = float(rng.uniform())
    r2 = r1 if shared_r else float(rng.uniform())
    p.v = omega * p.v + r1 * (p.lbest_x - p.x) + r2 * (gbest_x - p.x)
    p.x = project_group(p.x + p.v)
    return p


@dataclass
class SwarmState:
    """Swarm-wide bests and cycle-level efficiency accumulators."""

    gbest_x: np.ndarray
    gbest_eff: float = -np.inf
    sum_reward: float = 0.0
    sum_value: float = 0.0
    count: int = 0

    def reset_cycle_stats(self) -> None:
        self.sum_reward = 0.0
        self.sum_value = 0.0
        self.count = 0

    def record_mutation(self, reward: float, v_next: float) -> None:
        self.sum_reward += reward
        self.sum_value += v_next
        self.count += 1


def new_swarm() -> SwarmState:
    uniform = project_group(init_action_group(1, 1, [], 1.0).x)
    return SwarmState(gbest_x=uniform)


def local_efficiency(history: Sequence[tuple[float, float]], gamma: float) -> float:
    """Mean discounted gain per mutation: sum(r_i + gamma*v_i) / n."""
    if not history:
        raise ValueError("history is empty")
    total = sum(r + gamma * v for r, v in history)
    return total / len(history)


def global_efficiency(swarm: SwarmState, gamma: float) -> float:
    """Swarm-level efficiency over every mutation this cycle (mutation-count
    weighted mean of the per-seed efficiencies)."""
    if swarm.count == 0:
        raise ValueError("no mutations recorded this cycle")
    return (swarm.sum_reward + gamma * swarm.sum_value) / swarm.count


def update_bests(swarm: SwarmState, p: ActionGroup, eff_local: float,
                 eff_global: float) -> None:
    """Refresh the particle's personal best and the swarm's global best.

    lbest moves when the particle's own efficiency improves; gbest moves
    to this particle's position when the swarm-level efficiency beats the
    best ever recorded. Both best efficiencies are therefore monotone
    non-decreasing.
    """
    if eff_local > p.lbest_eff:
        p.lbest_eff = eff_local
        p.lbest_x = p.x.copy()
    if eff_global > swarm.gbest_eff:
        swarm.gbest_eff = eff_global
        swarm.gbest_x = p.x.copy()


def classify_locations(density: np.ndarray, ratio: float = 0.8
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Split byte positions into optimal (density >= ratio * max) and common."""
    density = np.asarray(density, dtype=float)
    if density.ndim != 1 or density.size == 0:
        raise ValueError("density must be a non-empty vector")
    cutoff = ratio * density.max()
    optimal = np.flatnonzero(density >= cutoff)
    common = np.flatnonzero(density < cutoff)
    return optimal, common


def sample_rounds(p: ActionGroup, rng: np.random.Generator) -> int:
    return int(HAVOC_ROUNDS[rng.choice(N_ROUNDS, p=repair_simplex(p.hr))])


def sample_mutator_index(p: ActionGroup, rng: np.random.Generator) -> int:
    return int(rng.choice(N_MUTATORS, p=repair_simplex(p.mt)))


def sample_location_class(p: ActionGroup, rng: np.random.Generator) -> int:
    return int(rng.choice(2, p=repair_simplex(p.lc)))
