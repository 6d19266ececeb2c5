"""The fuzzing loop: queue, havoc, four-task cycles, campaign orchestration.

A campaign interleaves four tasks per cycle. Task 1 fuzzes: seeds are
gated by their selection scores, mutated according to their action
groups, and every execution is recorded as a path transition with its
reward; particle-swarm bookkeeping runs inline after every mutation.
Task 2 fits the transition ensemble on the historical buffer and fills
the predicted buffer with k-step rollouts. Task 3 trains the actor and
critics on mixed real and predicted batches, then freezes the value
snapshot and per-seed byte-location classes used by the next cycle.
Task 4 dumps swarm state for post-hoc analysis.

Everything observable is a pure function of the campaign config and its
rng seed: rng streams are spawned per concern, queue iteration order is
insertion order, and float reductions run in pinned order, so identical
configs give bit-identical metric series.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from . import reporting
from .dynamics import (EnsembleModel, empirical_outcome_distribution,
                       prediction_accuracy)
from .encoding import (EMBED_DIM, EmbeddingSpace, encode_action,
                       disambiguate_testcase)
from .mutators import Mutator, build_mutators
from .nets import save_checkpoint
from .policy import (ActorNet, Critic, RLBatch, actor_update, critic_update,
                     k_step_rollout, make_q_critic, make_v_critic)
from .program import (GenerationConfig, ProgramSpec, StaticInfo,
                      compute_static_info, execute, generate_program,
                      transition_outcome_details)
from .reporting import CampaignReport, CycleReport, emit_report
from .swarm import (ActionGroup, SwarmState, classify_locations,
                    global_efficiency, init_action_group, ldiw_inertia,
                    new_swarm, sample_location_class, sample_mutator_index,
                    sample_rounds, update_bests, update_particle)
from .valuation import (BranchStats, PathRecord, ReplayBuffer, Transition,
                        closeness, entropy_weights, estimated_difficulty,
                        record_transition, seed_value)

MUTATIONS_MIN = 8
MUTATIONS_MAX = 1024


@dataclass
class CampaignConfig:
    """Everything a campaign needs; validate() before use."""

    program_path: Optional[str] = None
    generate: Optional[GenerationConfig] = None
    target_block: Optional[int] = None
    budget_execs: int = 200_000
    cycle_execs: int = 20_000
    cycle_wall_s: Optional[float] = None  # off by default: wall caps break determinism
    gamma: float = 0.8
    k: int = 4
    ensemble_size: int = 6
    rng_seed: int = 0
    hist_capacity: int = 100_000
    pred_capacity: int = 400_000
    train_epochs: int = 500
    train_window: int = 0    # train on the most recent N transitions; 0 = all
    dyn_batch: int = 256
    dyn_lr: float = 1e-3
    dyn_hidden: int = 64
    policy_lr: float = 0.005
    policy_hidden: int = 64
    policy_steps: int = 200
    policy_batch: int = 64
    alpha: float = 0.2
    real_fraction: float = 0.25   # historical share of each policy batch
    rollouts_per_cycle: int = 64
    min_train_size: int = 512
    terminal_streak: int = 256
    accuracy_pairs: int = 4
    accuracy_samples: int = 256
    standard_value_form: bool = False
    shared_r: bool = False
    stop_on_target: bool = True
    ablate_dynamics: bool = False
    ablate_policy: bool = False
    ablate_optimizer: bool = False
    initial_seed_len: Optional[int] = None
    out_dir: Optional[str] = None

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.budget_execs < 0:
            raise ValueError("budget-execs must be non-negative")
        if self.cycle_execs < 1:
            raise ValueError("cycle-execs must be positive")
        if self.ensemble_size < 1:
            raise ValueError("ensemble size must be at least 1")
        if not 0.0 <= self.real_fraction <= 1.0:
            raise ValueError("real_fraction must lie in [0, 1]")
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")

    def describe(self) -> dict:
        d = asdict(self)
        return d


def mutation_count(se: float) -> int:
    """Mutations granted by an energy value: round, clamp to [8, 1024]."""
    if se < 1.0:
        raise ValueError("SE must be at least 1")
    return min(MUTATIONS_MAX, max(MUTATIONS_MIN, int(round(se))))


class SeedQueue:
    """Discovered paths in insertion order plus the selection cursor."""

    def __init__(self) -> None:
        self.records: dict[int, PathRecord] = {}
        self.groups: dict[int, ActionGroup] = {}
        self.order: list[int] = []
        self.cursor = 0
        self.stats = BranchStats()

    def __len__(self) -> int:
        return len(self.records)

    def add(self, rec: PathRecord, group: ActionGroup) -> None:
        if rec.path_id in self.records:
            raise ValueError("path already queued")
        self.records[rec.path_id] = rec
        self.groups[rec.path_id] = group
        self.order.append(rec.path_id)

    def speed_scores(self) -> list[float]:
        return [1.0 / (max(1, r.exec_steps) * max(1, len(r.seed)))
                for r in self.records.values()]

    def mean_exec_steps(self) -> float:
        if not self.records:
            return 1.0
        return sum(r.exec_steps for r in self.records.values()) / len(self.records)

    def min_exec_steps(self) -> int:
        return min(r.exec_steps for r in self.records.values())


def select_seed(queue: SeedQueue, rng: np.random.Generator) -> PathRecord:
    """Round-robin Bernoulli gate over the queue, skipping terminal seeds.

    The cursor persists across calls, so low-score seeds still get their
    turn after high-score ones fire. If every seed is terminal, falls
    back to the highest-value seed rather than spinning.
    """
    if not queue.records:
        raise ValueError("queue is empty")
    if all(r.terminal for r in queue.records.values()):
        return max(queue.records.values(), key=lambda r: (r.value, -r.discovered_at))
    while True:
        if queue.cursor >= len(queue.order):
            queue.cursor = 0
        path_id = queue.order[queue.cursor]
        queue.cursor += 1
        rec = queue.records[path_id]
        if rec.terminal:
            continue
        if rng.uniform() < queue.groups[path_id].ss:
            return rec


def havoc_mutate(seed: bytes, group: ActionGroup,
                 locations: Optional[tuple[np.ndarray, np.ndarray]],
                 rng: np.random.Generator, mutators: Sequence[Mutator]
                 ) -> tuple[bytes, list[tuple[int, int]]]:
    """One stacked havoc mutation driven by the seed's action group.

    Samples a round count from HR, then per round a location class from
    LC, a concrete byte uniformly within that class, and a mutator from
    MT. Returns the mutated input and the (byte, mutator) picks; the
    first pick defines the recorded action. A location class that is
    empty (or out of range after length changes) falls back to a uniform
    byte draw.
    """
    if not seed:
        raise ValueError("seed must be non-empty")
    rounds = sample_rounds(group, rng)
    data = seed
    picks: list[tuple[int, int]] = []
    for _ in range(rounds):
        length = len(data)
        pool = None
        if locations is not None:
            cls = sample_location_class(group, rng)
            chosen = locations[cls]
            if chosen is not None and len(chosen):
                in_range = chosen[chosen < length]
                if len(in_range):
                    pool = in_range
        if pool is None:
            byte = int(rng.integers(length))
        else:
            byte = int(pool[rng.integers(len(pool))])
        m_idx = sample_mutator_index(group, rng)
        picks.append((byte, m_idx))
        data = mutators[m_idx].apply(data, byte, rng)
    return data, picks


def update_favored(queue: SeedQueue) -> None:
    """Greedy cover: per explored branch keep the fastest-smallest seed.

    The union of kept seeds is marked favored; everything else unmarked.
    Every explored branch is covered because each one was first hit by a
    seed that is still queued (the queue never evicts).
    """
    favored: set[int] = set()
    for branch in sorted(queue.stats.explored):
        best: Optional[PathRecord] = None
        best_key = None
        for rec in queue.records.values():
            if branch not in rec.branches:
                continue
            key = (rec.exec_steps * max(1, len(rec.seed)), rec.discovered_at)
            if best is None or key < best_key:
                best, best_key = rec, key
        if best is not None:
            favored.add(best.path_id)
    for rec in queue.records.values():
        rec.favored = 1.0 if rec.path_id in favored else 0.0


class Campaign:
    """One seeded fuzzing campaign over one target program."""

    def __init__(self, config: CampaignConfig,
                 program: Optional[ProgramSpec] = None):
        config.validate()
        self.config = config
        if program is not None:
            self.program = program
        elif config.program_path:
            with open(config.program_path) as fh:
                self.program = ProgramSpec.from_json(fh.read())
        else:
            self.program = generate_program(config.generate or GenerationConfig())
        if config.target_block is not None:
            if not 0 <= config.target_block < len(self.program.blocks):
                raise ValueError(f"target block {config.target_block} out of range")
            self.program.target_block = config.target_block
        self.info: StaticInfo = compute_static_info(self.program)
        if self.program.target_block != self.program.entry_block \
                and self.program.entry_block not in self.info.bb_distance:
            raise ValueError("target block is unreachable from the entry block")

        seq = np.random.SeedSequence(config.rng_seed)
        s_fuzz, s_dyn, s_policy, s_eval, s_init = seq.spawn(5)
        self.rng_fuzz = np.random.Generator(np.random.PCG64(s_fuzz))
        self.rng_dyn = np.random.Generator(np.random.PCG64(s_dyn))
        self.rng_policy = np.random.Generator(np.random.PCG64(s_policy))
        self.rng_eval = np.random.Generator(np.random.PCG64(s_eval))
        init_rng = np.random.Generator(np.random.PCG64(s_init))

        self.mutators = build_mutators(self.program.max_input_len)
        self.emb = EmbeddingSpace()
        self.queue = SeedQueue()
        self.swarm: SwarmState = new_swarm()
        self.hist = ReplayBuffer(config.hist_capacity, kind="historical")
        self.pred = ReplayBuffer(config.pred_capacity, kind="predicted")
        self.ensemble = EnsembleModel(config.ensemble_size, config.dyn_hidden,
                                      rng=init_rng)
        self.actor = ActorNet(init_rng, config.policy_hidden, config.policy_lr)
        self.q_critic = make_q_critic(init_rng, config.policy_hidden, config.policy_lr)
        self.v_critic = make_v_critic(init_rng, config.policy_hidden, config.policy_lr)
        self.v_snapshot: Optional[Critic] = None
        self.policy_trained = False

        self.weights = np.full(4, 0.25)
        self.execs = 0
        self.mutation_counter = 0
        self.cycle_index = 0
        self.reached = False
        self.reached_execs: Optional[int] = None
        self.reached_wall: Optional[float] = None
        self._t0 = time.perf_counter()
        self._emb_cache: dict[int, np.ndarray] = {}
        self._min_steps = 1
        self._log_lines: list[str] = []

        if config.out_dir:
            os.makedirs(config.out_dir, exist_ok=True)
            os.makedirs(os.path.join(config.out_dir, "corpus"), exist_ok=True)
            with open(os.path.join(config.out_dir, "program.json"), "w") as fh:
                fh.write(self.program.to_json())

    # -- per-execution bookkeeping ---------------------------------------

    def _embed(self, rec: PathRecord) -> np.ndarray:
        got = self._emb_cache.get(rec.path_id)
        if got is None:
            got = self.emb.embed(rec.trace_bits)
            self._emb_cache[rec.path_id] = got
        return got

    def _ingest(self, data: bytes) -> tuple[PathRecord, bool]:
        """Execute one input, update stats, queue new paths. Returns the
        path's record and whether the path is new."""
        res = execute(self.program, data)
        self.execs += 1
        self.queue.stats.update(res.trace_raw)
        self.emb.observe(res.trace_bits)
        if not self.reached and self.program.target_block in res.executed_blocks:
            self.reached = True
            self.reached_execs = self.execs
            self.reached_wall = time.perf_counter() - self._t0
        rec = self.queue.records.get(res.path_id)
        if rec is not None:
            return rec, False
        rec = PathRecord(
            path_id=res.path_id,
            seed=data,
            branches=frozenset(res.trace_raw),
            trace_bits=dict(res.trace_bits),
            exec_steps=res.exec_time,
            discovered_at=self.execs,
        )
        rec.closeness = closeness(set(res.executed_blocks), self.info)
        rec.difficulty_ease = estimated_difficulty(rec, self.queue.stats, self.info)
        self._min_steps = min(self._min_steps, rec.exec_steps) if self.queue.records \
            else rec.exec_steps
        rec.speed = self._min_steps / rec.exec_steps
        rec.value = seed_value(rec.features(), self.weights)
        group = init_action_group(rec.exec_steps, len(rec.seed),
                                  self.queue.speed_scores(),
                                  self.queue.mean_exec_steps() if self.queue.records
                                  else rec.exec_steps)
        self.queue.add(rec, group)
        if self.config.out_dir:
            path = os.path.join(self.config.out_dir, "corpus",
                                f"{rec.path_id:016x}")
            with open(path, "wb") as fh:
                fh.write(rec.seed)
        return rec, True

    def _value_estimate(self, emb: np.ndarray) -> float:
        if self.v_snapshot is None:
            return 0.0
        return float(self.v_snapshot.value(np.atleast_2d(emb))[0])

    # -- cycle phases ------------------------------------------------------

    def _refresh_cycle_state(self) -> None:
        records = list(self.queue.records.values())
        if not records:
            self.emb.freeze()
            self._emb_cache = {}
            self.swarm.reset_cycle_stats()
            return
        update_favored(self.queue)
        self._min_steps = self.queue.min_exec_steps()
        for rec in records:
            rec.difficulty_ease = estimated_difficulty(rec, self.queue.stats, self.info)
            rec.speed = self._min_steps / rec.exec_steps
        if len(records) >= 2:
            matrix = np.stack([r.features() for r in records])
            try:
                self.weights = entropy_weights(matrix)
            except ValueError:
                pass  # all columns constant: keep the previous weights
        for rec in records:
            rec.value = seed_value(rec.features(), self.weights)
        self.emb.freeze()
        self._emb_cache = {}
        for rec in records:
            group = self.queue.groups[rec.path_id]
            group.reset_cycle_stats()
            group.locations = self._locations_for(rec)
        self.swarm.reset_cycle_stats()

    def _locations_for(self, rec: PathRecord
                       ) -> Optional[tuple[np.ndarray, np.ndarray]]:
        if self.config.ablate_policy or not self.policy_trained:
            return None
        emb = self._embed(rec)
        density = self.actor.density_over_bytes(emb, len(rec.seed))
        if not self._density_confirmed(emb, density, len(rec.seed)):
            return None
        optimal, common = classify_locations(density)
        return optimal, common

    def _density_confirmed(self, emb: np.ndarray, density: np.ndarray,
                           length: int) -> bool:
        """Trust the actor's byte preference only if the action critic agrees.

        The clamped policy can pin its mean outside the action interval,
        where the policy objective has zero gradient and the preference
        can no longer be unlearned. The reward head of the transition
        ensemble keeps updating from real transitions there, so a stale
        preference is vetoed by comparing the predicted reward under the
        policy's byte distribution against a uniform draw. Queries use
        the same per-byte action encoding the transitions record, so
        they hit the trained points. Without a trained ensemble the
        action critic fills the same role.
        """
        actions = np.arange(length) / length
        x = np.concatenate([np.tile(emb, (length, 1)), actions[:, None]],
                           axis=1)
        if self.ensemble.trained:
            per_member = np.stack([m.predict(x).mean[:, EMBED_DIM]
                                   for m in self.ensemble.members])
            score = np.clip(per_member, -1.0, 1.0).mean(axis=0)
        else:
            score = self.q_critic.value(x)
        # 0.01 is the smallest reward treated as meaningful; noise-level
        # advantages fall back to uniform byte choice.
        return bool(float(density @ score) > float(score.mean()) + 0.01)

    def _task_fuzz(self, cycle_budget: int, deadline: Optional[float]
                   ) -> tuple[int, int, list[float]]:
        """Task 1: the mutation loop. Returns (transitions, new_paths, rewards)."""
        cfg = self.config
        start = self.execs
        transitions = 0
        new_paths = 0
        rewards: list[float] = []

        if self.cycle_index == 1:
            length = cfg.initial_seed_len or self.program.max_input_len
            if self.execs < cfg.budget_execs:
                _, new = self._ingest(bytes(length))
                if new:
                    new_paths += 1

        def exhausted() -> bool:
            if self.execs >= cfg.budget_execs:
                return True
            if self.execs - start >= cycle_budget:
                return True
            if self.reached and cfg.stop_on_target:
                return True
            if deadline is not None and time.perf_counter() > deadline:
                return True
            return False

        while not exhausted() and self.queue.records:
            rec = select_seed(self.queue, self.rng_fuzz)
            group = self.queue.groups[rec.path_id]
            budget = mutation_count(group.se)
            group.budget = budget
            src_emb = self._embed(rec)
            src_value = rec.value
            for _ in range(budget):
                if exhausted():
                    break
                data, picks = havoc_mutate(rec.seed, group, group.locations,
                                           self.rng_fuzz, self.mutators)
                nrec, new = self._ingest(data)
                if new:
                    new_paths += 1
                reward = 0.0 if nrec.path_id == rec.path_id \
                    else nrec.value - src_value
                action = encode_action(picks[0][0], len(rec.seed)) \
                    if picks[0][0] < len(rec.seed) \
                    else encode_action(len(rec.seed) - 1, len(rec.seed))
                testcase = disambiguate_testcase(self.mutation_counter, rec.path_id)
                self.mutation_counter += 1
                t = Transition(
                    p_t=rec.path_id, a_t=action, p_next=nrec.path_id,
                    reward=reward, testcase_id=testcase,
                    emb_t=src_emb, emb_next=self._embed(nrec),
                    terminal_next=nrec.terminal, byte_index=picks[0][0])
                record_transition(self.hist, t, self.queue.records,
                                  cfg.terminal_streak)
                if cfg.out_dir:
                    self._log_lines.append(t.log_line())
                transitions += 1
                rewards.append(reward)

                v_next = self._value_estimate(t.emb_next)
                group.record_mutation(reward, v_next)
                self.swarm.record_mutation(reward, v_next)
                eff_local = group.cycle_efficiency(cfg.gamma)
                eff_global = global_efficiency(self.swarm, cfg.gamma)
                update_bests(self.swarm, group, eff_local, eff_global)
                if not cfg.ablate_optimizer:
                    omega = ldiw_inertia(min(group.g, group.budget), group.budget)
                    update_particle(group, self.swarm.gbest_x, omega,
                                    self.rng_fuzz, cfg.shared_r)
                group.g += 1
        return transitions, new_paths, rewards

    def _task_train_dynamics(self) -> tuple[float, list[str]]:
        """Task 2: fit the ensemble; roll out predictions."""
        cfg = self.config
        warnings: list[str] = []
        if cfg.ablate_dynamics or len(self.hist) < cfg.min_train_size:
            return float("nan"), warnings
        pool = (self.hist.recent(cfg.train_window) if cfg.train_window > 0
                else list(self.hist))
        inputs = np.stack([np.concatenate([t.emb_t, [t.a_t]]) for t in pool])
        targets = np.stack([np.concatenate([t.emb_next, [t.reward]])
                            for t in pool])
        curves = self.ensemble.train(inputs, targets, self.rng_dyn,
                                     epochs=cfg.train_epochs,
                                     batch_size=cfg.dyn_batch, lr=cfg.dyn_lr)
        finals = [c[-1] for c in curves if c]
        if len(finals) < len(curves):
            warnings.append("dynamics member diverged; restored last finite weights")
        loss = float(np.mean(finals)) if finals else float("nan")

        if not cfg.ablate_policy:
            recent = self.hist.recent(4 * cfg.rollouts_per_cycle)
            for _ in range(cfg.rollouts_per_cycle):
                t = recent[int(self.rng_policy.integers(len(recent)))]
                _, self.mutation_counter = k_step_rollout(
                    self.ensemble, self.actor, t.emb_next, t.p_next, cfg.k,
                    self.rng_policy, self.mutation_counter, buffer=self.pred)
        return loss, warnings

    def _mixed_batch(self, size: int) -> RLBatch:
        n_real = size if not len(self.pred) else max(1, int(round(size * self.config.real_fraction)))
        n_pred = size - n_real
        picks = self.hist.sample(n_real, self.rng_policy)
        if n_pred > 0:
            picks = picks + self.pred.sample(n_pred, self.rng_policy)
        emb = np.stack([t.emb_t for t in picks])
        emb_next = np.stack([t.emb_next for t in picks])
        action = np.array([t.a_t for t in picks])
        reward = np.array([t.reward for t in picks])
        terminal = np.zeros(len(picks))
        for i, t in enumerate(picks):
            rec = self.queue.records.get(t.p_next)
            terminal[i] = 1.0 if (rec.terminal if rec is not None
                                  else t.terminal_next) else 0.0
        return RLBatch(emb=emb, action=action, reward=reward,
                       emb_next=emb_next, terminal=terminal)

    def _task_train_policy(self) -> tuple[float, float, float, list[str]]:
        """Task 3: actor-critic updates on mixed batches; freeze snapshots."""
        cfg = self.config
        warnings: list[str] = []
        nan = float("nan")
        if cfg.ablate_policy or len(self.hist) < cfg.policy_batch:
            return nan, nan, nan, warnings
        jvs, jqs, jps = [], [], []
        for _ in range(cfg.policy_steps):
            batch = self._mixed_batch(cfg.policy_batch)
            jv, jq = critic_update(self.q_critic, self.v_critic, self.actor,
                                   batch, cfg.gamma, self.rng_policy,
                                   cfg.standard_value_form)
            jp = actor_update(self.actor, self.q_critic, batch.emb, cfg.alpha,
                              self.rng_policy)
            jvs.append(jv)
            jqs.append(jq)
            jps.append(jp)
        if not all(np.isfinite(jvs)) or not all(np.isfinite(jqs)):
            warnings.append("policy training produced non-finite losses")
        self.policy_trained = True
        self.v_snapshot = make_v_critic(np.random.default_rng(0),
                                        cfg.policy_hidden, cfg.policy_lr)
        self.v_snapshot.mlp.copy_params_from(self.v_critic.mlp)
        return (float(np.mean(jvs)), float(np.mean(jqs)), float(np.mean(jps)),
                warnings)

    def _task_snapshot(self) -> None:
        """Task 4: dump swarm positions for offline analysis."""
        cfg = self.config
        if not cfg.out_dir:
            return
        snap_dir = os.path.join(cfg.out_dir, "swarm")
        os.makedirs(snap_dir, exist_ok=True)
        payload = {
            "cycle": self.cycle_index,
            "gbest_eff": self.swarm.gbest_eff,
            "gbest_x": list(self.swarm.gbest_x),
            "particles": {
                f"{pid:016x}": {
                    "x": list(g.x), "lbest_eff": g.lbest_eff, "g": g.g,
                } for pid, g in self.queue.groups.items()
            },
        }
        with open(os.path.join(snap_dir, f"cycle_{self.cycle_index:04d}.json"),
                  "w") as fh:
            json.dump(payload, fh, indent=1)
        if self._log_lines:
            with open(os.path.join(cfg.out_dir, "transitions.log"), "a") as fh:
                fh.write("\n".join(self._log_lines) + "\n")
            self._log_lines = []

    def _model_accuracy(self) -> tuple[float, float]:
        """Cycle-end AAPP/AAPR against brute-forced ground truth.

        Scores config.accuracy_pairs recent (source path, byte) pairs: the
        true next-path distribution and expected reward are enumerated
        from the simulator, the predicted ones sampled from the ensemble
        with nearest-candidate classification.
        """
        cfg = self.config
        if cfg.ablate_dynamics or not self.ensemble.trained or cfg.accuracy_pairs < 1:
            return float("nan"), float("nan")
        recent = self.hist.recent(200)
        pairs: list[tuple[int, int]] = []
        seen = set()
        order = self.rng_eval.permutation(len(recent))
        for i in order:
            t = recent[int(i)]
            rec = self.queue.records.get(t.p_t)
            if rec is None or t.byte_index < 0 or t.byte_index >= len(rec.seed):
                continue
            key = (t.p_t, t.byte_index)
            if key in seen:
                continue
            seen.add(key)
            pairs.append(key)
            if len(pairs) >= cfg.accuracy_pairs:
                break
        if not pairs:
            return float("nan"), float("nan")
        app, apr = [], []
        for path_id, byte in pairs:
            rec = self.queue.records[path_id]
            aapp, aapr = pair_accuracy(
                self, rec, byte, n_samples=cfg.accuracy_samples)
            app.append(aapp)
            apr.append(aapr)
        return float(np.mean(app)), float(np.mean(apr))

    def fuzz_cycle(self) -> CycleReport:
        cfg = self.config
        self.cycle_index += 1
        self._refresh_cycle_state()
        deadline = (time.perf_counter() + cfg.cycle_wall_s
                    if cfg.cycle_wall_s else None)
        transitions, new_paths, rewards = self._task_fuzz(cfg.cycle_execs, deadline)
        dyn_loss, warn2 = self._task_train_dynamics()
        jv, jq, jp, warn3 = self._task_train_policy()
        self._task_snapshot()
        aapp, aapr = self._model_accuracy()

        records = self.queue.records.values()
        rseed = sum(1 for r in records if r.closeness > 0.0)
        ar = float(np.mean(rewards)) if rewards else float("nan")
        try:
            geff = global_efficiency(self.swarm, cfg.gamma)
        except ValueError:
            geff = float("nan")
        return CycleReport(
            cycle=self.cycle_index,
            execs=self.execs,
            transitions=transitions,
            new_paths=new_paths,
            queue_size=len(self.queue),
            rseed=rseed,
            prseed=rseed / len(self.queue) if len(self.queue) else 0.0,
            ar=ar,
            global_eff=geff,
            dyn_loss=dyn_loss,
            policy_v_loss=jv,
            policy_q_loss=jq,
            policy_objective=jp,
            aapp=aapp,
            aapr=aapr,
            target_reached=self.reached,
            warnings=warn2 + warn3,
        )

    def run(self) -> CampaignReport:
        cfg = self.config
        cycles: list[CycleReport] = []
        while self.execs < cfg.budget_execs and \
                not (self.reached and cfg.stop_on_target):
            cycles.append(self.fuzz_cycle())
        report = CampaignReport(
            version=reporting.REPORT_VERSION,
            rng_seed=cfg.rng_seed,
            config=cfg.describe(),
            reached=self.reached,
            ttr_execs=self.reached_execs,
            ttr_wall=self.reached_wall,
            total_execs=self.execs,
            total_wall=time.perf_counter() - self._t0,
            queue_size=len(self.queue),
            favored_count=sum(1 for r in self.queue.records.values()
                              if r.favored > 0.0),
            cycles=cycles,
        )
        if cfg.out_dir:
            emit_report(report, cfg.out_dir)
            save_checkpoint(os.path.join(cfg.out_dir, "models.npz"), {
                "actor": self.actor.mlp,
                "q_critic": self.q_critic.mlp,
                "v_critic": self.v_critic.mlp,
                **{f"dyn{i}": m.mlp for i, m in enumerate(self.ensemble.members)},
            })
        return report


def pair_accuracy(campaign: Campaign, rec: PathRecord, byte: int,
                  n_samples: int = 256) -> tuple[float, float]:
    """Probability and reward accuracy for one (seed, byte) pair.

    Ground truth enumerates every mutator outcome at the byte; rewards of
    undiscovered outcome paths are valued from their own executions with
    the current weights. Predicted probabilities come from classifying
    ensemble samples to the nearest true-support embedding; the predicted
    reward is the sampled mean. Accuracies are probability-weighted over
    the true distribution, and computed on expected rewards.
    """
    dist, reps = transition_outcome_details(
        campaign.program, rec.seed, byte, campaign.mutators,
        rng=campaign.rng_eval)
    pids = sorted(dist)
    cand_embs = []
    true_rewards = []
    for pid in pids:
        if pid == rec.path_id:
            cand_embs.append(campaign._embed(rec))
            true_rewards.append(0.0)
            continue
        res = reps[pid]
        other = campaign.queue.records.get(pid)
        if other is not None:
            cand_embs.append(campaign._embed(other))
            true_rewards.append(other.value - rec.value)
        else:
            cand_embs.append(campaign.emb.embed(res.trace_bits))
            hypo = PathRecord(
                path_id=pid, seed=b"", branches=frozenset(res.trace_raw),
                trace_bits=dict(res.trace_bits), exec_steps=res.exec_time)
            hypo.closeness = closeness(set(res.executed_blocks), campaign.info)
            # Value the outcome as if it had just been queued: its own
            # execution counts toward the branch stats it is scored with.
            stats = BranchStats()
            stats.hits = dict(campaign.queue.stats.hits)
            stats.explored = set(campaign.queue.stats.explored)
            stats.update(res.trace_raw)
            hypo.difficulty_ease = estimated_difficulty(hypo, stats, campaign.info)
            hypo.speed = campaign._min_steps / res.exec_time
            value = seed_value(hypo.features(), campaign.weights)
            true_rewards.append(value - rec.value)
    probs_true = np.array([dist[p] for p in pids])
    action = encode_action(byte, len(rec.seed))
    probs_pred, mean_reward_pred = empirical_outcome_distribution(
        campaign.ensemble, campaign._embed(rec), action,
        np.stack(cand_embs), n_samples, campaign.rng_eval)
    aapp = float(sum(
        p * prediction_accuracy(p, q)
        for p, q in zip(probs_true, probs_pred)))
    reward_true = float(probs_true @ np.array(true_rewards))
    aapr = prediction_accuracy(reward_true, mean_reward_pred)
    return aapp, aapr


def run_campaign(config: CampaignConfig,
                 program: Optional[ProgramSpec] = None) -> CampaignReport:
    return Campaign(config, program).run()
