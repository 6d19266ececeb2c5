"""Synthetic byte-driven target programs.

A target is a small control-flow graph interpreted over an input byte
string. Blocks are plain (single successor), conditional (two successors
gated by a byte predicate), bounded loops (a self-edge taken ``byte & 7``
times), or exits. Every edge carries a branch id; executing an input
yields an AFL-style hit-count map over branch ids, a bucketed trace map,
and a stable 64-bit path id.

Programs are generated from a seeded config as a chain of "diamonds"
(50/50 decisions, one arm looping) followed by a chain of rare "gates"
(narrow range predicates, or two-byte equality checks) that guard the
target block. Gates consult distinct input bytes, so the probability
that a uniform random input reaches the target is an exact product of
per-gate pass rates; tests lean on that.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .mutators import Mutator

# AFL's 8-class hit-count bucketing.
_BUCKET_BOUNDS = ((1, 1), (2, 2), (3, 3), (4, 7), (8, 15), (16, 31), (32, 127))
_BUCKET_CLASSES = (1, 2, 3, 4, 8, 16, 32)


def bucket_hits(count: int) -> int:
    """Map a raw edge hit count to its coverage class.

    Classes are 1, 2, 3, 4 (4-7 hits), 8 (8-15), 16 (16-31), 32 (32-127)
    and 128 (128+); zero maps to zero. Idempotent on its own outputs.
    """
    if count < 0:
        raise ValueError("hit count must be non-negative")
    if count == 0:
        return 0
    for (lo, hi), cls in zip(_BUCKET_BOUNDS, _BUCKET_CLASSES):
        if lo <= count <= hi:
            return cls
    return 128


@dataclass(frozen=True)
class Condition:
    """Byte predicate gating a conditional block.

    kind "lt":    pass iff input[byte_index] < operand
    kind "range": pass iff operand <= input[byte_index] < operand + span
    kind "eq2":   pass iff little-endian u16 at byte_index == operand
    """

    kind: str
    byte_index: int
    operand: int
    span: int = 0

    def consumed_bytes(self) -> tuple[int, ...]:
        if self.kind == "eq2":
            return (self.byte_index, self.byte_index + 1)
        return (self.byte_index,)

    def pass_rate(self) -> float:
        """Probability a uniform random input passes this condition."""
        if self.kind == "lt":
            return self.operand / 256.0
        if self.kind == "range":
            return self.span / 256.0
        if self.kind == "eq2":
            return 1.0 / 65536.0
        raise ValueError(f"unknown condition kind {self.kind!r}")

    def evaluate(self, data: bytes) -> bool:
        b = data[self.byte_index] if self.byte_index < len(data) else 0
        if self.kind == "lt":
            return b < self.operand
        if self.kind == "range":
            return self.operand <= b < self.operand + self.span
        if self.kind == "eq2":
            b2 = data[self.byte_index + 1] if self.byte_index + 1 < len(data) else 0
            return (b | (b2 << 8)) == self.operand
        raise ValueError(f"unknown condition kind {self.kind!r}")


@dataclass(frozen=True)
class Block:
    """One basic block. Successor fields hold branch (edge) ids."""

    id: int
    kind: str  # "plain" | "branch" | "loop" | "exit"
    condition: Optional[Condition] = None
    true_branch: Optional[int] = None   # branch kind: taken when condition passes
    false_branch: Optional[int] = None
    out_branch: Optional[int] = None    # plain/loop: fallthrough edge
    self_branch: Optional[int] = None   # loop: the repeated back edge
    loop_byte: Optional[int] = None     # loop trip count = input[loop_byte] & 7


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs for the seeded program generator."""

    blocks: int = 16
    gates: int = 2
    hardness: float = 1.0
    seed: int = 0
    max_input_len: Optional[int] = None
    two_byte_gates: bool = False
    loop_arms: bool = True


class GenerationError(ValueError):
    pass


@dataclass
class ProgramSpec:
    """A generated target: blocks, edges, and the goal block."""

    blocks: list[Block]
    edges: list[tuple[int, int]]  # branch id -> (src block, dst block)
    entry_block: int
    exit_block: int
    target_block: int
    max_input_len: int
    generation: Optional[dict] = None

    def block(self, block_id: int) -> Block:
        return self.blocks[block_id]

    def to_json(self) -> str:
        payload = {
            "format": "predfuzz-program-v1",
            "entry_block": self.entry_block,
            "exit_block": self.exit_block,
            "target_block": self.target_block,
            "max_input_len": self.max_input_len,
            "generation": self.generation,
            "edges": [list(e) for e in self.edges],
            "blocks": [asdict(b) for b in self.blocks],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ProgramSpec":
        payload = json.loads(text)
        if payload.get("format") != "predfuzz-program-v1":
            raise ValueError("not a recognized program file")
        blocks = []
        for raw in payload["blocks"]:
            cond = raw.pop("condition")
            blocks.append(Block(condition=Condition(**cond) if cond else None, **raw))
        return cls(
            blocks=blocks,
            edges=[tuple(e) for e in payload["edges"]],
            entry_block=payload["entry_block"],
            exit_block=payload["exit_block"],
            target_block=payload["target_block"],
            max_input_len=payload["max_input_len"],
            generation=payload.get("generation"),
        )


@dataclass(frozen=True)
class ExecutionResult:
    trace_raw: dict[int, int]     # branch id -> raw hit count
    trace_bits: dict[int, int]    # branch id -> bucketed class
    path_id: int
    executed_blocks: tuple[int, ...]
    exec_time: int


@dataclass(frozen=True)
class StaticInfo:
    """Distances to the target block and sibling branches per condition."""

    bb_distance: dict[int, int]          # block id -> edge distance to target
    siblings: dict[int, frozenset[int]]  # branch id -> sibling branch ids
    max_distance: int


class _Builder:
    def __init__(self) -> None:
        self.blocks: list[dict] = []
        self.edges: list[tuple[int, int]] = []

    def add_block(self, kind: str, **kw) -> int:
        self.blocks.append({"id": len(self.blocks), "kind": kind, **kw})
        return len(self.blocks) - 1

    def add_edge(self, src: int, dst: int) -> int:
        self.edges.append((src, dst))
        return len(self.edges) - 1


def generate_program(config: GenerationConfig) -> ProgramSpec:
    """Build a seeded synthetic target.

    Structure: entry -> D diamonds -> `gates` gate blocks -> target -> exit,
    where D = max(0, (blocks - 3 - 2*gates) // 3). Each diamond is a
    decision block (byte < 128) with a loop arm and a plain arm; each gate
    is a conditional whose false edge leads to a miss block and then exit.
    Gate width is max(1, round(256 * 2**-(1 + 7*hardness))), so hardness 0
    gives a 1/2 gate and hardness 1 gives a 1/256 gate. Gate range lower
    bounds start at 1: the all-zero input never passes a gate.
    """
    if config.blocks < 4:
        raise GenerationError("need at least 4 blocks (entry, target, exit, slack)")
    if not 0.0 <= config.hardness <= 1.0:
        raise GenerationError("hardness must lie in [0, 1]")
    if config.gates < 0:
        raise GenerationError("gates must be non-negative")

    gate_width_bytes = 2 if config.two_byte_gates else 1
    n_diamonds = max(0, (config.blocks - 3 - 2 * config.gates) // 3)
    needed = config.gates * gate_width_bytes + n_diamonds
    max_len = config.max_input_len if config.max_input_len is not None else max(4, needed)
    if config.gates * gate_width_bytes > max_len:
        raise GenerationError(
            f"{config.gates} gates need {config.gates * gate_width_bytes} input bytes "
            f"but max_input_len is {max_len}")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    b = _Builder()
    entry = b.add_block("plain")

    # Byte assignment: gates first (distinct bytes), then diamonds cycling
    # over whatever remains.
    gate_bytes = [i * gate_width_bytes for i in range(config.gates)]
    first_free = config.gates * gate_width_bytes
    if first_free >= max_len:
        diamond_bytes = [i % max_len for i in range(n_diamonds)]
    else:
        diamond_bytes = [first_free + (i % (max_len - first_free))
                         for i in range(n_diamonds)]

    # Lay out diamonds, then gates, then target/exit. Wiring happens after
    # all ids exist, so "next head" pointers can look forward.
    diamonds = []
    for i in range(n_diamonds):
        dec = b.add_block("branch", condition=Condition("lt", diamond_bytes[i], 128))
        if config.loop_arms:
            arm_a = b.add_block("loop", loop_byte=diamond_bytes[i])
        else:
            arm_a = b.add_block("plain")
        arm_b = b.add_block("plain")
        diamonds.append((dec, arm_a, arm_b))

    width = max(1, int(round(256.0 * 2.0 ** -(1.0 + 7.0 * config.hardness))))
    gates = []
    for i in range(config.gates):
        if config.two_byte_gates:
            cond = Condition("eq2", gate_bytes[i], int(rng.integers(1, 65536)))
        else:
            lo = int(rng.integers(1, 257 - width))
            cond = Condition("range", gate_bytes[i], lo, span=width)
        gate = b.add_block("branch", condition=cond)
        miss = b.add_block("plain")
        gates.append((gate, miss))

    target = b.add_block("plain")
    exit_blk = b.add_block("exit")

    heads = [dec for dec, _, _ in diamonds] + [g for g, _ in gates] + [target]

    wiring: dict[int, dict] = {}
    wiring[entry] = {"out_branch": b.add_edge(entry, heads[0])}
    for i, (dec, arm_a, arm_b) in enumerate(diamonds):
        nxt = heads[i + 1]
        wiring[dec] = {
            "true_branch": b.add_edge(dec, arm_a),
            "false_branch": b.add_edge(dec, arm_b),
        }
        if config.loop_arms:
            wiring[arm_a] = {
                "self_branch": b.add_edge(arm_a, arm_a),
                "out_branch": b.add_edge(arm_a, nxt),
            }
        else:
            wiring[arm_a] = {"out_branch": b.add_edge(arm_a, nxt)}
        wiring[arm_b] = {"out_branch": b.add_edge(arm_b, nxt)}
    for i, (gate, miss) in enumerate(gates):
        nxt = heads[n_diamonds + i + 1]
        wiring[gate] = {
            "true_branch": b.add_edge(gate, nxt),
            "false_branch": b.add_edge(gate, miss),
        }
        wiring[miss] = {"out_branch": b.add_edge(miss, exit_blk)}
    wiring[target] = {"out_branch": b.add_edge(target, exit_blk)}

    blocks = [Block(**{**raw, **wiring.get(raw["id"], {})}) for raw in b.blocks]
    return ProgramSpec(
        blocks=blocks,
        edges=b.edges,
        entry_block=entry,
        exit_block=exit_blk,
        target_block=target,
        max_input_len=max_len,
        generation={
            "blocks": config.blocks,
            "gates": config.gates,
            "hardness": config.hardness,
            "seed": config.seed,
            "two_byte_gates": config.two_byte_gates,
            "loop_arms": config.loop_arms,
        },
    )


def path_id_of(trace_bits: dict[int, int]) -> int:
    """Stable 64-bit id of a bucketed trace map (order-independent)."""
    h = hashlib.blake2b(digest_size=8)
    for branch in sorted(trace_bits):
        h.update(struct.pack("<IB", branch, trace_bits[branch]))
    return int.from_bytes(h.digest(), "little")


def execute(program: ProgramSpec, data: bytes) -> ExecutionResult:
    """Interpret the program over ``data``.

    Missing bytes read as zero. Returns raw and bucketed trace maps, the
    path id of the bucketed map, the block sequence, and exec_time: the
    interpreted step count (edge traversals, loop trips included), the
    deterministic stand-in for runtime cost.
    """
    if len(data) > program.max_input_len:
        data = data[:program.max_input_len]
    trace: dict[int, int] = {}
    executed = [program.entry_block]
    steps = 0
    block = program.blocks[program.entry_block]
    guard = 0
    limit = len(program.blocks) * 16 + 64
    while block.kind != "exit":
        guard += 1
        if guard > limit:
            raise RuntimeError("interpreter exceeded step guard; malformed program")
        if block.kind == "branch":
            taken = block.true_branch if block.condition.evaluate(data) else block.false_branch
        elif block.kind == "loop":
            idx = block.loop_byte
            byte = data[idx] if idx < len(data) else 0
            trips = byte & 7
            if trips:
                trace[block.self_branch] = trace.get(block.self_branch, 0) + trips
                steps += trips
            taken = block.out_branch
        else:  # plain
            taken = block.out_branch
        trace[taken] = trace.get(taken, 0) + 1
        steps += 1
        block = program.blocks[program.edges[taken][1]]
        executed.append(block.id)
    bits = {br: bucket_hits(c) for br, c in trace.items()}
    return ExecutionResult(
        trace_raw=trace,
        trace_bits=bits,
        path_id=path_id_of(bits),
        executed_blocks=tuple(executed),
        exec_time=steps,
    )


def compute_static_info(program: ProgramSpec) -> StaticInfo:
    """Reverse-BFS block distances to the target plus branch siblings.

    Blocks with no path to the target are absent from ``bb_distance``.
    Every branch id gets a siblings entry; only the two edges of a
    conditional are siblings of each other.
    """
    preds: dict[int, list[int]] = {blk.id: [] for blk in program.blocks}
    for src, dst in program.edges:
        preds[dst].append(src)
    dist = {program.target_block: 0}
    frontier = [program.target_block]
    while frontier:
        nxt = []
        for blk in frontier:
            for p in preds[blk]:
                if p not in dist:
                    dist[p] = dist[blk] + 1
                    nxt.append(p)
        frontier = nxt

    siblings: dict[int, frozenset[int]] = {i: frozenset() for i in range(len(program.edges))}
    for blk in program.blocks:
        if blk.kind == "branch":
            siblings[blk.true_branch] = frozenset({blk.false_branch})
            siblings[blk.false_branch] = frozenset({blk.true_branch})
    max_d = max(dist.values()) if dist else 0
    return StaticInfo(bb_distance=dist, siblings=siblings, max_distance=max_d)


def true_transition_distribution(
    program: ProgramSpec,
    seed: bytes,
    action: int,
    mutator_set: Sequence[Mutator],
    max_outcomes: int = 8192,
    samples: int = 4096,
    rng: Optional[np.random.Generator] = None,
) -> dict[int, float]:
    """Exact (or sampled) next-path distribution for one mutation step.

    A step draws a mutator uniformly from ``mutator_set`` and one of its
    outcomes uniformly, applied at byte index ``action``. When the joint outcome
    space is small enough the distribution is enumerated exactly;
    otherwise it is estimated from ``samples`` draws (rng required to be
    meaningfully reproducible; a fresh default generator is used if
    omitted). Probabilities sum to 1 within float error.
    """
    dist, _ = transition_outcome_details(
        program, seed, action, mutator_set, max_outcomes, samples, rng)
    return dist


def transition_outcome_details(
    program: ProgramSpec,
    seed: bytes,
    action: int,
    mutator_set: Sequence[Mutator],
    max_outcomes: int = 8192,
    samples: int = 4096,
    rng: Optional[np.random.Generator] = None,
) -> tuple[dict[int, float], dict[int, ExecutionResult]]:
    """Like true_transition_distribution, but keeps one representative
    execution per outcome path (for embedding or valuing the outcomes)."""
    if not 0 <= action < len(seed):
        raise ValueError("action byte index outside the seed")
    counts = [m.outcome_count(seed, action) for m in mutator_set]
    total = sum(counts)
    dist: dict[int, float] = {}
    reps: dict[int, ExecutionResult] = {}
    if total <= max_outcomes:
        m_weight = 1.0 / len(mutator_set)
        for mut, n in zip(mutator_set, counts):
            w = m_weight / n
            for k in range(n):
                res = execute(program, mut.apply_kth(seed, action, k))
                dist[res.path_id] = dist.get(res.path_id, 0.0) + w
                reps.setdefault(res.path_id, res)
    else:
        if rng is None:
            rng = np.random.default_rng()
        w = 1.0 / samples
        for _ in range(samples):
            mut = mutator_set[int(rng.integers(len(mutator_set)))]
            res = execute(program, mut.apply(seed, action, rng))
            dist[res.path_id] = dist.get(res.path_id, 0.0) + w
            reps.setdefault(res.path_id, res)
    return dist, reps
