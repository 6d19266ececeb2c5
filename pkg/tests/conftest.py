"""Shared handcrafted programs and small helpers for the test suite."""

import numpy as np
import pytest

from predfuzz.program import Block, Condition, ProgramSpec


def gate_program(lo: int = 0x41, span: int = 1, max_input_len: int = 4) -> ProgramSpec:
    """entry -> branch(byte0 in [lo, lo+span)) -> target | miss -> exit."""
    edges = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)]
    blocks = [
        Block(0, "plain", out_branch=0),
        Block(1, "branch", condition=Condition("range", 0, lo, span=span),
              true_branch=1, false_branch=2),
        Block(2, "plain", out_branch=3),
        Block(3, "plain", out_branch=4),
        Block(4, "exit"),
    ]
    return ProgramSpec(blocks=blocks, edges=edges, entry_block=0, exit_block=4,
                       target_block=2, max_input_len=max_input_len)


def chain_program(n_mid: int = 1, max_input_len: int = 4) -> ProgramSpec:
    """entry -> mid*n -> target -> exit, no conditions anywhere."""
    blocks = []
    edges = []
    total = n_mid + 3
    for i in range(total - 1):
        edges.append((i, i + 1))
        blocks.append(Block(i, "plain", out_branch=i))
    blocks.append(Block(total - 1, "exit"))
    return ProgramSpec(blocks=blocks, edges=edges, entry_block=0,
                       exit_block=total - 1, target_block=total - 2,
                       max_input_len=max_input_len)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
