"""Fixed-width encodings of paths, actions, and testcase identities.

Bucketed trace maps are projected into a 20-dimensional feature vector
via a seeded hash: each branch id owns a fixed slot and weight, class
values accumulate into slots, and the result is log-compressed and
min-max normalized against statistics frozen at cycle boundaries. Two
traces differing in a single branch class land within a bounded distance
of each other, and the map is deterministic across processes.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Mapping

import numpy as np

EMBED_DIM = 20


def _branch_slot(branch: int, dim: int, hash_seed: int) -> tuple[int, float]:
    h = hashlib.blake2b(struct.pack("<IQ", branch, hash_seed), digest_size=8)
    v = int.from_bytes(h.digest(), "little")
    slot = v % dim
    # Weight in [0.5, 1.5) from the remaining hash bits.
    weight = 0.5 + ((v >> 16) % 4096) / 4096.0
    return slot, weight


class EmbeddingSpace:
    """Stateful embedding of trace maps into [0, 1]^dim.

    ``observe`` feeds running normalization statistics; ``freeze`` pins
    them so embeddings stay fixed for a whole fuzzing cycle while new
    traces keep updating the running side. ``embed`` always uses the
    frozen statistics.
    """

    def __init__(self, dim: int = EMBED_DIM, hash_seed: int = 0x5EED):
        self.dim = dim
        self.hash_seed = hash_seed
        self._slot_cache: dict[int, tuple[int, float]] = {}
        self._running_max = np.ones(dim)
        self._frozen_max = np.ones(dim)

    def _slot(self, branch: int) -> tuple[int, float]:
        got = self._slot_cache.get(branch)
        if got is None:
            got = _branch_slot(branch, self.dim, self.hash_seed)
            self._slot_cache[branch] = got
        return got

    def _features(self, trace_bits: Mapping[int, int]) -> np.ndarray:
        raw = np.zeros(self.dim)
        for branch, cls in trace_bits.items():
            slot, weight = self._slot(branch)
            raw[slot] += cls * weight
        return np.log1p(raw)

    def observe(self, trace_bits: Mapping[int, int]) -> None:
        np.maximum(self._running_max, self._features(trace_bits), out=self._running_max)

    def freeze(self) -> None:
        self._frozen_max = self._running_max.copy()

    def embed(self, trace_bits: Mapping[int, int]) -> np.ndarray:
        feats = self._features(trace_bits) / self._frozen_max
        return np.clip(feats, 0.0, 1.0)


def encode_action(byte_index: int, seed_length: int) -> float:
    """Normalize a mutation position into [0, 1): byte_index / seed_length."""
    if seed_length <= 0:
        raise ValueError("seed_length must be positive")
    if not 0 <= byte_index < seed_length:
        raise ValueError(f"byte_index {byte_index} outside [0, {seed_length})")
    return byte_index / seed_length


def decode_action(action: float, seed_length: int) -> int:
    """Inverse of encode_action up to flooring; clamps into range.

    The nudge keeps k/n * n from flooring to k-1 when the division was
    inexact (e.g. 29/100 stored as 0.28999...).
    """
    if seed_length <= 0:
        raise ValueError("seed_length must be positive")
    return min(seed_length - 1, max(0, int(action * seed_length + 1e-9)))


def disambiguate_testcase(mutation_id: int, path_id: int) -> int:
    """Unique-ish testcase id: mutation counter XOR (path id >> 2)."""
    if mutation_id < 0 or path_id < 0:
        raise ValueError("ids must be non-negative")
    return mutation_id ^ (path_id >> 2)
