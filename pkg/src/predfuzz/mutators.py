"""Havoc mutation catalogue.

Sixteen deterministic byte-level mutators in the AFL havoc style. Every
mutator exposes its full outcome space at a given position so that the
exact transition distribution of a single mutation can be enumerated:
``outcome_count`` gives the number of distinct outcomes and ``apply_kth``
produces the k-th one. Random application is just a uniform draw over k,
so sampling and enumeration can never disagree.

Mutators never raise on short inputs; operators that need more bytes than
the input has degrade to a narrower variant of themselves (documented per
operator) and length-changing operators respect the catalogue's max_len.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# AFL's interesting-value tables, kept in signed form and cast on use.
INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)
INTERESTING_16 = (-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767)
INTERESTING_32 = (-2147483648, -100663046, -32769, 32768, 65535, 65536,
                  100663045, 2147483647)

ARITH_MAX = 35
MAX_BLOCK = 8


@dataclass(frozen=True)
class Mutator:
    """One havoc operator with an enumerable outcome space."""

    name: str
    outcome_count: Callable[[bytes, int], int]
    apply_kth: Callable[[bytes, int, int], bytes]

    def apply(self, data: bytes, pos: int, rng: np.random.Generator) -> bytes:
        n = self.outcome_count(data, pos)
        return self.apply_kth(data, pos, int(rng.integers(n)))


def _set_byte(data: bytes, pos: int, value: int) -> bytes:
    out = bytearray(data)
    out[pos] = value & 0xFF
    return bytes(out)


def _word_pos(data: bytes, pos: int, width: int) -> int:
    # Anchor multi-byte ops so they stay inside the buffer.
    return max(0, min(pos, len(data) - width))


def _flip_bits(data: bytes, pos: int, mask: int) -> bytes:
    return _set_byte(data, pos, data[pos] ^ mask)


def _bitflip(width: int):
    count = 8 - width + 1

    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        mask = ((1 << width) - 1) << k
        return _flip_bits(data, pos, mask)

    return (lambda data, pos: count), apply_kth


def _arith8(sign: int):
    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        return _set_byte(data, pos, data[pos] + sign * (k + 1))

    return (lambda data, pos: ARITH_MAX), apply_kth


def _arith_wide(width: int):
    """Signed +-delta on a little-endian word; degrades to the widest
    word that fits when the input is shorter than ``width`` bytes."""

    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        w = width
        while w > 1 and len(data) < w:
            w //= 2
        p = _word_pos(data, pos, w)
        delta = (k % ARITH_MAX) + 1
        if k >= ARITH_MAX:
            delta = -delta
        val = int.from_bytes(data[p:p + w], "little")
        val = (val + delta) % (1 << (8 * w))
        out = bytearray(data)
        out[p:p + w] = val.to_bytes(w, "little")
        return bytes(out)

    return (lambda data, pos: 2 * ARITH_MAX), apply_kth


def _interesting(width: int, table: Sequence[int]):
    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        w = width
        while w > 1 and len(data) < w:
            w //= 2
        p = _word_pos(data, pos, w)
        val = table[k % len(table)] % (1 << (8 * w))
        out = bytearray(data)
        out[p:p + w] = val.to_bytes(w, "little")
        return bytes(out)

    return (lambda data, pos: len(table)), apply_kth


def _set_random():
    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        return _set_byte(data, pos, k)

    return (lambda data, pos: 256), apply_kth


def _delete():
    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        if len(data) <= 1:
            return data
        return data[:pos] + data[pos + 1:]

    return (lambda data, pos: 1), apply_kth


def _insert(max_len: int):
    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        if len(data) >= max_len:
            return data
        return data[:pos] + bytes([k]) + data[pos:]

    return (lambda data, pos: 256), apply_kth


def _block_space(length: int) -> int:
    # Sum over block length l of the number of source offsets.
    total = 0
    for l in range(1, min(MAX_BLOCK, length) + 1):
        total += length - l + 1
    return total


def _decode_block(length: int, k: int) -> tuple[int, int]:
    for l in range(1, min(MAX_BLOCK, length) + 1):
        span = length - l + 1
        if k < span:
            return l, k
        k -= span
    raise IndexError("block outcome index out of range")


def _block_overwrite():
    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        l, src = _decode_block(len(data), k)
        l = min(l, len(data) - pos)
        out = bytearray(data)
        out[pos:pos + l] = data[src:src + l]
        return bytes(out)

    return (lambda data, pos: _block_space(len(data))), apply_kth


def _block_duplicate(max_len: int):
    def apply_kth(data: bytes, pos: int, k: int) -> bytes:
        l, src = _decode_block(len(data), k)
        l = min(l, max_len - len(data))
        if l <= 0:
            return data
        return data[:pos] + data[src:src + l] + data[pos:]

    return (lambda data, pos: _block_space(len(data))), apply_kth


def build_mutators(max_len: int) -> list[Mutator]:
    """The full 16-operator catalogue, closed over the input length cap."""
    specs = [
        ("bitflip1", _bitflip(1)),
        ("bitflip2", _bitflip(2)),
        ("bitflip4", _bitflip(4)),
        ("byteflip", ((lambda data, pos: 1),
                      lambda data, pos, k: _flip_bits(data, pos, 0xFF))),
        ("arith8_add", _arith8(1)),
        ("arith8_sub", _arith8(-1)),
        ("arith16", _arith_wide(2)),
        ("arith32", _arith_wide(4)),
        ("interesting8", _interesting(1, INTERESTING_8)),
        ("interesting16", _interesting(2, INTERESTING_16)),
        ("interesting32", _interesting(4, INTERESTING_32)),
        ("set_byte", _set_random()),
        ("delete_byte", _delete()),
        ("insert_byte", _insert(max_len)),
        ("overwrite_block", _block_overwrite()),
        ("duplicate_block", _block_duplicate(max_len)),
    ]
    return [Mutator(name, count, apply) for name, (count, apply) in specs]


N_MUTATORS = 16
