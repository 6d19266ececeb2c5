"""Embedding and action-encoding oracles."""

import numpy as np
import pytest

from predfuzz.encoding import (EMBED_DIM, EmbeddingSpace, decode_action,
                               disambiguate_testcase, encode_action)


def test_encode_action_worked_examples():
    assert encode_action(4, 100) == 0.04
    assert encode_action(0, 17) == 0.0
    assert encode_action(99, 100) == 0.99


def test_encode_action_validation():
    with pytest.raises(ValueError):
        encode_action(5, 5)
    with pytest.raises(ValueError):
        encode_action(-1, 5)
    with pytest.raises(ValueError):
        encode_action(0, 0)


def test_decode_inverts_encode():
    for length in (1, 2, 7, 100):
        for k in range(length):
            assert decode_action(encode_action(k, length), length) == k
    assert decode_action(1.5, 10) == 9
    assert decode_action(-0.2, 10) == 0


def test_disambiguate_testcase_oracles():
    assert disambiguate_testcase(0, 0) == 0
    assert disambiguate_testcase(5, 8) == 7  # 5 xor (8 >> 2) = 5 xor 2
    assert disambiguate_testcase(5, 8) == disambiguate_testcase(5, 8)
    with pytest.raises(ValueError):
        disambiguate_testcase(-1, 0)
    with pytest.raises(ValueError):
        disambiguate_testcase(0, -4)


def test_embedding_deterministic_and_bounded():
    space = EmbeddingSpace()
    trace = {3: 1, 17: 4, 99: 32}
    space.observe(trace)
    space.freeze()
    a = space.embed(trace)
    b = space.embed(dict(trace))
    assert a.shape == (EMBED_DIM,)
    assert np.array_equal(a, b)
    assert np.all(a >= 0.0) and np.all(a <= 1.0)


def test_embedding_bounded_for_extreme_traces():
    space = EmbeddingSpace()
    space.observe({0: 1})
    space.freeze()
    huge = {i: 128 for i in range(200)}  # far beyond the frozen scale
    emb = space.embed(huge)
    assert np.all(emb >= 0.0) and np.all(emb <= 1.0)


def _random_trace(rng, n_branches):
    branches = rng.choice(500, size=n_branches, replace=False)
    return {int(b): 4 for b in branches}


def _perturb(trace, k, rng):
    # Bump k entries one class step (4 -> 8): every changed entry moves
    # the same amount, so "differs in k entries" is comparable across k.
    out = dict(trace)
    keys = rng.choice(sorted(out), size=k, replace=False)
    for key in keys:
        out[int(key)] = 8
    return out


def test_embedding_distance_grows_with_trace_difference():
    """Traces differing in 1 entry land nearer than traces differing in 5.

    Hash collisions can fold two branch slots together, so the ordering is
    statistical: it must hold for >= 95% of sampled pairs and in the mean.
    """
    rng = np.random.default_rng(42)
    space = EmbeddingSpace()
    wins = 0
    trials = 200
    d1s, d5s = [], []
    for _ in range(trials):
        base = _random_trace(rng, 12)
        near = _perturb(base, 1, rng)
        far = _perturb(base, 5, rng)
        for t in (base, near, far):
            space.observe(t)
        space.freeze()
        e0 = space.embed(base)
        d1 = float(np.linalg.norm(space.embed(near) - e0))
        d5 = float(np.linalg.norm(space.embed(far) - e0))
        d1s.append(d1)
        d5s.append(d5)
        wins += d1 < d5
    assert wins / trials >= 0.95
    assert np.mean(d1s) < np.mean(d5s)


def test_embedding_monotone_in_k_on_average():
    rng = np.random.default_rng(9)
    space = EmbeddingSpace()
    means = []
    for k in (1, 2, 3, 5, 8):
        dists = []
        for _ in range(120):
            base = _random_trace(rng, 12)
            variant = _perturb(base, k, rng)
            space.observe(base)
            space.observe(variant)
            space.freeze()
            dists.append(np.linalg.norm(space.embed(variant) - space.embed(base)))
        means.append(np.mean(dists))
    assert all(a < b for a, b in zip(means, means[1:]))
