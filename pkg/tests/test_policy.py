"""Actor-critic objectives checked against hand values and finite differences.

Constant networks (zero weights, hand-set biases) make every objective a
closed-form number; small random networks make full-parameter finite
differencing cheap.
"""

import math

import numpy as np
import pytest

from predfuzz.dynamics import EnsembleModel
from predfuzz.encoding import EMBED_DIM, disambiguate_testcase
from predfuzz.policy import (
    ActorNet,
    RLBatch,
    actor_objective_and_grads,
    actor_update,
    batch_from_transitions,
    critic_update,
    k_step_rollout,
    make_q_critic,
    make_v_critic,
    policy_entropy,
    q_loss_and_grads,
    select_action,
    value_loss_and_grads,
)
from predfuzz.valuation import ReplayBuffer, Transition


def _zero(net_like):
    for w in net_like.mlp.weights:
        w[...] = 0.0
    for b in net_like.mlp.biases:
        b[...] = 0.0
    return net_like


def _const_actor(mu, raw_sigma=0.0, hidden=4, lr=0.005):
    actor = _zero(ActorNet(np.random.default_rng(0), hidden=hidden, lr=lr))
    actor.mlp.biases[-1][0] = mu
    actor.mlp.biases[-1][1] = raw_sigma
    return actor


def _const_critic(c, in_dim_v=True, hidden=4):
    make = make_v_critic if in_dim_v else make_q_critic
    critic = _zero(make(np.random.default_rng(1), hidden=hidden))
    critic.mlp.biases[-1][0] = c
    return critic


def _batch(reward=0.5, terminal=0.0, n=1):
    return RLBatch(emb=np.zeros((n, EMBED_DIM)),
                   action=np.full(n, 0.5),
                   reward=np.full(n, reward),
                   emb_next=np.zeros((n, EMBED_DIM)),
                   terminal=np.full(n, terminal))


SIGMA_AT_RAW0 = 1e-3 + (1.0 - 1e-3) * 0.5  # sigmoid(0) = 1/2


# ----------------------------------------------------------------- entropy


def test_entropy_zero_at_reference_sigma():
    sigma = 1.0 / math.sqrt(2.0 * math.pi * math.e)
    assert policy_entropy(sigma) == pytest.approx(0.0, abs=1e-12)


def test_entropy_unit_sigma_value():
    assert policy_entropy(1.0) == pytest.approx(1.4189385332046727)


def test_entropy_doubling_adds_log_two():
    assert (policy_entropy(0.4) - policy_entropy(0.2)
            == pytest.approx(math.log(2.0)))


def test_entropy_monotone_and_positive_sigma_only():
    sig = np.array([0.01, 0.1, 0.5, 1.0])
    h = policy_entropy(sig)
    assert np.all(np.diff(h) > 0)
    with pytest.raises(ValueError):
        policy_entropy(0.0)
    with pytest.raises(ValueError):
        policy_entropy([-0.5])


# ------------------------------------------------------------------- actor


def test_actor_sigma_stays_in_bounds():
    rng = np.random.default_rng(2)
    actor = ActorNet(rng, hidden=8)
    for w in actor.mlp.weights:
        w *= 40.0
    _, sigma = actor.forward(rng.random((32, EMBED_DIM)))
    assert np.all(sigma >= 1e-3) and np.all(sigma <= 1.0)


def test_select_action_clamped_and_centered():
    actor = _const_actor(mu=0.5, raw_sigma=-1e3)  # sigma pinned to 1e-3
    rng = np.random.default_rng(3)
    acts = actor.select_action(np.zeros((1000, EMBED_DIM)), rng)
    assert np.all((acts >= 0.0) & (acts <= 1.0))
    assert acts.mean() == pytest.approx(0.5, abs=3 * 1e-3 / math.sqrt(1000))
    assert select_action(_const_actor(mu=2.0), np.zeros(EMBED_DIM),
                         np.random.default_rng(4)) == 1.0
    assert select_action(_const_actor(mu=-2.0), np.zeros(EMBED_DIM),
                         np.random.default_rng(5)) == 0.0


def test_density_point_mass_lands_on_owning_byte():
    actor = _const_actor(mu=0.375, raw_sigma=-1e3)
    dens = actor.density_over_bytes(np.zeros(EMBED_DIM), 4)
    assert dens[1] == pytest.approx(1.0)
    assert dens.sum() == pytest.approx(1.0)


def test_density_splits_evenly_on_a_slice_edge():
    actor = _const_actor(mu=0.5, raw_sigma=-1e3)
    dens = actor.density_over_bytes(np.zeros(EMBED_DIM), 4)
    assert dens == pytest.approx([0.0, 0.5, 0.5, 0.0], abs=1e-12)


def test_density_clamp_mass_piles_on_first_byte():
    actor = _const_actor(mu=-0.5, raw_sigma=-1e3)
    dens = actor.density_over_bytes(np.zeros(EMBED_DIM), 8)
    assert dens[0] == pytest.approx(1.0)


def test_density_sums_to_one_generally():
    rng = np.random.default_rng(6)
    actor = ActorNet(rng, hidden=8)
    for length in (1, 2, 7, 100):
        dens = actor.density_over_bytes(rng.random(EMBED_DIM), length)
        assert dens.shape == (length,)
        assert dens.sum() == pytest.approx(1.0)
        assert np.all(dens >= 0.0)
    with pytest.raises(ValueError):
        actor.density_over_bytes(np.zeros(EMBED_DIM), 0)


# ------------------------------------------------------------ value losses


def test_value_loss_native_form_hand_value():
    # constant V = 0.3 everywhere: residual = gamma * r = 0.4
    v = _const_critic(0.3)
    loss, _ = value_loss_and_grads(v, _batch(reward=0.5), gamma=0.8)
    assert loss == pytest.approx(0.08)


def test_value_loss_standard_form_hand_value():
    # residual = r + gamma*V(s') - V(s) = 0.5 + 0.24 - 0.3 = 0.44
    v = _const_critic(0.3)
    loss, _ = value_loss_and_grads(v, _batch(reward=0.5), gamma=0.8,
                                   standard_form=True)
    assert loss == pytest.approx(0.5 * 0.44 ** 2)


def test_value_loss_terminal_masks_next_state():
    # residual = gamma*r - V(s) = 0.1; aux pulls V(s') toward 0: 0.5*0.09
    v = _const_critic(0.3)
    loss, _ = value_loss_and_grads(v, _batch(reward=0.5, terminal=1.0),
                                   gamma=0.8)
    assert loss == pytest.approx(0.5 * 0.1 ** 2 + 0.5 * 0.3 ** 2)


@pytest.mark.parametrize("standard_form", [False, True])
def test_value_loss_gradients_match_finite_difference(standard_form):
    rng = np.random.default_rng(7)
    v = make_v_critic(rng, hidden=4)
    batch = RLBatch(emb=rng.random((5, EMBED_DIM)),
                    action=rng.random(5),
                    reward=rng.normal(0.0, 0.3, 5),
                    emb_next=rng.random((5, EMBED_DIM)),
                    terminal=np.array([0.0, 0.0, 1.0, 0.0, 1.0]))
    _, grads = value_loss_and_grads(v, batch, 0.8, standard_form)
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = v.mlp.flat_params().copy()
    eps = 1e-6
    fd = np.empty_like(flat)
    for i in range(flat.size):
        for sign, store in ((1.0, "up"), (-1.0, "dn")):
            vec = flat.copy()
            vec[i] += sign * eps
            v.mlp.set_flat_params(vec)
            val = value_loss_and_grads(v, batch, 0.8, standard_form)[0]
            if store == "up":
                up = val
            else:
                dn = val
        fd[i] = (up - dn) / (2.0 * eps)
    v.mlp.set_flat_params(flat)
    assert np.allclose(analytic, fd, rtol=1e-4, atol=1e-7)


# ---------------------------------------------------------------- q losses


def test_q_loss_zero_residual_zero_gradient():
    # constant Q = c with r = c*(1 - gamma) makes the target exact
    gamma, c = 0.8, 0.5
    q = _const_critic(c, in_dim_v=False)
    batch = _batch(reward=c * (1.0 - gamma))
    batch.action_next = np.array([0.5])
    loss, grads = q_loss_and_grads(q, batch, gamma)
    assert loss == pytest.approx(0.0, abs=1e-18)
    assert all(np.all(g == 0.0) for g in grads)


def test_q_loss_hand_value_and_terminal_mask():
    q = _const_critic(0.2, in_dim_v=False)
    batch = _batch(reward=0.3)
    batch.action_next = np.array([0.5])
    loss, _ = q_loss_and_grads(q, batch, gamma=0.5)
    assert loss == pytest.approx(0.04)  # (0.3 + 0.1 - 0.2)^2
    batch = _batch(reward=0.3, terminal=1.0)
    batch.action_next = np.array([0.5])
    loss, _ = q_loss_and_grads(q, batch, gamma=0.5)
    assert loss == pytest.approx(0.01)  # (0.3 - 0.2)^2


def test_q_loss_requires_next_action():
    q = _const_critic(0.0, in_dim_v=False)
    with pytest.raises(ValueError):
        q_loss_and_grads(q, _batch(), gamma=0.8)


def test_q_loss_gradients_match_finite_difference():
    rng = np.random.default_rng(8)
    q = make_q_critic(rng, hidden=4)
    batch = RLBatch(emb=rng.random((4, EMBED_DIM)),
                    action=rng.random(4),
                    reward=rng.normal(0.0, 0.3, 4),
                    emb_next=rng.random((4, EMBED_DIM)),
                    terminal=np.array([0.0, 1.0, 0.0, 0.0]),
                    action_next=rng.random(4))
    _, grads = q_loss_and_grads(q, batch, 0.8)
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = q.mlp.flat_params().copy()
    eps = 1e-6
    fd = np.empty_like(flat)
    for i in range(flat.size):
        up = flat.copy()
        dn = flat.copy()
        up[i] += eps
        dn[i] -= eps
        q.mlp.set_flat_params(up)
        lu = q_loss_and_grads(q, batch, 0.8)[0]
        q.mlp.set_flat_params(dn)
        ld = q_loss_and_grads(q, batch, 0.8)[0]
        fd[i] = (lu - ld) / (2.0 * eps)
    q.mlp.set_flat_params(flat)
    assert np.allclose(analytic, fd, rtol=1e-4, atol=1e-7)


# ----------------------------------------------------------- actor updates


def test_actor_objective_hand_value():
    actor = _const_actor(mu=0.5, raw_sigma=0.0)
    q = _const_critic(0.7, in_dim_v=False)
    obj, _ = actor_objective_and_grads(actor, q, np.zeros((4, EMBED_DIM)),
                                       eps=np.zeros(4), alpha=0.2)
    expected = 0.7 + 0.2 * 0.5 * math.log(
        2.0 * math.pi * math.e * SIGMA_AT_RAW0 ** 2)
    assert obj == pytest.approx(expected)


def test_actor_gradients_match_finite_difference():
    rng = np.random.default_rng(9)
    actor = ActorNet(rng, hidden=4)
    for w in actor.mlp.weights:
        w *= 0.1  # keep mu near 0 so nudges cannot cross the clip kinks
    actor.mlp.biases[-1][0] = 0.5
    q = make_q_critic(rng, hidden=4)
    emb = rng.random((3, EMBED_DIM))
    eps = np.array([-0.4, 0.1, 0.4])
    _, grads = actor_objective_and_grads(actor, q, emb, eps, alpha=0.2)
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = actor.mlp.flat_params().copy()
    h = 1e-6
    fd = np.empty_like(flat)
    for i in range(flat.size):
        up = flat.copy()
        dn = flat.copy()
        up[i] += h
        dn[i] -= h
        actor.mlp.set_flat_params(up)
        ou = actor_objective_and_grads(actor, q, emb, eps, 0.2)[0]
        actor.mlp.set_flat_params(dn)
        od = actor_objective_and_grads(actor, q, emb, eps, 0.2)[0]
        fd[i] = (ou - od) / (2.0 * h)
    actor.mlp.set_flat_params(flat)
    assert np.allclose(analytic, fd, rtol=1e-4, atol=1e-7)


class _QuadraticQ:
    """Duck-typed critic with Q(s, a) = -(a - center)^2."""

    def __init__(self, center):
        self.center = center
        self.mlp = self

    def forward_cached(self, x):
        a = x[:, -1]
        return -((a - self.center) ** 2)[:, None], {"a": a}

    def backward(self, cache, d_out):
        a = cache["a"]
        dx = np.zeros((a.size, EMBED_DIM + 1))
        dx[:, -1] = d_out[:, 0] * (-2.0 * (a - self.center))
        return [], dx


def test_actor_ascends_quadratic_q_to_its_peak():
    actor = _const_actor(mu=0.2, raw_sigma=0.0, lr=0.01)
    q = _QuadraticQ(center=0.7)
    rng = np.random.default_rng(10)
    emb = np.zeros((8, EMBED_DIM))
    for _ in range(600):
        actor_update(actor, q, emb, alpha=0.0, rng=rng)
    mu, _ = actor.forward(emb[:1])
    assert mu[0] == pytest.approx(0.7, abs=0.05)


def test_entropy_bonus_inflates_sigma_under_flat_q():
    actor = _const_actor(mu=0.5, raw_sigma=-1.0, lr=0.05)
    q = _const_critic(0.0, in_dim_v=False)  # flat Q: only entropy matters
    rng = np.random.default_rng(11)
    emb = np.zeros((4, EMBED_DIM))
    _, sigma0 = actor.forward(emb[:1])
    for _ in range(200):
        actor_update(actor, q, emb, alpha=0.2, rng=rng)
    mu, sigma = actor.forward(emb[:1])
    assert sigma[0] > sigma0[0]
    assert sigma[0] > 0.9
    assert mu[0] == 0.5  # flat Q gives the mean head a zero gradient


def test_critic_update_sets_next_action_and_learns():
    rng = np.random.default_rng(12)
    actor = ActorNet(rng, hidden=4)
    v = make_v_critic(rng, hidden=4)
    q = make_q_critic(rng, hidden=4)
    batch = RLBatch(emb=rng.random((16, EMBED_DIM)),
                    action=rng.random(16),
                    reward=rng.normal(0.0, 0.1, 16),
                    emb_next=rng.random((16, EMBED_DIM)),
                    terminal=np.zeros(16))
    first_jv, first_jq = critic_update(q, v, actor, batch, 0.8, rng)
    assert batch.action_next.shape == (16,)
    for _ in range(300):
        jv, jq = critic_update(q, v, actor, batch, 0.8, rng)
    assert jv < first_jv
    assert jq < first_jq


# ---------------------------------------------------------------- rollouts


def test_batch_from_transitions_maps_fields():
    ts = [Transition(p_t=1, a_t=0.25, p_next=2, reward=0.5, testcase_id=9,
                     emb_t=np.zeros(EMBED_DIM), emb_next=np.ones(EMBED_DIM),
                     terminal_next=True),
          Transition(p_t=2, a_t=0.75, p_next=3, reward=-0.5, testcase_id=10,
                     emb_t=np.ones(EMBED_DIM), emb_next=np.zeros(EMBED_DIM))]
    batch = batch_from_transitions(ts)
    assert list(batch.action) == [0.25, 0.75]
    assert list(batch.reward) == [0.5, -0.5]
    assert list(batch.terminal) == [1.0, 0.0]
    assert batch.emb.shape == (2, EMBED_DIM)


def test_k_step_rollout_chains_synthetic_ids():
    ens = EnsembleModel(n_members=2, hidden=4, rng=np.random.default_rng(13))
    actor = _const_actor(mu=0.5, raw_sigma=-1e3)
    buf = ReplayBuffer(capacity=16, kind="predicted")
    ts, counter = k_step_rollout(ens, actor, np.full(EMBED_DIM, 0.5),
                                 start_path_id=5, k=3,
                                 rng=np.random.default_rng(14),
                                 mutation_counter=10, buffer=buf)
    assert counter == 13
    assert len(ts) == 3 and len(buf) == 3
    # ids chain: each destination becomes the next source
    assert [t.p_t for t in ts] == [5, 11, 9]
    assert [t.p_next for t in ts] == [11, 9, 14]
    assert all(t.testcase_id == t.p_next for t in ts)
    assert all(not t.terminal_next for t in ts)
    for prev, nxt in zip(ts, ts[1:]):
        assert np.array_equal(prev.emb_next, nxt.emb_t)
    assert disambiguate_testcase(10, 5) == 11  # the chain's first link


def test_k_step_rollout_validates_k():
    ens = EnsembleModel(n_members=1, hidden=4, rng=np.random.default_rng(15))
    actor = _const_actor(mu=0.5)
    with pytest.raises(ValueError):
        k_step_rollout(ens, actor, np.zeros(EMBED_DIM), 0, 0,
                       np.random.default_rng(16), 0)
