"""Soft actor-critic over path embeddings and byte-position actions.

The actor maps a 20-dim path embedding to a Gaussian over the action
interval [0, 1]; sampled actions are clamped into the interval and decode
to a mutation byte position. A state critic V and an action critic Q are
regressed on mixed real and model-predicted transitions. Objectives are
kept in their written residual forms and differentiated through every
network evaluation, so analytic gradients equal finite differences of
the scalar losses.

The value residual supports two shapes: the native form
(gamma * r + V(s') - V(s)) and the conventional form
(r + gamma * V(s') - V(s)) behind ``standard_form``. Terminal sources are
absorbing: the next-state term is masked and terminal next-state values
are pulled to zero by an auxiliary quadratic term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .dynamics import EnsembleModel, make_inputs, sample_transition
from .encoding import EMBED_DIM, disambiguate_testcase
from .nets import MLP, Adam, sigmoid
from .valuation import Transition

SIGMA_MIN = 1e-3
SIGMA_MAX = 1.0
DEFAULT_ALPHA = 0.2
DEFAULT_LR = 0.005
DEFAULT_HIDDEN = 64


def _squash_sigma(raw: np.ndarray) -> np.ndarray:
    return SIGMA_MIN + (SIGMA_MAX - SIGMA_MIN) * sigmoid(raw)


def _squash_sigma_grad(raw: np.ndarray) -> np.ndarray:
    s = sigmoid(raw)
    return (SIGMA_MAX - SIGMA_MIN) * s * (1.0 - s)


def policy_entropy(sigma) -> np.ndarray:
    """Differential entropy of an unclamped Gaussian policy head."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0):
        raise ValueError("sigma must be positive")
    return 0.5 * np.log(2.0 * math.pi * math.e * sigma ** 2)


class ActorNet:
    """Gaussian policy head: embedding -> (mu, sigma), three FC layers."""

    def __init__(self, rng: np.random.Generator, hidden: int = DEFAULT_HIDDEN,
                 lr: float = DEFAULT_LR):
        self.mlp = MLP([EMBED_DIM, hidden, hidden, 2], rng)
        self.opt = Adam(self.mlp.param_list(), lr)

    def forward(self, emb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = self.mlp.forward(emb)
        return out[:, 0], _squash_sigma(out[:, 1])

    def select_action(self, emb: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Reparameterized draw clamped into [0, 1]."""
        mu, sigma = self.forward(emb)
        eps = rng.standard_normal(mu.shape)
        return np.clip(mu + sigma * eps, 0.0, 1.0)

    def density_over_bytes(self, emb: np.ndarray, seed_length: int) -> np.ndarray:
        """Exact byte-position probabilities induced by the clamped policy.

        Byte i owns the action slice [i/L, (i+1)/L); probability mass the
        clamp pushes onto the endpoints lands on the first and last byte.
        Sums to 1.
        """
        if seed_length <= 0:
            raise ValueError("seed_length must be positive")
        mu, sigma = self.forward(np.atleast_2d(emb))
        mu, sigma = float(mu[0]), float(sigma[0])
        edges = np.arange(1, seed_length) / seed_length
        cdf = ndtr((edges - mu) / sigma)
        return np.diff(np.concatenate([[0.0], cdf, [1.0]]))


class Critic:
    """Scalar-output critic with its own optimizer."""

    def __init__(self, in_dim: int, rng: np.random.Generator,
                 hidden: int = DEFAULT_HIDDEN, lr: float = DEFAULT_LR):
        self.mlp = MLP([in_dim, hidden, hidden, 1], rng)
        self.opt = Adam(self.mlp.param_list(), lr)

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.mlp.forward(x)[:, 0]


def make_v_critic(rng, hidden: int = DEFAULT_HIDDEN, lr: float = DEFAULT_LR) -> Critic:
    return Critic(EMBED_DIM, rng, hidden, lr)


def make_q_critic(rng, hidden: int = DEFAULT_HIDDEN, lr: float = DEFAULT_LR) -> Critic:
    return Critic(EMBED_DIM + 1, rng, hidden, lr)


@dataclass
class RLBatch:
    emb: np.ndarray        # (B, 20)
    action: np.ndarray     # (B,)
    reward: np.ndarray     # (B,)
    emb_next: np.ndarray   # (B, 20)
    terminal: np.ndarray   # (B,) float mask, 1 where source is absorbing
    action_next: Optional[np.ndarray] = None  # filled by critic_update


def batch_from_transitions(transitions: Sequence[Transition]) -> RLBatch:
    return RLBatch(
        emb=np.stack([t.emb_t for t in transitions]),
        action=np.array([t.a_t for t in transitions]),
        reward=np.array([t.reward for t in transitions]),
        emb_next=np.stack([t.emb_next for t in transitions]),
        terminal=np.array([1.0 if t.terminal_next else 0.0 for t in transitions]),
    )


def value_loss_and_grads(v: Critic, batch: RLBatch, gamma: float,
                         standard_form: bool = False
                         ) -> tuple[float, list[np.ndarray]]:
    """J_V and its full gradient through both V(s) and V(s').

    Native form: mean 1/2 (gamma*r + V(s')*live - V(s))^2; standard form
    swaps gamma onto V(s'). Adds mean terminal/2 * V(s')^2 so absorbing
    next-states regress to zero value.
    """
    n = batch.emb.shape[0]
    live = 1.0 - batch.terminal
    out_s, cache_s = v.mlp.forward_cached(batch.emb)
    out_n, cache_n = v.mlp.forward_cached(batch.emb_next)
    v_s, v_n = out_s[:, 0], out_n[:, 0]
    if standard_form:
        resid = batch.reward + gamma * v_n * live - v_s
        c_next = gamma
    else:
        resid = gamma * batch.reward + v_n * live - v_s
        c_next = 1.0
    loss = float(0.5 * (resid ** 2).mean() + 0.5 * (batch.terminal * v_n ** 2).mean())
    d_s = (-resid / n)[:, None]
    d_n = ((c_next * resid * live + batch.terminal * v_n) / n)[:, None]
    grads_s, _ = v.mlp.backward(cache_s, d_s)
    grads_n, _ = v.mlp.backward(cache_n, d_n)
    return loss, [a + b for a, b in zip(grads_s, grads_n)]


def q_loss_and_grads(q: Critic, batch: RLBatch, gamma: float
                     ) -> tuple[float, list[np.ndarray]]:
    """J_Q = mean (r + gamma*Q(s', a')*live - Q(s, a))^2, a' given in batch."""
    if batch.action_next is None:
        raise ValueError("batch.action_next must be set before the Q update")
    n = batch.emb.shape[0]
    live = 1.0 - batch.terminal
    x_s = np.concatenate([batch.emb, batch.action[:, None]], axis=1)
    x_n = np.concatenate([batch.emb_next, batch.action_next[:, None]], axis=1)
    out_s, cache_s = q.mlp.forward_cached(x_s)
    out_n, cache_n = q.mlp.forward_cached(x_n)
    q_s, q_n = out_s[:, 0], out_n[:, 0]
    resid = batch.reward + gamma * q_n * live - q_s
    loss = float((resid ** 2).mean())
    d_s = (-2.0 * resid / n)[:, None]
    d_n = (2.0 * gamma * resid * live / n)[:, None]
    grads_s, _ = q.mlp.backward(cache_s, d_s)
    grads_n, _ = q.mlp.backward(cache_n, d_n)
    return loss, [a + b for a, b in zip(grads_s, grads_n)]


def actor_objective_and_grads(actor: ActorNet, q: Critic, emb: np.ndarray,
                              eps: np.ndarray, alpha: float
                              ) -> tuple[float, list[np.ndarray]]:
    """J_pi = mean[Q(s, a~) + alpha*H(sigma)] with a~ = clip(mu+sigma*eps).

    Returns the objective (to ascend) and its gradient w.r.t. actor
    parameters, flowing through the Q input; eps is supplied so the
    objective is a deterministic function.
    """
    n = emb.shape[0]
    out, cache = actor.mlp.forward_cached(emb)
    mu, raw = out[:, 0], out[:, 1]
    sigma = _squash_sigma(raw)
    z = mu + sigma * eps
    a = np.clip(z, 0.0, 1.0)
    inside = ((z > 0.0) & (z < 1.0)).astype(float)

    x_q = np.concatenate([np.atleast_2d(emb), a[:, None]], axis=1)
    q_out, q_cache = q.mlp.forward_cached(x_q)
    objective = float(q_out[:, 0].mean() + alpha * policy_entropy(sigma).mean())

    _, d_q_in = q.mlp.backward(q_cache, np.full((n, 1), 1.0 / n))
    d_a = d_q_in[:, -1]
    d_mu = d_a * inside
    d_sigma = d_a * inside * eps + alpha / (sigma * n)
    d_out = np.stack([d_mu, d_sigma * _squash_sigma_grad(raw)], axis=1)
    grads, _ = actor.mlp.backward(cache, d_out)
    return objective, grads


def critic_update(q: Critic, v: Critic, actor: ActorNet, batch: RLBatch,
                  gamma: float, rng: np.random.Generator,
                  standard_form: bool = False) -> tuple[float, float]:
    """One gradient step on J_V and J_Q; samples a' from the live actor."""
    batch.action_next = actor.select_action(batch.emb_next, rng)
    jv, v_grads = value_loss_and_grads(v, batch, gamma, standard_form)
    jq, q_grads = q_loss_and_grads(q, batch, gamma)
    v.opt.step(v_grads)
    q.opt.step(q_grads)
    return jv, jq


def actor_update(actor: ActorNet, q: Critic, emb: np.ndarray, alpha: float,
                 rng: np.random.Generator) -> float:
    """One ascent step on the entropy-regularized policy objective."""
    eps = rng.standard_normal(emb.shape[0])
    objective, grads = actor_objective_and_grads(actor, q, emb, eps, alpha)
    actor.opt.step(grads, maximize=True)
    return objective


def select_action(actor: ActorNet, emb: np.ndarray,
                  rng: np.random.Generator) -> float:
    """Single-state convenience wrapper for the actor's clamped draw."""
    return float(actor.select_action(np.atleast_2d(emb), rng)[0])


def policy_density_over_bytes(actor: ActorNet, emb: np.ndarray,
                              seed_length: int) -> np.ndarray:
    return actor.density_over_bytes(emb, seed_length)


def k_step_rollout(ensemble: EnsembleModel, actor: ActorNet,
                   start_emb: np.ndarray, start_path_id: int, k: int,
                   rng: np.random.Generator, mutation_counter: int,
                   buffer=None) -> tuple[list[Transition], int]:
    """Imagine k transitions from a real state using one sampled member per step.

    Predicted states get synthetic path ids derived from the mutation
    counter, chained so each step's destination is the next step's source.
    Appends to ``buffer`` when given; returns the transitions and the
    advanced counter.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    emb = np.asarray(start_emb, dtype=float).reshape(EMBED_DIM)
    current = start_path_id
    out: list[Transition] = []
    for _ in range(k):
        action = float(actor.select_action(emb[None, :], rng)[0])
        member = ensemble.sample_member(rng)
        pred = member.predict(make_inputs(emb, action))
        emb_next, reward = sample_transition(
            GaussianPredictionView(pred.mean[0], pred.var[0]), rng)
        testcase = disambiguate_testcase(mutation_counter, current)
        mutation_counter += 1
        t = Transition(
            p_t=current, a_t=action, p_next=testcase, reward=reward,
            testcase_id=testcase, emb_t=emb.copy(), emb_next=emb_next,
            terminal_next=False)
        out.append(t)
        if buffer is not None:
            buffer.append(t)
        emb, current = emb_next, testcase
    return out, mutation_counter


class GaussianPredictionView:
    """Row view with the (mean, var) shape sample_transition expects."""

    __slots__ = ("mean", "var")

    def __init__(self, mean: np.ndarray, var: np.ndarray):
        self.mean = mean
        self.var = var
