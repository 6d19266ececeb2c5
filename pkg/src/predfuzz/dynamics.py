"""Probabilistic ensemble model of path transitions.

Six independently seeded Gaussian MLPs map (path embedding, action) to a
diagonal Gaussian over (next embedding, reward). Each net has five hidden
Swish layers and outputs means plus log-variances; log-variances are
smoothly squashed into [log 1e-6, log 10] so the likelihood can never
collapse or explode. The ensemble predicts as a uniform mixture, reported
moment-matched; rollouts draw one member per step.

Training minimizes the summed Gaussian negative log likelihood
sum_i[(mu_i - y_i)^2 / var_i + log var_i] averaged over the batch, with
bootstrap minibatches per member, early stopping on a flat loss window,
and rollback of any member whose loss goes non-finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .encoding import EMBED_DIM
from .nets import MLP, Adam, sigmoid

LOGVAR_MIN = math.log(1e-6)
LOGVAR_MAX = math.log(10.0)

IN_DIM = EMBED_DIM + 1       # embedding plus encoded action
OUT_DIM = EMBED_DIM + 1      # next embedding plus reward
DEFAULT_MEMBERS = 6
DEFAULT_HIDDEN = 64
N_HIDDEN_LAYERS = 5

EARLY_STOP_WINDOW = 20
EARLY_STOP_TOL = 1e-4


def _squash_logvar(raw: np.ndarray) -> np.ndarray:
    return LOGVAR_MIN + (LOGVAR_MAX - LOGVAR_MIN) * sigmoid(raw)


def _squash_logvar_grad(raw: np.ndarray) -> np.ndarray:
    s = sigmoid(raw)
    return (LOGVAR_MAX - LOGVAR_MIN) * s * (1.0 - s)


@dataclass(frozen=True)
class GaussianPrediction:
    mean: np.ndarray
    var: np.ndarray


def gaussian_nll(pred: "GaussianPrediction", target: np.ndarray) -> float:
    """Diagonal Gaussian NLL: sum_i (mu_i - y_i)^2 / var_i + log var_i.

    For a batch, the mean over samples. Matches the training objective
    exactly (constant terms dropped).
    """
    mean = np.atleast_2d(pred.mean)
    var = np.atleast_2d(pred.var)
    target = np.atleast_2d(target)
    per_sample = ((mean - target) ** 2 / var + np.log(var)).sum(axis=1)
    return float(per_sample.mean())


class TransitionNet:
    """One ensemble member: MLP emitting means and raw log-variances."""

    def __init__(self, rng: np.random.Generator, hidden: int = DEFAULT_HIDDEN):
        sizes = [IN_DIM] + [hidden] * N_HIDDEN_LAYERS + [2 * OUT_DIM]
        self.mlp = MLP(sizes, rng)

    def predict(self, inputs: np.ndarray) -> GaussianPrediction:
        out = self.mlp.forward(inputs)
        mean = out[:, :OUT_DIM]
        var = np.exp(_squash_logvar(out[:, OUT_DIM:]))
        return GaussianPrediction(mean=mean, var=var)

    def loss_and_grads(self, inputs: np.ndarray, targets: np.ndarray
                       ) -> tuple[float, list[np.ndarray]]:
        out, cache = self.mlp.forward_cached(inputs)
        batch = out.shape[0]
        mean = out[:, :OUT_DIM]
        raw = out[:, OUT_DIM:]
        logvar = _squash_logvar(raw)
        var = np.exp(logvar)
        resid = mean - targets
        loss = float(((resid ** 2 / var + logvar).sum(axis=1)).mean())
        d_out = np.empty_like(out)
        d_out[:, :OUT_DIM] = 2.0 * resid / var / batch
        d_logvar = (1.0 - resid ** 2 / var) / batch
        d_out[:, OUT_DIM:] = d_logvar * _squash_logvar_grad(raw)
        grads, _ = self.mlp.backward(cache, d_out)
        return loss, grads


def make_inputs(emb: np.ndarray, action) -> np.ndarray:
    emb = np.atleast_2d(emb)
    act = np.atleast_1d(np.asarray(action, dtype=float)).reshape(-1, 1)
    if act.shape[0] == 1 and emb.shape[0] > 1:
        act = np.repeat(act, emb.shape[0], axis=0)
    return np.concatenate([emb, act], axis=1)


class EnsembleModel:
    """Uniform mixture of independently trained transition nets."""

    def __init__(self, n_members: int = DEFAULT_MEMBERS,
                 hidden: int = DEFAULT_HIDDEN,
                 rng: Optional[np.random.Generator] = None):
        if n_members < 1:
            raise ValueError("ensemble needs at least one member")
        rng = rng if rng is not None else np.random.default_rng()
        self.members = [TransitionNet(r, hidden) for r in rng.spawn(n_members)]
        self.trained = False

    def train(self, inputs: np.ndarray, targets: np.ndarray,
              rng: np.random.Generator, epochs: int = 500,
              batch_size: int = 256, lr: float = 1e-3) -> list[list[float]]:
        """Fit every member on its own bootstrap minibatch stream.

        Returns one loss curve (mean minibatch loss per epoch) per member.
        Stops a member early when the curve improves by less than 1e-4
        over a 20-epoch window, or rolls it back to its last finite state
        if the loss turns non-finite.
        """
        inputs = np.asarray(inputs, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != IN_DIM:
            raise ValueError(f"inputs must be (n, {IN_DIM})")
        if targets.shape != (inputs.shape[0], OUT_DIM):
            raise ValueError(f"targets must be (n, {OUT_DIM})")
        n = inputs.shape[0]
        if n == 0:
            raise ValueError("cannot train on an empty dataset")
        steps = max(1, -(-n // batch_size))
        curves: list[list[float]] = []
        for member, member_rng in zip(self.members, rng.spawn(len(self.members))):
            opt = Adam(member.mlp.param_list(), lr)
            curve: list[float] = []
            for _ in range(epochs):
                snap = member.mlp.snapshot()
                losses = []
                for _ in range(steps):
                    idx = member_rng.integers(0, n, size=min(batch_size, n))
                    loss, grads = member.loss_and_grads(inputs[idx], targets[idx])
                    opt.step(grads)
                    losses.append(loss)
                epoch_loss = float(np.mean(losses))
                if not np.isfinite(epoch_loss):
                    member.mlp.restore(snap)
                    break
                curve.append(epoch_loss)
                if (len(curve) > EARLY_STOP_WINDOW
                        and curve[-EARLY_STOP_WINDOW - 1] - curve[-1] < EARLY_STOP_TOL):
                    break
            curves.append(curve)
        self.trained = True
        return curves

    def member_predictions(self, emb: np.ndarray, action) -> list[GaussianPrediction]:
        x = make_inputs(emb, action)
        return [m.predict(x) for m in self.members]

    def predict(self, emb: np.ndarray, action) -> GaussianPrediction:
        """Moment-matched uniform mixture over the members."""
        preds = self.member_predictions(emb, action)
        means = np.stack([p.mean for p in preds])
        varis = np.stack([p.var for p in preds])
        mix_mean = means.mean(axis=0)
        mix_var = (varis + means ** 2).mean(axis=0) - mix_mean ** 2
        mix_var = np.maximum(mix_var, math.exp(LOGVAR_MIN))
        return GaussianPrediction(mean=mix_mean, var=mix_var)

    def sample_member(self, rng: np.random.Generator) -> TransitionNet:
        return self.members[int(rng.integers(len(self.members)))]


def forward(net: TransitionNet, emb: np.ndarray, action) -> GaussianPrediction:
    """Single-member Gaussian prediction for (path embedding, action)."""
    return net.predict(make_inputs(emb, action))


def ensemble_predict(ensemble: EnsembleModel, emb: np.ndarray, action
                     ) -> GaussianPrediction:
    """Moment-matched uniform mixture over the ensemble members."""
    return ensemble.predict(emb, action)


def sample_transition(pred: GaussianPrediction, rng: np.random.Generator
                      ) -> tuple[np.ndarray, float]:
    """Draw (next embedding, reward) from a Gaussian prediction.

    Embeddings are clamped back into [0, 1]^20 and rewards into [-1, 1];
    the model's codomain is exactly the encoder's.
    """
    mean = pred.mean.reshape(-1)
    std = np.sqrt(pred.var.reshape(-1))
    draw = mean + std * rng.standard_normal(mean.shape)
    emb_next = np.clip(draw[:EMBED_DIM], 0.0, 1.0)
    reward = float(np.clip(draw[EMBED_DIM], -1.0, 1.0))
    return emb_next, reward


def prediction_accuracy(real: float, predicted: float, eps: float = 1e-6) -> float:
    """Relative accuracy 1 - |real - pred| / |real| (eps floor at 0)."""
    denom = max(abs(real), eps)
    return 1.0 - abs(real - predicted) / denom


def empirical_outcome_distribution(
    ensemble: EnsembleModel,
    emb: np.ndarray,
    action: float,
    candidate_embs: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Monte-Carlo next-path distribution under the learned model.

    Each sample draws one member uniformly, samples a transition, and is
    classified to the nearest candidate embedding. Returns per-candidate
    probabilities and the mean sampled reward.
    """
    candidates = np.atleast_2d(candidate_embs)
    preds = ensemble.member_predictions(emb, action)
    counts = np.zeros(candidates.shape[0])
    reward_sum = 0.0
    for _ in range(n_samples):
        pred = preds[int(rng.integers(len(preds)))]
        emb_next, reward = sample_transition(pred, rng)
        nearest = int(np.argmin(((candidates - emb_next) ** 2).sum(axis=1)))
        counts[nearest] += 1.0
        reward_sum += reward
    return counts / n_samples, reward_sum / n_samples
