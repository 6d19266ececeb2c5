"""Minimal fully-connected networks with hand-written backprop.

All learning in this package runs through this module: plain MLPs with
smooth Swish activations, explicit forward caches, analytic gradients for
both parameters and inputs, and an Adam optimizer. Gradients here are the
literal derivatives of the objectives built on top, which is what the
finite-difference acceptance checks exercise.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

CHECKPOINT_VERSION = 1


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def swish(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def swish_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


class MLP:
    """Feed-forward net: linear layers, Swish on all but the last."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # -- forward / backward ------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if i == last else swish(z)
            acts.append(h)
        return h, {"acts": acts, "pre": pre}

    def backward(self, cache: dict, grad_out: np.ndarray
                 ) -> tuple[list[np.ndarray], np.ndarray]:
        """Backprop ``grad_out`` (dL/d output, same shape as output).

        Returns gradients ordered as ``param_list()`` plus dL/d input.
        """
        acts, pre = cache["acts"], cache["pre"]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        dz = np.atleast_2d(np.asarray(grad_out, dtype=float))
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                dz = dz * swish_grad(pre[i])
            grads_w[i] = acts[i].T @ dz
            grads_b[i] = dz.sum(axis=0)
            dz = dz @ self.weights[i].T
        grads: list[np.ndarray] = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend((gw, gb))
        return grads, dz

    # -- parameter access ---------------------------------------------------

    def param_list(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.param_list()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.param_list():
            n = p.size
            p[...] = flat[offset:offset + n].reshape(p.shape)
            offset += n
        if offset != flat.size:
            raise ValueError("flat parameter size mismatch")

    def copy_params_from(self, other: "MLP") -> None:
        if other.sizes != self.sizes:
            raise ValueError("architecture mismatch")
        for dst, src in zip(self.param_list(), other.param_list()):
            dst[...] = src

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.param_list()]

    def restore(self, snap: Sequence[np.ndarray]) -> None:
        for p, s in zip(self.param_list(), snap):
            p[...] = s


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray], maximize: bool = False) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if maximize:
                g = -g
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def save_checkpoint(path: str, nets: dict[str, MLP]) -> None:
    arrays: dict[str, np.ndarray] = {"__version__": np.array([CHECKPOINT_VERSION])}
    for name, net in nets.items():
        arrays[f"{name}.sizes"] = np.array(net.sizes)
        for i, p in enumerate(net.param_list()):
            arrays[f"{name}.p{i}"] = p
    np.savez(path, **arrays)


def load_checkpoint(path: str, nets: dict[str, MLP]) -> None:
    """Load weights into pre-built nets; architecture must match."""
    with np.load(path) as data:
        version = int(data["__version__"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        for name, net in nets.items():
            sizes = tuple(int(s) for s in data[f"{name}.sizes"])
            if sizes != net.sizes:
                raise ValueError(f"checkpoint architecture mismatch for {name}: "
                                 f"{sizes} vs {net.sizes}")
            for i, p in enumerate(net.param_list()):
                p[...] = data[f"{name}.p{i}"]
