"""Two-hidden-layer tanh MLP with hand-written backprop, and Adam."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError


def seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


class MLP:
    def __init__(self, sizes, seed=0, out_scale: float = 1.0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValidationError("layer sizes must be positive")
        self.sizes = sizes
        rng = np.random.default_rng(seed)
        self.W, self.b = [], []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            if k == len(sizes) - 2:
                w *= out_scale
            self.W.append(w)
            self.b.append(np.zeros(fan_out))

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes = list(self.sizes)
        new.W = [w.copy() for w in self.W]
        new.b = [b.copy() for b in self.b]
        return new

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [np.atleast_2d(np.asarray(x, dtype=float))]
        h = acts[0]
        last = len(self.W) - 1
        for k, (w, b) in enumerate(zip(self.W, self.b)):
            z = h @ w + b
            h = z if k == last else np.tanh(z)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, d_out: np.ndarray):
        """Gradients (dW list, db list) of sum(d_out * output)."""
        dW, db = [None] * len(self.W), [None] * len(self.b)
        g = d_out
        for k in range(len(self.W) - 1, -1, -1):
            dW[k] = acts[k].T @ g
            db[k] = g.sum(axis=0)
            if k:
                g = (g @ self.W[k].T) * (1.0 - acts[k] ** 2)
        return dW, db

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.W, self.b) for a in pair])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=float)
        k = 0
        for i in range(len(self.W)):
            n = self.W[i].size
            self.W[i] = vec[k : k + n].reshape(self.W[i].shape).copy()
            k += n
            n = self.b[i].size
            self.b[i] = vec[k : k + n].copy()
            k += n
        if k != vec.size:
            raise ValidationError("flat vector length does not match network")

    @staticmethod
    def flat_grads(dW, db) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(dW, db) for a in pair])


class Adam:
    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Descent step on ``grad`` (pass the negated gradient to ascend)."""
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mh = self.m / (1 - self.b1**self.t)
        vh = self.v / (1 - self.b2**self.t)
        return params - self.lr * mh / (np.sqrt(vh) + self.eps)


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    out = z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    return np.where(mask, out, -np.inf)


def save_mlp(net: MLP, path) -> None:
    doc = {"sizes": net.sizes, "params": [repr(float(v)) for v in net.flat()]}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_mlp(path) -> MLP:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    net = MLP(doc["sizes"])
    net.set_flat(np.array([float(v) for v in doc["params"]]))
    return net
