"""Feedforward Q-network with hand-rolled backprop and optimizers.

Kept dependency-free (numpy only) so the analytic gradients can be checked
against central finite differences, and so checkpoints have a stable,
documented byte layout. All math is float64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


CHECKPOINT_MAGIC = b"UAVQNET1"


class QNetwork:
    """Fully-connected ReLU network with a linear output layer.

    Parameters live in ``weights[i]`` of shape (fan_in, fan_out) and
    ``biases[i]`` of shape (fan_out,). Initialization draws every parameter
    from U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"bad parameter shapes {w.shape} / {b.shape}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @classmethod
    def initialize(cls, layer_sizes: list[int], rng: np.random.Generator) -> "QNetwork":
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, layer_sizes: list[int]) -> "QNetwork":
        weights = [np.zeros((i, o)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])]
        biases = [np.zeros(o) for o in layer_sizes[1:]]
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def clone(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def copy_from(self, other: "QNetwork") -> None:
        if self.layer_sizes != other.layer_sizes:
            raise ValueError(f"shape mismatch: {self.layer_sizes} vs {other.layer_sizes}")
        for dst, src in zip(self.parameters(), other.parameters()):
            np.copyto(dst, src)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a batch (2-D input) or a single observation (1-D)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {a.shape[1]}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        q = a @ self.weights[-1] + self.biases[-1]
        return q[0] if single else q

    def loss_and_gradients(
        self, x: np.ndarray, action_idx: np.ndarray, targets: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        """Mean squared TD error over the batch and its parameter gradients.

        Only the Q-value of each item's taken action enters the loss; the
        gradient list is ordered like ``parameters()``.
        """
        x = np.asarray(x, dtype=np.float64)
        action_idx = np.asarray(action_idx, dtype=np.intp)
        targets = np.asarray(targets, dtype=np.float64)
        batch = x.shape[0]

        pre: list[np.ndarray] = []
        acts: list[np.ndarray] = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w + b
            pre.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        q = a @ self.weights[-1] + self.biases[-1]

        taken = q[np.arange(batch), action_idx]
        err = taken - targets
        loss = float(np.mean(err * err))

        dq = np.zeros_like(q)
        dq[np.arange(batch), action_idx] = 2.0 * err / batch

        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        delta = dq
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0.0)
        return loss, grads


class Adam:
    """Adaptive-moment optimizer with bias correction and staircase LR decay."""

    def __init__(self, learning_rate: float = 0.002, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 decay_rate: float = 1.0, decay_every: int = 10000):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay_rate = decay_rate
        self.decay_every = decay_every
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    @property
    def current_lr(self) -> float:
        return self.learning_rate * self.decay_rate ** (self.t // self.decay_every)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        lr = self.current_lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    """Plain gradient descent; used as the reference update in gradient tests."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate
        self.t = 0

    @property
    def current_lr(self) -> float:
        return self.learning_rate

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


def save_network(net: QNetwork, path: str | Path) -> None:
    """Write a checkpoint; see the README for the exact byte layout.

    Layout: 8-byte magic, uint32 layer count L (weight matrices), L+1 uint32
    layer sizes, then per layer the row-major float64 weight matrix followed
    by the float64 bias vector. All integers little-endian.
    """
    sizes = net.layer_sizes
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(net.weights))]
    parts.extend(struct.pack("<I", s) for s in sizes)
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_network(path: str | Path) -> QNetwork:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a network checkpoint: bad magic {raw[:8]!r}")
    off = 8
    (n_layers,) = struct.unpack_from("<I", raw, off)
    off += 4
    sizes = list(struct.unpack_from(f"<{n_layers + 1}I", raw, off))
    off += 4 * (n_layers + 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=off)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    if off != len(raw):
        raise ValueError(f"checkpoint has {len(raw) - off} trailing bytes")
    return QNetwork(weights, biases)
