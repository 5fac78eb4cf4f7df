"""Small feed-forward networks with hand-written backprop, plus Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of
shape ``(B, fan_in)`` maps through ``x @ W + b``.  Everything is float64;
gradient checks depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

PROB_FLOOR = 1e-8
LOG_FLOOR = float(np.log(PROB_FLOOR))


class ShapeError(ValueError):
    pass


class Mlp:
    """ReLU multilayer perceptron with an identity or log-softmax head."""

    def __init__(
        self,
        sizes: Sequence[int],
        head: str = "identity",
        rng: Optional[np.random.Generator] = None,
        out_scale: float = 1.0,
    ):
        if len(sizes) < 2:
            raise ShapeError("need at least input and output sizes")
        if head not in ("identity", "log_softmax"):
            raise ValueError(f"unknown head {head!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                # He init for ReLU layers; the output layer is shrunk by out_scale
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
                if i == len(self.sizes) - 2:
                    w *= out_scale
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Mlp":
        m = Mlp.__new__(Mlp)
        m.sizes, m.head = self.sizes, self.head
        m.weights = [w.copy() for w in self.weights]
        m.biases = [b.copy() for b in self.biases]
        return m

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError(f"input has {x.shape[-1]} features, model expects {self.sizes[0]}")
        return x

    def forward_raw(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Pre-head output and the activations backward() needs."""
        x = self._check(x)
        cache = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < self.n_layers - 1:
                h = np.maximum(z, 0.0)
                cache.append(h)
            else:
                h = z
        return h, cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_raw(x)
        if self.head == "log_softmax":
            out, _, _ = log_softmax_floor(out)
        return out

    def backward(self, cache: list, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(grad_out * raw_output)`` w.r.t. params and input.

        ``grad_out`` is taken with respect to the pre-head output; use
        :func:`log_softmax_floor_backward` first for the policy head.
        Returns ``(grads in params() order, grad wrt input)``.
        """
        g = np.asarray(grad_out, dtype=float)
        if g.shape[-1] != self.sizes[-1]:
            raise ShapeError(f"upstream gradient has {g.shape[-1]} columns, expected {self.sizes[-1]}")
        batched = g.ndim == 2
        grads: list[np.ndarray] = [None] * (2 * self.n_layers)
        for i in range(self.n_layers - 1, -1, -1):
            h = cache[i]
            if batched:
                grads[2 * i] = h.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            else:
                grads[2 * i] = np.outer(h, g)
                grads[2 * i + 1] = g.copy()
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (cache[i] > 0.0)
        return grads, g

    def set_params(self, flat: Sequence[np.ndarray]) -> None:
        for i in range(self.n_layers):
            self.weights[i] = np.array(flat[2 * i], dtype=float)
            self.biases[i] = np.array(flat[2 * i + 1], dtype=float)

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "head": self.head,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        m = cls(d["sizes"], head=d["head"])
        for i, (w, b) in enumerate(zip(d["weights"], d["biases"])):
            w = np.asarray(w, dtype=float).reshape(m.sizes[i], m.sizes[i + 1])
            b = np.asarray(b, dtype=float).reshape(m.sizes[i + 1])
            m.weights[i], m.biases[i] = w, b
        if not all(np.all(np.isfinite(p)) for p in m.params()):
            raise ValueError("checkpoint contains non-finite parameters")
        return m


def log_softmax_floor(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log-probabilities with probabilities floored at 1e-8.

    Returns ``(log_probs, probs, unclamped_mask)``; ``probs`` are the exact
    softmax values (they sum to one).
    """
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    probs = np.exp(logp)
    mask = logp > LOG_FLOOR
    return np.where(mask, logp, LOG_FLOOR), probs, mask


def log_softmax_floor_backward(probs: np.ndarray, mask: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Map a gradient w.r.t. floored log-probs back to the logits."""
    gm = g * mask
    return gm - probs * gm.sum(axis=-1, keepdims=True)


@dataclass
class Adam:
    """Bias-corrected adaptive-moment optimizer over a fixed parameter list."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place."""
        if len(params) != len(grads):
            raise ShapeError("parameter and gradient lists differ in length")
        for p, g in zip(params, grads):
            if p.shape != np.shape(g):
                raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient passed to optimizer")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "t": self.t,
            "m": [a.tolist() for a in self.m],
            "v": [a.tolist() for a in self.v],
        }


def polyak_update(target: Mlp, source: Mlp, tau: float) -> None:
    for tp, sp in zip(target.params(), source.params()):
        tp *= 1.0 - tau
        tp += tau * sp


def central_difference(f, params: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Numerical gradient of scalar ``f()`` w.r.t. each array in ``params`` (mutated and restored)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            fp = f()
            flat[j] = old - h
            fm = f()
            flat[j] = old
            gflat[j] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray], floor: float = 1e-8) -> float:
    """Largest elementwise relative error, skipping entries where both sides are below ``floor``."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.ravel(a), np.ravel(n)
        keep = (np.abs(a) >= floor) | (np.abs(n) >= floor)
        if not keep.any():
            continue
        rel = np.abs(a[keep] - n[keep]) / np.maximum(np.abs(a[keep]), np.abs(n[keep]))
        worst = max(worst, float(rel.max()))
    return worst
