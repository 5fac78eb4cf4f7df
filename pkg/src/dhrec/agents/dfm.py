"""DeepFM click/transaction predictor used as the static baseline.

Inputs are one-hot fields (user bucket, store bucket, content type).  The
score is

    logit = w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j + mlp(concat_f v_f x_f)

with the pairwise term computed as 0.5 * sum_d[(sum_i v_id x_i)^2 - sum_i v_id^2 x_i^2].
The baseline sees no exposure counts, so its choice never changes within a
session.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from dhrec.core.rng import stable_hash
from dhrec.core.types import Action, Context, ExposureState
from dhrec.nn import Adam, Mlp


class DfmModel:
    def __init__(
        self,
        n_features: int,
        n_fields: int,
        factor_dim: int = 8,
        hidden: int = 32,
        rng: Optional[np.random.Generator] = None,
    ):
        self.n_features = n_features
        self.n_fields = n_fields
        self.factor_dim = factor_dim
        self.bias = np.zeros(1)
        self.w = np.zeros(n_features)
        if rng is None:
            self.v = np.zeros((n_features, factor_dim))
        else:
            self.v = rng.normal(0.0, 0.05, size=(n_features, factor_dim))
        self.deep = Mlp([n_fields * factor_dim, hidden, hidden, 1], rng=rng, out_scale=0.1)

    @property
    def w0(self) -> float:
        return float(self.bias[0])

    @w0.setter
    def w0(self, value: float) -> None:
        self.bias[0] = value

    def params(self) -> list[np.ndarray]:
        return [self.bias, self.w, self.v] + self.deep.params()

    def _check(self, idx: np.ndarray, vals: Optional[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        if idx.shape[1] != self.n_fields:
            raise ValueError(f"expected {self.n_fields} fields, got {idx.shape[1]}")
        if idx.min(initial=0) < 0 or idx.max(initial=0) >= self.n_features:
            raise IndexError(f"feature index outside [0, {self.n_features})")
        vals = np.ones(idx.shape) if vals is None else np.atleast_2d(np.asarray(vals, dtype=float))
        return idx, vals

    def logits(self, idx: np.ndarray, vals: Optional[np.ndarray] = None, return_cache: bool = False):
        idx, vals = self._check(idx, vals)
        emb = self.v[idx] * vals[..., None]  # (B, F, d)
        linear = self.w0 + (self.w[idx] * vals).sum(axis=1)
        summed = emb.sum(axis=1)
        pair = 0.5 * (summed**2 - (emb**2).sum(axis=1)).sum(axis=1)
        deep_out, cache = self.deep.forward_raw(emb.reshape(len(idx), -1))
        z = linear + pair + deep_out[:, 0]
        if return_cache:
            return z, (idx, vals, emb, summed, cache)
        return z

    def predict(self, idx: np.ndarray, vals: Optional[np.ndarray] = None) -> np.ndarray:
        return expit(self.logits(idx, vals))

    def log_loss(self, idx, labels, vals=None) -> float:
        z = self.logits(idx, vals)
        y = np.asarray(labels, dtype=float)
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def log_loss_and_grads(self, idx, labels, vals=None) -> tuple[float, list[np.ndarray]]:
        z, (idx, vals, emb, summed, cache) = self.logits(idx, vals, return_cache=True)
        y = np.asarray(labels, dtype=float)
        n = len(y)
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        g = (expit(z) - y) / n  # dL/dz
        g_w0 = np.array([g.sum()])
        g_w = np.zeros_like(self.w)
        np.add.at(g_w, idx, g[:, None] * vals)
        deep_grads, g_in = self.deep.backward(cache, g[:, None])
        g_emb = g[:, None, None] * (summed[:, None, :] - emb) + g_in.reshape(emb.shape)
        g_v = np.zeros_like(self.v)
        np.add.at(g_v, idx, g_emb * vals[..., None])
        return loss, [g_w0, g_w, g_v] + deep_grads

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_fields": self.n_fields,
            "factor_dim": self.factor_dim,
            "w0": self.w0,
            "w": self.w.tolist(),
            "v": self.v.tolist(),
            "deep": self.deep.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DfmModel":
        m = cls(d["n_features"], d["n_fields"], d["factor_dim"])
        m.w0 = float(d["w0"])
        m.w = np.asarray(d["w"], dtype=float)
        m.v = np.asarray(d["v"], dtype=float).reshape(m.n_features, m.factor_dim)
        m.deep = Mlp.from_dict(d["deep"])
        return m


def pairwise_naive(v: np.ndarray, idx: Sequence[int], vals: Sequence[float]) -> float:
    """Reference O(m^2 d) pairwise interaction sum."""
    total = 0.0
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            total += float(v[idx[a]] @ v[idx[b]]) * vals[a] * vals[b]
    return total


def dfm_predict(model: DfmModel, idx: Sequence[int], vals: Optional[Sequence[float]] = None) -> float:
    return float(model.predict(np.asarray(idx)[None, :], None if vals is None else np.asarray(vals)[None, :])[0])


@dataclass
class TrainResult:
    model: DfmModel
    losses: list[float] = field(default_factory=list)


def dfm_train(
    model: DfmModel,
    idx: np.ndarray,
    labels: np.ndarray,
    epochs: int = 200,
    lr: float = 0.01,
    vals: Optional[np.ndarray] = None,
) -> TrainResult:
    """Full-batch Adam on mean log-loss; ``losses[e]`` is the loss before epoch ``e``'s step.

    A step that would raise the training loss is undone and retried with half
    the step size.  If no step size helps (momentum pointing uphill), the first
    moment is dropped, which leaves a preconditioned gradient step that must
    descend.  Halving applies to that epoch only, so the curve never goes up.
    """
    labels = np.asarray(labels, dtype=float)
    if len(labels) == 0:
        raise ValueError("empty training set")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("labels must be 0 or 1")
    opt = Adam(lr=lr)
    params = model.params()
    loss, grads = model.log_loss_and_grads(idx, labels, vals)
    losses = []

    def restore(saved, drop_momentum):
        for p, old in zip(params, saved[0]):
            p[...] = old
        opt.m = [np.zeros_like(m) if drop_momentum else m.copy() for m in saved[1]]
        opt.v = [v.copy() for v in saved[2]]
        opt.t = saved[3]

    for _ in range(epochs):
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite DFM loss {loss}")
        losses.append(loss)
        saved = ([p.copy() for p in params], [m.copy() for m in opt.m], [v.copy() for v in opt.v], opt.t)
        accepted = False
        for drop_momentum in (False, True):
            if drop_momentum:
                restore(saved, True)
            opt.lr = lr
            for _ in range(30):
                opt.step(params, grads)
                new_loss, new_grads = model.log_loss_and_grads(idx, labels, vals)
                if new_loss <= loss:
                    accepted = True
                    break
                restore(saved, drop_momentum)
                opt.lr *= 0.5
            if accepted:
                break
        opt.lr = lr
        if not accepted:
            restore(saved, False)
            break  # no step lowers the loss: converged to float precision
        loss, grads = new_loss, new_grads
    losses.append(loss)
    return TrainResult(model, losses)


class FieldEncoder:
    """Maps (context, content type) to the three one-hot field indices."""

    def __init__(self, n_types: int, user_buckets: int = 8, store_buckets: int = 8):
        self.n_types = n_types
        self.user_buckets = user_buckets
        self.store_buckets = store_buckets

    @property
    def n_features(self) -> int:
        return self.user_buckets + self.store_buckets + self.n_types

    n_fields = 3

    def fields(self, context: Context, action: int) -> list[int]:
        return [
            stable_hash(context.user_id, self.user_buckets),
            self.user_buckets + stable_hash(context.store_id, self.store_buckets),
            self.user_buckets + self.store_buckets + action,
        ]

    def all_actions(self, context: Context) -> np.ndarray:
        return np.array([self.fields(context, a) for a in range(self.n_types)])

    def to_dict(self) -> dict:
        return {"n_types": self.n_types, "user_buckets": self.user_buckets, "store_buckets": self.store_buckets}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldEncoder":
        return cls(d["n_types"], d["user_buckets"], d["store_buckets"])


class DfmAgent:
    def __init__(self, encoder: FieldEncoder, model: DfmModel):
        self.encoder = encoder
        self.model = model

    def scores(self, contexts: Sequence[Context], counts=None) -> np.ndarray:
        idx = np.concatenate([self.encoder.all_actions(c) for c in contexts])
        return self.model.predict(idx).reshape(len(contexts), self.encoder.n_types)

    def act(self, context: Context, state: Optional[ExposureState] = None) -> Action:
        # static: the exposure state is deliberately ignored
        return Action(int(np.argmax(self.scores([context])[0])))
