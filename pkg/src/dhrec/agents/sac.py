"""Discrete-action soft actor-critic.

Expectations over the action set are taken in closed form instead of
sampling, so both losses are deterministic functions of the batch:

    critic target  y = r + gamma * (1 - done) * sum_a' pi(a'|s') *
                       (min(Q1', Q2')(s', a') - alpha * log pi(a'|s'))
    policy loss    L = mean_s sum_a pi(a|s) * (alpha * log pi(a|s) - min(Q1, Q2)(s, a))

The temperature is fixed for the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from dhrec.agents.features import StateEncoder
from dhrec.agents.replay import Batch
from dhrec.core.types import Action, Context, ExposureState
from dhrec.nn import Adam, Mlp, log_softmax_floor, log_softmax_floor_backward, polyak_update


@dataclass
class LossReport:
    critic1: float
    critic2: float
    policy: float
    entropy: float


class SacAgent:
    def __init__(
        self,
        encoder: StateEncoder,
        hidden: int = 64,
        gamma: float = 0.7,
        alpha: float = 0.05,
        lr_actor: float = 3e-4,
        lr_critic: float = 1e-3,
        tau: float = 0.01,
        rng: Optional[np.random.Generator] = None,
    ):
        if rng is None:
            rng = np.random.default_rng(0)
        self.encoder = encoder
        self.n_actions = encoder.n_types
        self.gamma = gamma
        self.alpha = alpha
        self.tau = tau
        sizes = [encoder.dim, hidden, hidden, self.n_actions]
        self.policy = Mlp(sizes, head="log_softmax", rng=rng, out_scale=0.01)
        self.q1 = Mlp(sizes, rng=rng, out_scale=0.1)
        self.q2 = Mlp(sizes, rng=rng, out_scale=0.1)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.opt_policy = Adam(lr=lr_actor)
        self.opt_q1 = Adam(lr=lr_critic)
        self.opt_q2 = Adam(lr=lr_critic)

    # -- acting ---------------------------------------------------------------

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        z, _ = self.policy.forward_raw(x)
        _, p, _ = log_softmax_floor(z)
        return p

    def entropy(self, x: np.ndarray) -> np.ndarray:
        z, _ = self.policy.forward_raw(x)
        logp, p, _ = log_softmax_floor(z)
        return -(p * logp).sum(axis=-1)

    def scores(self, contexts: Sequence[Context], counts: np.ndarray) -> np.ndarray:
        return self.probabilities(self.encoder.encode_batch(contexts, counts))

    def act(
        self,
        context: Context,
        state: ExposureState,
        explore: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Action:
        p = self.probabilities(self.encoder.encode(context, state.counts))
        return Action(choose(p, explore, rng))

    def act_batch(self, x: np.ndarray, rngs: Sequence[np.random.Generator], explore: bool) -> list[int]:
        p = self.probabilities(x)
        return [choose(row, explore, g) for row, g in zip(p, rngs)]

    # -- losses -----------------------------------------------------------------

    def critic_target(self, batch: Batch) -> np.ndarray:
        z, _ = self.policy.forward_raw(batch.next_x)
        logp, p, _ = log_softmax_floor(z)
        q_next = np.minimum(self.q1_target.forward(batch.next_x), self.q2_target.forward(batch.next_x))
        soft_v = (p * (q_next - self.alpha * logp)).sum(axis=1)
        return batch.reward + self.gamma * (1.0 - batch.done) * soft_v

    def critic_loss_and_grads(self, critic: Mlp, batch: Batch, target: np.ndarray) -> tuple[float, list]:
        """0.5 * mean squared error of Q(s, a) against a fixed target."""
        q, cache = critic.forward_raw(batch.x)
        rows = np.arange(len(batch))
        err = q[rows, batch.action] - target
        loss = 0.5 * float(np.mean(err**2))
        g = np.zeros_like(q)
        g[rows, batch.action] = err / len(batch)
        grads, _ = critic.backward(cache, g)
        return loss, grads

    def policy_loss_and_grads(self, x: np.ndarray) -> tuple[float, list, float]:
        z, cache = self.policy.forward_raw(x)
        logp, p, mask = log_softmax_floor(z)
        q = np.minimum(self.q1.forward(x), self.q2.forward(x))
        f = self.alpha * logp - q
        n = len(x)
        loss = float((p * f).sum(axis=1).mean())
        # d/dz of sum_a p_a f_a, holding log p fixed ...
        gz = p * (f - (p * f).sum(axis=1, keepdims=True))
        # ... plus the path through log p
        gz += log_softmax_floor_backward(p, mask, self.alpha * p)
        grads, _ = self.policy.backward(cache, gz / n)
        entropy = float(-(p * logp).sum(axis=1).mean())
        return loss, grads, entropy

    # -- learning ---------------------------------------------------------------

    def learn(self, batch: Batch) -> LossReport:
        if len(batch) == 0:
            raise ValueError("empty batch")
        y = self.critic_target(batch)
        l1, g1 = self.critic_loss_and_grads(self.q1, batch, y)
        l2, g2 = self.critic_loss_and_grads(self.q2, batch, y)
        lp, gp, ent = self.policy_loss_and_grads(batch.x)
        if not all(np.isfinite(v) for v in (l1, l2, lp, ent)):
            raise FloatingPointError(
                f"non-finite SAC loss: critic1={l1} critic2={l2} policy={lp} entropy={ent}"
            )
        self.opt_q1.step(self.q1.params(), g1)
        self.opt_q2.step(self.q2.params(), g2)
        self.opt_policy.step(self.policy.params(), gp)
        if self.opt_q1.lr > 0 or self.opt_q2.lr > 0:
            polyak_update(self.q1_target, self.q1, self.tau)
            polyak_update(self.q2_target, self.q2, self.tau)
        return LossReport(l1, l2, lp, ent)

    # -- persistence --------------------------------------------------------------

    def networks(self) -> dict[str, Mlp]:
        return {
            "policy": self.policy,
            "q1": self.q1,
            "q2": self.q2,
            "q1_target": self.q1_target,
            "q2_target": self.q2_target,
        }

    def hyper(self) -> dict:
        return {"gamma": self.gamma, "alpha": self.alpha, "tau": self.tau}

    @classmethod
    def restore(cls, encoder: StateEncoder, nets: dict[str, Mlp], hyper: dict) -> "SacAgent":
        agent = cls.__new__(cls)
        agent.encoder = encoder
        agent.n_actions = encoder.n_types
        agent.gamma, agent.alpha, agent.tau = hyper["gamma"], hyper["alpha"], hyper["tau"]
        for name, net in nets.items():
            setattr(agent, name, net)
        agent.opt_policy = Adam(lr=0.0)
        agent.opt_q1 = Adam(lr=0.0)
        agent.opt_q2 = Adam(lr=0.0)
        return agent


def choose(p: np.ndarray, explore: bool, rng: Optional[np.random.Generator]) -> int:
    """Sample from ``p`` when exploring, otherwise argmax with lowest-index ties."""
    if not explore:
        return int(np.argmax(p))
    if rng is None:
        raise ValueError("exploration needs a random generator")
    k = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(k, len(p) - 1)


def policy_entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())
