"""Finite-difference checks of the analytic gradients used in training.

Three losses are checked per seed on small random models (< 1000
parameters each): the SAC critic regression loss, the SAC policy loss and
the DFM log-loss.  Inputs are redrawn until every hidden pre-activation is
at least ``margin`` away from the rectifier kink, so central differences
never straddle it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dhrec.agents.dfm import DfmModel
from dhrec.agents.features import StateEncoder
from dhrec.agents.replay import Batch
from dhrec.agents.sac import SacAgent
from dhrec.core.rng import substream
from dhrec.nn import Mlp, central_difference, max_relative_error

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class GradcheckResult:
    seed: int
    critic: float
    policy: float
    dfm: float
    n_params: dict[str, int]

    @property
    def worst(self) -> float:
        return max(self.critic, self.policy, self.dfm)

    @property
    def passed(self) -> bool:
        return self.worst < TOLERANCE


def min_preactivation(net: Mlp, x: np.ndarray) -> float:
    """Smallest |pre-activation| over the hidden layers for inputs ``x``."""
    h = np.atleast_2d(x)
    worst = np.inf
    for w, b in list(zip(net.weights, net.biases))[:-1]:
        z = h @ w + b
        worst = min(worst, float(np.abs(z).min()))
        h = np.maximum(z, 0.0)
    return worst


def _safe_rows(nets: list[Mlp], draw, margin: float, tries: int = 1000) -> np.ndarray:
    for _ in range(tries):
        x = draw()
        if all(min_preactivation(n, x) > margin for n in nets):
            return x
    raise RuntimeError("could not draw inputs away from rectifier kinks")


def check_sac(seed: int, batch: int = 8, hidden: int = 12, margin: float = 1e-3) -> tuple[float, float, int, int]:
    g = substream(seed, 101)
    enc = StateEncoder(n_types=4, user_buckets=2, store_buckets=2, count_cap=3)
    agent = SacAgent(enc, hidden=hidden, gamma=0.9, alpha=0.3, rng=g)
    # perturb targets and heads so nothing sits at a symmetric point
    for net in (agent.q1, agent.q2, agent.q1_target, agent.q2_target):
        net.weights[-1] += g.normal(0, 0.3, size=net.weights[-1].shape)
    agent.policy.weights[-1] += g.normal(0, 0.3, size=agent.policy.weights[-1].shape)
    nets = [agent.policy, agent.q1, agent.q2, agent.q1_target, agent.q2_target]
    x = _safe_rows(nets, lambda: g.random((batch, enc.dim)), margin)
    nx = _safe_rows(nets, lambda: g.random((batch, enc.dim)), margin)
    b = Batch(x, g.integers(0, enc.n_types, batch), g.integers(0, 2, batch).astype(float), nx, (g.random(batch) < 0.3).astype(float))

    target = agent.critic_target(b)
    _, analytic = agent.critic_loss_and_grads(agent.q1, b, target)
    numeric = central_difference(lambda: agent.critic_loss_and_grads(agent.q1, b, target)[0], agent.q1.params(), STEP)
    critic_err = max_relative_error(analytic, numeric)

    _, analytic, _ = agent.policy_loss_and_grads(x)
    numeric = central_difference(lambda: agent.policy_loss_and_grads(x)[0], agent.policy.params(), STEP)
    policy_err = max_relative_error(analytic, numeric)
    return critic_err, policy_err, agent.q1.n_params(), agent.policy.n_params()


def check_dfm(seed: int, n: int = 16, margin: float = 1e-3) -> tuple[float, int]:
    g = substream(seed, 102)
    n_features, n_fields = 12, 3
    model = DfmModel(n_features, n_fields, factor_dim=4, hidden=8, rng=g)
    model.v *= 10.0  # the default init scale leaves pairwise gradients tiny
    model.w += g.normal(0, 0.1, size=model.w.shape)
    model.w0 = 0.1

    def draw():
        idx = np.stack([g.integers(0, 4, n), 4 + g.integers(0, 4, n), 8 + g.integers(0, 4, n)], axis=1)
        return idx

    for _ in range(1000):
        idx = draw()
        emb = model.v[idx].reshape(n, -1)
        if min_preactivation(model.deep, emb) > margin:
            break
    else:
        raise RuntimeError("could not draw DFM inputs away from rectifier kinks")
    labels = g.integers(0, 2, n).astype(float)
    _, analytic = model.log_loss_and_grads(idx, labels)
    numeric = central_difference(lambda: model.log_loss(idx, labels), model.params(), STEP)
    n_params = sum(p.size for p in model.params())
    return max_relative_error(analytic, numeric), n_params


def run_gradcheck(seed: int) -> GradcheckResult:
    critic, policy, n_q, n_pi = check_sac(seed)
    dfm, n_dfm = check_dfm(seed)
    return GradcheckResult(seed, critic, policy, dfm, {"critic": n_q, "policy": n_pi, "dfm": n_dfm})
