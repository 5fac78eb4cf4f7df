import math

import numpy as np
import pytest

from dhrec.agents.dfm import DfmAgent, DfmModel, FieldEncoder, dfm_predict, dfm_train, pairwise_naive
from dhrec.core.types import Context, ExposureState
from dhrec.nn import central_difference, max_relative_error


def test_zero_model_predicts_half():
    m = DfmModel(6, 2)
    assert dfm_predict(m, [0, 4]) == 0.5


def test_single_interaction_hand_value():
    m = DfmModel(4, 2, factor_dim=2)
    m.v[1] = [0.5, 0.3]
    m.v[2] = [0.3, 0.5]  # <v1, v2> = 0.15 + 0.15
    assert dfm_predict(m, [1, 2]) == pytest.approx(1 / (1 + math.exp(-0.3)), abs=1e-15)
    assert dfm_predict(m, [1, 2]) == pytest.approx(0.5744, abs=1e-4)


def test_pairwise_identity_matches_naive_loop():
    g = np.random.default_rng(0)
    for _ in range(100):
        n_feat, n_fields = int(g.integers(3, 20)), int(g.integers(2, 6))
        m = DfmModel(n_feat, n_fields, factor_dim=int(g.integers(1, 9)))
        m.v = g.normal(size=m.v.shape)
        idx = g.integers(0, n_feat, n_fields)
        vals = g.normal(size=n_fields)
        z = m.logits(idx[None], vals[None])[0]
        linear = (m.w[idx] * vals).sum()  # zero here, kept for clarity
        assert abs(z - linear - pairwise_naive(m.v, idx, vals)) < 1e-10


def test_unknown_feature_index():
    m = DfmModel(4, 2)
    with pytest.raises(IndexError):
        m.predict(np.array([[0, 4]]))
    with pytest.raises(ValueError):
        m.predict(np.array([[0, 1, 2]]))


def test_separable_toy_set():
    g = np.random.default_rng(1)
    idx = np.stack([g.integers(0, 5, 400), 5 + g.integers(0, 5, 400)], axis=1)
    y = (idx[:, 0] < 2).astype(float)  # decided by the first field alone
    m = DfmModel(10, 2, factor_dim=4, hidden=8, rng=g)
    res = dfm_train(m, idx, y, epochs=200, lr=0.05)
    acc = np.mean((m.predict(idx) > 0.5) == (y == 1))
    assert acc >= 0.99
    assert len(res.losses) == 201


def test_all_zero_labels():
    g = np.random.default_rng(2)
    idx = np.stack([g.integers(0, 3, 100), 3 + g.integers(0, 3, 100)], axis=1)
    m = DfmModel(6, 2, rng=g)
    dfm_train(m, idx, np.zeros(100), epochs=200, lr=0.05)
    assert m.predict(idx).mean() < 0.1


def test_training_loss_non_increasing():
    g = np.random.default_rng(3)
    idx = np.stack([g.integers(0, 4, 300), 4 + g.integers(0, 4, 300), 8 + g.integers(0, 4, 300)], axis=1)
    y = (g.random(300) < 0.3).astype(float)
    res = dfm_train(DfmModel(12, 3, rng=g), idx, y, epochs=200, lr=0.01)
    assert all(b <= a + 1e-3 for a, b in zip(res.losses, res.losses[1:]))
    assert res.losses[-1] < res.losses[0]


def test_log_loss_gradient_matches_finite_differences():
    g = np.random.default_rng(4)
    m = DfmModel(9, 3, factor_dim=3, hidden=6, rng=g)
    m.v *= 10
    m.w += g.normal(0, 0.1, 9)
    idx = np.stack([g.integers(0, 3, 12), 3 + g.integers(0, 3, 12), 6 + g.integers(0, 3, 12)], axis=1)
    y = g.integers(0, 2, 12).astype(float)
    _, analytic = m.log_loss_and_grads(idx, y)
    numeric = central_difference(lambda: m.log_loss(idx, y), m.params())
    assert max_relative_error(analytic, numeric) < 1e-4


def test_training_input_errors():
    m = DfmModel(4, 2)
    with pytest.raises(ValueError):
        dfm_train(m, np.zeros((0, 2), dtype=int), np.zeros(0))
    with pytest.raises(ValueError):
        dfm_train(m, np.zeros((1, 2), dtype=int), np.array([0.5]))


def test_untrained_agent_picks_first_type():
    enc = FieldEncoder(8, 4, 4)
    agent = DfmAgent(enc, DfmModel(enc.n_features, enc.n_fields))
    assert agent.act(Context("u", "s")).content_type_index == 0


def test_agent_learns_always_clicked_type():
    g = np.random.default_rng(5)
    enc = FieldEncoder(8, 4, 4)
    ctxs = [Context(f"u{i}", f"s{i % 3}") for i in range(50)]
    rows, y = [], []
    for _ in range(2000):
        c = ctxs[int(g.integers(50))]
        a = int(g.integers(8))
        rows.append(enc.fields(c, a))
        y.append(1.0 if a == 3 else 0.0)
    agent = DfmAgent(enc, DfmModel(enc.n_features, enc.n_fields, rng=g))
    dfm_train(agent.model, np.array(rows), np.array(y), epochs=200, lr=0.02)
    picks = {agent.act(c).content_type_index for c in ctxs}
    assert picks == {3}
    c = ctxs[0]
    assert agent.act(c, ExposureState((5,) * 8)) == agent.act(c, ExposureState((0,) * 8))


def test_model_round_trip():
    import json

    m = DfmModel(6, 2, rng=np.random.default_rng(6))
    m.w0 = 0.3
    back = DfmModel.from_dict(json.loads(json.dumps(m.to_dict())))
    idx = np.array([[0, 3], [2, 5]])
    assert np.array_equal(back.predict(idx), m.predict(idx))


def test_training_runs_every_epoch_when_momentum_overshoots():
    # a noisy 24-feature set on which plain full-batch Adam at lr 0.01 overshoots
    g = np.random.default_rng(5)
    n = 5000
    idx = np.stack([g.integers(0, 8, n), 8 + g.integers(0, 8, n), 16 + g.integers(0, 8, n)], axis=1)
    truth = g.normal(0.0, 1.0, 24)
    y = (g.random(n) < 1.0 / (1.0 + np.exp(-truth[idx].sum(axis=1) + 2.0))).astype(float)
    res = dfm_train(DfmModel(24, 3, rng=g), idx, y, epochs=200, lr=0.01)
    assert len(res.losses) == 201
    assert all(b <= a for a, b in zip(res.losses, res.losses[1:]))
