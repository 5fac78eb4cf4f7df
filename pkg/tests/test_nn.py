import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhrec.gradcheck import min_preactivation
from dhrec.nn import (
    Adam,
    Mlp,
    ShapeError,
    central_difference,
    log_softmax_floor,
    max_relative_error,
    polyak_update,
)


def hand_forward(net: Mlp, x):
    """Element-by-element forward pass with plain Python loops."""
    h = list(x)
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for j in range(w.shape[1]):
            z = b[j]
            for i in range(w.shape[0]):
                z += h[i] * w[i, j]
            out.append(z if li == net.n_layers - 1 else max(z, 0.0))
        h = out
    return np.array(h)


def test_zero_weights_zero_output():
    net = Mlp([4, 6, 3])
    assert np.array_equal(net.forward(np.ones((2, 4))), np.zeros((2, 3)))


def test_identity_linear_layer():
    net = Mlp([3, 3])
    net.weights[0] = np.eye(3)
    x = np.array([[0.5, -2.0, 3.0]])
    assert np.array_equal(net.forward(x), x)


def test_forward_matches_hand_computation():
    g = np.random.default_rng(0)
    net = Mlp([5, 7, 4, 3], rng=g)
    for b in net.biases:
        b += g.normal(size=b.shape)
    x = g.normal(size=5)
    assert np.allclose(net.forward(x[None])[0], hand_forward(net, x), atol=1e-12)


def test_forward_is_pure():
    net = Mlp([4, 8, 2], rng=np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(3, 4))
    before = [p.copy() for p in net.params()]
    a, b = net.forward(x), net.forward(x)
    assert np.array_equal(a, b)
    assert all(np.array_equal(p, q) for p, q in zip(before, net.params()))


def test_input_shape_mismatch():
    with pytest.raises(ShapeError):
        Mlp([4, 2]).forward(np.ones((1, 5)))


def test_zero_upstream_gradient():
    net = Mlp([4, 8, 2], rng=np.random.default_rng(3))
    out, cache = net.forward_raw(np.ones((3, 4)))
    grads, dx = net.backward(cache, np.zeros_like(out))
    assert all(np.all(g == 0) for g in grads) and np.all(dx == 0)


def test_linear_least_squares_gradient():
    g = np.random.default_rng(4)
    X, y = g.normal(size=(20, 3)), g.normal(size=20)
    net = Mlp([3, 1], rng=g)
    out, cache = net.forward_raw(X)
    resid = out[:, 0] - y
    grads, _ = net.backward(cache, resid[:, None] / len(y))  # loss 0.5 * mean(resid^2)
    w = net.weights[0][:, 0]
    b = net.biases[0][0]
    assert np.allclose(grads[0][:, 0], X.T @ (X @ w + b - y) / len(y), atol=1e-14)
    assert np.isclose(grads[1][0], np.mean(X @ w + b - y), atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(1, 12), min_size=1, max_size=3), st.sampled_from(["identity", "log_softmax"]))
def test_backward_matches_finite_differences(seed, hidden, head):
    g = np.random.default_rng(seed)
    sizes = [4] + hidden + [3]
    net = Mlp(sizes, head=head, rng=g)
    for b in net.biases:
        b += g.normal(0, 0.1, size=b.shape)
    assert net.n_params() <= 1000
    for _ in range(1000):
        x = g.normal(size=(5, 4))
        if min_preactivation(net, x) > 1e-3:
            break
    else:
        pytest.skip("no kink-free input found")
    c = g.normal(size=(5, 3))

    def loss():
        return float((net.forward(x) * c).sum())

    out, cache = net.forward_raw(x)
    if head == "log_softmax":
        _, p, mask = log_softmax_floor(out)
        from dhrec.nn import log_softmax_floor_backward

        gz = log_softmax_floor_backward(p, mask, c)
    else:
        gz = c
    grads, _ = net.backward(cache, gz)
    assert max_relative_error(grads, central_difference(loss, net.params())) < 1e-4


def test_log_softmax_floor():
    logp, p, mask = log_softmax_floor(np.array([[0.0, -100.0, 0.0]]))
    assert abs(p.sum() - 1.0) < 1e-12
    assert logp[0, 1] == pytest.approx(np.log(1e-8))
    assert list(mask[0]) == [True, False, True]


def test_log_softmax_head_outputs_log_probabilities():
    net = Mlp([3, 5, 4], head="log_softmax", rng=np.random.default_rng(5))
    p = np.exp(net.forward(np.random.default_rng(6).normal(size=(7, 3))))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


# -- Adam


def test_adam_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0])]
    Adam(lr=0.1).step(p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -2.0])


def test_adam_first_step_is_lr_times_sign():
    p = [np.array([1.0, 1.0, 1.0])]
    g = np.array([0.3, -5.0, 1e-3])
    Adam(lr=0.01).step(p, [g])
    # t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    expected = 1.0 - 0.01 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p[0], expected, atol=1e-15)
    assert np.allclose(np.abs(p[0] - 1.0), 0.01, rtol=1e-4)


def test_adam_quadratic_bowl():
    g = np.random.default_rng(7)
    a = np.diag([1.0, 3.0, 0.5])
    x = [g.normal(size=3)]
    opt = Adam(lr=0.05)
    for _ in range(500):
        opt.step(x, [a @ x[0]])
    assert 0.5 * x[0] @ a @ x[0] < 1e-6


def test_adam_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        Adam().step([np.zeros(2)], [np.array([np.nan, 0.0])])
    with pytest.raises(ShapeError):
        Adam().step([np.zeros(2)], [np.zeros(3)])


def test_polyak_update():
    a = Mlp([2, 2], rng=np.random.default_rng(8))
    b = Mlp([2, 2])
    w_a = a.weights[0].copy()
    polyak_update(b, a, 0.25)
    assert np.allclose(b.weights[0], 0.25 * w_a)


def test_checkpoint_round_trip_is_exact():
    import json

    net = Mlp([3, 5, 2], head="log_softmax", rng=np.random.default_rng(9))
    back = Mlp.from_dict(json.loads(json.dumps(net.to_dict())))
    assert back.sizes == net.sizes and back.head == net.head
    assert all(np.array_equal(p, q) for p, q in zip(net.params(), back.params()))
