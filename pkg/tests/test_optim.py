import math

import numpy as np
import pytest

from stormcast.errors import ShapeError
from stormcast.network import init_params
from stormcast.optim import AdamState, adam_step


def tiny_net():
    return init_params(hidden_size=2, layer_count=1, t1=2, t2=1, dropout=0.0, seed=0)


def zero_grads(net):
    return {name: np.zeros_like(block) for name, block in net.blocks()}


def adam_oracle(theta, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    """Hand-unrolled Adam on one scalar across len(grads) steps."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta -= lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


class TestAdam:
    def test_zero_gradient_is_identity(self):
        net = tiny_net()
        before = {name: block.copy() for name, block in net.blocks()}
        state = AdamState.for_params(net)
        for _ in range(5):
            adam_step(state, net, zero_grads(net))
        assert state.t == 5
        for name, block in net.blocks():
            assert np.array_equal(block, before[name])

    def test_first_step_magnitude(self):
        # m_hat = g, v_hat = g^2 on step one, so the move is ~lr regardless of g
        net = tiny_net()
        state = AdamState.for_params(net, learning_rate=0.01)
        grads = zero_grads(net)
        before = net.dense_b[0]
        grads["dense.b"] = np.array([0.1])
        adam_step(state, net, grads)
        assert before - net.dense_b[0] == pytest.approx(0.01, abs=1e-6)

    def test_two_steps_match_hand_unroll(self):
        net = tiny_net()
        state = AdamState.for_params(net, learning_rate=0.01)
        g = 0.37
        before = net.dense_b[0]
        for _ in range(2):
            grads = zero_grads(net)
            grads["dense.b"] = np.array([g])
            adam_step(state, net, grads)
        want = adam_oracle(before, [g, g])
        assert net.dense_b[0] == pytest.approx(want, abs=1e-12)

    def test_longer_unroll_with_varying_gradient(self):
        net = tiny_net()
        state = AdamState.for_params(net, learning_rate=0.02)
        rng = np.random.default_rng(4)
        gs = rng.normal(size=7)
        before = net.dense_b[0]
        for g in gs:
            grads = zero_grads(net)
            grads["dense.b"] = np.array([g])
            adam_step(state, net, grads)
        want = adam_oracle(before, list(gs), lr=0.02)
        assert net.dense_b[0] == pytest.approx(want, abs=1e-12)

    def test_zero_learning_rate_freezes_parameters(self):
        net = tiny_net()
        state = AdamState.for_params(net, learning_rate=0.0)
        before = {name: block.copy() for name, block in net.blocks()}
        grads = {name: np.ones_like(block) for name, block in net.blocks()}
        adam_step(state, net, grads)
        for name, block in net.blocks():
            assert np.array_equal(block, before[name])

    def test_shape_mismatch_rejected(self):
        net = tiny_net()
        state = AdamState.for_params(net)
        grads = zero_grads(net)
        grads["dense.b"] = np.zeros(3)
        with pytest.raises(ShapeError):
            adam_step(state, net, grads)
        with pytest.raises(ShapeError):
            adam_step(AdamState.for_params(net), net, {})
