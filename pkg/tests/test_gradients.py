"""Finite-difference verification of backpropagation through time."""

import numpy as np

from stormcast.gradcheck import gradient_check
from stormcast.network import (
    backward,
    dropout_mask,
    init_params,
    mse_loss,
    stacked_forward,
)


def random_problem(rng, hidden=2, layers=2, t1=3, t2=2, batch=1):
    net = init_params(
        hidden_size=hidden,
        layer_count=layers,
        t1=t1,
        t2=t2,
        dropout=0.0,
        seed=int(rng.integers(0, 2**31)),
    )
    shape = (t1, 7) if batch == 1 else (batch, t1, 7)
    tshape = (t2,) if batch == 1 else (batch, t2)
    return net, rng.normal(size=shape), rng.normal(size=tshape) * 10.0


class TestGradientFidelity:
    def test_single_layer_network(self):
        rng = np.random.default_rng(100)
        net, x, y = random_problem(rng, hidden=3, layers=1, t1=4, t2=1)
        report = gradient_check(net, x, y)
        assert report.passed, report.failed_blocks
        assert report.max_error < 1e-4

    def test_deep_network(self):
        rng = np.random.default_rng(101)
        net, x, y = random_problem(rng, hidden=2, layers=4, t1=3, t2=2)
        report = gradient_check(net, x, y)
        assert report.passed, report.failed_blocks

    def test_batched_windows(self):
        rng = np.random.default_rng(102)
        net, x, y = random_problem(rng, hidden=2, layers=2, t1=3, t2=2, batch=3)
        report = gradient_check(net, x, y)
        assert report.passed, report.failed_blocks

    def test_through_pinned_dropout_masks(self):
        rng = np.random.default_rng(103)
        net = init_params(hidden_size=2, layer_count=3, t1=3, t2=1, dropout=0.3, seed=13)
        x = rng.normal(size=(2, 3, 7))
        y = rng.normal(size=(2, 1)) * 5.0
        masks = [
            dropout_mask((2, 3, 4), 0.3, rng),
            dropout_mask((2, 3, 4), 0.3, rng),
        ]
        report = gradient_check(net, x, y, masks=masks)
        assert report.passed, report.failed_blocks


class TestGradCheckHarness:
    def test_corrupted_block_is_flagged_alone(self):
        rng = np.random.default_rng(104)
        net, x, y = random_problem(rng)
        pred, cache = stacked_forward(net, x)
        _, dpred = mse_loss(pred, y)
        grads = backward(net, cache, dpred)
        grads["dense.b"] = grads["dense.b"] + 1.0
        report = gradient_check(net, x, y, analytic_grads=grads)
        assert report.failed_blocks == ("dense.b",)

    def test_zero_tolerance_flags_everything(self):
        rng = np.random.default_rng(105)
        net, x, y = random_problem(rng)
        report = gradient_check(net, x, y, tolerance=0.0)
        assert set(report.failed_blocks) == {name for name, _ in net.blocks()}

    def test_report_covers_every_block(self):
        rng = np.random.default_rng(106)
        net, x, y = random_problem(rng)
        report = gradient_check(net, x, y)
        assert set(report.errors) == {name for name, _ in net.blocks()}


class TestBackwardLinearity:
    def test_zero_upstream_gradient_gives_zero_grads(self):
        rng = np.random.default_rng(107)
        net, x, _ = random_problem(rng, batch=2)
        _, cache = stacked_forward(net, x)
        grads = backward(net, cache, np.zeros((2, 2)))
        for name, g in grads.items():
            assert np.array_equal(g, np.zeros_like(g)), name

    def test_batch_gradient_is_mean_of_per_sample(self):
        rng = np.random.default_rng(108)
        net, x, y = random_problem(rng, batch=2)
        pred, cache = stacked_forward(net, x)
        _, dpred = mse_loss(pred, y)
        batch_grads = backward(net, cache, dpred)

        per_sample = []
        for b in range(2):
            pred_b, cache_b = stacked_forward(net, x[b])
            _, dpred_b = mse_loss(pred_b, y[b])
            per_sample.append(backward(net, cache_b, dpred_b))
        for name, g in batch_grads.items():
            mean = (per_sample[0][name] + per_sample[1][name]) / 2.0
            np.testing.assert_allclose(g, mean, atol=1e-12)
