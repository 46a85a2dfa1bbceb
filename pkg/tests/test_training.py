"""Gradient machinery: STE, loss, backward vs finite differences, RMSProp."""

import numpy as np
import pytest

from bqn import training
from bqn.core.layers import BinaryDense, ScaleShift, SignActivation
from bqn.core.network import BinarizedNetwork
from tests.conftest import random_mixed_net, random_toy_net


class TestSteGradSign:
    def test_pass_through_region(self):
        assert training.ste_grad_sign(2.0, 0.3) == 2.0

    def test_clipped_region(self):
        assert training.ste_grad_sign(2.0, 1.5) == 0.0

    @pytest.mark.parametrize("boundary", [1.0, -1.0])
    def test_closed_interval_boundary(self, boundary):
        assert training.ste_grad_sign(3.0, boundary) == 3.0

    def test_vectorized(self):
        up = np.array([1.0, 2.0, 3.0])
        pre = np.array([0.0, -2.0, 0.5])
        assert np.array_equal(training.ste_grad_sign(up, pre), [1.0, 0.0, 3.0])


class TestLoss:
    def test_perfect_fit_is_zero(self):
        q = np.array([0.3, -0.7])
        assert training.loss(q, q) == 0.0

    def test_unit_error(self):
        assert training.loss(np.array([0.0]), np.array([1.0])) == 1.0

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            training.loss(np.zeros(0), np.zeros(0))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(40)
        q = rng.normal(size=16)
        y = rng.normal(size=16)
        grad = training.loss_grad(q, y)
        h = 1e-7
        for i in range(16):
            qp = q.copy()
            qp[i] += h
            qm = q.copy()
            qm[i] -= h
            fd = (training.loss(qp, y) - training.loss(qm, y)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_non_negative(self):
        rng = np.random.default_rng(41)
        assert training.loss(rng.normal(size=8), rng.normal(size=8)) >= 0.0


def surrogate_loss(net, x, actions, targets):
    q, _ = training.forward_train(net, x, mode="surrogate")
    rows = np.arange(len(actions))
    return training.loss(q[rows, actions], targets)


def surrogate_grads(net, x, actions, targets):
    q, tape = training.forward_train(net, x, mode="surrogate")
    rows = np.arange(len(actions))
    dq = np.zeros_like(q)
    dq[rows, actions] = training.loss_grad(q[rows, actions], targets)
    return training.backward(net, tape, dq)


def _fd_check(net, x, actions, targets, coords, h=1e-6, rel=1e-4):
    """Compare analytic gradients against central differences at given
    parameter coordinates; returns the number of coordinates checked."""
    grads = surrogate_grads(net, x, actions, targets)
    checked = 0
    for kind, idx, coord in coords:
        store = {"latent": net.latents, "scale": net.scales, "bias": net.biases}[kind]
        arr = store[idx]
        orig = arr[coord]
        if kind == "latent" and abs(abs(orig) - 1.0) < 10 * h:
            continue  # clip kink: central differences are invalid here
        arr[coord] = orig + h
        net.mark_dirty()
        up = surrogate_loss(net, x, actions, targets)
        arr[coord] = orig - h
        net.mark_dirty()
        down = surrogate_loss(net, x, actions, targets)
        arr[coord] = orig
        net.mark_dirty()
        fd = (up - down) / (2 * h)
        analytic = {
            "latent": grads.latents,
            "scale": grads.scales,
            "bias": grads.biases,
        }[kind][idx][coord]
        denom = max(abs(fd), abs(analytic))
        if denom < 1e-8:
            assert abs(fd - analytic) < 1e-8
        else:
            assert abs(fd - analytic) / denom < rel, (kind, idx, coord, fd, analytic)
        checked += 1
    return checked


def _sample_coords(net, rng, per_tensor=3):
    coords = []
    for idx, lat in net.latents.items():
        for _ in range(per_tensor):
            coords.append(
                ("latent", idx, tuple(int(rng.integers(s)) for s in lat.shape))
            )
    for idx in net.scaleshift_indices:
        coords.append(("scale", idx, (int(rng.integers(net.scales[idx].size)),)))
        coords.append(("bias", idx, (int(rng.integers(net.biases[idx].size)),)))
    return coords


class TestBackward:
    def test_matches_finite_differences_dense(self):
        rng = np.random.default_rng(42)
        total = 0
        while total < 40:
            net = random_toy_net(rng, widths=[int(rng.integers(4, 10))])
            n = 4
            x = rng.uniform(0, 1, size=(n,) + net.input_shape)
            actions = rng.integers(0, net.num_actions, size=n)
            targets = rng.normal(size=n)
            total += _fd_check(net, x, actions, targets, _sample_coords(net, rng))

    def test_matches_finite_differences_conv(self):
        rng = np.random.default_rng(43)
        total = 0
        while total < 40:
            net = random_mixed_net(rng)
            n = 3
            x = rng.uniform(0, 1, size=(n,) + net.input_shape)
            actions = rng.integers(0, net.num_actions, size=n)
            targets = rng.normal(size=n)
            total += _fd_check(net, x, actions, targets, _sample_coords(net, rng))

    def test_zero_loss_gradient_gives_zero_param_gradients(self):
        rng = np.random.default_rng(44)
        net = random_toy_net(rng)
        x = rng.uniform(0, 1, size=(2,) + net.input_shape)
        q, tape = training.forward_train(net, x, mode="binary")
        grads = training.backward(net, tape, np.zeros_like(q))
        for group in (grads.latents, grads.scales, grads.biases):
            for arr in group.values():
                assert np.all(arr == 0.0)

    def test_single_dense_layer_outer_product(self):
        layers = [BinaryDense(2, 2), ScaleShift(2)]
        net = BinarizedNetwork(
            (2,),
            layers,
            {0: np.array([[0.5, -0.5], [0.25, 0.75]])},
            {1: np.ones(2)},
            {1: np.zeros(2)},
        )
        x = np.array([[0.2, 0.8]])
        q, tape = training.forward_train(net, x, mode="binary")
        dq = np.array([[1.0, -2.0]])
        grads = training.backward(net, tape, dq)
        # STE mask is all ones (|latents| <= 1), so dW = dq^T x
        assert np.allclose(grads.latents[0], np.outer([1.0, -2.0], [0.2, 0.8]))

    def test_tape_consumed_once(self):
        rng = np.random.default_rng(45)
        net = random_toy_net(rng)
        x = rng.uniform(0, 1, size=(2,) + net.input_shape)
        q, tape = training.forward_train(net, x)
        training.backward(net, tape, np.zeros_like(q))
        with pytest.raises(training.StaleTapeError):
            training.backward(net, tape, np.zeros_like(q))

    def test_stale_tape_after_update(self):
        rng = np.random.default_rng(46)
        net = random_toy_net(rng)
        x = rng.uniform(0, 1, size=(2,) + net.input_shape)
        q, tape = training.forward_train(net, x)
        net.mark_dirty()
        with pytest.raises(training.StaleTapeError):
            training.backward(net, tape, np.zeros_like(q))


class TestRmsProp:
    def test_zero_gradient_is_fixed_point(self):
        rng = np.random.default_rng(47)
        net = random_toy_net(rng)
        state = training.RmsPropState.for_network(net)
        before = {i: lat.copy() for i, lat in net.latents.items()}
        updated = training.rmsprop_step(
            state, net.latents, {i: np.zeros_like(v) for i, v in net.latents.items()}
        )
        for idx in before:
            assert np.array_equal(updated[idx], before[idx])

    def test_constant_gradient_step_approaches_lr(self):
        # closed form: v_t -> g^2, so the step magnitude tends to
        # lr * g / (|g| + eps) ~ lr, opposing the gradient sign
        lr = 1e-2
        state = training.RmsPropState(lr=lr, rho=0.95, eps=1e-8)
        state.latent_v[0] = np.zeros(1)
        lat = {0: np.zeros(1)}
        g = {0: np.full(1, 0.37)}
        for _ in range(60):
            lat = {0: training.rmsprop_step(state, lat, g)[0]}
        before = lat[0].copy()
        lat = {0: training.rmsprop_step(state, lat, g)[0]}
        delta = before[0] - lat[0]
        assert delta == pytest.approx(lr, rel=0.05)
        assert lat[0][0] < 0.0  # moves against the positive gradient

    def test_clip_keeps_latents_in_unit_box(self):
        state = training.RmsPropState(lr=0.5, rho=0.5, eps=1e-8)
        state.latent_v[0] = np.zeros(1)
        lat = {0: np.array([1.0])}
        out = training.rmsprop_step(state, lat, {0: np.array([-4.0])})
        assert out[0][0] <= 1.0
        for _ in range(50):
            out = training.rmsprop_step(state, out, {0: np.array([-4.0])})
        assert out[0][0] <= 1.0

    def test_non_finite_gradient_raises(self):
        state = training.RmsPropState()
        state.latent_v[0] = np.zeros(2)
        with pytest.raises(training.DivergedError):
            training.rmsprop_step(
                state, {0: np.zeros(2)}, {0: np.array([1.0, np.nan])}
            )

    def test_latent_clipping_after_many_updates(self):
        rng = np.random.default_rng(48)
        net = random_toy_net(rng)
        state = training.RmsPropState.for_network(net, lr=0.3)
        x = rng.uniform(0, 1, size=(4,) + net.input_shape)
        for _ in range(30):
            actions = rng.integers(0, net.num_actions, size=4)
            targets = rng.normal(size=4) * 5
            grads = surrogate_grads(net, x, actions, targets)
            training.apply_updates(net, state, grads)
        for lat in net.latents.values():
            assert lat.max() <= 1.0 and lat.min() >= -1.0
        for idx in net.scaleshift_indices:
            assert np.all(net.scales[idx] >= 1e-6)

    def test_update_determinism(self):
        rng_a = np.random.default_rng(49)
        rng_b = np.random.default_rng(49)

        def run(rng):
            net = random_toy_net(rng)
            state = training.RmsPropState.for_network(net)
            x = rng.uniform(0, 1, size=(4,) + net.input_shape)
            for _ in range(5):
                actions = rng.integers(0, net.num_actions, size=4)
                targets = rng.normal(size=4)
                grads = surrogate_grads(net, x, actions, targets)
                training.apply_updates(net, state, grads)
            return net

        a, b = run(rng_a), run(rng_b)
        assert a.equals(b)
