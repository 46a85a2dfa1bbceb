"""Interval bound propagation soundness."""

import numpy as np
import pytest

from bqn.core.layers import BinaryDense, ScaleShift, SignActivation
from bqn.core.network import BinarizedNetwork, run_float
from bqn.verifier.bounds import propagate_bounds
from bqn.verifier.sets import InputSet
from tests.conftest import random_mixed_net, random_toy_net


def _trace(net, x):
    record = {}
    out = run_float(
        net.input_shape,
        net.layers,
        net.float_weights(),
        net.scales,
        net.biases,
        x,
        record=record,
    )
    return out, record


class TestPointInput:
    def test_epsilon_zero_degenerates_to_forward_trace(self):
        rng = np.random.default_rng(60)
        for _ in range(10):
            net = random_mixed_net(rng)
            x0 = rng.uniform(0, 1, size=net.input_shape)
            bounds = propagate_bounds(net, InputSet(x0, 0.0, "linf"))
            out, record = _trace(net, x0)
            lo, up = bounds.output
            assert np.allclose(lo, out, atol=1e-9)
            assert np.allclose(up, out, atol=1e-9)
            for idx, (pl, pu) in bounds.pre_sign.items():
                pre = record["sign_pre"][idx].reshape(-1)
                assert np.allclose(pl, pre, atol=1e-9)
                assert np.allclose(pu, pre, atol=1e-9)


class TestHandComputed:
    def test_single_neuron_interval(self):
        # weights (+1, +1), x0 = (0, 0), eps = 1, linf, box [-1, 1]
        layers = [BinaryDense(2, 1), ScaleShift(1)]
        net = BinarizedNetwork(
            (2,), layers, {0: np.ones((1, 2))}, {1: np.ones(1)}, {1: np.zeros(1)}
        )
        iset = InputSet(np.zeros(2), 1.0, "linf", box=(-1.0, 1.0))
        bounds = propagate_bounds(net, iset)
        lo, up = bounds.output
        assert lo[0] == pytest.approx(-2.0)
        assert up[0] == pytest.approx(2.0)

    def test_l1_first_layer_tightening(self):
        layers = [BinaryDense(4, 1), ScaleShift(1)]
        net = BinarizedNetwork(
            (4,), layers, {0: np.ones((1, 4))}, {1: np.ones(1)}, {1: np.zeros(1)}
        )
        x0 = np.full(4, 0.5)
        bounds = propagate_bounds(net, InputSet(x0, 0.1, "l1"))
        lo, up = bounds.output
        # interval alone would give 2.0 +- 0.4; the l1 budget caps at +- 0.1
        assert lo[0] == pytest.approx(1.9)
        assert up[0] == pytest.approx(2.1)


class TestMonteCarloContainment:
    @pytest.mark.parametrize("norm", ["linf", "l1"])
    def test_sampled_activations_stay_inside(self, norm):
        rng = np.random.default_rng(61)
        for _ in range(6):
            net = random_mixed_net(rng)
            x0 = rng.uniform(0.2, 0.8, size=net.input_shape)
            iset = InputSet(x0, 0.05, norm)
            bounds = propagate_bounds(net, iset)
            for _ in range(300):
                x = iset.sample(rng)
                out, record = _trace(net, x.reshape(net.input_shape))
                lo, up = bounds.output
                assert np.all(out >= lo - 1e-9) and np.all(out <= up + 1e-9)
                for idx, (pl, pu) in bounds.pre_sign.items():
                    pre = record["sign_pre"][idx].reshape(-1)
                    assert np.all(pre >= pl - 1e-9) and np.all(pre <= pu + 1e-9)

    def test_hamming_containment(self):
        rng = np.random.default_rng(62)
        for _ in range(6):
            net = random_toy_net(rng)
            x0 = rng.choice([-1.0, 1.0], size=net.input_shape)
            iset = InputSet(x0, 2, "hamming", box=(-1.0, 1.0))
            bounds = propagate_bounds(net, iset)
            for _ in range(200):
                x = iset.sample(rng)
                out, _ = _trace(net, x.reshape(net.input_shape))
                lo, up = bounds.output
                assert np.all(out >= lo - 1e-9) and np.all(out <= up + 1e-9)


class TestFixedAssignments:
    def test_fixed_phase_refines_and_contradicts(self):
        rng = np.random.default_rng(63)
        net = random_toy_net(rng, n_in=6, widths=[8], n_act=2)
        x0 = rng.uniform(0, 1, size=6)
        iset = InputSet(x0, 0.2, "linf")
        bounds = propagate_bounds(net, iset)
        sign_layer = sorted(bounds.pre_sign)[0]
        stability = bounds.stability(sign_layer)
        stable_pos = np.flatnonzero(stability == 1)
        if stable_pos.size:
            unit = int(stable_pos[0])
            # forcing a positively-stable unit negative is a contradiction
            out = propagate_bounds(
                net, iset, fixed_phases={(sign_layer, unit): -1}
            )
            assert out is None

    def test_fixed_inputs_collapse_interval(self):
        rng = np.random.default_rng(64)
        net = random_toy_net(rng, n_in=5, widths=[6], n_act=2)
        x0 = rng.uniform(0.3, 0.7, size=5)
        iset = InputSet(x0, 0.2, "linf")
        bounds = propagate_bounds(net, iset, fixed_inputs={2: 0.5})
        assert bounds.input_lo[2] == 0.5
        assert bounds.input_up[2] == 0.5

    def test_stability_codes(self):
        rng = np.random.default_rng(65)
        net = random_toy_net(rng, n_in=6, widths=[10], n_act=2)
        x0 = rng.uniform(0, 1, size=6)
        bounds = propagate_bounds(net, InputSet(x0, 0.01, "linf"))
        layer = sorted(bounds.pre_sign)[0]
        lo, up = bounds.pre_sign[layer]
        code = bounds.stability(layer)
        for u in range(lo.size):
            if lo[u] >= 0:
                assert code[u] == 1
            elif up[u] < 0:
                assert code[u] == -1
            else:
                assert code[u] == 0
