"""Branch-and-bound solver: oracle agreement, soundness, monotonicity."""

import itertools

import numpy as np
import pytest

from bqn.verifier.bounds import propagate_bounds
from bqn.verifier.encode import encode
from bqn.verifier.robustness import check_counterexample
from bqn.verifier.sets import Counterexample, Holds, InputSet, OutputProperty, Timeout
from bqn.verifier.solve import solve
from tests.conftest import random_toy_net


def enumerate_hamming_verdict(net, x0, radius, prop):
    """Exhaustive oracle over every input within the flip budget."""
    n = x0.size
    for r in range(int(radius) + 1):
        for flips in itertools.combinations(range(n), r):
            x = x0.copy()
            for f in flips:
                x[f] = -x[f]
            if prop.violated_by(net.forward(x)) is not None:
                return "counterexample"
    return "holds"


def hamming_query(rng, net=None, radius=None):
    net = net if net is not None else random_toy_net(rng)
    x0 = rng.choice([-1.0, 1.0], size=net.input_shape)
    radius = radius if radius is not None else int(rng.integers(1, 4))
    iset = InputSet(x0, radius, "hamming", box=(-1.0, 1.0))
    prop = OutputProperty(int(np.argmax(net.forward(x0))), delta=1e-6)
    return net, x0, iset, prop


class TestPointQueries:
    def test_epsilon_zero_holds_iff_strict_argmax(self):
        rng = np.random.default_rng(90)
        seen = {True: 0, False: 0}
        for _ in range(20):
            net = random_toy_net(rng)
            x0 = rng.uniform(0, 1, size=net.input_shape)
            q = net.forward(x0)
            target = int(np.argmax(q))
            delta = 1e-6
            strict = all(
                q[target] - q[j] > delta for j in range(q.size) if j != target
            )
            iset = InputSet(x0, 0.0, "linf")
            verdict = solve(encode(net, iset, OutputProperty(target, delta), None))
            assert isinstance(verdict, Holds) == strict
            seen[strict] += 1
        assert seen[True] > 0  # the generator produced both kinds

    def test_point_counterexample_is_center(self):
        rng = np.random.default_rng(91)
        while True:
            net = random_toy_net(rng, n_act=3)
            x0 = rng.uniform(0, 1, size=net.input_shape)
            q = net.forward(x0)
            target = int(np.argmax(q))
            runner_up = sorted(q)[-2]
            if q[target] - runner_up < 1e-6:
                continue
            # delta larger than the runner-up gap forces a violation at x0
            delta = float(q[target] - runner_up) + 1e-3
            iset = InputSet(x0, 0.0, "linf")
            verdict = solve(
                encode(net, iset, OutputProperty(target, delta), None)
            )
            assert isinstance(verdict, Counterexample)
            assert np.allclose(verdict.x.reshape(-1), x0, atol=1e-6)
            break


class TestEnumerationOracle:
    def test_verdicts_match_exhaustive_enumeration(self):
        rng = np.random.default_rng(92)
        for _ in range(25):
            net, x0, iset, prop = hamming_query(rng)
            verdict = solve(encode(net, iset, prop, None), timeout_s=60)
            oracle = enumerate_hamming_verdict(net, x0, iset.epsilon, prop)
            assert verdict.verdict == oracle
            if isinstance(verdict, Counterexample):
                assert check_counterexample(net, verdict.x, iset, prop)


class TestMonotonicity:
    def test_no_holds_at_larger_epsilon_with_attack_at_smaller(self):
        rng = np.random.default_rng(93)
        for _ in range(8):
            net, x0, iset, prop = hamming_query(rng, radius=1)
            verdicts = []
            for radius in (0, 1, 2, 3):
                s = InputSet(x0, radius, "hamming", box=(-1.0, 1.0))
                verdicts.append(solve(encode(net, s, prop, None), timeout_s=60))
            kinds = [v.verdict for v in verdicts]
            # once a counterexample appears it must persist at larger radii
            first_cex = next(
                (i for i, k in enumerate(kinds) if k == "counterexample"), None
            )
            if first_cex is not None:
                assert all(k == "counterexample" for k in kinds[first_cex:])

    def test_l1_radius_sweep_monotone(self):
        rng = np.random.default_rng(94)
        for _ in range(5):
            net = random_toy_net(rng, n_in=6, widths=[8], n_act=2)
            x0 = rng.uniform(0.2, 0.8, size=6)
            prop = OutputProperty(int(np.argmax(net.forward(x0))), delta=1e-6)
            kinds = []
            for eps in (0.01, 0.05, 0.1, 0.3, 0.6):
                iset = InputSet(x0, eps, "l1")
                kinds.append(
                    solve(encode(net, iset, prop, None), timeout_s=60).verdict
                )
            first_cex = next(
                (i for i, k in enumerate(kinds) if k == "counterexample"), None
            )
            if first_cex is not None:
                assert all(k == "counterexample" for k in kinds[first_cex:])


class TestDeterminism:
    def test_same_query_same_verdict_and_node_count(self):
        rng_a = np.random.default_rng(95)
        rng_b = np.random.default_rng(95)

        def run(rng):
            net, x0, iset, prop = hamming_query(rng)
            return solve(encode(net, iset, prop, None))

        va, vb = run(rng_a), run(rng_b)
        assert va.verdict == vb.verdict
        assert va.stats.nodes == vb.stats.nodes
        assert va.stats.lp_calls == vb.stats.lp_calls


class TestTimeout:
    def test_zero_budget_times_out(self):
        rng = np.random.default_rng(96)
        net, x0, iset, prop = hamming_query(rng)
        verdict = solve(encode(net, iset, prop, None), timeout_s=-1.0)
        assert isinstance(verdict, Timeout)
        assert verdict.open_nodes >= 1


class TestAnalyticBoundary:
    def test_known_decision_boundary(self):
        # Q0 - Q1 = 2 * scale * x0: boundary at x0 = 0; center at x0 = 0.3.
        from bqn.core.layers import BinaryDense, ScaleShift
        from bqn.core.network import BinarizedNetwork

        layers = [BinaryDense(2, 2), ScaleShift(2)]
        net = BinarizedNetwork(
            (2,),
            layers,
            {0: np.array([[1.0, 1.0], [-1.0, 1.0]])},
            {1: np.ones(2)},
            {1: np.zeros(2)},
        )
        x0 = np.array([0.3, 0.5])
        distance = 0.3  # linf distance from x0 to the boundary plane x=0
        prop = OutputProperty(0, delta=1e-9)
        for eps, expected in ((0.1, "holds"), (0.2, "holds"), (0.35, "counterexample")):
            iset = InputSet(x0, eps, "linf", box=(-1.0, 1.0))
            verdict = solve(encode(net, iset, prop, None), timeout_s=30)
            assert verdict.verdict == expected, (eps, expected, verdict.verdict)
