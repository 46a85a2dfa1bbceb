"""Top-level robustness queries and the counterexample soundness guard."""

from __future__ import annotations

import numpy as np

from bqn.core.network import BinarizedNetwork
from bqn.verifier.sets import InputSet, OutputProperty, Verdict


class PremiseError(ValueError):
    """The requested target action is not the network's argmax at the center."""


def check_counterexample(
    net: BinarizedNetwork,
    x: np.ndarray,
    input_set: InputSet,
    prop: OutputProperty,
    tol: float = 1e-6,
) -> bool:
    """True iff x lies in the input set and its exact forward pass
    violates the argmax property (some rival y_j >= y_target - delta)."""
    x = np.asarray(x, dtype=np.float64)
    if not input_set.contains(x, tol=tol):
        return False
    q = net.forward(x.reshape(net.input_shape))
    return prop.violated_by(q) is not None


def verify_robustness(
    net: BinarizedNetwork,
    x0: np.ndarray,
    target: int | None = None,
    epsilon: float = 0.01,
    norm: str = "l1",
    delta: float = 1e-6,
    timeout_s: float | None = None,
    box: tuple[float, float] = (0.0, 1.0),
    mask: np.ndarray | None = None,
) -> Verdict:
    """Bounds -> encoding -> branch-and-bound for one argmax property.

    The property premise is that `target` (default: the network's own
    choice at x0) is the argmax at the center; a mismatch raises
    PremiseError because the property would be vacuously false.
    """
    from bqn.verifier.bounds import propagate_bounds
    from bqn.verifier.encode import encode
    from bqn.verifier.solve import solve

    x0 = np.asarray(x0, dtype=np.float64)
    q0 = net.forward(x0.reshape(net.input_shape))
    argmax = int(np.argmax(q0))
    if target is None:
        target = argmax
    elif target != argmax:
        raise PremiseError(
            f"target action {target} is not the argmax at the center (got {argmax})"
        )

    input_set = InputSet(x0, epsilon, norm, box=box, mask=mask)
    prop = OutputProperty(target, delta)
    bounds = propagate_bounds(net, input_set)
    system = encode(net, input_set, prop, bounds)
    return solve(system, timeout_s=timeout_s)


def random_attack(
    net: BinarizedNetwork,
    input_set: InputSet,
    prop: OutputProperty,
    tries: int,
    rng: np.random.Generator,
) -> np.ndarray | None:
    """Monte Carlo search for a violating input (testing aid)."""
    for _ in range(tries):
        x = input_set.sample(rng)
        if check_counterexample(net, x, input_set, prop):
            return x
    return None
