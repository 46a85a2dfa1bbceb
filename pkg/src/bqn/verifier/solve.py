"""Depth-first branch-and-bound over phase, input, and rival bits.

Each node re-propagates interval bounds under its partial assignment
(cheap, prunes most of the tree) and then checks the LP relaxation
with assigned binaries pinned. A fully assigned node whose LP is
feasible yields a candidate input; the candidate is replayed through
the exact packed forward pass and only a confirmed violation is ever
reported, so counterexamples are sound by construction. Exhausting the
tree certifies the property; the wall clock turns it into Timeout.

Branching order: rival indicators first, then input bits, then sign
phases by layer and, within a layer, by widest re-propagated
pre-activation interval. The LP relaxation point picks which side of
each branch to explore first.
"""

from __future__ import annotations

import time

import numpy as np

from bqn.verifier.bounds import propagate_bounds
from bqn.verifier.encode import ConstraintSystem
from bqn.verifier.robustness import check_counterexample
from bqn.verifier.sets import (
    NORM_HAMMING,
    NORM_L1,
    Counterexample,
    Holds,
    SolveStats,
    Timeout,
    Verdict,
)
from bqn.verifier.simplex import LPDeadlineError, lp_feasible


def _fixed_views(system: ConstraintSystem, assignment: dict[int, int]):
    fixed_phases = {}
    for su in system.sign_units:
        if su.b_var in assignment:
            fixed_phases[(su.layer, su.unit)] = 1 if assignment[su.b_var] else -1
    fixed_inputs = {}
    for flat_id, bvar in system.input_bit_vars.items():
        if bvar in assignment:
            fixed_inputs[flat_id] = 2.0 * assignment[bvar] - 1.0
    return fixed_phases, fixed_inputs


def _candidate_input(system: ConstraintSystem, assignment, lp_x) -> np.ndarray:
    input_set = system.input_set
    x = np.array(input_set.flat_center, dtype=np.float64, copy=True)
    if input_set.norm == NORM_HAMMING:
        for flat_id, bvar in system.input_bit_vars.items():
            if bvar in assignment:
                value = assignment[bvar]
            else:
                value = system.lo[bvar]  # pinned bit
            x[flat_id] = 2.0 * value - 1.0
        return x.reshape(input_set.center.shape)
    for flat_id, xvar in system.x_vars.items():
        x[flat_id] = lp_x[xvar]
    x = np.clip(x, input_set.box[0], input_set.box[1])
    if input_set.norm == NORM_L1:
        delta = x - input_set.flat_center
        total = float(np.sum(np.abs(delta)))
        if total > input_set.epsilon and total > 0:
            x = input_set.flat_center + delta * (input_set.epsilon / total)
    return x.reshape(input_set.center.shape)


def _branch_order(system: ConstraintSystem, assignment, bounds2):
    """Next variable to branch, or None when all binaries are decided."""
    for j in sorted(system.rival_vars):
        var = system.rival_vars[j]
        if var not in assignment and system.lo[var] != system.up[var]:
            return var
    for flat_id in sorted(system.input_bit_vars):
        var = system.input_bit_vars[flat_id]
        if var not in assignment and system.lo[var] != system.up[var]:
            return var
    layers = sorted({su.layer for su in system.sign_units})
    for layer in layers:
        best = None
        best_width = -1.0
        pre = bounds2.pre_sign[layer]
        for su in system.sign_units:
            if su.layer != layer or su.b_var in assignment:
                continue
            width = float(pre[1][su.unit] - pre[0][su.unit])
            if width > best_width + 1e-15:
                best = su.b_var
                best_width = width
        if best is not None:
            return best
    return None


def solve(system: ConstraintSystem, timeout_s: float | None = None) -> Verdict:
    """Search for a property violation; see the module docstring."""
    start = time.monotonic()
    stats = SolveStats()
    net = system.net
    input_set = system.input_set
    prop = system.prop
    target = prop.target
    lp = system.to_lp()

    deadline = None if timeout_s is None else start + timeout_s
    stack: list[dict[int, int]] = [{}]
    while stack:
        elapsed = time.monotonic() - start
        if timeout_s is not None and elapsed > timeout_s:
            stats.wall_ms = elapsed * 1000.0
            return Timeout(elapsed * 1000.0, open_nodes=len(stack), stats=stats)
        assignment = stack.pop()
        stats.nodes += 1

        fixed_phases, fixed_inputs = _fixed_views(system, assignment)
        bounds2 = propagate_bounds(net, input_set, fixed_phases, fixed_inputs)
        if bounds2 is None:
            continue
        out_lo, out_up = bounds2.output

        # Rival pruning on re-propagated output intervals.
        viable = False
        contradiction = False
        for j, dvar in system.rival_vars.items():
            possible = out_up[j] >= out_lo[target] - prop.delta
            status = assignment.get(dvar)
            if status == 1 and not possible:
                contradiction = True
                break
            if status == 1 or (status is None and possible):
                viable = True
        if contradiction or not viable:
            continue

        try:
            result = lp_feasible(
                lp,
                fixed={v: float(a) for v, a in assignment.items()},
                deadline=deadline,
            )
        except LPDeadlineError:
            elapsed = time.monotonic() - start
            stats.wall_ms = elapsed * 1000.0
            return Timeout(elapsed * 1000.0, open_nodes=len(stack) + 1, stats=stats)
        stats.lp_calls += 1
        if not result.feasible:
            continue

        branch_var = _branch_order(system, assignment, bounds2)
        if branch_var is None:
            x = _candidate_input(system, assignment, result.x)
            if check_counterexample(net, x, input_set, prop):
                q = net.forward(x)
                rival = prop.violated_by(q)
                stats.wall_ms = (time.monotonic() - start) * 1000.0
                return Counterexample(x, q, (target, int(rival)), stats=stats)
            continue  # numerically feasible leaf that does not replay: keep searching

        prefer = 1 if result.x[branch_var] >= 0.5 else 0
        first = dict(assignment)
        first[branch_var] = prefer
        second = dict(assignment)
        second[branch_var] = 1 - prefer
        stack.append(second)
        stack.append(first)

    stats.wall_ms = (time.monotonic() - start) * 1000.0
    return Holds(stats=stats)
