"""Dense phase-1 simplex for feasibility of bounded linear systems.

Variables carry finite [lo, up] bounds (slacks and artificials are
[0, inf)). Upper bounds are handled by the complement substitution
x -> up - x, so every nonbasic variable sits at zero and the classic
tableau works unchanged; a "flip" event toggles the substitution.

Pivoting is Dantzig by default and switches permanently to Bland's
least-index rule when the objective stalls, which guarantees
termination; cycling is a stall, not an error path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

SENSE_LE = 0
SENSE_GE = 1
SENSE_EQ = 2

_SENSE_CODE = {"L": SENSE_LE, "G": SENSE_GE, "E": SENSE_EQ}

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
RC_TOL = 1e-9


class SimplexStallError(RuntimeError):
    pass


class LPDeadlineError(RuntimeError):
    """Raised when a feasibility solve exceeds its wall-clock deadline."""


@dataclass
class LinearProgram:
    """A @ x (<=, >=, =) rhs with per-variable bounds lo <= x <= up."""

    a: np.ndarray
    sense: np.ndarray  # int codes per row
    rhs: np.ndarray
    lo: np.ndarray
    up: np.ndarray

    @classmethod
    def build(cls, rows, senses, rhs, lo, up):
        a = np.asarray(rows, dtype=np.float64)
        if a.ndim != 2:
            a = a.reshape(len(rhs), -1)
        sense = np.array(
            [_SENSE_CODE[s] if isinstance(s, str) else int(s) for s in senses],
            dtype=np.int8,
        )
        return cls(
            a,
            sense,
            np.asarray(rhs, dtype=np.float64),
            np.asarray(lo, dtype=np.float64),
            np.asarray(up, dtype=np.float64),
        )


@dataclass
class LPResult:
    feasible: bool
    x: np.ndarray | None = None
    iterations: int = 0
    max_residual: float = 0.0


def lp_feasible(
    lp: LinearProgram,
    fixed: dict[int, float] | None = None,
    tol: float = FEAS_TOL,
    deadline: float | None = None,
) -> LPResult:
    """Phase-1 simplex feasibility check; returns a point when feasible.

    `deadline` is an absolute time.monotonic() timestamp; exceeding it
    raises LPDeadlineError (used by the branch-and-bound timeout)."""
    lo = lp.lo.copy()
    up = lp.up.copy()
    if fixed:
        for idx, value in fixed.items():
            lo[idx] = value
            up[idx] = value
    if np.any(lo > up + 1e-12):
        return LPResult(False)
    up = np.maximum(up, lo)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
        raise ValueError("lp_feasible needs finite variable bounds")

    m, n = lp.a.shape
    if m == 0:
        return LPResult(True, lo.copy())

    # Shift structurals to x' in [0, range].
    ranges = up - lo
    rhs = lp.rhs - lp.a @ lo

    # Normalize rows: >= becomes <=, then make every rhs nonnegative.
    a_rows = lp.a.copy()
    senses = lp.sense.copy()
    is_ge = senses == SENSE_GE
    a_rows[is_ge] *= -1.0
    rhs = np.where(is_ge, -rhs, rhs)
    senses = np.where(is_ge, SENSE_LE, senses)

    slack_of_row = np.full(m, -1, dtype=np.int64)
    slack_idx = 0
    for i in range(m):
        if senses[i] == SENSE_LE:
            slack_of_row[i] = n + slack_idx
            slack_idx += 1
    n_slack = slack_idx

    neg = rhs < 0
    a_rows[neg] *= -1.0
    rhs = np.where(neg, -rhs, rhs)

    # Initial basis: the row's own slack where it still has coefficient +1,
    # otherwise an artificial.
    basis = np.empty(m, dtype=np.int64)
    needs_art = [i for i in range(m) if senses[i] != SENSE_LE or neg[i]]
    total = n + n_slack + len(needs_art)

    tab = np.zeros((m, total))
    tab[:, :n] = a_rows
    for i in range(m):
        if slack_of_row[i] >= 0:
            tab[i, slack_of_row[i]] = -1.0 if neg[i] else 1.0
            basis[i] = slack_of_row[i]
    for k, i in enumerate(needs_art):
        col = n + n_slack + k
        tab[i, col] = 1.0
        basis[i] = col

    x_b = rhs.copy()
    var_range = np.full(total, np.inf)
    var_range[:n] = ranges
    flipped = np.zeros(total, dtype=bool)
    is_art = np.zeros(total, dtype=bool)
    is_art[n + n_slack :] = True

    # Phase-1 reduced costs: rc = c - sum of artificial-basic rows.
    rc = is_art.astype(np.float64)
    for i in needs_art:
        rc -= tab[i]

    def objective() -> float:
        return float(np.sum(x_b[is_art[basis]]))

    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    max_iter = 2000 + 60 * (m + total)
    stall_limit = 4 * (m + total)
    bland = False
    stall = 0
    best_obj = np.inf
    iterations = 0
    movable = ~is_art & (var_range > PIVOT_TOL)

    while objective() > tol * scale and iterations < max_iter:
        iterations += 1
        if deadline is not None and iterations % 32 == 0 and time.monotonic() > deadline:
            raise LPDeadlineError("lp_feasible exceeded its deadline")
        eligible = (rc < -RC_TOL) & movable
        candidates = np.flatnonzero(eligible)
        if candidates.size == 0:
            break  # optimal with positive artificial mass: infeasible
        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmin(rc[candidates])])

        col = tab[:, j]
        t_star = var_range[j]
        leave_row = -1
        leave_at_upper = False
        for i in range(m):
            y = col[i]
            if y > PIVOT_TOL:
                t = max(x_b[i], 0.0) / y
                at_upper = False
            elif y < -PIVOT_TOL and np.isfinite(var_range[basis[i]]):
                t = max(var_range[basis[i]] - x_b[i], 0.0) / (-y)
                at_upper = True
            else:
                continue
            better = t < t_star - 1e-12
            tie = abs(t - t_star) <= 1e-12 and leave_row >= 0 and basis[i] < basis[leave_row]
            if better or tie:
                t_star = t
                leave_row = i
                leave_at_upper = at_upper

        if leave_row < 0:
            if not np.isfinite(t_star):
                raise SimplexStallError("unbounded phase-1 direction")
            # Bound flip: entering jumps to its opposite bound, no pivot.
            x_b = x_b - col * t_star
            tab[:, j] = -tab[:, j]
            rc[j] = -rc[j]
            flipped[j] = ~flipped[j]
        else:
            piv = tab[leave_row, j]
            pivot_row = tab[leave_row] / piv
            x_piv = x_b[leave_row] / piv
            delta = tab[:, j].copy()
            tab -= np.outer(delta, pivot_row)
            tab[leave_row] = pivot_row
            x_b = x_b - delta * x_piv
            x_b[leave_row] = x_piv
            rc = rc - rc[j] * pivot_row
            left = int(basis[leave_row])
            basis[leave_row] = j
            if leave_at_upper:
                r_left = var_range[left]
                x_b = x_b - tab[:, left] * r_left
                tab[:, left] = -tab[:, left]
                rc[left] = -rc[left]
                flipped[left] = ~flipped[left]

        obj = objective()
        if obj < best_obj - RC_TOL * scale:
            best_obj = obj
            stall = 0
        else:
            stall += 1
            if stall > stall_limit:
                bland = True

    obj_exact = objective()
    if iterations >= max_iter and obj_exact > tol * scale:
        raise SimplexStallError(f"no convergence in {iterations} iterations")
    if obj_exact > tol * scale:
        return LPResult(False, iterations=iterations)

    values = np.zeros(total)
    values[basis] = np.maximum(x_b, 0.0)
    struct = values[:n]
    struct_flip = flipped[:n]
    struct[struct_flip] = ranges[struct_flip] - struct[struct_flip]
    x = lo + np.clip(struct, 0.0, ranges)
    return LPResult(True, x, iterations, max_residual(lp, x))


def max_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Worst constraint violation of a candidate point."""
    lhs = lp.a @ x
    res = np.zeros_like(lhs)
    le = lp.sense == SENSE_LE
    ge = lp.sense == SENSE_GE
    eq = lp.sense == SENSE_EQ
    res[le] = np.maximum(0.0, lhs[le] - lp.rhs[le])
    res[ge] = np.maximum(0.0, lp.rhs[ge] - lhs[ge])
    res[eq] = np.abs(lhs[eq] - lp.rhs[eq])
    return float(np.max(res, initial=0.0))
