"""Mixed-integer linear encoding of an argmax-robustness query.

The network between sign layers is affine, so the encoder composes
affine maps symbolically over the input variables and the +-1 outputs
of *unstable* sign units (those whose pre-activation interval straddles
zero). Stable units fold to constants and produce no variables at all,
which is the main scaling lever.

Per unstable unit with pre-activation bounds [lo, up] and phase bit b:

    z  = affine(x, earlier activations)        (equality row)
    z + lo * b >= lo          (b = 1  =>  z >= 0)
    z - (up + tie) * b <= -tie  (b = 0  =>  z <= -tie)

where tie is the LP tolerance offset that realizes sign(0) = +1. The
negated output property uses rival indicator bits d_j with sum d >= 1
and big-M rows y_j >= y_target - delta - M (1 - d_j).

Inputs that reach no unstable unit and no output are dropped along
with their l1 auxiliaries; setting them to the center extends any
solution, so feasibility is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bqn.core import convops
from bqn.core.layers import BinaryConv2d, BinaryDense, ScaleShift, SignActivation
from bqn.core.network import BinarizedNetwork
from bqn.verifier.bounds import TIE_BREAK, Bounds, propagate_bounds
from bqn.verifier.sets import NORM_HAMMING, NORM_L1, InputSet, OutputProperty
from bqn.verifier.simplex import SENSE_EQ, SENSE_GE, SENSE_LE, LinearProgram


@dataclass
class SignUnit:
    layer: int
    unit: int
    z_var: int
    b_var: int
    lo: float
    up: float


@dataclass
class ConstraintSystem:
    """Dense linear rows over named, bounded variables."""

    names: list[str]
    lo: np.ndarray
    up: np.ndarray
    is_binary: np.ndarray
    a: np.ndarray
    sense: np.ndarray
    rhs: np.ndarray

    # variable groups
    input_ids: list[int]  # flat input indices kept in the encoding
    x_vars: dict[int, int]
    input_bit_vars: dict[int, int]
    t_vars: dict[int, int]
    sign_units: list[SignUnit]
    output_vars: list[int]
    rival_vars: dict[int, int]

    # query context
    net: BinarizedNetwork = None
    input_set: InputSet = None
    prop: OutputProperty = None
    bounds: Bounds = None
    tie: float = TIE_BREAK

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return self.a.shape[0]

    def binary_var_indices(self) -> list[int]:
        return [i for i in range(self.num_vars) if self.is_binary[i]]

    def to_lp(self) -> LinearProgram:
        return LinearProgram(
            self.a, self.sense, self.rhs, self.lo.copy(), self.up.copy()
        )


class _Affine:
    """Affine state: value = ax @ x_full + ab @ bits + c."""

    def __init__(self, ax: np.ndarray, ab: np.ndarray, c: np.ndarray):
        self.ax = ax  # (units, n_inputs)
        self.ab = ab  # (units, n_bits_so_far)
        self.c = c  # (units,)


def _patch_ids(shape, kh, kw, stride) -> np.ndarray:
    ids = np.arange(int(np.prod(shape)), dtype=np.int64).reshape((1,) + tuple(shape))
    cols = convops.im2col(ids.astype(np.float64), kh, kw, stride)
    return cols.reshape(-1, cols.shape[-1]).astype(np.int64)


def _apply_weighted(state: _Affine, spec, w, in_shape) -> _Affine:
    if isinstance(spec, BinaryConv2d):
        ids = _patch_ids(in_shape, spec.kernel_h, spec.kernel_w, spec.stride)
        wmat = w.reshape(spec.out_channels, -1)  # (out_c, fan)
        ax = np.einsum("of,pfi->poi", wmat, state.ax[ids]).reshape(
            -1, state.ax.shape[1]
        )
        n_units = ax.shape[0]
        if state.ab.shape[1]:
            ab = np.einsum("of,pfi->poi", wmat, state.ab[ids]).reshape(
                n_units, state.ab.shape[1]
            )
        else:
            ab = np.zeros((n_units, 0))
        c = (state.c[ids] @ wmat.T).reshape(-1)
        return _Affine(ax, ab, c)
    wmat = w.reshape(spec.out_dim, -1)
    return _Affine(wmat @ state.ax, wmat @ state.ab, wmat @ state.c)


def encode(
    net: BinarizedNetwork,
    input_set: InputSet,
    prop: OutputProperty,
    bounds: Bounds | None = None,
) -> ConstraintSystem:
    """Build the constraint system for net, input set, and negated property."""
    if bounds is None:
        bounds = propagate_bounds(net, input_set)
    if prop.target >= net.num_actions:
        raise ValueError(
            f"target action {prop.target} out of range for {net.num_actions} actions"
        )

    n_in = int(np.prod(net.input_shape))
    weights = net.float_weights()

    # Symbolic pass. Bits are allocated per unstable unit in layer order.
    unstable: list[tuple[int, int, float, float]] = []  # (layer, unit, lo, up)
    preact_exprs: list[tuple[np.ndarray, np.ndarray, float]] = []
    state = _Affine(
        np.eye(n_in), np.zeros((n_in, 0)), np.zeros(n_in)
    )
    shape = net.input_shape
    for idx, spec in enumerate(net.layers):
        if isinstance(spec, (BinaryConv2d, BinaryDense)):
            state = _apply_weighted(state, spec, weights[idx], shape)
            shape = net.shapes[idx]
        elif isinstance(spec, ScaleShift):
            # channels are the innermost axis of the flattened unit order
            scale = np.broadcast_to(
                net.scales[idx], (state.c.size // spec.channels, spec.channels)
            ).reshape(-1)
            bias = np.broadcast_to(
                net.biases[idx], (state.c.size // spec.channels, spec.channels)
            ).reshape(-1)
            state = _Affine(
                state.ax * scale[:, None], state.ab * scale[:, None], state.c * scale + bias
            )
        elif isinstance(spec, SignActivation):
            lo_pre, up_pre = bounds.pre_sign[idx]
            n_units = state.c.size
            new_ax = np.zeros_like(state.ax)
            new_c = np.empty(n_units)
            n_new = int(np.sum((lo_pre < 0) & (up_pre >= 0)))
            new_ab = np.zeros((n_units, state.ab.shape[1] + n_new))
            bit_base = state.ab.shape[1]
            added = 0
            for u in range(n_units):
                if lo_pre[u] >= 0:
                    new_c[u] = 1.0
                elif up_pre[u] < 0:
                    new_c[u] = -1.0
                else:
                    preact_exprs.append(
                        (state.ax[u].copy(), state.ab[u].copy(), float(state.c[u]))
                    )
                    unstable.append((idx, u, float(lo_pre[u]), float(up_pre[u])))
                    new_ab[u, bit_base + added] = 2.0
                    new_c[u] = -1.0
                    added += 1
            state = _Affine(new_ax, new_ab, new_c)
        else:
            raise TypeError(f"unknown layer spec {spec!r}")

    out_exprs = state  # (n_actions rows over x cols + all bits)
    n_bits = state.ab.shape[1]
    assert n_bits == len(unstable)

    # Relevance: inputs with a nonzero coefficient in any unstable
    # pre-activation or any output expression.
    used = np.zeros(n_in, dtype=bool)
    for ax, _, _ in preact_exprs:
        used |= ax != 0
    used |= np.any(out_exprs.ax != 0, axis=0)
    input_ids = [int(i) for i in np.flatnonzero(used)]

    # ---- variable table ------------------------------------------------
    names: list[str] = []
    lo_list: list[float] = []
    up_list: list[float] = []
    binary: list[bool] = []

    def add_var(name, lo, up, is_bin=False) -> int:
        names.append(name)
        lo_list.append(float(lo))
        up_list.append(float(up))
        binary.append(is_bin)
        return len(names) - 1

    in_lo, in_up = bounds.input_lo, bounds.input_up
    x0 = input_set.flat_center
    mask = input_set.flat_mask()
    hamming = input_set.norm == NORM_HAMMING
    l1 = input_set.norm == NORM_L1

    x_vars = {i: add_var(f"x_{i}", in_lo[i], in_up[i]) for i in input_ids}
    input_bit_vars = {}
    if hamming:
        for i in input_ids:
            b0 = 1.0 if x0[i] > 0 else 0.0
            if mask[i] and input_set.epsilon >= 1:
                input_bit_vars[i] = add_var(f"bx_{i}", 0, 1, is_bin=True)
            else:
                input_bit_vars[i] = add_var(f"bx_{i}", b0, b0, is_bin=True)
    t_vars = {}
    if l1:
        for i in input_ids:
            if mask[i]:
                t_vars[i] = add_var(f"t_{i}", 0.0, input_set.epsilon)

    sign_units: list[SignUnit] = []
    for k, (layer, unit, lo_u, up_u) in enumerate(unstable):
        z = add_var(f"z_{layer}_{unit}", lo_u, up_u)
        b = add_var(f"b_{layer}_{unit}", 0, 1, is_bin=True)
        sign_units.append(SignUnit(layer, unit, z, b, lo_u, up_u))

    out_lo, out_up = bounds.output
    out_layer = len(net.layers) - 1
    output_vars = [
        add_var(f"z_{out_layer}_{o}", out_lo[o], out_up[o])
        for o in range(net.num_actions)
    ]
    rival_vars = {
        j: add_var(f"d_{j}", 0, 1, is_bin=True)
        for j in range(net.num_actions)
        if j != prop.target
    }

    total = len(names)

    # ---- rows ----------------------------------------------------------
    rows: list[np.ndarray] = []
    senses: list[int] = []
    rhs: list[float] = []

    def add_row(coeffs: dict[int, float], sense: int, b: float):
        row = np.zeros(total)
        for var, coef in coeffs.items():
            row[var] += coef
        rows.append(row)
        senses.append(sense)
        rhs.append(float(b))

    if l1 and t_vars:
        for i, t in t_vars.items():
            add_row({t: 1.0, x_vars[i]: -1.0}, SENSE_GE, -x0[i])
            add_row({t: 1.0, x_vars[i]: 1.0}, SENSE_GE, x0[i])
        add_row({t: 1.0 for t in t_vars.values()}, SENSE_LE, input_set.epsilon)
    if hamming:
        for i in input_ids:
            add_row({x_vars[i]: 1.0, input_bit_vars[i]: -2.0}, SENSE_EQ, -1.0)
        coeffs = {}
        budget = float(input_set.epsilon)
        for i in input_ids:
            if not mask[i]:
                continue
            if x0[i] > 0:
                coeffs[input_bit_vars[i]] = coeffs.get(input_bit_vars[i], 0.0) - 1.0
                budget -= 1.0
            else:
                coeffs[input_bit_vars[i]] = coeffs.get(input_bit_vars[i], 0.0) + 1.0
        if coeffs:
            add_row(coeffs, SENSE_LE, budget)

    def expr_row(ax, ab, extra: dict[int, float]) -> dict[int, float]:
        coeffs = dict(extra)
        for i in input_ids:
            if ax[i] != 0.0:
                coeffs[x_vars[i]] = coeffs.get(x_vars[i], 0.0) + float(ax[i])
        for k in np.flatnonzero(ab):
            var = sign_units[int(k)].b_var
            coeffs[var] = coeffs.get(var, 0.0) + float(ab[k])
        return coeffs

    for k, su in enumerate(sign_units):
        ax, ab, c = preact_exprs[k]
        add_row(expr_row(ax, ab, {su.z_var: -1.0}), SENSE_EQ, -c)
        add_row({su.z_var: 1.0, su.b_var: su.lo}, SENSE_GE, su.lo)
        add_row({su.z_var: 1.0, su.b_var: -(su.up + TIE_BREAK)}, SENSE_LE, -TIE_BREAK)

    for o in range(net.num_actions):
        add_row(
            expr_row(out_exprs.ax[o], out_exprs.ab[o], {output_vars[o]: -1.0}),
            SENSE_EQ,
            -float(out_exprs.c[o]),
        )

    add_row({d: 1.0 for d in rival_vars.values()}, SENSE_GE, 1.0)
    y_t = output_vars[prop.target]
    for j, d in rival_vars.items():
        big_m = max(0.0, float(out_up[prop.target] - out_lo[j]) - prop.delta) + 1.0
        # The violation side carries the LP tolerance as extra margin so a
        # feasible point survives the exact replay check (the counterpart of
        # the sign tie-break offset).
        add_row(
            {output_vars[j]: 1.0, y_t: -1.0, d: -big_m},
            SENSE_GE,
            -prop.delta + TIE_BREAK - big_m,
        )

    return ConstraintSystem(
        names=names,
        lo=np.array(lo_list),
        up=np.array(up_list),
        is_binary=np.array(binary, dtype=bool),
        a=np.vstack(rows) if rows else np.zeros((0, total)),
        sense=np.array(senses, dtype=np.int8),
        rhs=np.array(rhs),
        input_ids=input_ids,
        x_vars=x_vars,
        input_bit_vars=input_bit_vars,
        t_vars=t_vars,
        sign_units=sign_units,
        output_vars=output_vars,
        rival_vars=rival_vars,
        net=net,
        input_set=input_set,
        prop=prop,
        bounds=bounds,
    )


def normalize_hidden_scales(net: BinarizedNetwork) -> BinarizedNetwork:
    """Rescale every hidden scale-shift to 1 (bias divided by the scale).

    Positive scaling never flips a downstream sign, so the verification
    verdict is unchanged; the final layer keeps its scale because output
    magnitudes matter for the margin.
    """
    clone = net.clone()
    last = len(clone.layers) - 1
    for idx in clone.scaleshift_indices:
        if idx == last:
            continue
        clone.biases[idx] = clone.biases[idx] / clone.scales[idx]
        clone.scales[idx] = np.ones_like(clone.scales[idx])
    return clone
