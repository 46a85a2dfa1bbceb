"""Sound interval bounds through a binarized network.

Affine layers use exact interval arithmetic (weights are fixed +-1
values). For l1 and hamming input sets the first weighted layer also
gets a Holder tightening: the pre-activation of unit j cannot move by
more than max_i |W_ji| * budget from its center value, which is far
tighter than the per-element interval when the ball is small. Sign
layers clamp to [-1, 1] or to a constant when the pre-activation
interval excludes zero (sign(0) = +1, so lo >= 0 pins +1).

propagate_bounds also supports re-propagation under a partial phase /
input assignment during branch-and-bound; a contradiction returns None.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bqn.core import convops
from bqn.core.layers import BinaryConv2d, BinaryDense, ScaleShift, SignActivation
from bqn.core.network import BinarizedNetwork
from bqn.verifier.sets import NORM_HAMMING, NORM_L1, InputSet

TIE_BREAK = 1e-7  # negative-side offset enforcing sign(0) = +1 in the encoding


@dataclass
class Bounds:
    input_lo: np.ndarray
    input_up: np.ndarray
    pre_sign: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    act: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    output: tuple[np.ndarray, np.ndarray] | None = None

    def stability(self, layer_idx: int) -> np.ndarray:
        """Per-unit code: +1 / -1 fixed sign, 0 unstable."""
        lo, up = self.pre_sign[layer_idx]
        out = np.zeros(lo.shape, dtype=np.int8)
        out[lo >= 0] = 1
        out[up < 0] = -1
        return out


def _affine_interval(spec, weights, lo, up):
    """Interval image of one weighted layer. lo/up carry a leading batch axis
    of size 1 so conv patching can reuse the forward helpers."""
    w_pos = np.maximum(weights, 0.0)
    w_neg = np.minimum(weights, 0.0)
    if isinstance(spec, BinaryConv2d):
        cols_lo = convops.im2col(lo, spec.kernel_h, spec.kernel_w, spec.stride)
        cols_up = convops.im2col(up, spec.kernel_h, spec.kernel_w, spec.stride)
        wp = w_pos.reshape(spec.out_channels, -1).T
        wn = w_neg.reshape(spec.out_channels, -1).T
        return cols_lo @ wp + cols_up @ wn, cols_up @ wp + cols_lo @ wn
    flat_lo = lo.reshape(1, -1)
    flat_up = up.reshape(1, -1)
    return (
        flat_lo @ w_pos.T + flat_up @ w_neg.T,
        flat_up @ w_pos.T + flat_lo @ w_neg.T,
    )


def first_layer_budget(input_set: InputSet) -> float | None:
    """Total-variation budget of the input set (sum |x - x0|), if bounded."""
    if input_set.norm == NORM_L1:
        return float(input_set.epsilon)
    if input_set.norm == NORM_HAMMING:
        return 2.0 * float(input_set.epsilon)
    return None


def propagate_bounds(
    net: BinarizedNetwork,
    input_set: InputSet,
    fixed_phases: dict[tuple[int, int], int] | None = None,
    fixed_inputs: dict[int, float] | None = None,
) -> Bounds | None:
    """Interval pass; None signals a contradiction with the fixed assignment."""
    fixed_phases = fixed_phases or {}
    fixed_inputs = fixed_inputs or {}

    in_lo, in_up = input_set.element_bounds()
    if fixed_inputs:
        for idx, value in fixed_inputs.items():
            in_lo[idx] = value
            in_up[idx] = value
    bounds = Bounds(input_lo=in_lo.copy(), input_up=in_up.copy())

    shape = net.input_shape
    lo = in_lo.reshape((1,) + shape)
    up = in_up.reshape((1,) + shape)

    weights = net.float_weights()
    budget = first_layer_budget(input_set)
    first_weighted = net.weighted_indices[0]

    for idx, spec in enumerate(net.layers):
        if isinstance(spec, (BinaryConv2d, BinaryDense)):
            lo, up = _affine_interval(spec, weights[idx], lo, up)
            if idx == first_weighted and budget is not None and not fixed_inputs:
                center = np.asarray(input_set.flat_center, dtype=np.float64)
                mid = net_first_preact(net, spec, weights[idx], center)
                radius = budget * np.max(np.abs(weights[idx]))
                lo = np.maximum(lo, mid - radius)
                up = np.minimum(up, mid + radius)
        elif isinstance(spec, ScaleShift):
            scale = net.scales[idx]
            bias = net.biases[idx]
            lo = lo * scale + bias
            up = up * scale + bias
        elif isinstance(spec, SignActivation):
            flat_lo = lo.reshape(-1).copy()
            flat_up = up.reshape(-1).copy()
            act_lo = np.where(flat_lo >= 0, 1.0, -1.0)
            act_up = np.where(flat_up < 0, -1.0, 1.0)
            for (layer, unit), phase in fixed_phases.items():
                if layer != idx:
                    continue
                if phase > 0:
                    if flat_up[unit] < 0:
                        return None
                    flat_lo[unit] = max(flat_lo[unit], 0.0)
                    act_lo[unit] = act_up[unit] = 1.0
                else:
                    if flat_lo[unit] > -TIE_BREAK:
                        return None
                    flat_up[unit] = min(flat_up[unit], -TIE_BREAK)
                    act_lo[unit] = act_up[unit] = -1.0
            bounds.pre_sign[idx] = (flat_lo, flat_up)
            bounds.act[idx] = (act_lo, act_up)
            lo = act_lo.reshape(lo.shape)
            up = act_up.reshape(up.shape)
        else:
            raise TypeError(f"unknown layer spec {spec!r}")

    bounds.output = (lo.reshape(-1), up.reshape(-1))
    return bounds


def net_first_preact(net, spec, w, flat_center):
    """Exact pre-activation of the first weighted layer at the ball center."""
    x = flat_center.reshape((1,) + net.input_shape)
    if isinstance(spec, BinaryConv2d):
        cols = convops.im2col(x, spec.kernel_h, spec.kernel_w, spec.stride)
        return cols @ w.reshape(spec.out_channels, -1).T
    return x.reshape(1, -1) @ w.T
