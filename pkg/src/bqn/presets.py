"""Architecture presets.

bqn-small targets the 10x10-ish pixel toys; bqn is the classic
84x84x4 frame-stack architecture; bqn-l extends it with two extra
64-filter 3x3 stride-1 conv blocks after the third conv.
"""

from __future__ import annotations

import numpy as np

from bqn.core.layers import (
    BinaryConv2d,
    BinaryDense,
    LayerSpec,
    ScaleShift,
    SignActivation,
    infer_shapes,
)
from bqn.core.network import BinarizedNetwork

PRESETS = ("bqn-small", "bqn", "bqn-l")

DEFAULT_INPUT_SHAPES = {
    "bqn-small": (10, 10, 4),
    "bqn": (84, 84, 4),
    "bqn-l": (84, 84, 4),
}


def _conv_block(in_c, out_c, k, stride) -> list[LayerSpec]:
    return [
        BinaryConv2d(in_c, out_c, k, k, stride),
        ScaleShift(out_c),
        SignActivation(),
    ]


def _head(flat_dim, hidden, actions) -> list[LayerSpec]:
    return [
        BinaryDense(flat_dim, hidden),
        ScaleShift(hidden),
        SignActivation(),
        BinaryDense(hidden, actions),
        ScaleShift(actions),
    ]


def _flat_after(input_shape, layers) -> int:
    shape = infer_shapes(input_shape, layers)[-1]
    return int(np.prod(shape))


def build_layers(
    preset: str, input_shape: tuple[int, int, int], num_actions: int
) -> list[LayerSpec]:
    if preset == "bqn-small":
        convs = _conv_block(input_shape[2], 8, 3, 1) + _conv_block(8, 16, 3, 1)
        return convs + _head(_flat_after(input_shape, convs), 64, num_actions)
    if preset == "bqn":
        convs = (
            _conv_block(input_shape[2], 32, 8, 4)
            + _conv_block(32, 64, 4, 2)
            + _conv_block(64, 64, 3, 1)
        )
        return convs + _head(_flat_after(input_shape, convs), 512, num_actions)
    if preset == "bqn-l":
        convs = (
            _conv_block(input_shape[2], 32, 8, 4)
            + _conv_block(32, 64, 4, 2)
            + _conv_block(64, 64, 3, 1)
            + _conv_block(64, 64, 3, 1)
            + _conv_block(64, 64, 3, 1)
        )
        return convs + _head(_flat_after(input_shape, convs), 512, num_actions)
    raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")


def build_network(
    preset: str,
    input_shape: tuple[int, int, int],
    num_actions: int,
    rng: np.random.Generator,
) -> BinarizedNetwork:
    layers = build_layers(preset, input_shape, num_actions)
    return BinarizedNetwork.random(input_shape, layers, rng)
