"""Layer specifications and static shape inference.

Networks are flat lists of layer specs. Convolutions use no padding;
the output spatial size is floor((in - kernel) / stride) + 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryDense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class BinaryConv2d:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int


@dataclass(frozen=True)
class SignActivation:
    pass


@dataclass(frozen=True)
class ScaleShift:
    channels: int


LayerSpec = Union[BinaryDense, BinaryConv2d, SignActivation, ScaleShift]

SCALE_FLOOR = 1e-6


def is_weighted(spec: LayerSpec) -> bool:
    return isinstance(spec, (BinaryDense, BinaryConv2d))


def fan_in(spec: LayerSpec) -> int:
    if isinstance(spec, BinaryDense):
        return spec.in_dim
    if isinstance(spec, BinaryConv2d):
        return spec.in_channels * spec.kernel_h * spec.kernel_w
    raise TypeError(f"{spec} has no fan-in")


def out_channels(spec: LayerSpec) -> int:
    if isinstance(spec, BinaryDense):
        return spec.out_dim
    if isinstance(spec, BinaryConv2d):
        return spec.out_channels
    raise TypeError(f"{spec} has no output channels")


def weight_shape(spec: LayerSpec) -> tuple[int, ...]:
    """Latent weight tensor shape: dense (out, in), conv (out, kh, kw, in_c)."""
    if isinstance(spec, BinaryDense):
        return (spec.out_dim, spec.in_dim)
    if isinstance(spec, BinaryConv2d):
        return (spec.out_channels, spec.kernel_h, spec.kernel_w, spec.in_channels)
    raise TypeError(f"{spec} has no weights")


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int) -> tuple[int, int]:
    if stride < 1:
        raise ArchitectureError(f"stride must be >= 1, got {stride}")
    if kh > h or kw > w:
        raise ArchitectureError(
            f"kernel {kh}x{kw} larger than input {h}x{w} (no padding)"
        )
    return ((h - kh) // stride + 1, (w - kw) // stride + 1)


def apply_shape(shape: tuple[int, ...], spec: LayerSpec) -> tuple[int, ...]:
    """Output shape of one layer given its input shape (no batch axis)."""
    if isinstance(spec, BinaryConv2d):
        if len(shape) != 3:
            raise ArchitectureError(f"conv needs (H, W, C) input, got {shape}")
        h, w, c = shape
        if c != spec.in_channels:
            raise ArchitectureError(
                f"conv expects {spec.in_channels} input channels, got {c}"
            )
        oh, ow = conv_output_hw(h, w, spec.kernel_h, spec.kernel_w, spec.stride)
        return (oh, ow, spec.out_channels)
    if isinstance(spec, BinaryDense):
        flat = int(np.prod(shape, dtype=np.int64))
        if flat != spec.in_dim:
            raise ArchitectureError(
                f"dense expects {spec.in_dim} inputs, got {flat} (shape {shape})"
            )
        return (spec.out_dim,)
    if isinstance(spec, ScaleShift):
        if shape[-1] != spec.channels:
            raise ArchitectureError(
                f"scale-shift expects {spec.channels} channels, got {shape[-1]}"
            )
        return shape
    if isinstance(spec, SignActivation):
        return shape
    raise TypeError(f"unknown layer spec {spec!r}")


def infer_shapes(
    input_shape: tuple[int, ...], layers: list[LayerSpec]
) -> list[tuple[int, ...]]:
    """Per-layer output shapes; raises ArchitectureError on any mismatch."""
    shapes = []
    shape = tuple(input_shape)
    for spec in layers:
        shape = apply_shape(shape, spec)
        shapes.append(shape)
    return shapes


def validate_architecture(input_shape: tuple[int, ...], layers: list[LayerSpec]):
    """Check structural rules: at least one weighted layer, real output head."""
    if not layers:
        raise ArchitectureError("network has no layers")
    shapes = infer_shapes(input_shape, layers)
    if not any(is_weighted(spec) for spec in layers):
        raise ArchitectureError("network has no weighted layers")
    if isinstance(layers[-1], SignActivation):
        raise ArchitectureError("last layer must produce real values, not signs")
    if len(shapes[-1]) != 1:
        raise ArchitectureError(
            f"network must end in a flat action-value vector, got {shapes[-1]}"
        )
    return shapes
