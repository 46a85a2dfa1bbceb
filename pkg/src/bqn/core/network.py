"""Binarized and full-precision networks with packed and float forward passes.

A BinarizedNetwork holds latent full-precision weights (clipped to
[-1, 1]) alongside their packed sign bits; the packed bits are the
weights the network actually computes with. Scale-shift layers carry
the per-output-channel scale (strictly positive) and bias. The paired
FullPrecisionNetwork keeps the same layer stack with real weights and
serves as the training target network and as a testing reference.
"""

from __future__ import annotations

import numpy as np

from bqn import kernels
from bqn.core import convops
from bqn.core.bitpack import BitTensor, sign_array
from bqn.core.layers import (
    SCALE_FLOOR,
    ArchitectureError,
    BinaryConv2d,
    BinaryDense,
    LayerSpec,
    ScaleShift,
    SignActivation,
    fan_in,
    is_weighted,
    validate_architecture,
    weight_shape,
)


def binarize_params(latent: np.ndarray) -> tuple[BitTensor, np.ndarray]:
    """Pack latent weights to sign bits with per-output-channel scales.

    The scale of output channel o is mean(|latent[o]|) over its fan-in,
    floored at SCALE_FLOOR so it stays strictly positive. Among scaled
    sign vectors alpha * sign(w), this mean-|w| alpha minimizes the L2
    reconstruction error of the row.
    """
    latent = np.asarray(latent, dtype=np.float64)
    if latent.size == 0:
        raise ValueError("cannot binarize an empty tensor")
    rows = latent.reshape(latent.shape[0], -1)
    scales = np.maximum(np.abs(rows).mean(axis=1), SCALE_FLOOR)
    packed = BitTensor.from_signs(sign_array(rows))
    return packed, scales


def _check_input(x: np.ndarray, input_shape: tuple[int, ...]):
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == tuple(input_shape)
    if single:
        x = x[None]
    elif x.shape[1:] != tuple(input_shape):
        raise ArchitectureError(
            f"input shape {x.shape} does not match network input {input_shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("network input must be finite")
    return x, single


def run_float(
    input_shape,
    layers,
    weights,
    scales,
    biases,
    x,
    *,
    surrogate: bool = False,
    record: dict | None = None,
):
    """Float-arithmetic layer walk shared by the reference path and training.

    With surrogate=True every sign activation is replaced by
    clip(x, -1, 1), which is the differentiable stand-in whose exact
    gradient equals the straight-through estimator.
    """
    act, single = _check_input(x, input_shape)
    if record is not None:
        record["single"] = single
    for idx, spec in enumerate(layers):
        if isinstance(spec, BinaryConv2d):
            cols = convops.im2col(act, spec.kernel_h, spec.kernel_w, spec.stride)
            if record is not None:
                record.setdefault("cols", {})[idx] = cols
                record.setdefault("in_shape", {})[idx] = act.shape[1:]
            w = weights[idx]
            act = cols @ w.reshape(spec.out_channels, -1).T
        elif isinstance(spec, BinaryDense):
            flat = act.reshape(act.shape[0], -1)
            if record is not None:
                record.setdefault("cols", {})[idx] = flat
                record.setdefault("in_shape", {})[idx] = act.shape[1:]
            act = flat @ weights[idx].T
        elif isinstance(spec, ScaleShift):
            if record is not None:
                record.setdefault("ss_in", {})[idx] = act
            act = act * scales[idx] + biases[idx]
        elif isinstance(spec, SignActivation):
            if record is not None:
                record.setdefault("sign_pre", {})[idx] = act
            if surrogate:
                act = np.clip(act, -1.0, 1.0)
            else:
                act = np.where(act >= 0, 1.0, -1.0)
        else:
            raise TypeError(f"unknown layer spec {spec!r}")
    return act[0] if single else act


class BinarizedNetwork:
    """Layer stack with packed sign weights and latent shadow weights."""

    def __init__(self, input_shape, layers, latents, scales, biases):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers: list[LayerSpec] = list(layers)
        self.shapes = validate_architecture(self.input_shape, self.layers)
        self._validate_binary_feed()
        self.output_dim = self.shapes[-1][0]

        self.latents: dict[int, np.ndarray] = {}
        for idx, spec in enumerate(self.layers):
            if is_weighted(spec):
                lat = np.asarray(latents[idx], dtype=np.float64)
                if lat.shape != weight_shape(spec):
                    raise ArchitectureError(
                        f"layer {idx}: latent shape {lat.shape} != {weight_shape(spec)}"
                    )
                self.latents[idx] = np.clip(lat, -1.0, 1.0)

        self.scales: dict[int, np.ndarray] = {}
        self.biases: dict[int, np.ndarray] = {}
        for idx, spec in enumerate(self.layers):
            if isinstance(spec, ScaleShift):
                s = np.asarray(scales[idx], dtype=np.float64)
                b = np.asarray(biases[idx], dtype=np.float64)
                if s.shape != (spec.channels,) or b.shape != (spec.channels,):
                    raise ArchitectureError(f"layer {idx}: bad scale/bias shape")
                if np.any(s < SCALE_FLOOR):
                    raise ArchitectureError(
                        f"layer {idx}: scale-shift scales must be >= {SCALE_FLOOR}"
                    )
                self.scales[idx] = s
                self.biases[idx] = b

        self.packed: dict[int, BitTensor] = {}
        self._float_w: dict[int, np.ndarray] = {}
        self._dirty = True
        self.version = 0
        self._ensure_fresh()

    def _validate_binary_feed(self):
        binary = False
        seen_weighted = False
        for spec in self.layers:
            if is_weighted(spec):
                if seen_weighted and not binary:
                    raise ArchitectureError(
                        "weighted layers after the first must consume sign activations"
                    )
                seen_weighted = True
                binary = False
            elif isinstance(spec, SignActivation):
                binary = True
            elif isinstance(spec, ScaleShift):
                pass

    @classmethod
    def random(cls, input_shape, layers, rng: np.random.Generator):
        """Random latents in (-1, 1); scales seeded from mean |latent|."""
        latents = {}
        for idx, spec in enumerate(layers):
            if is_weighted(spec):
                latents[idx] = rng.uniform(-1.0, 1.0, size=weight_shape(spec))
        scales, biases = {}, {}
        prev_weighted = None
        for idx, spec in enumerate(layers):
            if is_weighted(spec):
                prev_weighted = idx
            elif isinstance(spec, ScaleShift):
                if prev_weighted is not None:
                    _, s = binarize_params(latents[prev_weighted])
                    scales[idx] = s
                else:
                    scales[idx] = np.ones(spec.channels)
                biases[idx] = np.zeros(spec.channels)
        return cls(input_shape, layers, latents, scales, biases)

    # -- packed weight maintenance ------------------------------------

    def mark_dirty(self):
        self._dirty = True
        self.version += 1

    def _ensure_fresh(self):
        if self._dirty:
            self.refresh()

    def refresh(self):
        """Re-derive packed bits (and the float +-1 cache) from latents."""
        for idx, lat in self.latents.items():
            signs = np.where(lat >= 0, 1.0, -1.0)
            rows = signs.reshape(signs.shape[0], -1)
            self.packed[idx] = BitTensor(
                rows.shape, kernels.pack_rows((rows > 0).astype(np.uint8))
            )
            self._float_w[idx] = signs
        self._dirty = False

    def binary_weights(self, idx: int) -> BitTensor:
        self._ensure_fresh()
        return self.packed[idx]

    def float_weights(self) -> dict[int, np.ndarray]:
        self._ensure_fresh()
        return self._float_w

    @property
    def num_actions(self) -> int:
        return self.output_dim

    @property
    def weighted_indices(self) -> list[int]:
        return [i for i, spec in enumerate(self.layers) if is_weighted(spec)]

    @property
    def scaleshift_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.layers) if isinstance(s, ScaleShift)]

    # -- forward passes ------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Exact packed forward pass; XNOR-popcount on binary-input layers."""
        self._ensure_fresh()
        act, single = _check_input(x, self.input_shape)
        binary = False
        for idx, spec in enumerate(self.layers):
            if isinstance(spec, BinaryConv2d):
                cols = convops.im2col(act, spec.kernel_h, spec.kernel_w, spec.stride)
                b, oh, ow, fan = cols.shape
                if binary:
                    rows = kernels.pack_rows(
                        (cols.reshape(-1, fan) > 0).astype(np.uint8)
                    )
                    counts = kernels.sign_matmul(
                        rows, self.packed[idx].words, fan
                    )
                    act = counts.astype(np.float64).reshape(
                        b, oh, ow, spec.out_channels
                    )
                else:
                    w = self._float_w[idx]
                    act = cols @ w.reshape(spec.out_channels, -1).T
                binary = False
            elif isinstance(spec, BinaryDense):
                flat = act.reshape(act.shape[0], -1)
                if binary:
                    rows = kernels.pack_rows((flat > 0).astype(np.uint8))
                    counts = kernels.sign_matmul(
                        rows, self.packed[idx].words, spec.in_dim
                    )
                    act = counts.astype(np.float64)
                else:
                    act = flat @ self._float_w[idx].T
                binary = False
            elif isinstance(spec, ScaleShift):
                act = act * self.scales[idx] + self.biases[idx]
                binary = False
            elif isinstance(spec, SignActivation):
                act = np.where(act >= 0, 1.0, -1.0)
                binary = True
        return act[0] if single else act

    def forward_reference(self, x: np.ndarray) -> np.ndarray:
        """Same semantics as forward, computed entirely in real arithmetic."""
        self._ensure_fresh()
        return run_float(
            self.input_shape, self.layers, self._float_w, self.scales, self.biases, x
        )

    # -- bookkeeping -----------------------------------------------------

    def weight_count(self) -> int:
        return sum(int(lat.size) for lat in self.latents.values())

    def packed_payload_bytes(self) -> int:
        self._ensure_fresh()
        return sum(t.payload_bytes for t in self.packed.values())

    def clone(self) -> "BinarizedNetwork":
        return BinarizedNetwork(
            self.input_shape,
            self.layers,
            {i: v.copy() for i, v in self.latents.items()},
            {i: v.copy() for i, v in self.scales.items()},
            {i: v.copy() for i, v in self.biases.items()},
        )

    def equals(self, other: "BinarizedNetwork") -> bool:
        if self.input_shape != other.input_shape or self.layers != other.layers:
            return False
        self._ensure_fresh()
        other._ensure_fresh()
        for idx in self.latents:
            if self.packed[idx] != other.packed[idx]:
                return False
            if not np.array_equal(self.latents[idx], other.latents[idx]):
                return False
        for idx in self.scales:
            if not np.array_equal(self.scales[idx], other.scales[idx]):
                return False
            if not np.array_equal(self.biases[idx], other.biases[idx]):
                return False
        return True


class FullPrecisionNetwork:
    """Architecture-identical twin with real weights everywhere."""

    def __init__(self, input_shape, layers, weights, scales, biases):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers: list[LayerSpec] = list(layers)
        self.shapes = validate_architecture(self.input_shape, self.layers)
        self.output_dim = self.shapes[-1][0]
        self.weights = {
            idx: np.asarray(weights[idx], dtype=np.float64)
            for idx, spec in enumerate(self.layers)
            if is_weighted(spec)
        }
        for idx in self.weights:
            if self.weights[idx].shape != weight_shape(self.layers[idx]):
                raise ArchitectureError(f"layer {idx}: bad weight shape")
        self.scales = {}
        self.biases = {}
        for idx, spec in enumerate(self.layers):
            if isinstance(spec, ScaleShift):
                self.scales[idx] = np.asarray(scales[idx], dtype=np.float64)
                self.biases[idx] = np.asarray(biases[idx], dtype=np.float64)

    @classmethod
    def random(cls, input_shape, layers, rng: np.random.Generator):
        net = BinarizedNetwork.random(input_shape, layers, rng)
        return cls.from_binarized(net, mode="latent")

    @classmethod
    def from_binarized(cls, net: BinarizedNetwork, mode: str = "latent"):
        """mode 'latent' copies shadow weights; 'sign' copies their signs."""
        if mode == "latent":
            weights = {i: w.copy() for i, w in net.latents.items()}
        elif mode == "sign":
            weights = {i: sign_array(w) for i, w in net.latents.items()}
        else:
            raise ValueError(f"unknown copy mode {mode!r}")
        return cls(
            net.input_shape,
            net.layers,
            weights,
            {i: s.copy() for i, s in net.scales.items()},
            {i: b.copy() for i, b in net.biases.items()},
        )

    @property
    def num_actions(self) -> int:
        return self.output_dim

    def forward_reference(self, x: np.ndarray) -> np.ndarray:
        return run_float(
            self.input_shape, self.layers, self.weights, self.scales, self.biases, x
        )


def forward(net: BinarizedNetwork, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def forward_reference(net, x: np.ndarray) -> np.ndarray:
    return net.forward_reference(x)
