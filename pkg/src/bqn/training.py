"""Gradient machinery for binarized networks.

Sign blocks are non-differentiable, so training runs on latent
full-precision weights with straight-through estimators: the gradient
of a sign unit is the upstream gradient inside the closed window
[-1, 1] of its pre-activation and zero outside. The assertable form of
this rule is the surrogate network in which every sign is replaced by
clip(x, -1, 1); `backward` computes the exact gradient of that
surrogate, which is what the finite-difference tests check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bqn.core import convops
from bqn.core.layers import (
    SCALE_FLOOR,
    BinaryConv2d,
    BinaryDense,
    ScaleShift,
    SignActivation,
)
from bqn.core.network import BinarizedNetwork, run_float


class TrainingError(RuntimeError):
    pass


class StaleTapeError(TrainingError):
    pass


class DivergedError(TrainingError):
    """Raised when gradients go non-finite; training halts rather than corrupts."""


def ste_grad_sign(upstream, preact):
    """Straight-through gradient: pass upstream where |preact| <= 1, else 0."""
    upstream = np.asarray(upstream, dtype=np.float64)
    preact = np.asarray(preact, dtype=np.float64)
    out = np.where(np.abs(preact) <= 1.0, upstream, 0.0)
    return float(out) if out.ndim == 0 else out


def loss(q_taken: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error over a minibatch of per-sample taken-action values."""
    q_taken = np.asarray(q_taken, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if q_taken.shape != targets.shape:
        raise ValueError(f"shape mismatch {q_taken.shape} vs {targets.shape}")
    if q_taken.size == 0:
        raise ValueError("loss needs at least one sample")
    return float(np.mean((targets - q_taken) ** 2))


def loss_grad(q_taken: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d loss / d q_taken = -2 (y - q) / N."""
    q_taken = np.asarray(q_taken, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if q_taken.size == 0:
        raise ValueError("loss needs at least one sample")
    return -2.0 * (targets - q_taken) / q_taken.size


@dataclass
class GradientTape:
    """Per-layer caches from one training forward pass (use once)."""

    mode: str
    batch_size: int
    record: dict
    net_version: int
    consumed: bool = False


def forward_train(
    net: BinarizedNetwork, x: np.ndarray, mode: str = "binary"
) -> tuple[np.ndarray, GradientTape]:
    """Forward pass that caches what backward needs.

    mode 'binary' runs the real network (sign activations, sign
    weights); mode 'surrogate' replaces both by clip(., -1, 1), i.e.
    latent weights and clipped activations, for finite-difference
    checks.
    """
    if mode not in ("binary", "surrogate"):
        raise ValueError(f"unknown mode {mode!r}")
    record: dict = {}
    if mode == "binary":
        weights = net.float_weights()
    else:
        weights = {i: np.clip(net.latents[i], -1.0, 1.0) for i in net.latents}
    q = run_float(
        net.input_shape,
        net.layers,
        weights,
        net.scales,
        net.biases,
        x,
        surrogate=(mode == "surrogate"),
        record=record,
    )
    record["weights_used"] = weights
    batch = 1 if record.get("single") else np.asarray(x).shape[0]
    return q, GradientTape(mode, batch, record, net.version)


@dataclass
class Gradients:
    latents: dict[int, np.ndarray] = field(default_factory=dict)
    scales: dict[int, np.ndarray] = field(default_factory=dict)
    biases: dict[int, np.ndarray] = field(default_factory=dict)

    def all_finite(self) -> bool:
        for group in (self.latents, self.scales, self.biases):
            for arr in group.values():
                if not np.all(np.isfinite(arr)):
                    return False
        return True


def backward(
    net: BinarizedNetwork, tape: GradientTape, dq: np.ndarray
) -> Gradients:
    """Backpropagate d loss / d q through the tape.

    Weight-sign blocks use the straight-through estimator on latent
    values; activation-sign blocks use ste_grad_sign on cached
    pre-activations; scale/bias gradients are exact.
    """
    if tape.consumed:
        raise StaleTapeError("gradient tape already consumed")
    if tape.net_version != net.version:
        raise StaleTapeError("network changed since the tape was recorded")
    tape.consumed = True

    rec = tape.record
    weights_used = rec["weights_used"]
    g = np.asarray(dq, dtype=np.float64)
    if rec.get("single"):
        g = g[None]

    grads = Gradients()
    first_weighted = net.weighted_indices[0]
    for idx in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[idx]
        if isinstance(spec, ScaleShift):
            x_in = rec["ss_in"][idx]
            axes = tuple(range(x_in.ndim - 1))
            grads.scales[idx] = np.sum(g * x_in, axis=axes)
            grads.biases[idx] = np.sum(g, axis=axes)
            g = g * net.scales[idx]
        elif isinstance(spec, SignActivation):
            g = ste_grad_sign(g, rec["sign_pre"][idx])
        elif isinstance(spec, BinaryDense):
            cols = rec["cols"][idx]
            dw = g.T @ cols
            grads.latents[idx] = dw * (np.abs(net.latents[idx]) <= 1.0)
            if idx == first_weighted:
                break  # no gradient consumer before the first weighted layer
            g = (g @ weights_used[idx]).reshape((g.shape[0],) + rec["in_shape"][idx])
        elif isinstance(spec, BinaryConv2d):
            cols = rec["cols"][idx]
            w = weights_used[idx]
            dw = convops.conv_weight_grad(cols, g, w.shape)
            grads.latents[idx] = dw * (np.abs(net.latents[idx]) <= 1.0)
            if idx == first_weighted:
                break
            g = convops.conv_input_grad(g, w, rec["in_shape"][idx], spec.stride)
    return grads


@dataclass
class RmsPropState:
    """Per-parameter squared-gradient running averages."""

    lr: float = 2.5e-4
    rho: float = 0.95
    eps: float = 1e-2
    step: int = 0
    latent_v: dict[int, np.ndarray] = field(default_factory=dict)
    scale_v: dict[int, np.ndarray] = field(default_factory=dict)
    bias_v: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_network(cls, net: BinarizedNetwork, lr=2.5e-4, rho=0.95, eps=1e-2):
        state = cls(lr=lr, rho=rho, eps=eps)
        for idx, lat in net.latents.items():
            state.latent_v[idx] = np.zeros_like(lat)
        for idx in net.scaleshift_indices:
            state.scale_v[idx] = np.zeros_like(net.scales[idx])
            state.bias_v[idx] = np.zeros_like(net.biases[idx])
        return state

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "lr": self.lr,
            "rho": self.rho,
            "eps": self.eps,
            "latent_v": self.latent_v,
            "scale_v": self.scale_v,
            "bias_v": self.bias_v,
        }


def _rms_update(v, param, grad, lr, rho, eps):
    if not np.all(np.isfinite(grad)):
        raise DivergedError("non-finite gradient")
    v_new = rho * v + (1.0 - rho) * grad * grad
    return v_new, param - lr * grad / (np.sqrt(v_new) + eps)


def rmsprop_step(
    state: RmsPropState, latents: dict[int, np.ndarray], grads: dict[int, np.ndarray]
) -> dict[int, np.ndarray]:
    """One RMSProp update on latent tensors, clipped back into [-1, 1]."""
    updated = {}
    for idx, lat in latents.items():
        g = np.asarray(grads[idx], dtype=np.float64)
        if g.shape != lat.shape:
            raise ValueError(f"layer {idx}: gradient shape {g.shape} != {lat.shape}")
        state.latent_v[idx], new = _rms_update(
            state.latent_v[idx], lat, g, state.lr, state.rho, state.eps
        )
        updated[idx] = np.clip(new, -1.0, 1.0)
    return updated


def apply_updates(
    net: BinarizedNetwork,
    state: RmsPropState,
    grads: Gradients,
    train_scales: bool = True,
):
    """RMSProp step on latents, biases, and (optionally) scales.

    train_scales=False keeps the multiplicative scales at their
    calibrated values; in bootstrapped Q-learning the trainable output
    scale couples into the targets multiplicatively and destabilizes
    the value estimates, so the learning loop disables it by default.
    """
    net.latents.update(rmsprop_step(state, net.latents, grads.latents))
    if train_scales:
        for idx, g in grads.scales.items():
            state.scale_v[idx], new_scale = _rms_update(
                state.scale_v[idx], net.scales[idx], g, state.lr, state.rho, state.eps
            )
            net.scales[idx] = np.maximum(new_scale, SCALE_FLOOR)
    for idx, g in grads.biases.items():
        state.bias_v[idx], net.biases[idx] = _rms_update(
            state.bias_v[idx], net.biases[idx], g, state.lr, state.rho, state.eps
        )
    state.step += 1
    net.mark_dirty()
