"""Action selection, bootstrap targets, and target-network maintenance.

The target network is a full-precision twin. The default sync mode
copies the value network's latent weights into it and divides the
shared per-channel scale by alpha = mean |latent| over the channel's
fan-in: since the binary weights approximate the latents as
latent_row ~ alpha * sign_row, this keeps the target's sign units at
the same operating point as the value network while its real weights
supply the extra resolution. The ablation mode copies weight signs
instead, reproducing the degradation of bootstrapping a binarized
network against a binarized target.
"""

from __future__ import annotations

import numpy as np

from bqn.config import SYNC_ABLATION, SYNC_FULL_PRECISION, SYNC_MODES
from bqn.core import convops
from bqn.core.bitpack import sign_array
from bqn.core.layers import (
    SCALE_FLOOR,
    BinaryConv2d,
    BinaryDense,
    ScaleShift,
    SignActivation,
    is_weighted,
)
from bqn.core.network import BinarizedNetwork, FullPrecisionNetwork


def select_action(
    net: BinarizedNetwork, state: np.ndarray, epsilon: float, rng: np.random.Generator
) -> int:
    """Epsilon-greedy over the packed forward pass; ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(net.num_actions))
    return int(np.argmax(net.forward(state)))


def compute_target(
    target_net: FullPrecisionNetwork, transition, gamma: float
) -> float:
    """Bootstrap target: r at episode end, else r + gamma * max_a Q_target(s')."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if transition.done:
        return float(transition.r)
    q_next = target_net.forward_reference(transition.s_next)
    return float(transition.r + gamma * np.max(q_next))


def compute_targets(
    target_net: FullPrecisionNetwork, batch, gamma: float
) -> np.ndarray:
    """Vectorized compute_target over a sampled minibatch."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    s_next = np.stack([t.s_next for t in batch])
    rewards = np.array([t.r for t in batch], dtype=np.float64)
    live = np.array([0.0 if t.done else 1.0 for t in batch])
    q_next = target_net.forward_reference(s_next)
    return rewards + gamma * live * np.max(q_next, axis=1)


def _channel_alphas(value_net: BinarizedNetwork) -> dict[int, np.ndarray]:
    """Per-channel mean |latent| of the weighted layer feeding each scale-shift."""
    alphas = {}
    prev = None
    for idx, spec in enumerate(value_net.layers):
        if is_weighted(spec):
            prev = idx
        elif isinstance(spec, ScaleShift) and prev is not None:
            lat = value_net.latents[prev]
            rows = lat.reshape(lat.shape[0], -1)
            alphas[idx] = np.maximum(np.abs(rows).mean(axis=1), SCALE_FLOOR)
    return alphas


def sync_target(
    value_net: BinarizedNetwork,
    target_net: FullPrecisionNetwork,
    mode: str = SYNC_FULL_PRECISION,
    probe_states: np.ndarray | None = None,
):
    """Copy value-network parameters into the target network in place.

    Default mode: w_target = latents. The target is a different function
    of those weights than the value network is of their signs, so its
    normalization must be refolded: given probe states, each scale-shift
    is set so the target's per-channel post-scale distribution matches
    the value network's (batch-norm folding recomputed for the target's
    own pre-activations); without probes the scale is divided by the
    per-channel alpha = mean |latent| as a first-order stand-in.

    Ablation mode: w_target = sign(latents) with scale-shift copied
    verbatim, which makes the target exactly the value network's
    function.
    """
    if mode not in SYNC_MODES:
        raise ValueError(f"unknown sync mode {mode!r}; choose from {SYNC_MODES}")
    if (
        value_net.layers != target_net.layers
        or value_net.input_shape != target_net.input_shape
    ):
        raise ValueError("value and target network architectures differ")
    if mode == SYNC_ABLATION:
        for idx, lat in value_net.latents.items():
            target_net.weights[idx] = sign_array(lat)
        for idx in value_net.scales:
            target_net.scales[idx] = value_net.scales[idx].copy()
            target_net.biases[idx] = value_net.biases[idx].copy()
        return
    for idx, lat in value_net.latents.items():
        target_net.weights[idx] = lat.copy()
    if probe_states is not None:
        _refold_target_stats(value_net, target_net, probe_states)
        return
    alphas = _channel_alphas(value_net)
    for idx in value_net.scales:
        if idx in alphas:
            target_net.scales[idx] = value_net.scales[idx] / alphas[idx]
        else:
            target_net.scales[idx] = value_net.scales[idx].copy()
        target_net.biases[idx] = value_net.biases[idx].copy()


def _refold_target_stats(
    value_net: BinarizedNetwork,
    target_net: FullPrecisionNetwork,
    probe: np.ndarray,
):
    """Walk both networks over the probe batch; at each scale-shift give the
    target the affine map that reproduces the value network's post-scale
    channel statistics on its own pre-activations."""
    act_v = np.asarray(probe, dtype=np.float64)
    act_t = act_v.copy()
    weights_v = value_net.float_weights()
    for idx, spec in enumerate(value_net.layers):
        if isinstance(spec, BinaryConv2d):
            act_v = convops.conv_forward(act_v, weights_v[idx], spec.stride)
            act_t = convops.conv_forward(act_t, target_net.weights[idx], spec.stride)
        elif isinstance(spec, BinaryDense):
            act_v = act_v.reshape(act_v.shape[0], -1) @ weights_v[idx].T
            act_t = act_t.reshape(act_t.shape[0], -1) @ target_net.weights[idx].T
        elif isinstance(spec, ScaleShift):
            act_v = act_v * value_net.scales[idx] + value_net.biases[idx]
            flat_v = act_v.reshape(-1, spec.channels)
            flat_t = act_t.reshape(-1, spec.channels)
            mu_v, sd_v = flat_v.mean(axis=0), np.maximum(flat_v.std(axis=0), 1e-6)
            mu_t, sd_t = flat_t.mean(axis=0), np.maximum(flat_t.std(axis=0), 1e-6)
            target_net.scales[idx] = np.maximum(sd_v / sd_t, SCALE_FLOOR)
            target_net.biases[idx] = mu_v - target_net.scales[idx] * mu_t
            act_t = act_t * target_net.scales[idx] + target_net.biases[idx]
        elif isinstance(spec, SignActivation):
            act_v = np.where(act_v >= 0, 1.0, -1.0)
            act_t = np.where(act_t >= 0, 1.0, -1.0)


def calibrate_scaleshift(
    net: BinarizedNetwork,
    states: np.ndarray,
    head_gain: float = 0.1,
    hidden_margin: float = 0.25,
):
    """Fold batch-normalization statistics into the scale-shift layers.

    One pass over a batch of real states sets each scale-shift to
    scale = g / std, bias = -g * mean / std of its incoming
    pre-activations (g = 1 for hidden layers, head_gain for the output
    head so initial action values start small). Without this the sign
    pre-activations sit far outside the straight-through window and
    training stalls.

    hidden_margin shifts hidden biases down so the dominant
    (background) pre-activation mass rests at -margin instead of
    exactly on the sign boundary: still inside the straight-through
    window, but with a perturbation margin that keeps those units
    stable under small input balls, which is what makes the trained
    network verifiable.
    """
    acts = np.asarray(states, dtype=np.float64)
    weights = net.float_weights()
    last = net.scaleshift_indices[-1]
    for idx, spec in enumerate(net.layers):
        if isinstance(spec, BinaryConv2d):
            acts = convops.conv_forward(acts, weights[idx], spec.stride)
        elif isinstance(spec, BinaryDense):
            acts = acts.reshape(acts.shape[0], -1) @ weights[idx].T
        elif isinstance(spec, ScaleShift):
            flat = acts.reshape(-1, spec.channels)
            mu = flat.mean(axis=0)
            sd = np.maximum(flat.std(axis=0), 1e-3)
            gain = head_gain if idx == last else 1.0
            offset = 0.0 if idx == last else hidden_margin
            net.scales[idx] = np.maximum(gain / sd, SCALE_FLOOR)
            net.biases[idx] = -gain * mu / sd - offset
            acts = acts * net.scales[idx] + net.biases[idx]
        elif isinstance(spec, SignActivation):
            acts = np.where(acts >= 0, 1.0, -1.0)
    net.mark_dirty()


def polish_margins(
    net: BinarizedNetwork, states: np.ndarray, margin: float = 0.25
):
    """Deployment pass: move each hidden channel's dominant pre-activation
    mass to +-margin without changing its sign.

    Training pulls sign thresholds onto the data (that is where the
    gradient signal lives), which leaves pre-activations hugging the
    boundary and makes every unit formally unstable under tiny input
    balls. Shifting the bias so the per-channel median lands at
    sign(median) * margin keeps the dominant activations identical
    while giving them a perturbation margin; only inputs that were
    within `margin` of the old threshold can change behavior. The
    output head is left untouched.
    """
    acts = np.asarray(states, dtype=np.float64)
    weights = net.float_weights()
    last = net.scaleshift_indices[-1]
    for idx, spec in enumerate(net.layers):
        if isinstance(spec, BinaryConv2d):
            acts = convops.conv_forward(acts, weights[idx], spec.stride)
        elif isinstance(spec, BinaryDense):
            acts = acts.reshape(acts.shape[0], -1) @ weights[idx].T
        elif isinstance(spec, ScaleShift):
            acts = acts * net.scales[idx] + net.biases[idx]
            if idx != last:
                flat = acts.reshape(-1, spec.channels)
                med = np.median(flat, axis=0)
                target = np.where(med >= 0, margin, -margin)
                shift = target - med
                net.biases[idx] = net.biases[idx] + shift
                acts = acts + shift
        elif isinstance(spec, SignActivation):
            acts = np.where(acts >= 0, 1.0, -1.0)
    net.mark_dirty()


def init_pair(
    input_shape, layers, rng: np.random.Generator, init_scale: float = 0.1
) -> tuple[BinarizedNetwork, FullPrecisionNetwork]:
    """Shared initialization: the target holds the random full-precision
    weights and the value network's binary weights are their signs,
    realized by sharing the same tensors as latents. init_scale bounds
    the latent magnitudes so early sign flips stay cheap."""
    value = BinarizedNetwork.random(input_shape, layers, rng)
    for idx in value.latents:
        value.latents[idx] = rng.uniform(
            -init_scale, init_scale, size=value.latents[idx].shape
        )
    value.mark_dirty()
    target = FullPrecisionNetwork.from_binarized(value, mode="latent")
    sync_target(value, target, SYNC_FULL_PRECISION)
    return value, target
