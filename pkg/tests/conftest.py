"""Shared fixtures: random-network generators and the trained Catch model.

Training the acceptance model takes minutes, so the session fixture
caches it under .cache_trained/ keyed by the config; delete that
directory to force a retrain.
"""

import hashlib
import json
import os

import numpy as np
import pytest

from bqn.config import RunConfig
from bqn.core.layers import (
    BinaryConv2d,
    BinaryDense,
    ScaleShift,
    SignActivation,
)
from bqn.core.network import BinarizedNetwork

CACHE_DIR = os.path.join(os.path.dirname(__file__), "..", ".cache_trained")


def random_toy_net(rng, n_in=None, widths=None, n_act=None, input_shape=None):
    """Dense sign network on a flat input; used all over the verifier tests."""
    n_in = n_in if n_in is not None else int(rng.integers(4, 13))
    widths = widths if widths is not None else [int(rng.integers(3, 17))]
    n_act = n_act if n_act is not None else int(rng.integers(2, 4))
    layers, latents, scales, biases = [], {}, {}, {}
    dims = [n_in] + list(widths)
    idx = 0
    for a, b in zip(dims, dims[1:]):
        layers.append(BinaryDense(a, b))
        latents[idx] = rng.uniform(-1, 1, (b, a))
        idx += 1
        layers.append(ScaleShift(b))
        scales[idx] = rng.uniform(0.2, 1.5, b)
        biases[idx] = rng.normal(0, 1.0, b)
        idx += 1
        layers.append(SignActivation())
        idx += 1
    layers.append(BinaryDense(dims[-1], n_act))
    latents[idx] = rng.uniform(-1, 1, (n_act, dims[-1]))
    idx += 1
    layers.append(ScaleShift(n_act))
    scales[idx] = rng.uniform(0.2, 1.5, n_act)
    biases[idx] = rng.normal(0, 0.5, n_act)
    shape = input_shape if input_shape is not None else (n_in,)
    return BinarizedNetwork(shape, layers, latents, scales, biases)


def random_mixed_net(rng):
    """Small conv+dense network with random valid geometry."""
    h = int(rng.integers(6, 11))
    w = int(rng.integers(6, 11))
    c = int(rng.integers(1, 4))
    n_act = int(rng.integers(2, 5))
    layers, latents, scales, biases = [], {}, {}, {}
    idx = 0
    out_c = int(rng.integers(2, 6))
    k = int(rng.integers(2, 4))
    stride = int(rng.integers(1, 3))
    layers.append(BinaryConv2d(c, out_c, k, k, stride))
    latents[idx] = rng.uniform(-1, 1, (out_c, k, k, c))
    idx += 1
    layers.append(ScaleShift(out_c))
    scales[idx] = rng.uniform(0.2, 1.5, out_c)
    biases[idx] = rng.normal(0, 0.5, out_c)
    idx += 1
    layers.append(SignActivation())
    idx += 1
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    flat = oh * ow * out_c
    hidden = int(rng.integers(4, 12))
    layers.append(BinaryDense(flat, hidden))
    latents[idx] = rng.uniform(-1, 1, (hidden, flat))
    idx += 1
    layers.append(ScaleShift(hidden))
    scales[idx] = rng.uniform(0.2, 1.5, hidden)
    biases[idx] = rng.normal(0, 0.5, hidden)
    idx += 1
    layers.append(SignActivation())
    idx += 1
    layers.append(BinaryDense(hidden, n_act))
    latents[idx] = rng.uniform(-1, 1, (n_act, hidden))
    idx += 1
    layers.append(ScaleShift(n_act))
    scales[idx] = rng.uniform(0.2, 1.5, n_act)
    biases[idx] = rng.normal(0, 0.5, n_act)
    return BinarizedNetwork((h, w, c), layers, latents, scales, biases)


def acceptance_config() -> RunConfig:
    """The catch training configuration used by the acceptance suite."""
    seed = int(os.environ.get("BQN_SEED", "7"))
    return RunConfig(
        env_name="catch",
        env_size=10,
        preset="bqn-small",
        seed=seed,
        gamma=0.8,
        sync_every=500,
        batch_size=32,
        buffer_capacity=30_000,
        prefill=1_500,
        max_steps=200_000,
        eps_decay_steps=8_000,
        lr=1e-3,
        rho=0.95,
        eps_opt=1e-4,
        init_scale=0.1,
        train_scales=False,
        polish_margin=0.25,
        eval_every_steps=2_000,
        eval_episodes=200,
        eval_epsilon=0.05,
        stop_at_return=0.86,  # catch rate 0.93
    )


def _config_key(config: RunConfig) -> str:
    blob = json.dumps(
        {k: repr(v) for k, v in sorted(vars(config).items())}, sort_keys=True
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@pytest.fixture(scope="session")
def trained_catch_model(tmp_path_factory):
    """Train (or load the cached) bqn-small Catch model; returns its path."""
    from bqn.core.serialize import load, save
    from bqn.rl.loop import train

    config = acceptance_config()
    os.makedirs(CACHE_DIR, exist_ok=True)
    path = os.path.join(CACHE_DIR, f"catch_{_config_key(config)}.bqn")
    meta = path + ".json"
    if os.path.exists(path) and os.path.exists(meta):
        with open(meta) as fh:
            info = json.load(fh)
        return {"path": path, **info}
    result = train(config)
    save(result.net, path)
    info = {"steps": result.steps, "stopped_early": result.stopped_early}
    with open(meta, "w") as fh:
        json.dump(info, fh)
    return {"path": path, **info}
