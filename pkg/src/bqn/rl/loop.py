"""Training and evaluation loops.

The training loop follows the tabular recipe: prefill the replay
buffer with random actions, then per environment step select an
epsilon-greedy action, store the clipped-reward transition, sample a
minibatch, regress the taken-action values onto bootstrap targets from
the full-precision target network, take one RMSProp step, and sync the
target every `sync_every` steps.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from bqn import presets, training
from bqn.config import RunConfig
from bqn.core.network import BinarizedNetwork, FullPrecisionNetwork
from bqn.core.serialize import save
from bqn.rl.agent import (
    calibrate_scaleshift,
    compute_targets,
    init_pair,
    polish_margins,
    select_action,
    sync_target,
)
from bqn.rl.envs import make_env
from bqn.rl.preprocess import Preprocessor
from bqn.rl.replay import EpsilonSchedule, ReplayBuffer, Transition, clip_reward

METRICS_HEADER = [
    "episode",
    "steps",
    "return_raw",
    "return_clipped",
    "epsilon",
    "loss_mean",
    "wall_ms",
]


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: list[float] = field(default_factory=list)


@dataclass
class TrainResult:
    net: BinarizedNetwork
    target: FullPrecisionNetwork
    metrics: list[dict]
    steps: int
    eval_history: list[tuple[int, float]] = field(default_factory=list)
    stopped_early: bool = False


def _skip_step(env, pre: Preprocessor, action: int, frame_skip: int):
    """Repeat one action frame_skip times, accumulating the raw reward."""
    raw = 0.0
    done = False
    frame = None
    for _ in range(frame_skip):
        frame, r, done = env.step(action)
        raw += r
        if done:
            break
    return pre.push(frame), raw, done


def _prefill(env, pre, buffer, target_size, rng):
    while len(buffer) < target_size:
        state = pre.reset(env.reset())
        done = False
        while not done and len(buffer) < target_size:
            action = int(rng.integers(env.num_actions))
            nxt, raw, done = _skip_step(env, pre, action, 1)
            buffer.push(Transition(state, action, clip_reward(raw), nxt, done))
            state = nxt


def evaluate(
    net,
    env,
    episodes: int,
    epsilon: float = 0.05,
    rng: np.random.Generator | None = None,
    frame_skip: int = 1,
    recorder: list | None = None,
) -> EvalResult:
    """Mean and std of raw (unclipped) episode returns under an
    epsilon-greedy policy. Appends visited states to `recorder` if given."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    pre = Preprocessor(env.obs_shape)
    returns = []
    for _ in range(episodes):
        state = pre.reset(env.reset())
        if recorder is not None:
            recorder.append(state)
        done = False
        total = 0.0
        while not done:
            action = select_action(net, state, epsilon, rng)
            state, raw, done = _skip_step(env, pre, action, frame_skip)
            total += raw
            if recorder is not None and not done:
                recorder.append(state)
        returns.append(total)
    arr = np.asarray(returns, dtype=np.float64)
    return EvalResult(float(arr.mean()), float(arr.std()), returns)


class _MetricsWriter:
    def __init__(self, path: str | None):
        self._fh = None
        self._writer = None
        if path:
            self._fh = open(path, "w", encoding="utf-8", newline="\n")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(METRICS_HEADER)

    def write(self, row: dict):
        if self._writer is not None:
            self._writer.writerow([row[k] for k in METRICS_HEADER])
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def train(config: RunConfig, out_dir: str | None = None) -> TrainResult:
    """Run the full learning loop; deterministic for a fixed config."""
    config.validate()
    out_dir = out_dir if out_dir is not None else (config.out_dir or None)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    seeds = np.random.SeedSequence(config.seed).spawn(5)
    env = make_env(config.env_name, config.env_size, seeds[0])
    rng_action = np.random.default_rng(seeds[1])
    rng_buffer = np.random.default_rng(seeds[2])
    rng_init = np.random.default_rng(seeds[3])
    eval_seq = seeds[4]

    layers = presets.build_layers(
        config.preset, (config.env_size, config.env_size, 4), env.num_actions
    )
    value, target = init_pair(
        (config.env_size, config.env_size, 4),
        layers,
        rng_init,
        init_scale=config.init_scale,
    )
    optimizer = training.RmsPropState.for_network(
        value, lr=config.lr, rho=config.rho, eps=config.eps_opt
    )
    buffer = ReplayBuffer(config.buffer_capacity, rng_buffer)
    schedule = EpsilonSchedule(
        config.eps_start, config.eps_end, config.eps_decay_steps
    )
    pre = Preprocessor((config.env_size, config.env_size))

    def _probe_states():
        sample = buffer.sample(min(len(buffer), 128))
        return np.stack([t.s for t in sample])

    if config.max_steps > 0:
        _prefill(env, pre, buffer, config.prefill, rng_action)
        sample = buffer.sample(min(len(buffer), config.calibration_batch))
        calibrate_scaleshift(
            value,
            np.stack([t.s for t in sample]),
            config.head_gain,
            config.calibration_margin,
        )
        sync_target(value, target, config.sync_mode, probe_states=_probe_states())

    writer = _MetricsWriter(os.path.join(out_dir, "metrics.csv") if out_dir else None)
    metrics: list[dict] = []
    eval_history: list[tuple[int, float]] = []
    step = 0
    episode = 0
    next_eval = config.eval_every_steps if config.eval_every_steps > 0 else None
    stopped = False
    want_stop = np.isfinite(config.stop_at_return)

    try:
        while step < config.max_steps and not stopped:
            episode += 1
            ep_start = time.monotonic()
            state = pre.reset(env.reset())
            done = False
            ep_steps = 0
            ret_raw = 0.0
            ret_clip = 0.0
            losses = []
            eps = schedule.value(step)
            while not done and step < config.max_steps:
                eps = schedule.value(step)
                action = select_action(value, state, eps, rng_action)
                nxt, raw, done = _skip_step(env, pre, action, config.frame_skip)
                r = clip_reward(raw)
                buffer.push(Transition(state, action, r, nxt, done))
                state = nxt
                step += 1
                ep_steps += 1
                ret_raw += raw
                ret_clip += r

                if len(buffer) >= config.batch_size:
                    batch = buffer.sample(config.batch_size)
                    targets = compute_targets(target, batch, config.gamma)
                    states = np.stack([t.s for t in batch])
                    actions = np.array([t.a for t in batch])
                    q, tape = training.forward_train(value, states, mode="binary")
                    rows = np.arange(len(batch))
                    q_taken = q[rows, actions]
                    j = training.loss(q_taken, targets)
                    if not np.isfinite(j):
                        _diagnostic_checkpoint(value, optimizer, out_dir)
                        raise training.DivergedError(
                            f"non-finite loss at step {step}"
                        )
                    dq = np.zeros_like(q)
                    dq[rows, actions] = training.loss_grad(q_taken, targets)
                    grads = training.backward(value, tape, dq)
                    try:
                        training.apply_updates(
                            value, optimizer, grads, config.train_scales
                        )
                    except training.DivergedError:
                        _diagnostic_checkpoint(value, optimizer, out_dir)
                        raise
                    losses.append(j)

                if step % config.sync_every == 0:
                    sync_target(
                        value, target, config.sync_mode, probe_states=_probe_states()
                    )

            wall_ms = (time.monotonic() - ep_start) * 1000.0
            row = {
                "episode": episode,
                "steps": ep_steps,
                "return_raw": repr(ret_raw),
                "return_clipped": repr(ret_clip),
                "epsilon": repr(eps),
                "loss_mean": repr(float(np.mean(losses)) if losses else 0.0),
                "wall_ms": repr(wall_ms),
            }
            metrics.append(row)
            writer.write(row)

            if (
                out_dir
                and config.checkpoint_every_episodes > 0
                and episode % config.checkpoint_every_episodes == 0
            ):
                save(
                    value,
                    os.path.join(out_dir, f"checkpoint_ep{episode:06d}.bqn"),
                    optimizer_state=optimizer.as_dict(),
                )

            if next_eval is not None and step >= next_eval:
                next_eval += config.eval_every_steps
                candidate = _deploy_candidate(value, config, _probe_states)
                eval_env = make_env(
                    config.env_name, config.env_size, eval_seq.spawn(1)[0]
                )
                result = evaluate(
                    candidate,
                    eval_env,
                    config.eval_episodes,
                    config.eval_epsilon,
                    np.random.default_rng(eval_seq.spawn(1)[0]),
                    config.frame_skip,
                )
                eval_history.append((step, result.mean))
                if want_stop and result.mean >= config.stop_at_return:
                    stopped = True
                    value = candidate
    finally:
        writer.close()

    if not stopped and config.max_steps > 0:
        value = _deploy_candidate(value, config, _probe_states)
    if out_dir:
        save(value, os.path.join(out_dir, "model.bqn"), optimizer_state=optimizer.as_dict())
    return TrainResult(value, target, metrics, step, eval_history, stopped)


def _deploy_candidate(value, config, probe_states_fn):
    """The network as shipped: margin-polished when configured."""
    if config.polish_margin <= 0:
        return value
    candidate = value.clone()
    polish_margins(candidate, probe_states_fn(), config.polish_margin)
    return candidate


def _diagnostic_checkpoint(net, optimizer, out_dir):
    if out_dir:
        save(
            net,
            os.path.join(out_dir, "diverged.bqn"),
            optimizer_state=optimizer.as_dict(),
        )
