"""Command-line operator surface.

Subcommands: train, evaluate, verify, export-lp, inspect. Exit codes:
0 success, 1 usage / IO error, 2 runtime divergence. The BQN_SEED
environment variable overrides the config seed everywhere.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from bqn import presets, tensorio, training
from bqn.config import ConfigError, RunConfig, load_config_file
from bqn.core.layers import BinaryConv2d, BinaryDense, ScaleShift
from bqn.core.serialize import ModelFormatError, load
from bqn.rl.envs import make_env
from bqn.rl.loop import evaluate, train
from bqn.verifier.bounds import propagate_bounds
from bqn.verifier.encode import encode
from bqn.verifier.lpfile import export_lp
from bqn.verifier.robustness import PremiseError, verify_robustness
from bqn.verifier.sets import InputSet, OutputProperty

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2

VERDICT_CSV_HEADER = [
    "property_id",
    "verdict",
    "epsilon",
    "norm",
    "nodes",
    "lp_calls",
    "wall_ms",
    "counterexample_path",
]


def _seed_override(seed: int) -> int:
    env = os.environ.get("BQN_SEED")
    if env is None:
        return seed
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"BQN_SEED must be an integer, got {env!r}") from exc


def _parse_env_name(name: str) -> tuple[str, int]:
    """'catch-10' -> ('catch', 10); bare 'catch' uses the default size."""
    base, _, size = name.partition("-")
    if size:
        try:
            return base, int(size)
        except ValueError as exc:
            raise ConfigError(f"bad env size in {name!r}") from exc
    return base, 10


def cmd_train(args) -> int:
    config = RunConfig.from_file(args.config)
    config.seed = _seed_override(config.seed)
    result = train(config, out_dir=args.out or None)
    print(
        f"trained {result.steps} steps over {len(result.metrics)} episodes"
        + (" (stopped at eval target)" if result.stopped_early else "")
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    net = load(args.model)
    env_name, size = _parse_env_name(args.env)
    seed = _seed_override(args.seed)
    env = make_env(env_name, size, np.random.SeedSequence(seed).spawn(1)[0])
    recorder: list | None = [] if args.record else None
    result = evaluate(
        net,
        env,
        episodes=args.episodes,
        epsilon=args.epsilon,
        rng=np.random.default_rng(seed + 1),
        recorder=recorder,
    )
    print(f"mean return {result.mean:+.4f} +- {result.std:.4f} over {args.episodes} episodes")
    print("episode,return_raw")
    for i, ret in enumerate(result.returns):
        print(f"{i},{ret!r}")
    if args.record:
        os.makedirs(args.record, exist_ok=True)
        for i, state in enumerate(recorder):
            tensorio.save_tensor(
                os.path.join(args.record, f"frame_{i:06d}.bqnx"), state
            )
        print(f"recorded {len(recorder)} frames to {args.record}")
    return EXIT_OK


def _load_batch(path: str) -> dict:
    sections = load_config_file(path)
    if "batch" not in sections:
        raise ConfigError(f"{path}: missing [batch] section")
    raw = sections["batch"]
    batch = {
        "model": raw.get("model", ""),
        "frames": raw.get("frames", ""),
        "count": int(raw.get("count", "50")),
        "epsilon": float(raw.get("epsilon", "0.01")),
        "norm": raw.get("norm", "l1"),
        "delta": float(raw.get("delta", "1e-6")),
        "timeout_s": float(raw.get("timeout_s", "60")),
        "seed": int(raw.get("seed", "0")),
        "perturb": raw.get("perturb", "all"),
        "target": raw.get("target", "auto"),
    }
    if not batch["model"]:
        raise ConfigError(f"{path}: [batch] model is required")
    if not batch["frames"]:
        raise ConfigError(f"{path}: [batch] frames is required")
    if batch["timeout_s"] <= 0:
        raise ConfigError(f"{path}: timeout_s must be > 0")
    if batch["norm"] not in ("l1", "linf"):
        raise ConfigError(f"{path}: norm must be l1 or linf")
    if batch["perturb"] not in ("all", "last"):
        raise ConfigError(f"{path}: perturb must be all or last")
    return batch


def _batch_frames(batch: dict) -> list[str]:
    frames_dir = batch["frames"]
    if os.path.isdir(frames_dir):
        files = sorted(
            os.path.join(frames_dir, f)
            for f in os.listdir(frames_dir)
            if f.endswith(".bqnx")
        )
    else:
        files = [p for p in frames_dir.split(";") if p]
    if not files:
        raise ConfigError(f"no .bqnx frames found under {frames_dir}")
    if len(files) > batch["count"]:
        rng = np.random.default_rng(batch["seed"])
        picked = rng.choice(len(files), size=batch["count"], replace=False)
        files = [files[i] for i in sorted(picked)]
    return files


def _perturb_mask(batch: dict, shape) -> np.ndarray | None:
    if batch["perturb"] == "all":
        return None
    mask = np.zeros(shape, dtype=bool)
    mask[..., -1] = True  # newest frame of the stack only
    return mask


def _load_frame(path: str, net) -> np.ndarray:
    x0 = tensorio.load_tensor(path)
    if x0.size != int(np.prod(net.input_shape)):
        raise ConfigError(
            f"{path}: frame has {x0.size} values, model expects "
            f"{int(np.prod(net.input_shape))}"
        )
    return x0.reshape(net.input_shape)


def _verify_one(model_path, frame_path, batch) -> dict:
    net = load(model_path)
    x0 = _load_frame(frame_path, net)
    mask = _perturb_mask(batch, x0.shape)
    target = None if batch["target"] == "auto" else int(batch["target"])
    try:
        verdict = verify_robustness(
            net,
            x0,
            target=target,
            epsilon=batch["epsilon"],
            norm=batch["norm"],
            delta=batch["delta"],
            timeout_s=batch["timeout_s"],
            mask=mask,
        )
    except PremiseError:
        return {"verdict": "skipped", "nodes": 0, "lp_calls": 0, "wall_ms": 0.0}
    row = {
        "verdict": verdict.verdict,
        "nodes": verdict.stats.nodes,
        "lp_calls": verdict.stats.lp_calls,
        "wall_ms": verdict.stats.wall_ms,
    }
    if verdict.verdict == "counterexample":
        row["x"] = verdict.x
    return row


def cmd_verify(args) -> int:
    batch = _load_batch(args.batch)
    if args.model:
        batch["model"] = args.model
    if args.timeout_s is not None:
        batch["timeout_s"] = args.timeout_s
    frames = _batch_frames(batch)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.batch))
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "verdicts.csv")

    jobs = [(batch["model"], frame, batch) for frame in frames]
    if args.workers > 1:
        import multiprocessing

        with multiprocessing.get_context("spawn").Pool(args.workers) as pool:
            results = pool.starmap(_verify_one, jobs)
    else:
        results = [_verify_one(*job) for job in jobs]

    counts = {"holds": 0, "counterexample": 0, "timeout": 0, "skipped": 0}
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(VERDICT_CSV_HEADER)
        for pid, row in enumerate(results):
            counts[row["verdict"]] += 1
            cex_path = ""
            if row["verdict"] == "counterexample":
                cex_path = os.path.join(out_dir, f"counterexample_{pid:03d}.bqnx")
                x = np.asarray(row["x"])
                if x.ndim != 3:
                    x = x.reshape(1, 1, -1)
                tensorio.save_tensor(cex_path, x)
            writer.writerow(
                [
                    pid,
                    row["verdict"],
                    repr(batch["epsilon"]),
                    batch["norm"],
                    row["nodes"],
                    row["lp_calls"],
                    repr(row["wall_ms"]),
                    cex_path,
                ]
            )
    total = len(results)
    print(f"Verified                    {counts['holds']}")
    print(f"Unverified (counterexample) {counts['counterexample']}")
    print(f"Unverified (timeout)        {counts['timeout']}")
    if counts["skipped"]:
        print(f"Skipped (premise mismatch)  {counts['skipped']}")
    print(f"Total                       {total}")
    print(f"verdicts written to {csv_path}")
    return EXIT_OK


def _parse_property_spec(spec: str) -> dict:
    out = {"eps": 0.01, "norm": "l1", "delta": 1e-6, "target": "auto", "frame": ""}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        if not value or key not in out:
            raise ConfigError(f"bad property spec component {part!r}")
        out[key] = value
    if not out["frame"]:
        raise ConfigError("property spec needs frame=PATH")
    out["eps"] = float(out["eps"])
    out["delta"] = float(out["delta"])
    if out["norm"] not in ("l1", "linf"):
        raise ConfigError("property norm must be l1 or linf")
    return out


def cmd_export_lp(args) -> int:
    net = load(args.model)
    spec = _parse_property_spec(args.property)
    x0 = _load_frame(spec["frame"], net)
    q0 = net.forward(x0)
    target = int(np.argmax(q0)) if spec["target"] == "auto" else int(spec["target"])
    input_set = InputSet(x0, spec["eps"], spec["norm"])
    prop = OutputProperty(target, spec["delta"])
    bounds = propagate_bounds(net, input_set)
    system = encode(net, input_set, prop, bounds)
    export_lp(system, args.out)
    print(
        f"wrote {args.out}: {system.num_vars} variables, "
        f"{system.num_rows} constraints, "
        f"{int(np.sum(system.is_binary))} binary"
    )
    return EXIT_OK


def cmd_inspect(args) -> int:
    net = load(args.model)
    print(f"input shape : {net.input_shape}")
    print(f"actions     : {net.num_actions}")
    print("layers:")
    total_weights = 0
    packed_bytes = 0
    affine_params = 0
    for idx, spec in enumerate(net.layers):
        if isinstance(spec, BinaryDense):
            n = spec.in_dim * spec.out_dim
            total_weights += n
            packed_bytes += net.packed[idx].payload_bytes
            print(f"  {idx:2d} dense {spec.in_dim} -> {spec.out_dim} ({n} binary weights)")
        elif isinstance(spec, BinaryConv2d):
            n = spec.out_channels * spec.in_channels * spec.kernel_h * spec.kernel_w
            total_weights += n
            packed_bytes += net.packed[idx].payload_bytes
            print(
                f"  {idx:2d} conv {spec.in_channels} -> {spec.out_channels} "
                f"k{spec.kernel_h}x{spec.kernel_w} s{spec.stride} ({n} binary weights)"
            )
        elif isinstance(spec, ScaleShift):
            affine_params += 2 * spec.channels
            print(f"  {idx:2d} scale-shift ({spec.channels} channels)")
        else:
            print(f"  {idx:2d} sign")
    affine_bytes = 4 * affine_params
    binary_total = packed_bytes + affine_bytes
    float_total = 4 * total_weights + affine_bytes
    ratio = float_total / binary_total
    print(f"binary weights      : {total_weights}")
    print(f"packed weight bytes : {packed_bytes}")
    print(f"scale/bias bytes    : {affine_bytes}")
    print(f"binary model bytes  : {binary_total}")
    print(f"float32-equivalent  : {float_total}")
    print(f"size ratio          : {ratio:.2f}x")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bqn",
        description="Binarized Q-networks: train, evaluate, verify, export, inspect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the learning loop from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="", help="override the config output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll out an epsilon-greedy policy")
    p.add_argument("--model", required=True)
    p.add_argument("--env", required=True, help="environment name, e.g. catch-10")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--record", default="", help="directory for recorded state frames")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="run a robustness property batch")
    p.add_argument("--model", default="", help="override the batch model path")
    p.add_argument("--batch", required=True)
    p.add_argument("--timeout-s", type=float, default=None, dest="timeout_s")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="", help="output directory for verdicts")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-lp", help="write one property encoding as an LP file")
    p.add_argument("--model", required=True)
    p.add_argument(
        "--property",
        required=True,
        help="frame=PATH[,eps=F][,norm=l1|linf][,delta=F][,target=N|auto]",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("inspect", help="print architecture and size accounting")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except training.DivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ModelFormatError, tensorio.TensorFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PremiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
