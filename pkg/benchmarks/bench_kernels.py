"""Benchmark the compiled bit kernels against the numpy fallback.

Run from the repository root after an in-place extension build:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernels.py

Times the packed sign matmul on layer-like shapes and a full packed
forward pass of the two convolutional presets.
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from bqn import kernels, presets  # noqa: E402


def time_call(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_matmul():
    rng = np.random.default_rng(0)
    shapes = [
        ("dense head    (32 x 512) . (4 x 512)", 32, 4, 512),
        ("conv patches  (400 x 288) . (64 x 288)", 400, 64, 288),
        ("wide batch    (2048 x 3136) . (512 x 3136)", 2048, 512, 3136),
    ]
    print(f"{'sign matmul shape':<44} " + "".join(f"{b:>12}" for b in kernels.available_backends()))
    for label, m, k, n in shapes:
        a_bits = (rng.random((m, n)) < 0.5).astype(np.uint8)
        b_bits = (rng.random((k, n)) < 0.5).astype(np.uint8)
        row = f"{label:<44} "
        results = {}
        for name in kernels.available_backends():
            impl = kernels.get_backend(name)
            a = impl.pack_rows(a_bits)
            b = impl.pack_rows(b_bits)
            dt = time_call(impl.sign_matmul, a, b, n)
            results[name] = dt
            row += f"{dt * 1e3:>10.2f}ms"
        if len(results) == 2:
            names = list(results)
            row += f"   ({results[names[1]] / results[names[0]]:.1f}x)"
        print(row)


def bench_forward():
    import os

    rng = np.random.default_rng(1)
    print()
    print("packed forward pass (single frame stack)")
    for preset, shape in (("bqn-small", (10, 10, 4)), ("bqn", (84, 84, 4))):
        net = presets.build_network(preset, shape, 4, rng)
        x = rng.uniform(0, 1, size=shape)
        net.forward(x)  # warm up / pack
        dt = time_call(net.forward, x, repeats=10)
        print(f"  {preset:<10} {shape}: {dt * 1e3:8.2f} ms  [{kernels.BACKEND} backend]")
    print()
    print("force the other backend with BQN_KERNELS=py or BQN_KERNELS=c")


if __name__ == "__main__":
    print(f"active backend: {kernels.BACKEND}")
    bench_matmul()
    bench_forward()
