"""Time the numba kernel path against the pure-numpy fallback.

Each backend runs in its own subprocess because the backend is chosen once
at import time from HEADPRUNE_BACKEND. Shapes mirror what training at the
default model size actually pushes through the kernels (batch 64, d_model
64, ffn 128, sequences around 20 tokens).

Usage: python benchmarks/bench_kernels.py [--repeat 5] [--number 50]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

CASES = ("softmax", "softmax_grad", "layer_norm", "layer_norm_grad",
         "gelu", "gelu_grad", "adam_update")


def _build_funcs():
    from headprune import kernels as K

    rng = np.random.default_rng(0)
    f32 = lambda *shape: rng.standard_normal(shape).astype(np.float32)
    scores = f32(4096, 24)
    probs = K.softmax_lastaxis(scores)
    dprobs = f32(4096, 24)
    x = f32(1024, 64)
    dy = f32(1024, 64)
    gain, bias = f32(64), f32(64)
    _, mean, rstd = K.layer_norm(x, gain, bias)
    act = f32(1024, 128)
    dact = f32(1024, 128)
    p, g = f32(65536), f32(65536)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    return {
        "softmax": lambda: K.softmax_lastaxis(scores),
        "softmax_grad": lambda: K.softmax_grad(probs, dprobs),
        "layer_norm": lambda: K.layer_norm(x, gain, bias),
        "layer_norm_grad": lambda: K.layer_norm_grad(dy, x, gain, mean, rstd),
        "gelu": lambda: K.gelu(act),
        "gelu_grad": lambda: K.gelu_grad(act, dact),
        "adam_update": lambda: K.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1),
    }


def run_worker(repeat: int, number: int) -> dict[str, float]:
    funcs = _build_funcs()
    out = {}
    for name in CASES:
        fn = funcs[name]
        fn()  # warmup: first call pays any JIT compile
        best = min(timeit.repeat(fn, repeat=repeat, number=number))
        out[name] = best / number
    return out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=50)
    ap.add_argument("--worker", choices=("numpy", "numba"), help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        print(json.dumps(run_worker(args.repeat, args.number)))
        return 0

    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, HEADPRUNE_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker", backend,
             "--repeat", str(args.repeat), "--number", str(args.number)],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{backend} backend unavailable:\n{proc.stderr.strip()}",
                  file=sys.stderr)
            continue
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    if not results:
        return 1
    print(f"{'kernel':<18}" + "".join(f"{b + ' (us)':>14}" for b in results)
          + ("{:>10}".format("speedup") if len(results) == 2 else ""))
    for name in CASES:
        row = f"{name:<18}"
        for b in results:
            row += f"{results[b][name] * 1e6:>14.2f}"
        if len(results) == 2:
            np_t, nb_t = results["numpy"][name], results["numba"][name]
            row += f"{np_t / nb_t:>9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
