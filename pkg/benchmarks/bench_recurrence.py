#!/usr/bin/env python3
"""Compare the compiled and numpy LSTM recurrence kernels.

Times forward and forward+backward over a few batch shapes, checks that both
backends agree, and prints one row per shape. The desk-scale classifier runs
T=32 steps, so short sequences with small hidden sizes dominate real use.

Usage: python3 benchmarks/bench_recurrence.py [--repeats 20] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from breathcue import kernels

SHAPES = [
    # (N, T, H)
    (10, 32, 64),
    (10, 32, 32),
    (25, 32, 64),
    (2, 32, 512),
    (10, 201, 64),
]


def _time(fn, repeats):
    fn()  # warm-up
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench_shape(N, T, H, repeats, seed=0):
    rng = np.random.default_rng(seed)
    xg = rng.standard_normal((N, T, 4 * H))
    U = rng.standard_normal((H, 4 * H)) / np.sqrt(H)
    dh = rng.standard_normal((N, T, H))
    row = {"N": N, "T": T, "H": H}
    outputs = {}
    for name in kernels.AVAILABLE:
        kernels.use_backend(name)

        def fwd():
            return kernels.lstm_forward(xg, U)

        def fwd_bwd():
            h, c, gates = kernels.lstm_forward(xg, U)
            return kernels.lstm_backward(dh, U, h, c, gates)

        row[f"{name}_fwd_ms"] = 1e3 * _time(fwd, repeats)
        row[f"{name}_fwdbwd_ms"] = 1e3 * _time(fwd_bwd, repeats)
        h = fwd()[0]
        dxg, dU = fwd_bwd()
        outputs[name] = (h, dxg, dU)
    if "cython" in outputs:
        ref = outputs["numpy"]
        row["max_abs_diff"] = max(float(np.max(np.abs(a - b))) for a, b in zip(outputs["cython"], ref))
        row["speedup_fwdbwd"] = row["numpy_fwdbwd_ms"] / row["cython_fwdbwd_ms"]
    return row


def main():
    ap = argparse.ArgumentParser(description="LSTM recurrence backend benchmark")
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--json", help="also write rows as JSON")
    args = ap.parse_args()
    previous = kernels.BACKEND
    print(f"backends available: {', '.join(kernels.AVAILABLE)}")
    rows = []
    try:
        for shape in SHAPES:
            row = bench_shape(*shape, repeats=args.repeats)
            rows.append(row)
            line = f"N={row['N']:3d} T={row['T']:4d} H={row['H']:4d}  numpy fwd+bwd {row['numpy_fwdbwd_ms']:8.2f} ms"
            if "cython_fwdbwd_ms" in row:
                line += (f"  cython fwd+bwd {row['cython_fwdbwd_ms']:8.2f} ms"
                         f"  speedup {row['speedup_fwdbwd']:5.2f}x  max|diff| {row['max_abs_diff']:.1e}")
            print(line)
    finally:
        kernels.use_backend(previous)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(rows, f, indent=2)


if __name__ == "__main__":
    main()
