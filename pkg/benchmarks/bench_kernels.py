#!/usr/bin/env python3
"""Benchmark the compiled scoring kernels against the NumPy fallback.

Times the raw inner-product sweep per backend and the end-to-end
dual-modality retrieval (sweeps + normalization + fusion + top-k) with
each backend swapped in. Example:

    python benchmarks/bench_kernels.py --pages 100000 --dim 1152
"""

from __future__ import annotations

import argparse
import contextlib
import statistics
import time

import numpy as np

import comret._kernels as kernels
from comret.core import FusionConfig, QueryRecord, as_embedding
from comret.fusion import retrieve
from comret.store import build_index


@contextlib.contextmanager
def active_backend(module):
    saved = (kernels.inner_products, kernels.logistic)
    kernels.inner_products, kernels.logistic = module.inner_products, module.logistic
    try:
        yield
    finally:
        kernels.inner_products, kernels.logistic = saved


def time_call(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pages", type=int, default=100_000)
    parser.add_argument("--dim", type=int, default=1152)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"building synthetic index: M={args.pages} d={args.dim} (float32)")
    ids = [f"p{i}" for i in range(args.pages)]
    index = build_index(
        list(zip(ids, rng.standard_normal((args.pages, args.dim), dtype=np.float32))),
        list(zip(ids, rng.standard_normal((args.pages, args.dim), dtype=np.float32))),
    )
    query_vec = rng.standard_normal(args.dim)
    query = QueryRecord("q", "", {"image-query": as_embedding(query_vec)})
    cfg = FusionConfig(mode="ucmr", beta=0.1, top_k=3)

    available = kernels.backends()
    if "compiled" not in available:
        print("note: compiled extension not built; only the NumPy fallback will run")

    print(f"\n{'backend':<10} {'sweep best':>12} {'sweep median':>13} {'retrieve best':>14} {'retrieve median':>16}")
    retrieve_best: dict[str, float] = {}
    for name in sorted(available):
        module = available[name]
        q64 = np.asarray(query_vec, dtype=np.float64)
        module.inner_products(index.images.data, q64)  # warm-up
        sweep_best, sweep_med = time_call(lambda: module.inner_products(index.images.data, q64), args.repeats)
        with active_backend(module):
            retrieve(query, index, cfg)  # warm-up
            ret_best, ret_med = time_call(lambda: retrieve(query, index, cfg), args.repeats)
        retrieve_best[name] = ret_best
        print(
            f"{name:<10} {sweep_best * 1e3:>10.1f}ms {sweep_med * 1e3:>11.1f}ms "
            f"{ret_best * 1e3:>12.1f}ms {ret_med * 1e3:>14.1f}ms"
        )
    if "compiled" in retrieve_best and "numpy" in retrieve_best:
        print(f"\ncompiled speedup over numpy fallback: {retrieve_best['numpy'] / retrieve_best['compiled']:.2f}x")

    # consistency spot check across backends
    if len(available) == 2:
        q64 = np.asarray(query_vec, dtype=np.float64)
        a = available["compiled"].inner_products(index.images.data[:1000], q64)
        b = available["numpy"].inner_products(index.images.data[:1000], q64)
        print(f"\nmax |compiled - numpy| over 1000 rows: {np.abs(a - b).max():.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
