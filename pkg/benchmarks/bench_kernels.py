#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends on episode-scale workloads.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]

Shapes mirror real runs: 5-way episodes with K in {1, 5, 10}, support tokens
M = 5*K (plus a few multi-token mentions), and both a small store dimension
(16) and a BERT-scale one (768).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fewie_bench.kernels import _numpy

try:
    from fewie_bench.kernels import _numba
except ImportError:
    _numba = None

BACKENDS = {"numpy": _numpy}
if _numba is not None:
    BACKENDS["numba"] = _numba


def make_instance(rng, n_tokens, dim, n_classes=5):
    rows = rng.standard_normal((n_tokens, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    labels = rng.integers(0, n_classes, size=n_tokens).astype(np.int64)
    labels[:n_classes] = np.arange(n_classes)  # every class present
    return np.ascontiguousarray(rows), labels


def time_call(func, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    shapes = [(8, 768), (25, 768), (50, 768), (25, 16), (250, 16)]

    if _numba is None:
        print("numba backend unavailable; benchmarking numpy only")
    else:
        # Trigger compilation outside the timed region.
        tiny_rows, tiny_labels = make_instance(rng, 6, 4)
        _numba.logreg_fit(tiny_rows, tiny_labels, 5, 1.0, 1e-6, 10)
        _numba.pairwise_sqdist(tiny_rows, tiny_rows)

    header = f"{'kernel':<28} {'shape':<14}" + "".join(f"{name:>12}" for name in BACKENDS)
    print(header)
    print("-" * len(header))

    for n_tokens, dim in shapes:
        rows, labels = make_instance(rng, n_tokens, dim)
        timings = []
        for backend in BACKENDS.values():
            timings.append(time_call(
                lambda b=backend: b.logreg_fit(rows, labels, 5, 0.1, 1e-6, 1000),
                args.repeats))
        cells = "".join(f"{t * 1e3:>10.2f}ms" for t in timings)
        print(f"{'logreg_fit':<28} M={n_tokens:<4} d={dim:<5}{cells}")

    for n_queries, n_refs, dim in [(10, 50, 768), (10, 250, 16), (100, 250, 768)]:
        queries, _ = make_instance(rng, n_queries, dim)
        references, _ = make_instance(rng, n_refs, dim)
        timings = []
        for backend in BACKENDS.values():
            timings.append(time_call(
                lambda b=backend: b.pairwise_sqdist(queries, references),
                args.repeats))
        cells = "".join(f"{t * 1e3:>10.2f}ms" for t in timings)
        print(f"{'pairwise_sqdist':<28} {n_queries}x{n_refs} d={dim:<4}{cells}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
