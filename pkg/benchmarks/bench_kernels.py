"""Benchmark the training kernels: numba-compiled vs pure numpy.

Run:  python benchmarks/bench_kernels.py [--epochs 8] [--examples 3325]

The per-example SGD loop is the engine's hot path; at full input width the
matmuls hit the same BLAS either way, so numba's win is the fused loop, and
it grows as the head shrinks and Python dispatch starts to dominate.
"""

import argparse
import time

import numpy as np

from newssim._kernels import get_kernels
from newssim.features import MetricKind
from newssim.model import TrainConfig, init_head, train
from newssim import _kernels


def bench_backend(backend: str, head, X, Y, orders, lr, momentum) -> float:
    kernels = get_kernels(backend)
    # Warm-up compiles the numba kernels outside the timed region.
    warm = head.copy()
    warm_orders = np.arange(4, dtype=np.int64).reshape(1, 4)
    kernels["train_epochs"](*warm.params(), X[:4], Y[:4], warm_orders, lr, momentum)

    work = head.copy()
    start = time.perf_counter()
    kernels["train_epochs"](*work.params(), X, Y, orders, lr, momentum)
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--examples", type=int, default=3325)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    configs = [
        ("full head 768 -> 120 -> 84 -> 1", 768, (120, 84)),
        ("reduced head 64 -> 120 -> 84 -> 1", 64, (120, 84)),
        ("tiny head 8 -> 5 -> 4 -> 1", 8, (5, 4)),
    ]

    print(f"{args.examples} examples x {args.epochs} epochs, per-example SGD+momentum")
    print(f"{'configuration':36} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for label, dim, hidden in configs:
        head = init_head(MetricKind.OVERALL, dim, args.seed, hidden)
        X = rng.normal(size=(args.examples, dim)) / np.sqrt(dim)
        Y = rng.uniform(size=args.examples)
        orders = np.vstack(
            [np.random.default_rng(args.seed + e).permutation(args.examples) for e in range(args.epochs)]
        ).astype(np.int64)

        t_numpy = bench_backend("numpy", head, X, Y, orders, 0.01, 0.9)
        try:
            t_numba = bench_backend("numba", head, X, Y, orders, 0.01, 0.9)
        except ImportError:
            print(f"{label:36} {t_numpy:9.2f}s {'n/a':>10} {'n/a':>8}")
            continue
        print(f"{label:36} {t_numpy:9.2f}s {t_numba:9.2f}s {t_numpy / t_numba:7.1f}x")

    print(f"\nactive backend for this session: {_kernels.backend_name()}")
    print("force one with NEWSSIM_BACKEND=numpy|numba")


if __name__ == "__main__":
    main()
