"""Time the CRF dynamic-programming kernels on both backends.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one row per (kernel, shape) with the per-call time of each backend
and the speedup of the compiled one.  Without the compiled extension only
the python column is filled.
"""
import argparse
import timeit

import numpy as np

from fmit import kernels

SHAPES = [(16, 12, 9), (16, 40, 9), (64, 40, 9), (16, 128, 9), (16, 40, 3)]
KERNELS = ("crf_log_partition", "crf_marginals", "crf_viterbi")


def make_inputs(B, N, K, rng):
    lengths = rng.integers(max(1, N // 2), N + 1, size=B)
    lengths[0] = N
    return kernels._prep(rng.normal(size=(B, N, K)), rng.normal(size=(K, K)), rng.normal(size=K),
                         rng.normal(size=K), lengths)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    names = [b for b in ("python", "compiled") if b in kernels.BACKENDS]
    header = f"{'kernel':<18} {'B x N x K':<12}" + "".join(f"{n + ' (ms)':>15}" for n in names) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for B, N, K in SHAPES:
        inputs = make_inputs(B, N, K, rng)
        for kernel in KERNELS:
            times = {}
            for name in names:
                fn = getattr(kernels.BACKENDS[name], kernel)
                fn(*inputs)
                times[name] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat)) * 1e3
            speed = f"{times['python'] / times['compiled']:9.1f}x" if "compiled" in times else f"{'n/a':>10}"
            print(f"{kernel:<18} {f'{B}x{N}x{K}':<12}" + "".join(f"{times[n]:15.3f}" for n in names) + speed)


if __name__ == "__main__":
    main()
