"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from svtest.kernels import BACKENDS, group_sums, sv_matrix_batch, sv_scalar_batch

CASES = [
    # name, B, G, M (fine per coarse), k1
    ("scalar wild-cluster", 999, 10, 4, 1),
    ("scalar ordinary wild", 199, 10, 400, 1),
    ("matrix k1=3", 399, 12, 8, 3),
    ("matrix k1=5", 199, 36, 4, 5),
]


def _inputs(B, G, M, k1, seed=0):
    rng = np.random.default_rng(seed)
    starts = np.arange(0, G * M + 1, M, dtype=np.intp)
    return rng.standard_normal((B, G * M, k1)), starts


def run(repeat: int = 5) -> list[tuple]:
    rows = []
    for name, B, G, M, k1 in CASES:
        S, starts = _inputs(B, G, M, k1)
        times = {}
        for backend in BACKENDS:
            if k1 == 1:
                fn = lambda: sv_scalar_batch(S[:, :, 0], starts, 1.0, 1.0, backend=backend)  # noqa: E731
            else:
                fn = lambda: sv_matrix_batch(S, starts, 1.0, 1.0, backend=backend)  # noqa: E731
            times[backend] = min(timeit.repeat(fn, number=1, repeat=repeat))
        rows.append((name, times))
    vals = np.random.default_rng(1).standard_normal((200_000, 3))
    st = np.arange(0, 200_001, 50, dtype=np.intp)
    rows.append(("group_sums 200k x 3", {
        b: min(timeit.repeat(lambda: group_sums(vals, st, backend=b), number=1, repeat=repeat)) for b in BACKENDS
    }))
    return rows


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = run(args.repeat)
    backends = list(BACKENDS)
    print(f"{'case':<24}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, t in rows:
        line = f"{name:<24}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        if "cython" in t:
            line += f"{t['python'] / t['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
