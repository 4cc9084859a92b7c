"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
warmed up once per backend so compilation time is excluded.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from moldiff import _kernels
from moldiff.diffusion import make_schedule


def cases(rng: np.random.Generator) -> dict[str, callable]:
    words = ["".join(rng.choice(list("CNO()=c1"), size=40)) for _ in range(200)]
    x = rng.standard_normal((96 * 16, 32)).astype(np.float32)
    table = rng.standard_normal((64, 32)).astype(np.float32)
    gamma = make_schedule("linear", 1000).gamma
    delta = rng.standard_normal((2000, 1000))
    steps = rng.standard_normal((2000, 1000))
    return {
        "levenshtein x100": lambda: [_kernels.levenshtein(a, b) for a, b in zip(words[:100], words[100:])],
        "nearest_rows": lambda: _kernels.nearest_rows(x, table),
        "gamma_recursion": lambda: _kernels.gamma_recursion(gamma, delta),
        "accumulate": lambda: _kernels.accumulate(steps),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    fns = cases(np.random.default_rng(0))
    results: dict[str, dict[str, float]] = {}
    for name in backends:
        with _kernels.use_backend(name):
            for label, fn in fns.items():
                fn()
                best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
                results.setdefault(label, {})[name] = best
    width = max(map(len, results))
    print(f"{'kernel'.ljust(width)}  " + "  ".join(f"{b:>10}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, row in results.items():
        cells = "  ".join(f"{row[b] * 1e3:8.2f}ms" for b in backends)
        extra = f"  {row['numpy'] / row['numba']:9.1f}x" if "numba" in row else ""
        print(f"{label.ljust(width)}  {cells}{extra}")


if __name__ == "__main__":
    main()
