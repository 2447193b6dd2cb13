"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat R] [--n N ...]

Each kernel is run on identical inputs under both backends; outputs are
compared before timing so a speedup never hides a wrong answer.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from exchnet._backend import compiled_kernels, python_kernels


def _inputs(n: int, rng: np.random.Generator):
    p = 5
    u = rng.normal(size=(n, n, p))
    u[np.arange(n), np.arange(n)] = 0.0
    xi = rng.gamma(2.0, 0.5, size=(n, n))
    np.fill_diagonal(xi, 0.0)
    s = np.sort(rng.normal(size=n * n - n))
    fold = rng.integers(0, 10, size=s.size)
    ks = rng.integers(2, 40, size=(50, 10)).astype(np.int64)
    return {
        "grouped_outer_sums": (u,),
        "xi_moment_sums": (xi,),
        "kshorth_index": (s, max(2, int(np.log(s.size) * 3)), True),
        "cv_losses": (s, fold, 10, ks, True),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if compiled_kernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'n':>5} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for n in args.n:
        for name, inputs in _inputs(n, rng).items():
            py, cy = getattr(python_kernels, name), getattr(compiled_kernels, name)
            if not _same(py(*inputs), cy(*inputs)):
                raise SystemExit(f"{name}: backends disagree at n={n}")
            t_py = min(timeit.repeat(lambda: py(*inputs), number=1, repeat=args.repeat)) * 1e3
            t_cy = min(timeit.repeat(lambda: cy(*inputs), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<20} {n:>5} {t_py:>10.3f} {t_cy:>10.3f} {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
