"""Numba vs numpy timings for the hot kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is called
once per backend to warm up (numba compiles on first call), then timed
as the best of several repeats. Both outputs are compared so a speedup
never hides a divergence.
"""

import argparse
import time

import numpy as np

from phasegain import _kernels as kr


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _unit_columns(rng, n, m):
    x = rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))
    return x / np.linalg.norm(x, axis=0)


def cases(rng, size):
    n = 3
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 2 * np.eye(n)
    smax = float(np.linalg.norm(a, 2))
    x = _unit_columns(rng, n, size)
    seeds = _unit_columns(rng, n, 32)
    nx = 12
    sa = rng.normal(size=(nx, nx)) - 4 * np.eye(nx)
    sb, sc = rng.normal(size=(nx, 2)), rng.normal(size=(2, nx))
    sd = np.zeros((2, 2))
    s = 1j * np.logspace(-3, 3, size)
    return {
        "shell_points": lambda nb: kr.shell_points(a, x, use_numba=nb),
        "freq_response": lambda nb: kr.freq_response(sa, sb, sc, sd, s, use_numba=nb),
        "refine_extreme_angle": lambda nb: kr.refine_extreme_angle(
            a, seeds, 0.5 * smax, sign=1.0, use_numba=nb),
        "refine_constrained_gain": lambda nb: kr.refine_constrained_gain(
            a, seeds, 0.8, use_numba=nb),
    }


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=20_000, help="points per call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not kr.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<26}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max diff':>11}")
    for name, fn in cases(rng, args.size).items():
        ref, fast = _first(fn(False)), _first(fn(True))
        diff = float(np.max(np.abs(ref - fast)))
        t_np = _best(lambda: fn(False), args.repeat)
        t_nb = _best(lambda: fn(True), args.repeat)
        print(f"{name:<26}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
