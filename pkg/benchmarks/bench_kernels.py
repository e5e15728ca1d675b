"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on identical inputs under both backends; the outputs are
checked equal before anything is timed.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from sedpf_lab import _kernels_py

try:
    from sedpf_lab import _kernels as compiled
except ImportError:  # pragma: no cover - depends on the build
    compiled = None


def cases(rng: np.random.Generator) -> dict[str, tuple]:
    rows = rng.integers(0, 256, (64, 1250), dtype=np.uint8)
    coeffs = rng.integers(0, 256, 64, dtype=np.uint8)
    src = rng.integers(0, 256, 1250, dtype=np.uint8)
    err = rng.binomial(3, 0.1, 200_000).astype(np.int64)
    ok = (rng.random(200_000) >= 0.1).astype(np.int64)
    return {
        "gf_axpy 1250B": ("gf_axpy", lambda: (np.zeros(1250, np.uint8), src, 0x53)),
        "gf_combine 64x1250B": ("gf_combine", lambda: (coeffs, rows, np.empty(1250, np.uint8))),
        "s_walk 2e5 frames": ("s_walk", lambda: (err, ok, np.zeros(202, np.int64))),
    }


def check(name: str, make) -> None:
    a, b = make(), make()
    ra = getattr(_kernels_py, name)(*a)
    rb = getattr(compiled, name)(*b)
    for x, y in zip(a, b):
        if isinstance(x, np.ndarray) and not np.array_equal(x, y):
            raise AssertionError(f"{name}: backends disagree")
    if ra != rb:
        raise AssertionError(f"{name}: backends return different values")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(7)
    print(f"{'kernel':24s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for label, (name, make) in cases(rng).items():
        if compiled is not None:
            check(name, make)
        backends = [_kernels_py] + ([compiled] if compiled is not None else [])
        times = []
        for mod in backends:
            fn = getattr(mod, name)
            n = 3 if mod is _kernels_py and name != "gf_combine" else 20
            best = min(timeit.repeat(lambda: fn(*make()), number=n, repeat=args.repeat)) / n
            times.append(best * 1e3)
        if len(times) == 2:
            print(f"{label:24s} {times[0]:10.3f} {times[1]:12.3f} {times[0] / times[1]:7.1f}x")
        else:
            print(f"{label:24s} {times[0]:10.3f} {'n/a':>12s}")


if __name__ == "__main__":
    main()
