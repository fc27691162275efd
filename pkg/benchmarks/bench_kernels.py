"""Compare the compiled and pure-Python term kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Runs each hot kernel on seeded random term dicts with both backends, asserts
identical results and prints per-kernel timings and the speedup.  The last
row times a curved Fedosov solve on R^3 (N = 8) through each backend.
"""

import argparse
import importlib
import os
import subprocess
import sys
import timeit

from formality import _kernels_py as PY
from formality.probes import make_rng, rand_spoly

try:
    from formality import _kernels as CY
except ImportError:  # pragma: no cover
    CY = None


def cases(d=3, seed=7):
    rng = make_rng(seed)
    a = rand_spoly(rng, d, 5, 40, xdeg=2, hbar=True)
    b = rand_spoly(rng, d, 5, 40, xdeg=2, hbar=True)
    return {
        "mul": lambda K: K.mul(a, b, 8),
        "dy": lambda K: K.dy(a, (1, 0, 1)),
        "dx": lambda K: K.dx(a, 0),
        "dx_wedge": lambda K: K.dx_wedge(1, a),
        "interior": lambda K: K.interior(a, 1),
        "y_times": lambda K: K.y_times(a, 2, 8),
        "delta_inv": lambda K: K.delta_inv(a, d, 8),
        "add_into": lambda K: K.add_into(dict(a), b, 3),
    }


SOLVE = ("from formality.fedosov import ConnectionData, solve_A; "
         "solve_A(ConnectionData(3, {(1, 0, 0): 'x2*x3', (2, 1, 2): 'x1', (2, 2, 1): 'x1'}), 8)")


def time_solve(pure, repeat):
    env = dict(os.environ, FORMALITY_PURE_PYTHON="1" if pure else "0")
    code = f"import timeit; print(min(timeit.repeat({SOLVE!r}, number=1, repeat={repeat})))"
    return float(subprocess.check_output([sys.executable, "-c", code], env=env))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args()
    if CY is None:
        sys.exit("compiled extension not built; run pip install -e . --no-build-isolation")
    print(f"{'kernel':<12}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, fn in cases().items():
        if fn(PY) != fn(CY):
            sys.exit(f"backends disagree on {name}")
        tp = min(timeit.repeat(lambda: fn(PY), number=args.number, repeat=args.repeat)) / args.number
        tc = min(timeit.repeat(lambda: fn(CY), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:<12}{tp * 1e3:>14.3f}{tc * 1e3:>14.3f}{tp / tc:>10.2f}")
    tp = time_solve(True, 3)
    tc = time_solve(False, 3)
    print(f"{'solve_A d=3':<12}{tp * 1e3:>14.1f}{tc * 1e3:>14.1f}{tp / tc:>10.2f}")


if __name__ == "__main__":
    importlib.import_module("formality")
    main()
