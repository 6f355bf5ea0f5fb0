"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from renvol import _kernels_py
from renvol import fixtures as fx
from renvol.conformal import hyperbolize
from renvol.end_geometry import fuchsian_data, leaf_area_coefficients, perturbed_data
from renvol.tensorfield import codazzi_basis

try:
    from renvol import _kernels
except ImportError:
    _kernels = None


def simpson_inputs(level):
    f = fx.octagon_g2(level)
    hyp = hyperbolize(f.mesh, f.metric)
    data = fuchsian_data(f.mesh, hyp)
    basis = codazzi_basis(f.mesh, hyp)
    coeffs = np.random.default_rng(0).normal(size=basis.dimension)
    return leaf_area_coefficients(perturbed_data(data, basis, coeffs, 0.3))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--level", type=int, default=3)
    args = ap.parse_args()
    s, T, D = simpson_inputs(args.level)
    cases = {
        "simpson_faces": lambda mod: mod.simpson_faces(s, T, D, 0.5, 4.0, 1e-10),
        "riccati_dopri5": lambda mod: mod.riccati_dopri5(1e-3, 5e-4 - 5e-11, 30.0,
                                                         1e-12, 1e-14, 0.05),
    }
    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled kernels not built; timing the Python fallback only")
    print(f"{'kernel':16s} {'backend':8s} {'best [ms]':>10s} {'speedup':>8s}")
    for name, fn in cases.items():
        ref = None
        best = {}
        for b, mod in backends.items():
            t = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
            best[b] = t
            out = fn(mod)
            if ref is None:
                ref = out
            else:
                same = all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(ref, out))
                if not same:
                    print(f"  warning: {b} output differs from python for {name}")
        for b, t in best.items():
            print(f"{name:16s} {b:8s} {1e3 * t:10.2f} {best['python'] / t:8.1f}")


if __name__ == "__main__":
    main()
