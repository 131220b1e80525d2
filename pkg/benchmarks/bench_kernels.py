"""Time the compiled spectral kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --p 200 1000 --points 240 --repeat 5
"""

import argparse
import timeit

import numpy as np

from sdridge import kernels


def cases(p, points, gamma):
    rng = np.random.default_rng(p)
    s = np.sort(rng.uniform(0.1, 5.0, p))[::-1].copy()
    b2 = rng.standard_normal(p) ** 2 / p
    lams = np.geomspace(1e-3, 1e3, points)
    k, _ = kernels.get_backend("python").kappa_grid(s, gamma, lams)
    return {
        "kappa_grid": lambda m: m.kappa_grid(s, gamma, lams),
        "functionals_grid": lambda m: m.functionals_grid(s, b2, gamma, k),
        "shrinkage_traces": lambda m: m.shrinkage_traces(s, lams),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, nargs="+", default=[100, 1000])
    ap.add_argument("--points", type=int, default=241, help="lambda grid size")
    ap.add_argument("--gamma", type=float, default=0.5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; only the numpy backend is available")
        cy = None

    print(f"{'kernel':<18}{'p':>6}{'numpy ms':>12}{'cython ms':>12}{'speedup':>9}")
    for p in args.p:
        for name, fn in cases(p, args.points, args.gamma).items():
            t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
            if cy is None:
                print(f"{name:<18}{p:>6}{t_py:>12.3f}{'-':>12}{'-':>9}")
                continue
            t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<18}{p:>6}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
