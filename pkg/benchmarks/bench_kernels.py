"""Time the compiled pair kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --sizes 128 256 512 1024 --repeat 5

Both backends see the same kernel table and field; the script also reports
the largest relative disagreement between them.
"""
import argparse
import timeit

import numpy as np

from dnlap import _kernels_py
from dnlap.exponents import ModelParams
from dnlap.grid import FULL_LINE, build_domain
from dnlap.kernel import assemble_kernel

try:
    from dnlap import _kernels_cy
except ImportError:
    _kernels_cy = None


def cases(table, v, xi, above):
    K, E, w, p = table.K, table.E, table.domain.weights, table.p
    return {
        "pv_apply": lambda mod: mod.pv_apply(K, E, v, p),
        "pv_jacobian": lambda mod: mod.pv_jacobian(K, E, v, p, 1e-12),
        "pair_energy": lambda mod: mod.pair_energy(K, E, w, v, p),
        "pair_pairing": lambda mod: mod.pair_pairing(K, E, w, v, xi, p),
        "crossing_dissipation": lambda mod: mod.crossing_dissipation(K, E, w, v, xi, above, p),
    }


def rel_gap(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--p", type=float, default=3.0)
    args = ap.parse_args(argv)

    if _kernels_cy is None:
        print("compiled kernels not built; only the numpy timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'n':>6}{'numpy [ms]':>13}{'cython [ms]':>13}{'speedup':>9}{'rel gap':>10}")
    for n in args.sizes:
        dom = build_domain(FULL_LINE, 1, 10.0, n)
        table = assemble_kernel(dom, 0.0, ModelParams(1, 0.5, args.p, 1.0))
        v = rng.normal(size=n)
        xi = rng.normal(size=n)
        above = (v > xi).astype(np.uint8)
        for name, call in cases(table, v, xi, above).items():
            t_py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat)) * 1e3
            if _kernels_cy is None:
                print(f"{name:<22}{n:>6}{t_py:>13.3f}{'-':>13}{'-':>9}{'-':>10}")
                continue
            t_cy = min(timeit.repeat(lambda: call(_kernels_cy), number=1, repeat=args.repeat)) * 1e3
            gap = rel_gap(call(_kernels_cy), call(_kernels_py))
            print(f"{name:<22}{n:>6}{t_py:>13.3f}{t_cy:>13.3f}{t_py / t_cy:>9.1f}{gap:>10.1e}")


if __name__ == "__main__":
    main()
