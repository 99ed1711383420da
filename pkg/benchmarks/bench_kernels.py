"""Compiled against pure-Python network kernels on the Lotka-Volterra problem size.

Usage: ``python benchmarks/bench_kernels.py [--repeat R] [--nodes N]``.
Prints the best-of-R time per call for each backend, the speedup and the
largest difference between the two results.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from regdyn import _pykernels
from regdyn.model import LV_SIZES, MLPModel, QuadratureSpace

try:
    from regdyn import _ckernels
except ImportError:
    _ckernels = None


def bench(fn, args, repeat: int) -> float:
    t = timeit.Timer(lambda: fn(*args))
    number, _ = t.autorange()
    return min(t.repeat(repeat, number)) / number


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--nodes", type=int, default=4, help="Gauss-Legendre nodes per cell and axis (default 4)")
    p.add_argument("--cells", type=int, default=10, help="cells per axis (default 10)")
    args = p.parse_args(argv)

    space = QuadratureSpace.tensor_gauss_legendre(0.5, 2.5, args.cells, args.nodes, dim=2, ncomp=2)
    model = MLPModel(space, LV_SIZES)
    theta = model.init_params(0)
    X = space.nodes
    print(f"network {LV_SIZES}, {model.nparams} parameters, {X.shape[0]} nodes")
    if _ckernels is None:
        print("compiled extension not built; only the pure-Python backend is available")
    for name in ("mlp_forward", "mlp_forward_jacobian"):
        call = (theta, LV_SIZES, X)
        t_py = bench(getattr(_pykernels, name), call, args.repeat)
        line = f"{name:<22} python {t_py * 1e3:9.3f} ms"
        if _ckernels is not None:
            t_c = bench(getattr(_ckernels, name), call, args.repeat)
            a, b = getattr(_ckernels, name)(*call), getattr(_pykernels, name)(*call)
            a, b = (a, b) if name == "mlp_forward" else (a[1], b[1])
            diff = float(np.max(np.abs(np.asarray(a) - b)))
            line += f"   cython {t_c * 1e3:9.3f} ms   speedup {t_py / t_c:6.2f}x   max diff {diff:.1e}"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
