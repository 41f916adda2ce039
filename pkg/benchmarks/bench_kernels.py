"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each case is warmed up once (so JIT compilation is excluded) and reported as the
best of ``--repeat`` runs, together with the max deviation between backends.
"""

import argparse
import timeit

import numpy as np
import scipy.linalg as sla

from evoctl import _kernels as K


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def cases(rng):
    for d in (2, 4, 8, 16, 48):
        mats = _cplx(rng, 4096, d, d) + 3 * np.eye(d)
        rhs = _cplx(rng, 4096, d)
        yield f"batched_solve 4096 x {d}x{d}", lambda b, m=mats, r=rhs: K.batched_solve(m, r, backend=b)[0]
    for n in (4096, 65536):
        s = _cplx(rng, n, 8)
        yield f"exp_filter n={n} dim=8", lambda b, s=s: K.exp_filter(s, 1e-3, 2.0, backend=b)
    d = 24
    M0 = np.eye(d) + 0.1 * _cplx(rng, d, d)
    lu, piv = sla.lu_factor(M0 / 0.01 + 2 * np.eye(d))
    rhs = _cplx(rng, 4096, d)
    yield f"lu_sweep n=4096 d={d}", lambda b: K.lu_sweep(lu, piv, M0 / 0.01, rhs, backend=b)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    if K.BACKEND != "numba":
        print("numba unavailable or disabled (EVOCTL_NUMBA=0); timing numpy only")
    rng = np.random.default_rng(args.seed)
    print(f"{'case':32s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for name, run in cases(rng):
        ref = run("numpy")
        t_np = min(timeit.repeat(lambda: run("numpy"), number=1, repeat=args.repeat))
        if K.BACKEND == "numba":
            out = run("numba")  # compile
            t_nb = min(timeit.repeat(lambda: run("numba"), number=1, repeat=args.repeat))
            diff = float(np.max(np.abs(out - ref)))
            print(f"{name:32s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.2f} {diff:9.1e}")
        else:
            print(f"{name:32s} {1e3 * t_np:11.2f} {'-':>11s} {'-':>8s} {'-':>9s}")
    print(f"solver dispatch uses numba up to d = {K.NUMBA_MAX_DIM}, LAPACK above")


if __name__ == "__main__":
    main()
