"""Hot loops shared by the solver and the verification oracles.

Each kernel has a numba version and a numpy/python fallback with the same
signature.  Numba is used when it imports and ``EVOCTL_NUMBA`` is not set to a
false value (``0``, ``false``, ``no``, ``off``).  The choice is made once, at
import time; ``BACKEND`` records it.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "batched_solve",
    "exp_filter",
    "lu_sweep",
    "numba_requested",
    "PIVOT_TOL",
    "NUMBA_MAX_DIM",
]

PIVOT_TOL = 1e-14
# above this size batched LAPACK beats the unblocked numba loop (crossover near 5, see benchmarks/)
NUMBA_MAX_DIM = 4


def numba_requested() -> bool:
    flag = os.environ.get("EVOCTL_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# pure python bodies (compiled by numba when enabled)


def _batched_lu_solve(mats, rhs, out, status):
    nb, d, _ = mats.shape
    a = np.empty((d, d), dtype=np.complex128)
    b = np.empty(d, dtype=np.complex128)
    for k in range(nb):
        for i in range(d):
            b[i] = rhs[k, i]
            for j in range(d):
                a[i, j] = mats[k, i, j]
        scale = 0.0
        for i in range(d):
            for j in range(d):
                v = abs(a[i, j])
                if v > scale:
                    scale = v
        ok = scale > 0.0
        for c in range(d):
            if not ok:
                break
            p = c
            big = abs(a[c, c])
            for r in range(c + 1, d):
                v = abs(a[r, c])
                if v > big:
                    big = v
                    p = r
            if big <= PIVOT_TOL * scale:
                ok = False
                break
            if p != c:
                for j in range(d):
                    tmp = a[c, j]
                    a[c, j] = a[p, j]
                    a[p, j] = tmp
                tmp = b[c]
                b[c] = b[p]
                b[p] = tmp
            piv = a[c, c]
            for r in range(c + 1, d):
                m = a[r, c] / piv
                if m != 0:
                    for j in range(c + 1, d):
                        a[r, j] -= m * a[c, j]
                    b[r] -= m * b[c]
        if not ok:
            status[k] = 1
            for i in range(d):
                out[k, i] = np.nan
            continue
        for i in range(d - 1, -1, -1):
            acc = b[i]
            for j in range(i + 1, d):
                acc -= a[i, j] * out[k, j]
            out[k, i] = acc / a[i, i]


def _exp_filter(s, decay, w_old, w_new, out):
    # I(t_{j+1}) = e^{-beta dt} I(t_j) + int_{t_j}^{t_{j+1}} e^{-beta(t_{j+1}-r)} s(r) dr
    # with s linear on each step; beta == 0 gives the trapezoid running integral.
    n, m = s.shape
    for c in range(m):
        out[0, c] = 0.0
    for j in range(n - 1):
        for c in range(m):
            out[j + 1, c] = decay * out[j, c] + w_old * s[j, c] + w_new * s[j + 1, c]


def _lu_sweep(lu, piv, m0dt, rhs, out):
    # implicit Euler: (M0/dt + M1 + A) u_{j+1} = (M0/dt) u_j + f_{j+1}, u_0 = 0
    n, d = rhs.shape
    b = np.empty(d, dtype=np.complex128)
    for c in range(d):
        out[0, c] = 0.0
    for j in range(n - 1):
        for i in range(d):
            acc = rhs[j + 1, i]
            for k in range(d):
                acc += m0dt[i, k] * out[j, k]
            b[i] = acc
        for i in range(d):
            p = piv[i]
            if p != i:
                tmp = b[i]
                b[i] = b[p]
                b[p] = tmp
        for i in range(d):
            acc = b[i]
            for k in range(i):
                acc -= lu[i, k] * b[k]
            b[i] = acc
        for i in range(d - 1, -1, -1):
            acc = b[i]
            for k in range(i + 1, d):
                acc -= lu[i, k] * b[k]
            b[i] = acc / lu[i, i]
        for i in range(d):
            out[j + 1, i] = b[i]


# ---------------------------------------------------------------------------
# numpy fallbacks


def _batched_solve_numpy(mats, rhs):
    nb, d, _ = mats.shape
    status = np.zeros(nb, dtype=np.int64)
    scale = np.abs(mats).reshape(nb, -1).max(axis=1) if d else np.zeros(nb)
    try:
        out = np.linalg.solve(mats, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(rhs)
        for k in range(nb):
            try:
                out[k] = np.linalg.solve(mats[k], rhs[k])
            except np.linalg.LinAlgError:
                status[k] = 1
                out[k] = np.nan
    # flag numerically singular bins the same way the LU kernel does
    bad = ~np.isfinite(out).all(axis=1) | (scale == 0)
    # |x| > |b| / (tol |A|) certifies sigma_min(A) < tol |A|
    with np.errstate(invalid="ignore", over="ignore"):
        grow = np.linalg.norm(out, axis=1) * PIVOT_TOL * scale > np.linalg.norm(rhs, axis=1)
    bad |= grow
    if bad.any():
        status[bad] = 1
        out[bad] = np.nan
    return out, status


def _filter_weights(dt, beta):
    x = beta * dt
    if x == 0.0:
        return 1.0, 0.5 * dt, 0.5 * dt
    decay = math.exp(-x)
    total = -math.expm1(-x) / beta
    if x < 1e-3:
        second = 0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0
    else:
        second = (-math.expm1(-x) - x * decay) / (x * x)
    w_new = total - dt * second
    return decay, total - w_new, w_new


def _exp_filter_numpy(s, dt, beta):
    from scipy.signal import lfilter

    decay, w_old, w_new = _filter_weights(dt, beta)
    out = lfilter([w_new, w_old], [1.0, -decay], s, axis=0)
    # lfilter sees s(t_0) already at the first sample; the recursion starts at zero
    out -= w_new * s[0][None, :] * (decay ** np.arange(s.shape[0]))[:, None]
    return out


def _lu_sweep_numpy(lu, piv, m0dt, rhs):
    import scipy.linalg as sla

    n, d = rhs.shape
    out = np.zeros_like(rhs)
    for j in range(n - 1):
        out[j + 1] = sla.lu_solve((lu, piv), m0dt @ out[j] + rhs[j + 1])
    return out


# ---------------------------------------------------------------------------
# dispatch

_jit = None
if numba_requested():
    try:
        from numba import njit

        _jit = {
            "solve": njit(cache=True)(_batched_lu_solve),
            "filter": njit(cache=True)(_exp_filter),
            "sweep": njit(cache=True)(_lu_sweep),
        }
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _jit = None

BACKEND = "numba" if _jit is not None else "numpy"


def batched_solve(mats: np.ndarray, rhs: np.ndarray, backend: str | None = None):
    """Solve ``mats[k] @ x[k] = rhs[k]`` for every k.

    Returns ``(x, status)``; ``status[k] == 1`` marks a bin whose pivot fell
    below ``PIVOT_TOL`` times the largest entry (its row of ``x`` is NaN).
    With ``backend=None`` the numba kernel handles matrices up to
    ``NUMBA_MAX_DIM`` and LAPACK the larger ones.
    """
    mats = np.ascontiguousarray(mats, dtype=np.complex128)
    rhs = np.ascontiguousarray(rhs, dtype=np.complex128)
    if backend is None:
        backend = BACKEND if mats.shape[-1] <= NUMBA_MAX_DIM else "numpy"
    if backend == "numba" and _jit is not None:
        out = np.empty_like(rhs)
        status = np.zeros(rhs.shape[0], dtype=np.int64)
        _jit["solve"](mats, rhs, out, status)
        return out, status
    return _batched_solve_numpy(mats, rhs)


def exp_filter(s: np.ndarray, dt: float, beta: float, backend: str | None = None) -> np.ndarray:
    """Causal filter ``int_{t_0}^{t} e^{-beta(t-r)} s(r) dr`` for piecewise-linear ``s``.

    ``s`` has shape (n, m); the filter starts from zero history at the first
    sample.  ``beta = 0`` is the trapezoid running integral.
    """
    s = np.ascontiguousarray(s, dtype=np.complex128)
    backend = backend or BACKEND
    if backend == "numba" and _jit is not None:
        out = np.empty_like(s)
        _jit["filter"](s, *_filter_weights(float(dt), float(beta)), out)
        return out
    return _exp_filter_numpy(s, float(dt), float(beta))


def lu_sweep(lu, piv, m0dt, rhs, backend: str | None = None) -> np.ndarray:
    """Implicit-Euler sweep with a prefactored step matrix (scipy ``lu_factor`` output)."""
    lu = np.ascontiguousarray(lu, dtype=np.complex128)
    piv = np.ascontiguousarray(piv, dtype=np.int64)
    m0dt = np.ascontiguousarray(m0dt, dtype=np.complex128)
    rhs = np.ascontiguousarray(rhs, dtype=np.complex128)
    backend = backend or BACKEND
    if backend == "numba" and _jit is not None:
        out = np.empty_like(rhs)
        _jit["sweep"](lu, piv, m0dt, rhs, out)
        return out
    return _lu_sweep_numpy(lu, piv, m0dt, rhs)
