"""Per-frequency-bin solution of ``(d/dt M(d/dt^{-1}) + A) u = f``.

Each bin k of the Fourier-Laplace transform decouples into the dense system
``(s_k M(1/s_k) + A) u_k = f_k`` with ``s_k = i tau_k + nu``.  Dirac sources
enter through their exact transform.  An implicit-Euler integrator for the
subclass ``M(z) = M0 + z M1`` serves as an independent oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .material_law import MaterialLaw, PreconditionError, evaluate_many, positivity_margin
from .weighted_time import (
    SQRT_2PI,
    SpectralSignal,
    TimeGrid,
    TimeSignal,
    fourier_laplace,
    inverse_fourier_laplace,
    spectral_norm,
)

__all__ = [
    "IllPosedSystemError",
    "EvolutionarySystem",
    "DeltaSource",
    "bin_matrices",
    "delta_spectrum",
    "solve_spectrum",
    "solve_frequency",
    "residual",
    "condition_estimate",
    "solve_timestep_oracle",
]

SKEW_TOL = 1e-12


class IllPosedSystemError(RuntimeError):
    """A bin matrix is singular, or the oracle's step matrix is."""


@dataclass(frozen=True)
class EvolutionarySystem:
    law: MaterialLaw
    A: np.ndarray = field(repr=False)
    nu: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.complex128)
        d = self.law.dim
        if A.shape != (d, d):
            raise PreconditionError(f"A has shape {A.shape}, law has dim {d}")
        nA = np.linalg.norm(A)
        if nA > 0 and np.linalg.norm(A + A.conj().T) > SKEW_TOL * nA:
            raise PreconditionError("A is not skew-Hermitian")
        if not self.nu > 1.0 / (2.0 * self.law.radius_r):
            raise PreconditionError(f"nu={self.nu} must exceed 1/(2r)")
        object.__setattr__(self, "A", A)

    @property
    def dim(self) -> int:
        return self.law.dim


@dataclass(frozen=True)
class DeltaSource:
    t_impulse: float
    amplitude: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "amplitude", np.atleast_1d(np.asarray(self.amplitude, dtype=np.complex128)))


def _chunk(d: int) -> int:
    return int(max(1, min(256, 2e7 // max(d * d, 1))))


def bin_matrices(sys: EvolutionarySystem, s: np.ndarray) -> np.ndarray:
    """``s M(1/s) + A`` for each entry of ``s``; the z-linear part contributes M1 exactly."""
    s = np.asarray(s, dtype=np.complex128)
    law = sys.law
    z = 1.0 / s
    n = law.dim_state
    K = np.asarray(law.K_eval(z), dtype=np.complex128).reshape(len(s), n, n)
    out = np.broadcast_to(law.M1 + sys.A, (len(s), law.dim, law.dim)).copy()
    out[:, :n, :n] += s[:, None, None] * K
    return out


def delta_spectrum(d: DeltaSource, grid: TimeGrid) -> SpectralSignal:
    """Transform of ``delta_{t0} x0``: ``x0 exp(-(i tau + nu) t0) / sqrt(2 pi)``.

    This equals the transform of a one-sample pulse of area one at a grid
    point, so narrow pulses converge to it.
    """
    t0 = d.t_impulse
    if not grid.t0 <= t0 < grid.t0 + grid.window:
        raise ValueError(f"impulse time {t0} outside the window")
    env = np.exp(-grid.symbols * t0) / SQRT_2PI
    return SpectralSignal(grid, env[:, None] * d.amplitude[None, :])


def _rhs(sys, f: TimeSignal, impulses: Sequence[DeltaSource]) -> np.ndarray:
    F = fourier_laplace(f).values.copy()
    lo, hi = f.grid.middle()
    for d in impulses:
        if d.amplitude.shape != (sys.dim,):
            raise PreconditionError("impulse amplitude has the wrong dimension")
        if not lo <= d.t_impulse <= hi:
            raise ValueError(f"impulse at t={d.t_impulse} outside the middle half [{lo}, {hi}]")
        F += delta_spectrum(d, f.grid).values
    return F


def solve_spectrum(sys: EvolutionarySystem, grid: TimeGrid, rhs: np.ndarray,
                   backend: str | None = None) -> np.ndarray:
    """Bin-wise solve on the spectral side; ``rhs`` has shape (n, dim)."""
    s = grid.symbols
    out = np.empty_like(rhs, dtype=np.complex128)
    step = _chunk(sys.dim)
    for lo in range(0, grid.n, step):
        sl = slice(lo, lo + step)
        x, status = _kernels.batched_solve(bin_matrices(sys, s[sl]), rhs[sl], backend)
        if status.any():
            k = lo + int(np.flatnonzero(status)[0])
            raise IllPosedSystemError(f"singular bin matrix at tau_k={grid.freqs[k]:.6g} (bin {k})")
        out[sl] = x
    return out


def _regrid(sys, f: TimeSignal) -> TimeSignal:
    if f.grid.nu != sys.nu:
        return TimeSignal(f.grid.with_nu(sys.nu), f.samples)
    return f


def solve_frequency(sys: EvolutionarySystem, f: TimeSignal, impulses: Sequence[DeltaSource] = (),
                    check_margin: bool = True, backend: str | None = None) -> TimeSignal:
    f = _regrid(sys, f)
    if f.dim != sys.dim:
        raise PreconditionError(f"signal dim {f.dim} != system dim {sys.dim}")
    if check_margin:
        m = positivity_margin(sys.law, sys.nu, 64)
        if not m > 0:
            warnings.warn(f"sampled positivity margin {m:.3g} <= 0; well-posedness not certified",
                          RuntimeWarning, stacklevel=2)
    values = solve_spectrum(sys, f.grid, _rhs(sys, f, impulses), backend)
    return inverse_fourier_laplace(SpectralSignal(f.grid, values))


def _apply_bins(sys, grid: TimeGrid, values: np.ndarray) -> np.ndarray:
    s = grid.symbols
    out = np.empty_like(values)
    step = _chunk(sys.dim)
    for lo in range(0, grid.n, step):
        sl = slice(lo, lo + step)
        out[sl] = np.einsum("kij,kj->ki", bin_matrices(sys, s[sl]), values[sl])
    return out


def residual(sys: EvolutionarySystem, u: TimeSignal, f: TimeSignal,
             impulses: Sequence[DeltaSource] = ()) -> float:
    """Relative residual of the evolutionary equation, computed bin by bin.

    The denominator is the norm of the full right-hand side (f plus impulse
    spectra), floored at machine epsilon.
    """
    u, f = _regrid(sys, u), _regrid(sys, f)
    rhs = _rhs(sys, f, impulses)
    r = _apply_bins(sys, u.grid, fourier_laplace(u).values) - rhs
    num = math.sqrt(u.grid.dtau * float(np.sum(np.abs(r) ** 2)))
    den = math.sqrt(u.grid.dtau * float(np.sum(np.abs(rhs) ** 2)))
    return num / max(den, np.finfo(float).eps)


def condition_estimate(sys: EvolutionarySystem, u: TimeSignal, f: TimeSignal) -> float:
    """``max_k |L_k| |u| / |f|``: residual growth per unit relative perturbation of u."""
    s = u.grid.symbols
    big = 0.0
    step = _chunk(sys.dim)
    for lo in range(0, len(s), step):
        mats = bin_matrices(sys, s[lo:lo + step])
        big = max(big, float(np.linalg.norm(mats, ord=2, axis=(1, 2)).max()))
    return big * u.norm() / max(f.norm(), np.finfo(float).eps)


def solve_timestep_oracle(M0, M1, A, f: TimeSignal, backend: str | None = None) -> TimeSignal:
    """Implicit Euler for ``M0 u' + M1 u + A u = f`` from zero history (first order)."""
    M0 = np.atleast_2d(np.asarray(M0, dtype=np.complex128))
    M1 = np.atleast_2d(np.asarray(M1, dtype=np.complex128))
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    d = M0.shape[0]
    if f.dim != d:
        raise PreconditionError(f"signal dim {f.dim} != system dim {d}")
    if np.linalg.norm(M0 - M0.conj().T) > 1e-12 * max(np.linalg.norm(M0), 1.0):
        raise PreconditionError("M0 must be Hermitian")
    if np.linalg.eigvalsh(M0)[0] < -1e-12 * max(np.linalg.norm(M0, 2), 1.0):
        raise PreconditionError("M0 must be positive semidefinite")
    nu = f.grid.nu
    H = nu * M0 + 0.5 * (M1 + M1.conj().T)
    if np.linalg.eigvalsh(H)[0] <= 0:
        raise PreconditionError("nu M0 + Re M1 must be positive definite")
    dt = f.grid.dt
    step = M0 / dt + M1 + A
    lu, piv = sla.lu_factor(step, check_finite=True)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-14 * max(diag.max(), 1e-300):
        raise IllPosedSystemError("singular implicit-Euler step matrix")
    out = _kernels.lu_sweep(lu, piv, M0 / dt, f.samples, backend)
    return TimeSignal(f.grid, out)
