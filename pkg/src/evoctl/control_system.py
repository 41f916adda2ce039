"""Abstract boundary control systems ``C_{M,F,B}`` with ``F = (-G; C)``.

The total space is ordered ``(x, zeta, w, y)``.  Here ``x`` lives in H0 and
``zeta`` in H1.  The control component is ``w`` in V and the observation
component is ``y`` in Y.  When G has a kernel, ``x`` and ``zeta`` are
coordinatized by orthonormal bases of ``(ker G)^perp`` and ``ran G``, so the
reduced gradient ``Gt`` is invertible.  V and Y carry Euclidean coordinates.
In these coordinates every adjoint is a conjugate transpose, and the block
operator

    A = [[0, F^*, 0], [-F, 0, 0], [0, 0, 0]],   F = (-Gt; C_e)

is exactly skew-Hermitian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .boundary_data import SobolevMetric, trace_functional
from .discrete_ops import OperatorQuartet, reduced_bases
from .evo_solver import EvolutionarySystem, IllPosedSystemError, bin_matrices
from .material_law import (
    MaterialLaw,
    PreconditionError,
    certify_wellposedness,
    contour_points,
    coupling_J,
    positivity_report,
)
from .weighted_time import SpectralSignal, TimeSignal, fourier_laplace, inverse_fourier_laplace

__all__ = [
    "AdjointDefectError",
    "BoundaryControlSpec",
    "assemble_F",
    "make_spec",
    "domain_condition_defect",
    "project_admissible",
    "extract_control_equation",
    "extract_observation_equation",
    "wellposedness_report",
]

ADJ_TOL = 1e-10


class AdjointDefectError(RuntimeError):
    """``<F x | (zeta, w)> != <x | F^*(zeta, w)>`` beyond tolerance."""


def assemble_F(q: OperatorQuartet, C: np.ndarray, n_samples: int = 100, seed: int = 0,
               tol: float = ADJ_TOL):
    """``F = (-G; C)`` on H0 and its weighted adjoint ``F^*(zeta, w) = D0 zeta + C^<> w``.

    Here ``D0`` acts on all of H1 as the dual of ``-G`` (the extension of D0 to
    H_{-1}), and ``C^<>`` is represented in H0 by ``W0^{-1} C^H``.  The identity is
    verified on ``n_samples`` random pairs.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.complex128))
    if C.shape[1] != q.n0:
        raise PreconditionError(f"C must act on H0 coordinates ({q.n0}), got {C.shape}")
    nV = C.shape[0]
    F = np.vstack([-q.Gmax, C])
    Cdual = C.conj().T / q.w0[:, None]
    Fstar = np.hstack([-q.G_adj, Cdual])
    w_out = np.concatenate([q.w1, np.ones(nV)])
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        x = rng.standard_normal(q.n0) + 1j * rng.standard_normal(q.n0)
        y = rng.standard_normal(q.n1 + nV) + 1j * rng.standard_normal(q.n1 + nV)
        Fx, Fy = F @ x, Fstar @ y
        lhs = np.vdot(Fx, w_out * y)
        rhs = np.vdot(x, q.w0 * Fy)
        scale = (math.sqrt(np.vdot(Fx, w_out * Fx).real * np.vdot(y, w_out * y).real)
                 + math.sqrt(np.vdot(x, q.w0 * x).real * np.vdot(Fy, q.w0 * Fy).real))
        worst = max(worst, abs(lhs - rhs) / max(scale, np.finfo(float).tiny))
    if worst > tol:
        raise AdjointDefectError(f"adjoint identity defect {worst:.3e} > {tol:.1e}")
    return F, Fstar


@dataclass(frozen=True)
class BoundaryControlSpec:
    quartet: OperatorQuartet = field(repr=False)
    C: np.ndarray = field(repr=False)
    Cdual: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    law: MaterialLaw | None = field(repr=False)
    Q0: np.ndarray = field(repr=False)
    Q1: np.ndarray = field(repr=False)
    Gt: np.ndarray = field(repr=False)
    dim_U: int
    dim_V: int
    dim_Y: int
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def r(self) -> int:
        """Dimension of the reduced H0 (and H1) coordinates."""
        return self.Q0.shape[1]

    @property
    def dim(self) -> int:
        return 2 * self.r + self.dim_V + self.dim_Y

    @property
    def slices(self) -> dict:
        r, V = self.r, self.dim_V
        return {"x": slice(0, r), "zeta": slice(r, 2 * r), "w": slice(2 * r, 2 * r + V),
                "y": slice(2 * r + V, self.dim)}

    @property
    def C_e(self) -> np.ndarray:
        return self.C @ self.Q0

    @property
    def F_e(self) -> np.ndarray:
        return np.vstack([-self.Gt, self.C_e])

    @property
    def A_sys(self) -> np.ndarray:
        r, V = self.r, self.dim_V
        F = self.F_e
        A = np.zeros((self.dim, self.dim), dtype=np.complex128)
        A[:r, r:2 * r + V] = F.conj().T
        A[r:2 * r + V, :r] = -F
        return A

    def system(self, nu: float) -> EvolutionarySystem:
        if self.law is None:
            raise PreconditionError("spec has no material law")
        return EvolutionarySystem(self.law, self.A_sys, nu)

    def total_forcing(self, f: TimeSignal | None, u: TimeSignal | None, grid=None) -> TimeSignal:
        """``f + B u`` as a signal on the total space."""
        grid = grid or (f.grid if f is not None else u.grid)
        out = np.zeros((grid.n, self.dim), dtype=np.complex128)
        if f is not None:
            out += _samples(f, self.dim, "f")
        if u is not None:
            out += _samples(u, self.dim_U, "u") @ self.B.T
        return TimeSignal(grid, out)

    def to_reduced_H0(self, x: np.ndarray) -> np.ndarray:
        """Coordinates of the (ker G)^perp part of an H0 vector (rows are samples if 2-D)."""
        x = np.asarray(x)
        return (x * self.quartet.w0) @ self.Q0.conj()

    def from_reduced_H0(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a) @ self.Q0.T

    def from_reduced_H1(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a) @ self.Q1.T


def _samples(sig: TimeSignal, dim: int, name: str) -> np.ndarray:
    if sig.dim != dim:
        raise PreconditionError(f"{name} has dim {sig.dim}, expected {dim}")
    return sig.samples


def make_spec(q: OperatorQuartet, C: np.ndarray, B: np.ndarray, law: MaterialLaw | None,
              dim_Y: int, check_adjoint: bool = True, seed: int = 0, meta: dict | None = None,
              rtol: float = 1e-10) -> BoundaryControlSpec:
    """Validate and package a boundary control system.

    ``C`` maps H0 coordinates to V.  ``B`` has shape (total dim, dim_U).  The
    reduced gradient must be boundedly invertible, which holds by
    construction on ``(ker G)^perp``.  A nontrivial remaining kernel would
    show up as a zero singular value and is rejected.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.complex128))
    if check_adjoint:
        assemble_F(q, C, seed=seed)
    Q0, Q1, Gt = reduced_bases(q, rtol)
    if Gt.shape[0] == 0 or np.min(np.abs(np.diag(Gt))) <= 0:
        raise PreconditionError("G is not boundedly invertible on (ker G)^perp")
    Cdual = C.conj().T / q.w0[:, None]
    nV = C.shape[0]
    B = np.atleast_2d(np.asarray(B, dtype=np.complex128))
    total = 2 * Q0.shape[1] + nV + int(dim_Y)
    if B.shape[0] != total:
        raise PreconditionError(f"B must have {total} rows, got {B.shape}")
    if law is not None and law.dim != total:
        raise PreconditionError(f"law dim {law.dim} != total dim {total}")
    return BoundaryControlSpec(q, C, Cdual, B, law, Q0, Q1, Gt, B.shape[1], nV, int(dim_Y),
                               dict(meta or {}))


def _phi(spec: BoundaryControlSpec, w: np.ndarray) -> np.ndarray:
    """``D0^{-1} C^<> w`` in full H1 coordinates, solved on the reduced spaces."""
    # reduced D0 is -Gt^H; C^<> projected onto (ker G)^perp is C_e^H w
    return spec.Q1 @ np.linalg.solve(-spec.Gt.conj().T, spec.C_e.conj().T @ w)


def domain_condition_defect(spec: BoundaryControlSpec, zeta: np.ndarray, w: np.ndarray,
                            metric: SobolevMetric | None = None) -> float:
    """H_{-1}(|G|+i) norm of ``gamma_D(zeta + D0^{-1} C^<> w)`` (``zeta`` in full H1 coordinates)."""
    metric = metric or SobolevMetric.from_quartet(spec.quartet)
    psi = np.asarray(zeta, dtype=np.complex128) + _phi(spec, np.asarray(w, dtype=np.complex128))
    return trace_functional(spec.quartet, metric, psi, side="D").norm


def project_admissible(spec: BoundaryControlSpec, zeta: np.ndarray, w: np.ndarray):
    """Least-squares (minimal Euclidean change) projection of (zeta, w) onto the admissible set."""
    q = spec.quartet
    T = q.w0[:, None] * q.Dmax + q.Gmax.conj().T * q.w1[None, :]
    Phi = spec.Q1 @ np.linalg.solve(-spec.Gt.conj().T, spec.C_e.conj().T)
    Mmap = np.hstack([T, T @ Phi])
    xv = np.concatenate([zeta, w]).astype(np.complex128)
    corr = np.linalg.lstsq(Mmap, Mmap @ xv, rcond=None)[0]
    out = xv - corr
    return out[:q.n1], out[q.n1:]


def _prepare(spec, state, f, nu):
    if spec.law is None:
        raise PreconditionError("spec has no material law")
    grid = state.grid if nu is None else state.grid.with_nu(nu)
    nxz = 2 * spec.r
    if state.dim not in (nxz, spec.dim):
        raise PreconditionError(f"state must have dim {nxz} (x, zeta) or {spec.dim}")
    X = fourier_laplace(TimeSignal(grid, state.samples[:, :nxz])).values
    Fv = np.zeros((grid.n, spec.dim), dtype=np.complex128)
    if f is not None:
        Fv = fourier_laplace(TimeSignal(grid, _samples(f, spec.dim, "f"))).values
    sl = spec.slices
    idx = np.arange(spec.dim)
    return grid, spec.system(grid.nu), X, Fv, idx[sl["w"]], idx[sl["y"]], nxz


def _rowwise(spec, sys, grid, WY, rhs, known, blocks, what):
    """One pass over the bins: subtract the known columns, then solve the square block.

    ``known`` is a list of (column indices, spectral values) moved to the
    right-hand side.  ``blocks(L_rows)`` builds the per-bin matrices from the
    WY rows of the bin matrices.
    """
    s = grid.symbols
    out = np.empty_like(rhs)
    for lo in range(0, grid.n, 256):
        seg = slice(lo, lo + 256)
        L = bin_matrices(sys, s[seg])[:, WY]
        r = rhs[seg].copy()
        for cols, vals in known:
            r -= np.einsum("kij,kj->ki", L[:, :, cols], vals[seg])
        x, status = _kernels.batched_solve(blocks(L), r)
        if status.any():
            k = lo + int(np.flatnonzero(status)[0])
            raise IllPosedSystemError(f"singular {what} block at tau_k={grid.freqs[k]:.6g} (bin {k})")
        out[seg] = x
    return out


def extract_control_equation(spec: BoundaryControlSpec, state: TimeSignal, f: TimeSignal | None,
                             u: TimeSignal | None, nu: float | None = None):
    """Solve the (w, y) rows of the system for given state (x, zeta), forcing f and control u.

    Per bin this is the block ``[[s K_VV + M1_ww, M1_wy], [M1_yw, M1_yy]]``.
    ``state`` may be the full solution (its w, y entries are ignored).
    """
    grid, sys, X, Fv, iw, iy, nxz = _prepare(spec, state, f, nu)
    WY = np.r_[iw, iy]
    rhs = Fv[:, WY]
    if u is not None:
        rhs = rhs + fourier_laplace(TimeSignal(grid, _samples(u, spec.dim_U, "u"))).values @ spec.B[WY].T
    sol = _rowwise(spec, sys, grid, WY, rhs, [(np.arange(nxz), X)], lambda L: L[:, :, WY], "control")
    out = inverse_fourier_laplace(SpectralSignal(grid, sol))
    V = spec.dim_V
    return out.component(slice(0, V)), out.component(slice(V, V + spec.dim_Y))


def extract_observation_equation(spec: BoundaryControlSpec, state: TimeSignal, f: TimeSignal | None,
                                 y: TimeSignal, nu: float | None = None):
    """Solve the (w, y) rows for (w, u) given the observation y.

    Per bin the block is ``[L_WY,W | -B_WY]``, which must be square
    (``dim_U == dim_Y``).
    """
    if spec.dim_U != spec.dim_Y:
        raise PreconditionError("observation form needs dim U == dim Y")
    grid, sys, X, Fv, iw, iy, nxz = _prepare(spec, state, f, nu)
    WY = np.r_[iw, iy]
    Yv = fourier_laplace(TimeSignal(grid, _samples(y, spec.dim_Y, "y"))).values
    BWY = spec.B[WY]

    def blocks(L):
        left = L[:, :, iw]
        return np.concatenate([left, np.broadcast_to(-BWY, (L.shape[0],) + BWY.shape)], axis=2)

    sol = _rowwise(spec, sys, grid, WY, Fv[:, WY], [(np.arange(nxz), X), (iy, Yv)], blocks,
                   "observation")
    out = inverse_fourier_laplace(SpectralSignal(grid, sol))
    V = spec.dim_V
    return out.component(slice(0, V)), out.component(slice(V, V + spec.dim_U))


def wellposedness_report(law: MaterialLaw, nu: float, n_samples: int = 200) -> dict:
    """Sampled constants of the block-coupling certificate and the sampled margin of M itself.

    ``c0`` is the sampled minimum of ``Re z^{-1} K(z)``.  ``c1`` is
    ``lambda_min(Re M_{1,22})``.  The certificate's margin is the closed-form
    optimum over delta, and the sampled full margin must dominate it.
    """
    z = contour_points(nu, n_samples)
    K = np.asarray(law.K_eval(z), dtype=np.complex128).reshape(len(z), law.dim_state, law.dim_state)
    S = K / z[:, None, None]
    c0 = float(np.linalg.eigvalsh(0.5 * (S + np.conj(np.swapaxes(S, 1, 2))))[:, 0].min())
    if law.dim_obs:
        M22 = law.M122
        c1 = float(np.linalg.eigvalsh(0.5 * (M22 + M22.conj().T))[0])
    else:
        c1 = c0
    _, normJ = coupling_J(law)
    rep = positivity_report(law, nu, n_samples)
    out = {"c0": c0, "c1": c1, "normJ": normJ, "sampled_margin": rep["margin"],
           "contour_min": rep["contour_min"], "n_samples": n_samples, "nu": nu}
    if c0 > 0 and c1 > 0:
        cert = certify_wellposedness(c0, c1, normJ)
        out.update({"delta": cert.delta_tradeoff, "predicted_margin": cert.margin,
                    "certified": cert.valid,
                    "theorem_gap": rep["margin"] - cert.margin})
    else:
        out.update({"delta": None, "predicted_margin": min(c0, c1), "certified": False,
                    "theorem_gap": None})
    return out
