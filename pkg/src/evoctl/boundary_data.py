"""Boundary data spaces, abstract traces, the unitary pair (G^, D.) and the DtN map.

``BD(G)`` is the H1(|G|+i)-orthocomplement of ``dom(G0)`` and coincides with
``ker(1 - D G)``.  Both are computed, and their principal angles are compared.
Traces are never stored as distributions.  A trace is the functional
``v -> <G u|v> + <u|D v>`` on H1(|D|+i), represented by its coefficient
vector, and the trace space is coordinatized by BD preimages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discrete_ops import OperatorQuartet

__all__ = [
    "NULLSPACE_RTOL",
    "BDConsistencyError",
    "SobolevMetric",
    "BDSpaces",
    "TraceFunctional",
    "principal_angle",
    "bd_basis",
    "bd_basis_pair",
    "trace_functional",
    "trace_kernel_angle",
    "bd_hat_operators",
    "dirichlet_to_neumann",
    "interval_alignment",
    "bd_spaces",
]

NULLSPACE_RTOL = 1e-8
ANGLE_TOL = 1e-9
HAT_TOL = 1e-10


class BDConsistencyError(RuntimeError):
    """Two constructions of the same space disagree, or a unitarity identity fails."""


@dataclass(frozen=True)
class SobolevMetric:
    """Grams of H1(|G|+i) (on H0 coordinates) and H1(|D|+i) (on H1 coordinates)."""

    gram_H1_G: np.ndarray = field(repr=False)
    gram_H1_D: np.ndarray = field(repr=False)
    chol_G: np.ndarray = field(repr=False)
    chol_D: np.ndarray = field(repr=False)

    @classmethod
    def from_quartet(cls, q: OperatorQuartet) -> "SobolevMetric":
        gG, gD = q.gram_G(), q.gram_D()
        return cls(gG, gD, sla.cholesky(gG, lower=True), sla.cholesky(gD, lower=True))

    def gram(self, side: str) -> np.ndarray:
        return self.gram_H1_G if _side(side) == "G" else self.gram_H1_D

    def chol(self, side: str) -> np.ndarray:
        return self.chol_G if _side(side) == "G" else self.chol_D

    def norm(self, x, side: str = "G") -> float:
        return math.sqrt(max(float(np.vdot(x, self.gram(side) @ x).real), 0.0))

    def dual_norm(self, b, side: str = "D") -> float:
        """Norm of ``v -> b^H v`` on H1 of ``side`` (the H_{-1} norm), via Cholesky."""
        y = sla.solve_triangular(self.chol(side), b, lower=True)
        return float(np.linalg.norm(y))

    def representer_norm(self, phi, weights, side: str = "D") -> float:
        """H_{-1} norm of ``v -> <phi|v>_{H0}``, with ``weights`` the H0 quadrature."""
        return self.dual_norm(np.asarray(weights) * phi, side)

    def orthonormalize(self, X: np.ndarray, side: str) -> np.ndarray:
        if X.shape[1] == 0:
            return X
        R = sla.cholesky(X.conj().T @ self.gram(side) @ X, lower=False)
        # X R^{-1} = (R^{-H} X^H)^H
        return sla.solve_triangular(R, X.conj().T, trans="C", lower=False).conj().T

    def lowdin(self, X: np.ndarray, side: str) -> np.ndarray:
        """Symmetric orthonormalization ``X (X^H Gram X)^{-1/2}`` (basis-order independent)."""
        S = X.conj().T @ self.gram(side) @ X
        lam, V = np.linalg.eigh(S)
        return X @ (V / np.sqrt(lam)) @ V.conj().T


def _side(side: str) -> str:
    s = str(side).upper()
    if s not in ("G", "D"):
        raise ValueError(f"side must be 'G' or 'D', got {side!r}")
    return s


def principal_angle(X: np.ndarray, Y: np.ndarray, gram: np.ndarray | None = None) -> float:
    """Largest principal angle between column spaces, optionally in the metric ``gram``."""
    if X.shape[1] != Y.shape[1]:
        return math.pi / 2
    if X.shape[1] == 0:
        return 0.0
    if gram is not None:
        L = sla.cholesky(gram, lower=True)
        X, Y = L.conj().T @ X, L.conj().T @ Y
    return float(np.max(sla.subspace_angles(X, Y)))


def _kernel_of_one_minus(second: np.ndarray, first: np.ndarray, rtol: float) -> np.ndarray:
    """Nullspace of ``1 - second first``.

    Off the boundary data the singular values of ``1 - DG`` are at least 1,
    while forming the product leaves rounding of size eps |D| |G|.  The
    threshold is therefore relative to ``max(1, |D| |G|)``, not to the largest
    singular value (which is tiny when ``DG`` is the identity).
    """
    A = np.eye(first.shape[1]) - second @ first
    _, s, Vh = np.linalg.svd(A)
    scale = np.linalg.norm(second, 2) * np.linalg.norm(first, 2) if A.size else 0.0
    cut = rtol * max(1.0, float(scale))
    return Vh[np.sum(s > cut):].conj().T


def _ops(q: OperatorQuartet, side: str):
    """(first, second, minimal-domain inclusion) so that BD = ker(1 - second first)."""
    if side == "G":
        return q.Gmax, q.Dmax, q.E_intG
    return q.Dmax, q.Gmax, q.E_intD


def bd_basis_pair(q: OperatorQuartet, side: str = "G", metric: SobolevMetric | None = None,
                  rtol: float = NULLSPACE_RTOL):
    """Both constructions of BD, orthonormalized.

    Returns ``(kernel_basis, complement_basis, max_angle)``.
    """
    side = _side(side)
    metric = metric or SobolevMetric.from_quartet(q)
    first, second, E = _ops(q, side)
    n = first.shape[1]
    gram = metric.gram(side)
    ker = _kernel_of_one_minus(second, first, rtol)
    comp = sla.null_space(E.conj().T @ gram, rcond=rtol) if E.shape[1] else np.eye(n)
    ker, comp = metric.orthonormalize(ker, side), metric.orthonormalize(comp, side)
    return ker, comp, principal_angle(ker, comp, gram)


def bd_basis(q: OperatorQuartet, side: str = "G", metric: SobolevMetric | None = None,
             rtol: float = NULLSPACE_RTOL, tol: float = ANGLE_TOL) -> np.ndarray:
    """H1-orthonormal basis of ``ker(1 - DG)`` (side G) or ``ker(1 - GD)`` (side D)."""
    ker, comp, angle = bd_basis_pair(q, side, metric, rtol)
    if ker.shape[1] != comp.shape[1]:
        raise BDConsistencyError(
            f"BD({side}): nullity of (1 - ...) is {ker.shape[1]} but the orthocomplement of the "
            f"minimal domain has dimension {comp.shape[1]}")
    if angle > tol:
        raise BDConsistencyError(f"BD({side}) constructions differ: principal angle {angle:.3e}")
    return ker


@dataclass(frozen=True)
class TraceFunctional:
    """``v -> coeffs^H v`` together with its H_{-1} norm."""

    coeffs: np.ndarray = field(repr=False)
    norm: float
    side: str

    def __call__(self, v) -> complex:
        return complex(np.vdot(self.coeffs, v))


def trace_functional(q: OperatorQuartet, metric: SobolevMetric, u, side: str = "G") -> TraceFunctional:
    """``gamma_G u`` as ``v -> <G u|v> + <u|D v>`` (side G), or ``gamma_D`` likewise (side D)."""
    side = _side(side)
    u = np.asarray(u)
    if side == "G":
        b = q.w1 * (q.Gmax @ u) + q.Dmax.conj().T @ (q.w0 * u)
        return TraceFunctional(b, metric.dual_norm(b, "D"), "G")
    b = q.w0 * (q.Dmax @ u) + q.Gmax.conj().T @ (q.w1 * u)
    return TraceFunctional(b, metric.dual_norm(b, "G"), "D")


def trace_kernel_angle(q: OperatorQuartet, side: str = "G", rtol: float = NULLSPACE_RTOL) -> float:
    """Principal angle between ``ker gamma`` and the minimal domain."""
    side = _side(side)
    if side == "G":
        T, E = q.w1[:, None] * q.Gmax + q.Dmax.conj().T * q.w0[None, :], q.E_intG
    else:
        T, E = q.w0[:, None] * q.Dmax + q.Gmax.conj().T * q.w1[None, :], q.E_intD
    return principal_angle(sla.null_space(T, rcond=rtol), E)


def bd_hat_operators(q: OperatorQuartet, basisG: np.ndarray, basisD: np.ndarray,
                     metric: SobolevMetric | None = None, tol: float = HAT_TOL):
    """Coefficient matrices of ``G^ : BD(G) -> BD(D)`` and ``D. : BD(D) -> BD(G)``.

    Both bases must be orthonormal in their H1 metrics.  Raises if the images
    leave the BD spaces, if ``D. G^ != 1`` or if ``G^^* != D.``.
    """
    metric = metric or SobolevMetric.from_quartet(q)
    gG, gD = metric.gram_H1_G, metric.gram_H1_D
    GB, DB = q.Gmax @ basisG, q.Dmax @ basisD
    Ghat = basisD.conj().T @ gD @ GB
    Dhat = basisG.conj().T @ gG @ DB
    scale = max(1.0, float(np.abs(GB).max(initial=0.0)), float(np.abs(DB).max(initial=0.0)))
    leak = max(float(np.abs(GB - basisD @ Ghat).max(initial=0.0)),
               float(np.abs(DB - basisG @ Dhat).max(initial=0.0))) / scale
    k = Ghat.shape[1]
    inv_defect = float(np.abs(Dhat @ Ghat - np.eye(k)).max(initial=0.0))
    adj_defect = float(np.abs(Ghat.conj().T - Dhat).max(initial=0.0))
    worst = max(leak, inv_defect, adj_defect)
    if worst > tol:
        raise BDConsistencyError(
            f"hat operators broken: image leak {leak:.2e}, |D.G^ - 1| {inv_defect:.2e}, "
            f"|G^* - D.| {adj_defect:.2e}")
    return Ghat, Dhat


def interval_alignment(q: OperatorQuartet):
    """Boundary evaluations for 1D quartets: endpoint node values for H0 and
    linear extrapolation of the two outermost cell values for H1.

    They fix mesh-independent trace coordinates.
    """
    n0, n1 = q.n0, q.n1
    evG = np.zeros((2, n0))
    evG[0, 0] = evG[1, -1] = 1.0
    evD = np.zeros((2, n1))
    evD[0, :2] = (1.5, -0.5)
    evD[1, -2:] = (-0.5, 1.5)
    return evG, evD


def dirichlet_to_neumann(q: OperatorQuartet, bases, metric: SobolevMetric | None = None,
                         alignment=None) -> np.ndarray:
    """``gamma_D|BD(D) o G^ o (gamma_G|BD(G))^{-1}`` in trace coordinates.

    Trace spaces are coordinatized by their BD preimages, where the traces are
    isometric.  With ``alignment = (evalG, evalD)`` the BD bases are first
    rotated into the canonical frame of unit boundary values (Lowdin
    orthonormalized).  That frame is what makes matrices from different
    meshes comparable.  ``alignment="auto"`` uses :func:`interval_alignment`
    for 1D quartets.
    """
    basisG, basisD = bases
    metric = metric or SobolevMetric.from_quartet(q)
    if alignment == "auto":
        alignment = interval_alignment(q) if q.meta.get("kind") in ("interval", "sym1d", "grad1d") else None
    if alignment is not None and basisG.shape[1]:
        evG, evD = alignment
        basisG = metric.lowdin(basisG @ np.linalg.inv(evG @ basisG), "G")
        basisD = metric.lowdin(basisD @ np.linalg.inv(evD @ basisD), "D")
    return basisD.conj().T @ metric.gram_H1_D @ q.Gmax @ basisG


@dataclass(frozen=True)
class BDSpaces:
    basisBDG: np.ndarray = field(repr=False)
    basisBDD: np.ndarray = field(repr=False)
    Ghat: np.ndarray = field(repr=False)
    Dhat: np.ndarray = field(repr=False)
    dtn: np.ndarray = field(repr=False)
    metric: SobolevMetric = field(repr=False)
    report: dict = field(default_factory=dict)


def _unitarity(U: np.ndarray) -> float:
    if U.size == 0:
        return 0.0
    s = np.linalg.svd(U, compute_uv=False)
    return float(np.max(np.abs(s - 1.0)))


def bd_spaces(q: OperatorQuartet, rtol: float = NULLSPACE_RTOL) -> BDSpaces:
    """All boundary-data objects of a quartet plus a report of defects."""
    metric = SobolevMetric.from_quartet(q)
    kerG, compG, angG = bd_basis_pair(q, "G", metric, rtol)
    kerD, compD, angD = bd_basis_pair(q, "D", metric, rtol)
    basisG = bd_basis(q, "G", metric, rtol)
    basisD = bd_basis(q, "D", metric, rtol)
    Ghat, Dhat = bd_hat_operators(q, basisG, basisD, metric)
    dtn = dirichlet_to_neumann(q, (basisG, basisD), metric, alignment="auto")
    iso = 0.0
    for j in range(basisG.shape[1]):
        u = basisG[:, j]
        iso = max(iso, abs(trace_functional(q, metric, u).norm - metric.norm(u, "G")))
    k = Ghat.shape[0]
    report = {
        "dim_BD_G": int(basisG.shape[1]),
        "dim_BD_D": int(basisD.shape[1]),
        "angle_BD_G": angG,
        "angle_BD_D": angD,
        "nullspace_rtol": rtol,
        "trace_isometry_defect": iso,
        "trace_kernel_angle": trace_kernel_angle(q, "G", rtol) if q.E_intG.shape[1] else 0.0,
        "DG_identity_defect": float(np.abs(Dhat @ Ghat - np.eye(k)).max(initial=0.0)),
        "Ghat_unitarity": _unitarity(Ghat),
        "Dhat_unitarity": _unitarity(Dhat),
        "dtn_unitarity": _unitarity(dtn),
        "dtn": [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(dtn, dtype=complex)],
    }
    return BDSpaces(basisG, basisD, Ghat, Dhat, dtn, metric, report)
