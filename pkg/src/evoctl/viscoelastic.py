"""Visco-elastic rod (or plate) with memory, driven and observed through its boundary.

Stress and strain satisfy ``T = M Grad x - g * Grad x`` with
``g(t) = g0 + int_0^t h`` and ``h`` a sum of decaying exponentials.  Solving for
the strain gives the frequency-domain law ``(M - sqrt(2 pi) g^(-i/z))^{-1}``.
The boundary is coupled through the normal-coupling operator ``nu_hat``,
which multiplies by an extension N of the outward normal and projects onto
BD(div).  It defines the control space U.  The state ``(v, T, w, y)`` lives in
orthonormal coordinates of ``(ker Grad)^perp``, ``ran Grad``, U and U.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .boundary_data import BDSpaces, SobolevMetric, bd_spaces
from .control_system import (
    BoundaryControlSpec,
    domain_condition_defect,
    extract_control_equation,
    extract_observation_equation,
    make_spec,
    wellposedness_report,
)
from .discrete_ops import (
    BOUNDARY_WEIGHT,
    OperatorQuartet,
    build_sym_elasticity_ops,
    reduced_bases,
)
from .evo_solver import residual, solve_frequency
from .material_law import MaterialLaw, PreconditionError, contour_points, parse_matrix
from .weighted_time import (
    SQRT_2PI,
    TimeGrid,
    TimeSignal,
    causality_defect,
    multiply_spectrum,
    weighted_norm,
)
from . import _kernels

__all__ = [
    "ConfigurationError",
    "MemoryKernel",
    "ViscoSystemConfig",
    "ViscoSystem",
    "convolve_kernel",
    "stress_law_eval",
    "stress_law_neumann",
    "neumann_parameter",
    "stress_block_bound",
    "positivity_of_K",
    "normal_multiplier",
    "build_normal_coupling",
    "build_U_space",
    "j_star",
    "config_from_dict",
    "assemble_visco_system",
    "smooth_pulse",
    "run_demo",
]


class ConfigurationError(ValueError):
    """A hypothesis of the visco-elastic construction fails for the given configuration."""


# ---------------------------------------------------------------------------
# memory kernels


@dataclass(frozen=True)
class MemoryKernel:
    """``g(t) = g0 + int_0^t h`` with ``h(t) = sum alpha exp(-beta t)`` for t >= 0."""

    g0: complex = 0.0
    terms: tuple = ()

    def __post_init__(self):
        terms = tuple((complex(a), float(b)) for a, b in self.terms)
        for _, b in terms:
            if not b > 0:
                raise ValueError(f"decay rates must be positive, got {b}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "g0", complex(self.g0))

    @property
    def l1_h(self) -> float:
        return float(sum(abs(a) / b for a, b in self.terms))

    @property
    def bound(self) -> float:
        """``|h|_1 + |g0|``; the convolution norm is at most this over nu."""
        return self.l1_h + abs(self.g0)

    @property
    def is_zero(self) -> bool:
        return self.g0 == 0 and all(a == 0 for a, _ in self.terms)

    def h(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=np.complex128)
        pos = t >= 0
        for a, b in self.terms:
            out[pos] += a * np.exp(-b * t[pos])
        return out

    def g(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=np.complex128)
        pos = t >= 0
        out[pos] = self.g0
        for a, b in self.terms:
            out[pos] += a * (-np.expm1(-b * t[pos])) / b
        return out

    def h_hat(self, z) -> np.ndarray:
        """``h^(-i/z) = (2 pi)^{-1/2} sum alpha / (1/z + beta)``."""
        z = np.asarray(z, dtype=np.complex128)
        p = 1.0 / z
        return sum((a / (p + b) for a, b in self.terms), np.zeros_like(z)) / SQRT_2PI

    def g_hat(self, z) -> np.ndarray:
        """``g^(-i/z) = z h^(-i/z) + z g0 / sqrt(2 pi)``."""
        z = np.asarray(z, dtype=np.complex128)
        return z * self.h_hat(z) + z * self.g0 / SQRT_2PI

    def symbol(self, z) -> np.ndarray:
        """``sqrt(2 pi) g^(-i/z)``: the bin multiplier of ``g *`` at ``z = 1/(i tau + nu)``."""
        return SQRT_2PI * self.g_hat(z)

    def as_dict(self) -> dict:
        return {"g0": [self.g0.real, self.g0.imag],
                "terms": [[[a.real, a.imag], b] for a, b in self.terms]}


def _kernel_from_obj(obj) -> MemoryKernel:
    if obj is None:
        return MemoryKernel()
    if isinstance(obj, MemoryKernel):
        return obj
    unknown = set(obj) - {"g0", "terms"}
    if unknown:
        raise ConfigurationError(f"unknown kernel keys {sorted(unknown)}")

    def cplx(x):
        return complex(float(x[0]), float(x[1])) if isinstance(x, (list, tuple)) else complex(float(x))

    terms = []
    for t in obj.get("terms", []):
        if len(t) != 2:
            raise ConfigurationError(f"kernel term must be [alpha, beta], got {t}")
        terms.append((cplx(t[0]), float(t[1])))
    return MemoryKernel(cplx(obj.get("g0", 0.0)), tuple(terms))


def convolve_kernel(k: MemoryKernel, s: TimeSignal, nu: float | None = None,
                    method: str = "spectral", backend: str | None = None) -> TimeSignal:
    """Causal convolution ``(g * s)(t) = int_{-inf}^t g(t - r) s(r) dr``.

    ``spectral`` multiplies each bin by ``sqrt(2 pi) g^``.  That is the same
    convention :func:`apply_material_law` uses, and it is what the solver
    sees.  ``direct`` is the time-domain oracle.  It uses exact exponential
    filters of the piecewise-linear interpolant, starting from zero history at
    the first sample.
    """
    if nu is not None and nu != s.grid.nu:
        s = TimeSignal(s.grid.with_nu(nu), s.samples)
    if method == "spectral":
        return multiply_spectrum(s, k.symbol(1.0 / s.grid.symbols))
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    dt = s.grid.dt
    # g(t - r) = g0 + sum alpha/beta (1 - exp(-beta (t - r)))
    total = k.g0 + sum(a / b for a, b in k.terms)
    out = total * _kernels.exp_filter(s.samples, dt, 0.0, backend)
    for a, b in k.terms:
        out -= (a / b) * _kernels.exp_filter(s.samples, dt, b, backend)
    return TimeSignal(s.grid, out)


# ---------------------------------------------------------------------------
# configuration


_CONFIG_KEYS = {"family", "dim", "n_cells", "length", "rho", "M", "kernel", "normal", "nu",
                "boundary_weight", "radius_r"}


@dataclass(frozen=True)
class ViscoSystemConfig:
    n_cells: int | tuple = 64
    dim: int = 1
    length: float = 1.0
    rho: object = 1.0
    M: object = 1.0
    kernel: MemoryKernel = field(default_factory=MemoryKernel)
    normal: object = "linear"
    nu: float = 2.0
    boundary_weight: float = BOUNDARY_WEIGHT

    @property
    def sizes(self) -> tuple:
        n = self.n_cells
        return (int(n),) * self.dim if isinstance(n, (int, np.integer)) else tuple(int(v) for v in n)

    @property
    def h(self) -> float:
        return self.length / self.sizes[0]

    def quartet(self) -> OperatorQuartet:
        return build_sym_elasticity_ops(self.dim, self.sizes, self.h, self.boundary_weight)

    def with_kernel(self, kernel: MemoryKernel) -> "ViscoSystemConfig":
        return replace(self, kernel=kernel)

    def as_dict(self) -> dict:
        def enc(x):
            if isinstance(x, np.ndarray):
                return x.real.tolist()
            return x
        return {"family": "viscoelastic", "dim": self.dim, "n_cells": self.n_cells,
                "length": self.length, "rho": enc(self.rho), "M": enc(self.M),
                "kernel": self.kernel.as_dict(), "normal": enc(self.normal), "nu": self.nu,
                "boundary_weight": self.boundary_weight}


def config_from_dict(d: dict) -> ViscoSystemConfig:
    unknown = set(d) - _CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"unknown visco config keys {sorted(unknown)}")
    if d.get("family", "viscoelastic") != "viscoelastic":
        raise ConfigurationError(f"family must be 'viscoelastic', got {d['family']!r}")
    dim = int(d.get("dim", 1))
    n = d.get("n_cells", 64)
    n = int(n) if not isinstance(n, (list, tuple)) else tuple(int(v) for v in n)

    def field_value(x):
        if isinstance(x, (list, tuple)):
            arr = np.asarray(x, dtype=float)
            return arr
        return float(x)

    M = d.get("M", 1.0)
    if isinstance(M, (list, tuple)) and M and isinstance(M[0], (list, tuple)):
        M = parse_matrix(M)
    else:
        M = field_value(M)
    normal = d.get("normal", "linear")
    if not isinstance(normal, str):
        normal = np.asarray(normal, dtype=float)
    return ViscoSystemConfig(n_cells=n, dim=dim, length=float(d.get("length", 1.0)),
                             rho=field_value(d.get("rho", 1.0)), M=M,
                             kernel=_kernel_from_obj(d.get("kernel")), normal=normal,
                             nu=float(d.get("nu", 2.0)),
                             boundary_weight=float(d.get("boundary_weight", BOUNDARY_WEIGHT)))


# ---------------------------------------------------------------------------
# the stress law


def _rho_field(cfg: ViscoSystemConfig, q: OperatorQuartet) -> np.ndarray:
    """Density on H0 coordinates: scalar or one value per node (shared by all components)."""
    nodes = q.n0 // cfg.dim
    rho = np.asarray(cfg.rho, dtype=float)
    if rho.ndim == 0:
        rho = np.full(nodes, float(rho))
    if rho.shape != (nodes,):
        raise ConfigurationError(f"rho must be scalar or one value per node ({nodes}), got {rho.shape}")
    if not np.all(rho > 0):
        raise ConfigurationError("density rho must be positive (rho >= c1 > 0)")
    return np.tile(rho, cfg.dim)


def M_matrix(cfg: ViscoSystemConfig, q: OperatorQuartet) -> np.ndarray:
    """M as a matrix on H1 coordinates: scalar, one value per cell, a per-cell
    (components x components) Voigt matrix, or a full (n1 x n1) matrix."""
    n1 = q.n1
    comps = 1 if cfg.dim == 1 else 3
    cells = n1 // comps
    M = np.asarray(cfg.M)
    if M.ndim == 0:
        out = float(M.real) * np.eye(n1)
    elif M.ndim == 1 and M.size == cells and comps == 1:
        out = np.diag(M.astype(complex))
    elif M.ndim == 2 and M.shape == (comps, comps) and comps > 1:
        out = np.kron(M, np.eye(cells))
    elif M.ndim == 2 and M.shape == (n1, n1):
        out = M
    else:
        raise ConfigurationError(f"M has unsupported shape {M.shape}")
    out = np.asarray(out, dtype=np.complex128)
    if np.linalg.norm(out - out.conj().T) > 1e-12 * np.linalg.norm(out):
        raise ConfigurationError("M must be selfadjoint")
    lam = np.linalg.eigvalsh(out)
    if lam[0] <= 0:
        raise ConfigurationError(f"M must satisfy M >= c2 > 0; lambda_min = {lam[0]:.3g}")
    return out


def neumann_parameter(cfg: ViscoSystemConfig, q: OperatorQuartet | None = None,
                      nu: float | None = None) -> float:
    """``nu^{-1} |M^{-1}| (|h|_1 + |g0|)``; below one the Neumann series converges."""
    q = q or cfg.quartet()
    nu = cfg.nu if nu is None else nu
    inv_norm = 1.0 / float(np.linalg.eigvalsh(M_matrix(cfg, q))[0])
    return inv_norm * cfg.kernel.bound / nu


def stress_law_eval(cfg: ViscoSystemConfig, z, q: OperatorQuartet | None = None) -> np.ndarray:
    """``(M - sqrt(2 pi) g^(-i/z))^{-1}`` on H1 coordinates by direct inversion; z scalar or array."""
    q = q or cfg.quartet()
    M = M_matrix(cfg, q)
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    c = cfg.kernel.symbol(zs)
    out = np.empty((len(zs),) + M.shape, dtype=np.complex128)
    eye = np.eye(M.shape[0])
    for k, ck in enumerate(c):
        A = M - ck * eye
        if np.linalg.cond(A) > 1e12:
            raise PreconditionError(f"M - g^ is singular at z={zs[k]}; nu too small")
        out[k] = np.linalg.inv(A)
    return out if np.ndim(z) else out[0]


def stress_law_neumann(cfg: ViscoSystemConfig, z, q: OperatorQuartet | None = None,
                       tol: float = 1e-17, max_terms: int = 10_000) -> np.ndarray:
    """``sum_k (sqrt(2 pi) g^)^k M^{-k} M^{-1}`` truncated once terms fall below tol."""
    q = q or cfg.quartet()
    M = M_matrix(cfg, q)
    Minv = np.linalg.inv(M)
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    c = cfg.kernel.symbol(zs)
    rate = np.abs(c) * np.linalg.norm(Minv, 2)
    if np.any(rate >= 1):
        raise PreconditionError("Neumann series does not converge at some z")
    out = np.empty((len(zs),) + M.shape, dtype=np.complex128)
    for k, ck in enumerate(c):
        term = Minv.copy()
        acc = term.copy()
        for _ in range(max_terms):
            term = ck * (Minv @ term)
            acc += term
            if np.abs(term).max() <= tol * np.abs(acc).max():
                break
        out[k] = acc
    return out if np.ndim(z) else out[0]


def stress_block_bound(cfg: ViscoSystemConfig, nu: float | None = None,
                       q: OperatorQuartet | None = None) -> float:
    """Lower bound of ``Re z^{-1}(M - g^)^{-1}`` on the contour:

    ``nu lambda_min(M^{-1}) - |M^{-1}|^2 b / (1 - nu^{-1} |M^{-1}| b)`` with ``b = |h|_1 + |g0|``.
    """
    q = q or cfg.quartet()
    nu = cfg.nu if nu is None else nu
    lam = np.linalg.eigvalsh(M_matrix(cfg, q))
    inv_norm, inv_min = 1.0 / lam[0], 1.0 / lam[-1]
    b = cfg.kernel.bound
    theta = inv_norm * b / nu
    if theta >= 1:
        return -math.inf
    return nu * inv_min - inv_norm**2 * b / (1.0 - theta)


# ---------------------------------------------------------------------------
# normal coupling and the control space U


def normal_multiplier(q: OperatorQuartet, normal, length: float = 1.0) -> np.ndarray:
    """Matrix of ``f -> f N`` (1D) or ``f -> sym(f (x) N)`` in Voigt form (2D elasticity): H0 -> H1.

    ``normal="linear"`` is the affine extension ``N(x) = 2x/L - 1`` of the
    outward normal (componentwise in 2D).  An array gives N at cell centres,
    with shape (cells,) in 1D and (cells, 2) in 2D.  Nodal values are averaged
    to cell centres.
    """
    kind = q.meta.get("kind")
    if kind in ("interval", "sym1d", "grad1d"):
        n = q.n1
        xc = (np.arange(n) + 0.5) * length / n
        N = 2.0 * xc / length - 1.0 if isinstance(normal, str) else np.asarray(normal, dtype=float)
        if isinstance(normal, str) and normal != "linear":
            raise ConfigurationError(f"unknown normal field {normal!r}")
        if N.shape != (n,):
            raise ConfigurationError(f"normal field must have one value per cell ({n})")
        avg = np.zeros((n, n + 1))
        idx = np.arange(n)
        avg[idx, idx] = avg[idx, idx + 1] = 0.5
        return N[:, None] * avg
    if kind == "sym2d":
        nx, ny, h = q.meta["nx"], q.meta["ny"], q.meta["h"]
        cells = nx * ny
        cx = (np.repeat(np.arange(nx), ny) + 0.5) * h
        cy = (np.tile(np.arange(ny), nx) + 0.5) * h
        if isinstance(normal, str):
            if normal != "linear":
                raise ConfigurationError(f"unknown normal field {normal!r}")
            Nx, Ny = 2.0 * cx / (nx * h) - 1.0, 2.0 * cy / (ny * h) - 1.0
        else:
            arr = np.asarray(normal, dtype=float)
            if arr.shape != (cells, 2):
                raise ConfigurationError(f"normal field must have shape ({cells}, 2)")
            Nx, Ny = arr[:, 0], arr[:, 1]
        nodes = (nx + 1) * (ny + 1)
        avg = np.zeros((cells, nodes))
        for i in range(nx):
            for j in range(ny):
                c = i * ny + j
                for a in (i, i + 1):
                    for b in (j, j + 1):
                        avg[c, a * (ny + 1) + b] = 0.25
        Z = np.zeros_like(avg)
        r2 = math.sqrt(2.0)
        return np.block([[Nx[:, None] * avg, Z],
                         [Z, Ny[:, None] * avg],
                         [(r2 / 2) * Ny[:, None] * avg, (r2 / 2) * Nx[:, None] * avg]])
    raise ConfigurationError(f"no normal multiplier for quartet kind {kind!r}")


def build_normal_coupling(q: OperatorQuartet, bases: BDSpaces, normal, length: float = 1.0):
    """``nu_hat f = pi_{BD(div)}(f N)`` as a matrix BD(grad) -> BD(div) in orthonormal BD coordinates.

    Returns ``(nuhat, report)``.  The report contains ``lambda_min`` of
    ``1/2 (D. nu_hat + nu_hat^* G^)``.  A value that is not positive raises
    :class:`ConfigurationError`.
    """
    Nmul = normal_multiplier(q, normal, length)
    Bg, Bd, gD = bases.basisBDG, bases.basisBDD, bases.metric.gram_H1_D
    nuhat = Bd.conj().T @ gD @ Nmul @ Bg
    herm = 0.5 * (bases.Dhat @ nuhat + nuhat.conj().T @ bases.Ghat)
    herm = 0.5 * (herm + herm.conj().T)
    lam = float(np.linalg.eigvalsh(herm)[0]) if herm.size else 0.0
    report = {"lambda_min": lam, "dim": int(Bg.shape[1])}
    if not lam > 0:
        raise ConfigurationError(
            f"normal coupling is not positive (lambda_min = {lam:.3g}); the U inner product is undefined")
    return nuhat, report


def build_U_space(nuhat: np.ndarray, bases: BDSpaces):
    """Gram of ``<f|g>_U = 1/2(<nu_hat f|G^ g> + <G^ f|nu_hat g>)`` on BD(grad) coordinates and the embedding.

    The embedding ``iota`` is the identity in coordinates.  Only the metric
    changes.
    """
    G = bases.Ghat
    gram = 0.5 * (nuhat.conj().T @ G + G.conj().T @ nuhat)
    gram = 0.5 * (gram + gram.conj().T)
    return gram, np.eye(gram.shape[0])


def j_star(nuhat: np.ndarray, bases: BDSpaces) -> np.ndarray:
    """Adjoint of ``j: BD(grad) -> U``, from the displayed formula ``1/2 (nu_hat^* G^ + D. nu_hat)``."""
    return 0.5 * (nuhat.conj().T @ bases.Ghat + bases.Dhat @ nuhat)


# ---------------------------------------------------------------------------
# the assembled system


@dataclass(frozen=True)
class ViscoSystem:
    cfg: ViscoSystemConfig
    quartet: OperatorQuartet = field(repr=False)
    bases: BDSpaces = field(repr=False)
    nuhat: np.ndarray = field(repr=False)
    gram_U: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    spec: BoundaryControlSpec = field(repr=False)
    rho_e: np.ndarray = field(repr=False)
    report: dict = field(default_factory=dict)

    @property
    def law(self) -> MaterialLaw:
        return self.spec.law

    @property
    def slices(self) -> dict:
        sl = self.spec.slices
        return {"v": sl["x"], "T": sl["zeta"], "w": sl["w"], "y": sl["y"]}

    def forcing_coords(self, f_phys: np.ndarray) -> np.ndarray:
        """Nodal forces (samples x n0) to reduced velocity coordinates."""
        return self.spec.to_reduced_H0(f_phys)


def _radius(cfg, q) -> float:
    nu0 = neumann_parameter(cfg, q, nu=1.0)
    return 1e6 if nu0 == 0 else 1.0 / (2.0 * nu0)


def assemble_visco_system(cfg: ViscoSystemConfig, seed: int = 0) -> ViscoSystem:
    """Build the boundary control system of the visco-elastic body.

    The order is ``(v, T, w, y)``, with M1 blocks ``M_{1,21} = (0, sqrt2)``
    and ``M_{1,22} = 1``, and ``B = (0; 0; -sqrt2; -1)``.  Physical signs
    follow ``d/dt rho v - Div T = f`` and ``d/dt (stress law) T - Grad v = 0``.
    In the generic form ``F = (-G; C)`` this means the pair (-Grad, -Div) and
    observation ``-C``.
    """
    q = cfg.quartet()
    theta = neumann_parameter(cfg, q)
    if not theta < 1:
        raise ConfigurationError(f"nu^-1 |M^-1| (|h|_1+|g0|) = {theta:.3g} >= 1; increase nu")
    rho = _rho_field(cfg, q)
    bases = bd_spaces(q)
    nuhat, nrep = build_normal_coupling(q, bases, cfg.normal, cfg.length)
    gram_U, _ = build_U_space(nuhat, bases)
    Lu = np.linalg.cholesky(gram_U)
    # x -> H1(|Grad|+i)-projection onto BD(Grad) -> U-orthonormal coordinates
    C = Lu.conj().T @ bases.basisBDG.conj().T @ bases.metric.gram_H1_G
    qg = q.negated()
    Q0, Q1, _ = reduced_bases(qg)
    r, nV = Q0.shape[1], C.shape[0]
    rho_e = Q0.conj().T @ (q.w0[:, None] * rho[:, None] * Q0)
    rho_e = 0.5 * (rho_e + rho_e.conj().T)
    M = M_matrix(cfg, q)
    # (M - c)^{-1} compressed to ran Grad, via the W1-symmetric eigenbasis of M
    sw = np.sqrt(q.w1)
    lam, V = np.linalg.eigh((sw[:, None] * M) / sw[None, :])
    P = Q1.conj().T @ (sw[:, None] * V)
    kernel = cfg.kernel
    d_state = 2 * r + nV

    def K_eval(z):
        z = np.asarray(z, dtype=np.complex128)
        out = np.zeros((len(z), d_state, d_state), dtype=np.complex128)
        out[:, :r, :r] = rho_e
        c = kernel.symbol(z)
        dinv = 1.0 / (lam[None, :] - c[:, None])
        out[:, r:2 * r, r:2 * r] = (P[None, :, :] * dinv[:, None, :]) @ P.conj().T
        idx = np.arange(2 * r, d_state)
        out[:, idx, idx] = z[:, None]
        return out

    s2 = math.sqrt(2.0)
    M121 = np.hstack([np.zeros((nV, r)), s2 * np.eye(nV)])
    law = MaterialLaw(_radius(cfg, q), d_state, K_eval, dim_obs=nV, split_H0H1=r,
                      M121=M121, M122=np.eye(nV), name="viscoelastic")
    total = d_state + nV
    B = np.zeros((total, nV))
    B[2 * r:2 * r + nV] = -s2 * np.eye(nV)
    B[2 * r + nV:] = -np.eye(nV)
    spec = make_spec(qg, -C, B, law, nV, seed=seed, meta={"model": "viscoelastic"})
    report = {"normal_coupling": nrep, "neumann_parameter": theta,
              "dim_U": nV, "dim_reduced": r, "total_dim": total}
    return ViscoSystem(cfg, q, bases, nuhat, gram_U, C, spec, rho_e, report)


def positivity_of_K(system: ViscoSystem, nu: float | None = None, samples: int = 200) -> dict:
    """Sampled ``lambda_min Re z^{-1} K(z)`` overall and per diagonal block (v, T, w)."""
    nu = system.cfg.nu if nu is None else nu
    z = contour_points(nu, samples)
    K = system.law.K_eval(z)
    S = K / z[:, None, None]
    H = 0.5 * (S + np.conj(np.swapaxes(S, 1, 2)))
    sl = system.slices
    out = {"overall": float(np.linalg.eigvalsh(H)[:, 0].min())}
    for name in ("v", "T", "w"):
        blk = H[:, sl[name], sl[name]]
        out[name] = float(np.linalg.eigvalsh(blk)[:, 0].min())
    out["stress_bound"] = stress_block_bound(system.cfg, nu, system.quartet)
    out["nu"] = nu
    return out


# ---------------------------------------------------------------------------
# demo


def smooth_pulse(grid: TimeGrid, dim: int = 1, center: float = 0.0, width: float = 0.25,
                 amplitude=1.0) -> TimeSignal:
    """Gaussian pulse ``amplitude exp(-((t - center)/width)^2)`` in each component."""
    amp = np.broadcast_to(np.asarray(amplitude, dtype=np.complex128), (dim,))
    env = np.exp(-(((grid.times - center) / width) ** 2))
    return TimeSignal(grid, env[:, None] * amp[None, :])


def _rel(a: np.ndarray, b: np.ndarray, grid: TimeGrid) -> float:
    """Weighted L2 norm of a - b relative to that of b (absolute when b vanishes)."""
    w = grid.weights[:, None]
    num = math.sqrt(float(np.sum(np.abs(a - b) ** 2 * w)))
    den = math.sqrt(float(np.sum(np.abs(b) ** 2 * w)))
    return num / den if den > 1e-300 else num


def _trajectory_defect(system: ViscoSystem, T: np.ndarray, w: np.ndarray, grid: TimeGrid) -> float:
    """Weighted L2 norm of the domain-condition defect of (T, w), relative to |(T, w)|."""
    spec = system.spec
    metric = SobolevMetric.from_quartet(spec.quartet)
    defects = np.array([domain_condition_defect(spec, spec.Q1 @ T[k], w[k], metric)
                        for k in range(grid.n)])
    wts = grid.weights
    num = math.sqrt(float(np.sum(defects**2 * wts)))
    den = math.sqrt(float(np.sum((np.sum(np.abs(T) ** 2, axis=1) + np.sum(np.abs(w) ** 2, axis=1)) * wts)))
    return num / den if den > 1e-300 else num


def run_demo(cfg: ViscoSystemConfig, u: TimeSignal, f: TimeSignal | None = None,
             compare_elastic: bool = True, check_causality: bool = False,
             system: ViscoSystem | None = None, backend: str | None = None) -> dict:
    """Drive the body through its boundary, solve, and cross-check every extracted equation.

    ``u`` has one component per U coordinate.  ``f`` holds nodal forces with
    one column per H0 node.  The returned dict holds the report and the
    fields in reduced coordinates.
    """
    system = system or assemble_visco_system(cfg)
    spec = system.spec
    grid = u.grid.with_nu(cfg.nu) if u.grid.nu != cfg.nu else u.grid
    u = TimeSignal(grid, u.samples)
    if u.dim != spec.dim_U:
        raise PreconditionError(f"control must have {spec.dim_U} components, got {u.dim}")
    sl = system.slices
    ftot = np.zeros((grid.n, spec.dim), dtype=np.complex128)
    if f is not None:
        ftot[:, sl["v"]] = system.forcing_coords(np.asarray(f.samples))
    f_sig = TimeSignal(grid, ftot)
    rhs = spec.total_forcing(f_sig, u)
    sys = spec.system(cfg.nu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = solve_frequency(sys, rhs, check_margin=False, backend=backend)
    X = sol.samples
    v, T, w, y = X[:, sl["v"]], X[:, sl["T"]], X[:, sl["w"]], X[:, sl["y"]]
    Ce = spec.C_e
    # physical C acts as +C on v (the generic control system carries -C)
    Cv = -(v @ Ce.T)
    s2 = math.sqrt(2.0)
    w_c, y_c = extract_control_equation(spec, sol, f_sig, u)
    w_o, u_o = extract_observation_equation(spec, sol, f_sig, TimeSignal(grid, y))
    rep = {
        "solver_residual": residual(sys, sol, rhs),
        "w_control_form": _rel(w, -s2 * u.samples - Cv, grid),
        "w_observation_form": _rel(w, Cv - s2 * y, grid),
        "w_control_extraction": _rel(w_c.samples, w, grid),
        "y_control_extraction": _rel(y_c.samples, y, grid),
        "w_observation_extraction": _rel(w_o.samples, w, grid),
        "u_recovery": _rel(u_o.samples, u.samples, grid),
        "w_cross_consistency": _rel(w_o.samples, w_c.samples, grid),
        "boundary_equation_residual": _rel(Cv, (y - u.samples) / s2, grid),
        "domain_defect": _trajectory_defect(system, T, w, grid),
    }
    wp = wellposedness_report(system.law, cfg.nu, 200)
    rep["wellposedness"] = wp
    rep["positivity_K"] = positivity_of_K(system, cfg.nu, 200)
    kin = 0.5 * np.einsum("ki,ij,kj->k", v.conj(), system.rho_e, v).real
    rep["energy"] = {"kinetic_max": float(kin.max()), "kinetic_final": float(kin[-1]),
                     "stress_sq_max": float((0.5 * np.sum(np.abs(T) ** 2, axis=1)).max())}
    tol = 1e-8
    rep["consistency"] = {
        "w_control": rep["w_control_form"] <= tol and rep["w_control_extraction"] <= tol,
        "w_observation": rep["w_observation_form"] <= tol and rep["w_observation_extraction"] <= tol,
        "u_recovered": rep["u_recovery"] <= tol,
        "domain_condition": rep["domain_defect"] <= 1e-6,
        "certified": bool(wp["certified"]),
    }
    if compare_elastic and not cfg.kernel.is_zero:
        ecfg = cfg.with_kernel(MemoryKernel())
        esys = assemble_visco_system(ecfg)
        erhs = esys.spec.total_forcing(f_sig, u)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            esol = solve_frequency(esys.spec.system(cfg.nu), erhs, check_margin=False, backend=backend)
        rep["memory_effect"] = _rel(X, esol.samples, grid)
    if check_causality:
        def solution_map(sig: TimeSignal) -> TimeSignal:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return solve_frequency(sys, spec.total_forcing(None, sig), check_margin=False,
                                       backend=backend)

        # the solver's protocol: cut window/8 ahead of the midpoint, where padded inputs start
        a = grid.t0 + 0.5 * grid.window - grid.window / 8
        rep["causality_defect"] = causality_defect(solution_map, u, a) / max(sol.norm(), 1e-300)
    rep["consistency"]["all"] = all(rep["consistency"].values())
    fields = {"v": TimeSignal(grid, v), "T": TimeSignal(grid, T), "w": TimeSignal(grid, w),
              "y": TimeSignal(grid, y), "u": u}
    return {"report": rep, "fields": fields, "solution": sol, "system": system}
