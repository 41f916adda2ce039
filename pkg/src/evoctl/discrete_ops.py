"""Formally skew-adjoint operator pairs (G0 ⊆ G, D0 ⊆ D) on staggered grids.

H0 and H1 carry diagonal quadrature weights ``w0`` and ``w1``.  The gradient
``Gmax`` is a plain difference operator.  ``Dmax`` is then forced on its
interior rows by ``D = -(G0)^*`` (exact summation by parts).  The boundary
rows, which that identity leaves free in finite dimension, are closed so that
``BD(G) = ker(1 - D G)`` holds exactly.  They are the minimal-norm left inverse
of G applied to the discrete (1 - Delta)-harmonic extension, supported on the
H1 DOFs whose stencil touches a boundary node.  ``dom(D0)`` is the kernel of
the resulting boundary form.

Boundary nodes get quadrature weight ``boundary_weight * h**dim``.  Points of
the boundary have measure zero, and a vanishing weight turns the weak
boundary row of an evolution equation into the implicit boundary condition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla

__all__ = [
    "BOUNDARY_WEIGHT",
    "OperatorQuartet",
    "close_quartet",
    "build_interval_ops",
    "build_grid_ops_2d",
    "build_sym_elasticity_ops",
    "build_full_gradient_ops",
    "verify_duality",
    "reduced_bases",
    "projector_div",
    "projector_grad",
    "korn_constant",
    "rigid_motions_2d",
    "save_bundle",
    "load_bundle",
]

BOUNDARY_WEIGHT = 1e-8


@dataclass(frozen=True)
class OperatorQuartet:
    Gmax: np.ndarray = field(repr=False)
    Dmax: np.ndarray = field(repr=False)
    E_intG: np.ndarray = field(repr=False)
    E_intD: np.ndarray = field(repr=False)
    w0: np.ndarray = field(repr=False)
    w1: np.ndarray = field(repr=False)
    name: str = ""
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n0(self) -> int:
        return self.Gmax.shape[1]

    @property
    def n1(self) -> int:
        return self.Gmax.shape[0]

    @property
    def G0(self) -> np.ndarray:
        return self.Gmax @ self.E_intG

    @property
    def D0(self) -> np.ndarray:
        return self.Dmax @ self.E_intD

    def inner0(self, x, y) -> complex:
        return complex(np.vdot(x, self.w0 * y))

    def inner1(self, x, y) -> complex:
        return complex(np.vdot(x, self.w1 * y))

    @property
    def G_adj(self) -> np.ndarray:
        """Weighted adjoint of Gmax, H1 -> H0."""
        return (self.Gmax.conj().T * self.w1[None, :]) / self.w0[:, None]

    @property
    def boundary_form(self) -> np.ndarray:
        """Matrix Bf with ``<G x|y> + <x|D y> = x^H Bf y``."""
        return self.Gmax.conj().T * self.w1[None, :] + self.w0[:, None] * self.Dmax

    def negated(self) -> "OperatorQuartet":
        """The pair (-G, -D): same domains, weights and boundary data spaces."""
        return replace(self, Gmax=-self.Gmax, Dmax=-self.Dmax, name=f"-{self.name}")

    def gram_G(self) -> np.ndarray:
        """Gram matrix of H1(|G|+i): ``W0 + G^H W1 G``."""
        G = self.Gmax
        return np.diag(self.w0) + G.conj().T @ (self.w1[:, None] * G)

    def gram_D(self) -> np.ndarray:
        D = self.Dmax
        return np.diag(self.w1) + D.conj().T @ (self.w0[:, None] * D)


def _selection(mask: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(mask)
    E = np.zeros((mask.size, idx.size))
    E[idx, np.arange(idx.size)] = 1.0
    return E


def close_quartet(G: np.ndarray, w0: np.ndarray, w1: np.ndarray, boundary0: np.ndarray,
                  name: str = "", meta: dict | None = None) -> OperatorQuartet:
    """Complete ``Gmax`` to a quartet given the boundary nodes of H0.

    ``boundary0`` is a boolean mask over H0.  With no boundary nodes the pair
    is plain ``D = -G^*`` with full domains on both sides.
    """
    G = np.asarray(G, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    n1, n0 = G.shape
    bnd = np.asarray(boundary0, dtype=bool)
    inner = ~bnd
    GhW1 = G.T * w1[None, :]
    D = np.zeros((n0, n1))
    D[inner] = -GhW1[inner] / w0[inner, None]
    if not bnd.any():
        return OperatorQuartet(G, D, np.eye(n0), np.eye(n1), w0, w1, name, dict(meta or {}))

    # H1 DOFs whose stencil touches a boundary node
    touch = np.abs(G[:, bnd]).sum(axis=1) > 0
    # (1 - Delta)-harmonic extension of boundary values: interior rows of (1 - DG) u = 0
    S = GhW1 @ G
    I, B = np.flatnonzero(inner), np.flatnonzero(bnd)
    E = np.zeros((n0, B.size))
    E[B, np.arange(B.size)] = 1.0
    lhs = np.diag(w0[I]) + S[np.ix_(I, I)]
    E[I] = -np.linalg.solve(lhs, S[np.ix_(I, B)])
    Mb = (G @ E)[touch]
    wt = w1[touch]
    normal = Mb.T @ (wt[:, None] * Mb)
    if np.linalg.matrix_rank(normal) < B.size:
        raise ValueError("boundary closure is rank deficient: gradient of the harmonic extension "
                         "does not determine the boundary values")
    # least squares on sqrt(W) Mb rather than the normal equations: Mb has condition ~ 1/h^2
    sw = np.sqrt(wt)
    R = np.linalg.lstsq(sw[:, None] * Mb, np.diag(sw), rcond=None)[0]
    D[np.ix_(B, np.flatnonzero(touch))] = R

    # dom(D0): kernel of the boundary rows of the boundary form (supported on `touch`)
    N = (GhW1 + w0[:, None] * D)[B][:, touch]
    ker = sla.null_space(N)
    T = np.flatnonzero(touch)
    E_D = np.zeros((n1, int((~touch).sum()) + ker.shape[1]))
    E_D[np.flatnonzero(~touch), np.arange(int((~touch).sum()))] = 1.0
    E_D[T, int((~touch).sum()):] = ker
    return OperatorQuartet(G, D, _selection(inner), E_D, w0, w1, name, dict(meta or {}))


def _weights0(boundary: np.ndarray, cell: float, boundary_weight: float) -> np.ndarray:
    return np.where(boundary, boundary_weight * cell, cell)


def build_interval_ops(n_cells: int, h: float, boundary_weight: float = BOUNDARY_WEIGHT,
                       remove_boundary: bool = True) -> OperatorQuartet:
    """grad/div on [0, n h]: nodes carry H0, cells carry H1, ``Gmax`` is the forward difference."""
    n = int(n_cells)
    if n < 2:
        raise ValueError("n_cells must be >= 2")
    if not h > 0:
        raise ValueError("h must be positive")
    G = np.zeros((n, n + 1))
    idx = np.arange(n)
    G[idx, idx] = -1.0 / h
    G[idx, idx + 1] = 1.0 / h
    bnd = np.zeros(n + 1, dtype=bool)
    if remove_boundary:
        bnd[[0, n]] = True
    w0 = _weights0(bnd, h, boundary_weight)
    w1 = np.full(n, h)
    meta = {"kind": "interval", "n_cells": n, "h": h, "boundary_weight": boundary_weight,
            "nodes": (h * np.arange(n + 1)).tolist(), "components": 1}
    return close_quartet(G, w0, w1, bnd, "interval", meta)


def _node_index(nx, ny):
    return np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)


def _boundary_nodes_2d(nx, ny):
    b = np.zeros((nx + 1, ny + 1), dtype=bool)
    b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
    return b.ravel()


def build_grid_ops_2d(nx: int, ny: int, h: float, boundary_weight: float = BOUNDARY_WEIGHT,
                      remove_boundary: bool = True) -> OperatorQuartet:
    """Scalar grad/div on a rectangle: scalars on nodes, x- and y-components on edges."""
    if nx < 2 or ny < 2:
        raise ValueError("nx, ny must be >= 2")
    node = _node_index(nx, ny)
    rows = []
    for i in range(nx):
        for j in range(ny + 1):
            rows.append((node[i + 1, j], node[i, j]))
    for i in range(nx + 1):
        for j in range(ny):
            rows.append((node[i, j + 1], node[i, j]))
    G = np.zeros((len(rows), node.size))
    for r, (p, m) in enumerate(rows):
        G[r, p] = 1.0 / h
        G[r, m] = -1.0 / h
    bnd = _boundary_nodes_2d(nx, ny) if remove_boundary else np.zeros(node.size, dtype=bool)
    w0 = _weights0(bnd, h * h, boundary_weight)
    w1 = np.full(len(rows), h * h)
    meta = {"kind": "grid2d", "nx": nx, "ny": ny, "h": h, "boundary_weight": boundary_weight,
            "components": 1}
    return close_quartet(G, w0, w1, bnd, "grid2d", meta)


def _cell_derivatives(nx, ny, h):
    """Cell-centre x- and y-derivatives of nodal values (averaged edge differences)."""
    node = _node_index(nx, ny)
    Dx = np.zeros((nx * ny, node.size))
    Dy = np.zeros((nx * ny, node.size))
    for i in range(nx):
        for j in range(ny):
            c = i * ny + j
            for a, b in ((node[i + 1, j], node[i, j]), (node[i + 1, j + 1], node[i, j + 1])):
                Dx[c, a] += 0.5 / h
                Dx[c, b] -= 0.5 / h
            for a, b in ((node[i, j + 1], node[i, j]), (node[i + 1, j + 1], node[i + 1, j])):
                Dy[c, a] += 0.5 / h
                Dy[c, b] -= 0.5 / h
    return Dx, Dy


def _sizes(dim, sizes):
    if isinstance(sizes, (int, np.integer)):
        return (int(sizes),) * dim
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != dim:
        raise ValueError(f"need {dim} sizes, got {sizes}")
    return sizes


def build_sym_elasticity_ops(dim: int, sizes, h: float, boundary_weight: float = BOUNDARY_WEIGHT,
                             remove_boundary: bool = True) -> OperatorQuartet:
    """Grad = symmetrized gradient, Div = row-wise divergence.

    1D reduces to the interval pair.  In 2D displacements live on nodes as
    (u_x, u_y) and strains at cell centres in Voigt form (xx, yy, sqrt2 xy), so
    the Euclidean product of reduced coordinates is the trace product.
    """
    if dim == 1:
        (n,) = _sizes(1, sizes)
        q = build_interval_ops(n, h, boundary_weight, remove_boundary)
        return replace(q, name="sym1d", meta={**q.meta, "kind": "sym1d"})
    if dim != 2:
        raise ValueError(f"unsupported dim {dim}; use 1 or 2")
    nx, ny = _sizes(2, sizes)
    if nx < 2 or ny < 2:
        raise ValueError("nx, ny must be >= 2")
    Dx, Dy = _cell_derivatives(nx, ny, h)
    Z = np.zeros_like(Dx)
    r2 = math.sqrt(2.0)
    G = np.block([[Dx, Z], [Z, Dy], [Dy / r2, Dx / r2]])
    bnd1 = _boundary_nodes_2d(nx, ny) if remove_boundary else np.zeros(Dx.shape[1], dtype=bool)
    bnd = np.concatenate([bnd1, bnd1])
    w0 = _weights0(bnd, h * h, boundary_weight)
    w1 = np.full(G.shape[0], h * h)
    meta = {"kind": "sym2d", "nx": nx, "ny": ny, "h": h, "boundary_weight": boundary_weight,
            "components": 2, "voigt": ["xx", "yy", "sqrt2_xy"]}
    return close_quartet(G, w0, w1, bnd, "sym2d", meta)


def build_full_gradient_ops(dim: int, sizes, h: float, boundary_weight: float = BOUNDARY_WEIGHT,
                            remove_boundary: bool = True) -> OperatorQuartet:
    """grad/div for vector fields (all n x n gradient components), same layout as the elasticity pair."""
    if dim == 1:
        (n,) = _sizes(1, sizes)
        q = build_interval_ops(n, h, boundary_weight, remove_boundary)
        return replace(q, name="grad1d", meta={**q.meta, "kind": "grad1d"})
    if dim != 2:
        raise ValueError(f"unsupported dim {dim}; use 1 or 2")
    nx, ny = _sizes(2, sizes)
    Dx, Dy = _cell_derivatives(nx, ny, h)
    Z = np.zeros_like(Dx)
    G = np.block([[Dx, Z], [Dy, Z], [Z, Dx], [Z, Dy]])
    bnd1 = _boundary_nodes_2d(nx, ny) if remove_boundary else np.zeros(Dx.shape[1], dtype=bool)
    bnd = np.concatenate([bnd1, bnd1])
    w0 = _weights0(bnd, h * h, boundary_weight)
    w1 = np.full(G.shape[0], h * h)
    meta = {"kind": "grad2d", "nx": nx, "ny": ny, "h": h, "boundary_weight": boundary_weight,
            "components": 2}
    return close_quartet(G, w0, w1, bnd, "grad2d", meta)


def rigid_motions_2d(nx: int, ny: int, h: float) -> np.ndarray:
    """Columns: x-translation, y-translation, infinitesimal rotation (-y, x)."""
    node = _node_index(nx, ny)
    X = np.repeat(h * np.arange(nx + 1), ny + 1)
    Y = np.tile(h * np.arange(ny + 1), nx + 1)
    one, zero = np.ones(node.size), np.zeros(node.size)
    return np.column_stack([np.r_[one, zero], np.r_[zero, one], np.r_[-Y, X]])


def _weighted_G(q: OperatorQuartet) -> np.ndarray:
    return np.sqrt(q.w1)[:, None] * q.Gmax / np.sqrt(q.w0)[None, :]


def verify_duality(q: OperatorQuartet, n_pairs: int = 100, seed: int = 0) -> dict:
    """Sampled duality defects for (G0, D) and (G, D0), inclusions and the Poincare constant."""
    rng = np.random.default_rng(seed)

    def pair_defect(E, F):
        worst = 0.0
        for _ in range(n_pairs):
            x = E @ (rng.standard_normal(E.shape[1]) + 1j * rng.standard_normal(E.shape[1]))
            y = F @ (rng.standard_normal(F.shape[1]) + 1j * rng.standard_normal(F.shape[1]))
            Gx, Dy = q.Gmax @ x, q.Dmax @ y
            num = abs(q.inner1(Gx, y) + q.inner0(x, Dy))
            den = (math.sqrt(q.inner1(Gx, Gx).real * q.inner1(y, y).real)
                   + math.sqrt(q.inner0(x, x).real * q.inner0(Dy, Dy).real))
            worst = max(worst, num / den if den > 0 else num)
        return worst

    I0, I1 = np.eye(q.n0), np.eye(q.n1)
    dG0 = pair_defect(q.E_intG, I1)
    dD0 = pair_defect(I0, q.E_intD)
    # inclusions: the minimal domains are genuine subspaces (full column rank)
    incl = (np.linalg.matrix_rank(q.E_intG) == q.E_intG.shape[1]
            and np.linalg.matrix_rank(q.E_intD) == q.E_intD.shape[1])
    if q.E_intG.shape[1]:
        Ew = np.sqrt(q.w0)[:, None] * q.E_intG
        Qe, _ = np.linalg.qr(Ew)
        G0w = np.sqrt(q.w1)[:, None] * (q.Gmax @ (Qe / np.sqrt(q.w0)[:, None]))
        poincare = float(np.linalg.svd(G0w, compute_uv=False).min())
    else:
        poincare = float("nan")
    tol = 1e-13
    return {
        "defect_G0_D": dG0,
        "defect_G_D0": dD0,
        "max_defect": max(dG0, dD0),
        "inclusions_ok": bool(incl),
        "poincare": poincare,
        "ok": bool(max(dG0, dD0) <= tol and incl),
        "tolerance": tol,
    }


def reduced_bases(q: OperatorQuartet, rtol: float = 1e-10):
    """Orthonormal bases for (ker G)^perp in H0 and ran G in H1, plus tilde-G in them.

    Returns ``(Q0, Q1, Gt)``: columns of Q0 are W0-orthonormal, columns of Q1
    are W1-orthonormal, and ``Gt = Q1^H W1 G Q0`` is diagonal and invertible.
    """
    U, s, Vh = np.linalg.svd(_weighted_G(q), full_matrices=False)
    r = int(np.sum(s > rtol * s[0])) if s.size else 0
    Q0 = Vh[:r].conj().T / np.sqrt(q.w0)[:, None]
    Q1 = U[:, :r] / np.sqrt(q.w1)[:, None]
    return Q0, Q1, np.diag(s[:r])


def projector_div(q: OperatorQuartet, rtol: float = 1e-10) -> np.ndarray:
    """W0-orthogonal projector onto (ker G)^perp (the closure of ran D0)."""
    Q0, _, _ = reduced_bases(q, rtol)
    return Q0 @ (Q0.conj().T * q.w0[None, :])


def projector_grad(q: OperatorQuartet, rtol: float = 1e-10) -> np.ndarray:
    """W1-orthogonal projector onto ran G."""
    _, Q1, _ = reduced_bases(q, rtol)
    return Q1 @ (Q1.conj().T * q.w1[None, :])


def korn_constant(q_sym: OperatorQuartet, q_full: OperatorQuartet) -> float:
    """Smallest kappa with ``|grad u|^2 <= kappa^2 (|u|^2 + |Grad u|^2)`` (generalized eigenvalue)."""
    A = q_full.gram_G()
    B = q_sym.gram_G()
    lam = sla.eigh(A, B, eigvals_only=True)
    return float(math.sqrt(max(lam[-1], 0.0)))


# ---------------------------------------------------------------------------
# bundle I/O: JSON metadata plus one column-major float64 payload file

_FIELDS = ("Gmax", "Dmax", "E_intG", "E_intD", "w0", "w1")


def save_bundle(q: OperatorQuartet, path) -> Path:
    path = Path(path)
    payload = path.with_suffix(".bin")
    entries, offset = {}, 0
    with open(payload, "wb") as fh:
        for name in _FIELDS:
            a = np.asarray(getattr(q, name), dtype=np.float64)
            raw = np.asfortranarray(a).tobytes(order="F")
            fh.write(raw)
            entries[name] = {"shape": list(a.shape), "offset": offset, "nbytes": len(raw)}
            offset += len(raw)
    doc = {"format": "evoctl-quartet", "version": 1, "name": q.name, "meta": q.meta,
           "dtype": "float64", "order": "F", "payload": payload.name, "arrays": entries}
    path.write_text(json.dumps(doc, indent=2))
    return path


def load_bundle(path) -> OperatorQuartet:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("format") != "evoctl-quartet":
        raise ValueError(f"{path}: not a quartet bundle")
    raw = (path.parent / doc["payload"]).read_bytes()
    arrays = {}
    for name in _FIELDS:
        e = doc["arrays"][name]
        chunk = raw[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[name] = np.frombuffer(chunk, dtype=np.float64).reshape(e["shape"], order="F").copy()
    return OperatorQuartet(name=doc.get("name", ""), meta=doc.get("meta", {}), **arrays)
