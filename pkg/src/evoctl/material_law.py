"""Linear material laws z -> M(z) on the disk B(r, r) and their well-posedness checks.

A law has a state block (H0 + H1, size ``dim_state``) carrying an analytic
``K(z)`` and an observation block Y (size ``dim_obs``) that only enters
through z-linear coupling blocks::

    M(z) = [[K(z), 0], [0, 0]] + z [[0, col(M102; M112)], [row(M120, M121), M122]]

``K_eval`` takes a 1-D array of z values and returns the stacked K matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .weighted_time import TimeSignal, fourier_laplace, inverse_fourier_laplace, SpectralSignal

__all__ = [
    "DomainError",
    "PreconditionError",
    "MaterialLaw",
    "WellPosednessCertificate",
    "evaluate",
    "evaluate_many",
    "apply_material_law",
    "contour_points",
    "positivity_margin",
    "positivity_report",
    "coupling_J",
    "certify_wellposedness",
    "constant_law",
    "m0_plus_zm1_law",
    "parse_matrix",
    "law_from_config",
]

CHUNK = 256


class DomainError(ValueError):
    """z outside the disk B(r, r)."""


class PreconditionError(ValueError):
    """nu too small for the law's radius, or a dimension mismatch."""


def _block(a, rows, cols):
    if a is None:
        return np.zeros((rows, cols), dtype=np.complex128)
    a = np.asarray(a, dtype=np.complex128).reshape(rows, cols)
    return a


@dataclass(frozen=True)
class MaterialLaw:
    radius_r: float
    dim_state: int
    K_eval: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dim_obs: int = 0
    split_H0H1: int | None = None
    M102: np.ndarray | None = field(default=None, repr=False)
    M112: np.ndarray | None = field(default=None, repr=False)
    M120: np.ndarray | None = field(default=None, repr=False)
    M121: np.ndarray | None = field(default=None, repr=False)
    M122: np.ndarray | None = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        if not self.radius_r > 0:
            raise ValueError("radius_r must be positive")
        split = self.dim_state if self.split_H0H1 is None else int(self.split_H0H1)
        if not 0 <= split <= self.dim_state:
            raise ValueError("split_H0H1 must lie in [0, dim_state]")
        object.__setattr__(self, "split_H0H1", split)
        n0, n1, ny = split, self.dim_state - split, self.dim_obs
        object.__setattr__(self, "M102", _block(self.M102, n0, ny))
        object.__setattr__(self, "M112", _block(self.M112, n1, ny))
        object.__setattr__(self, "M120", _block(self.M120, ny, n0))
        object.__setattr__(self, "M121", _block(self.M121, ny, n1))
        object.__setattr__(self, "M122", _block(self.M122, ny, ny))

    @property
    def dim(self) -> int:
        return self.dim_state + self.dim_obs

    @property
    def M1(self) -> np.ndarray:
        """The z-coupling part of M(z) as a full (dim x dim) matrix."""
        d, s = self.dim, self.dim_state
        out = np.zeros((d, d), dtype=np.complex128)
        out[:s, s:] = np.vstack([self.M102, self.M112])
        out[s:, :s] = np.hstack([self.M120, self.M121])
        out[s:, s:] = self.M122
        return out

    def in_disk(self, z) -> np.ndarray:
        return np.abs(np.asarray(z) - self.radius_r) < self.radius_r


def evaluate_many(M: MaterialLaw, z: np.ndarray, check: bool = True) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if check and not np.all(M.in_disk(z)):
        bad = z[~M.in_disk(z)][0]
        raise DomainError(f"z={bad} outside B({M.radius_r}, {M.radius_r})")
    s = M.dim_state
    K = np.asarray(M.K_eval(z), dtype=np.complex128).reshape(len(z), s, s)
    out = z[:, None, None] * M.M1[None, :, :]
    out[:, :s, :s] += K
    return out


def evaluate(M: MaterialLaw, z: complex) -> np.ndarray:
    return evaluate_many(M, np.array([z]))[0]


def _check_nu(M: MaterialLaw, nu: float):
    if not nu > 1.0 / (2.0 * M.radius_r):
        raise PreconditionError(f"nu={nu} must exceed 1/(2r) = {1.0 / (2.0 * M.radius_r)}")


def apply_material_law(M: MaterialLaw, f: TimeSignal, nu: float | None = None) -> TimeSignal:
    """``M(d/dt^{-1}) f``: multiply each bin by ``M(1/(i tau + nu))``."""
    if nu is not None and nu != f.grid.nu:
        f = TimeSignal(f.grid.with_nu(nu), f.samples)
    _check_nu(M, f.grid.nu)
    if f.dim != M.dim:
        raise PreconditionError(f"signal dim {f.dim} != law dim {M.dim}")
    F = fourier_laplace(f)
    z = 1.0 / f.grid.symbols
    out = np.empty_like(F.values)
    for lo in range(0, len(z), CHUNK):
        sl = slice(lo, lo + CHUNK)
        out[sl] = np.einsum("kij,kj->ki", evaluate_many(M, z[sl], check=False), F.values[sl])
    return inverse_fourier_laplace(SpectralSignal(f.grid, out))


def contour_points(nu: float, n_samples: int, t_min: float = 1e-3, t_max: float = 1e4) -> np.ndarray:
    """z = 1/(it + nu) for t on a symmetric log-spaced grid of n_samples points."""
    half = n_samples // 2
    pos = np.logspace(math.log10(t_min), math.log10(t_max), half)
    t = np.concatenate([-pos[::-1], [0.0] if n_samples % 2 else [], pos])
    return 1.0 / (1j * t + nu)


def _min_hermitian_eig(M: MaterialLaw, z: np.ndarray) -> np.ndarray:
    out = np.empty(len(z))
    for lo in range(0, len(z), CHUNK):
        zz = z[lo:lo + CHUNK]
        S = evaluate_many(M, zz, check=False) / zz[:, None, None]
        H = 0.5 * (S + np.conj(np.swapaxes(S, 1, 2)))
        out[lo:lo + CHUNK] = np.linalg.eigvalsh(H)[:, 0]
    return out


def positivity_report(M: MaterialLaw, nu: float, n_samples: int = 200,
                      disk_factors=(1.5, 2.0, 4.0), disk_samples: int = 32) -> dict:
    """Sampled lambda_min of Re z^{-1} M(z) on the contour and a coarse sweep inside the disk.

    Sampling is evidence for positivity, not a proof.
    """
    _check_nu(M, nu)
    zc = contour_points(nu, n_samples)
    contour = _min_hermitian_eig(M, zc)
    disk = np.array([])
    if disk_factors:
        zd = np.concatenate([contour_points(nu * c, disk_samples) for c in disk_factors])
        disk = _min_hermitian_eig(M, zd)
    k = int(np.argmin(contour))
    return {
        "nu": nu,
        "n_samples": int(n_samples),
        "contour_min": float(contour.min()),
        "argmin_t": float((1.0 / zc[k]).imag),
        "disk_min": float(disk.min()) if disk.size else None,
        "margin": float(min(contour.min(), disk.min() if disk.size else np.inf)),
        "note": "sampled evidence, not a proof",
    }


def positivity_margin(M: MaterialLaw, nu: float, n_samples: int = 200) -> float:
    return positivity_report(M, nu, n_samples)["margin"]


def coupling_J(M: MaterialLaw) -> tuple[np.ndarray, float]:
    """``J = 1/2 (M102 + M120^*; M112 + M121^*)`` and its spectral norm."""
    J = 0.5 * np.vstack([M.M102 + M.M120.conj().T, M.M112 + M.M121.conj().T])
    norm = float(np.linalg.norm(J, 2)) if J.size else 0.0
    return J, norm


@dataclass(frozen=True)
class WellPosednessCertificate:
    c0: float
    c1: float
    normJ: float
    delta_tradeoff: float
    margin: float

    @property
    def valid(self) -> bool:
        return self.margin > 0

    def margin_at(self, delta: float) -> float:
        return min(self.c0 - delta * self.normJ, self.c1 - self.normJ / delta)

    def as_dict(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "normJ": self.normJ,
                "delta": self.delta_tradeoff, "margin": self.margin, "valid": self.valid}


def certify_wellposedness(c0: float, c1: float, normJ: float) -> WellPosednessCertificate:
    """Best delta for ``min(c0 - delta |J|, c1 - |J|/delta)``.

    For |J| > 0 the optimum equalizes both terms; the common value is the
    smaller root of ``(c0 - m)(c1 - m) = |J|^2``, so it is positive exactly
    when ``c0 c1 > |J|^2``.
    """
    if not (c0 > 0 and c1 > 0 and normJ >= 0):
        raise ValueError("need c0 > 0, c1 > 0, normJ >= 0")
    if normJ == 0:
        return WellPosednessCertificate(c0, c1, 0.0, 1.0, min(c0, c1))
    d = c0 - c1
    root = math.hypot(d, 2 * normJ)
    # rationalized forms avoid cancellation when |J| is small
    delta = (d + root) / (2 * normJ) if d >= 0 else 2 * normJ / (root - d)
    margin = (c0 * c1 - normJ**2) / (0.5 * (c0 + c1 + root))
    return WellPosednessCertificate(c0, c1, normJ, delta, margin)


# ---------------------------------------------------------------------------
# registry of parametric families


def constant_law(K0, radius_r: float = 1e6, **coupling) -> MaterialLaw:
    K0 = np.atleast_2d(np.asarray(K0, dtype=np.complex128))
    s = K0.shape[0]
    ny = coupling.pop("dim_obs", 0)
    return MaterialLaw(radius_r, s, lambda z: np.broadcast_to(K0, (len(z), s, s)),
                       dim_obs=ny, name="constant", **coupling)


def m0_plus_zm1_law(M0, M1, radius_r: float = 1e6) -> MaterialLaw:
    """K(z) = M0 + z M1 (no observation block)."""
    M0 = np.atleast_2d(np.asarray(M0, dtype=np.complex128))
    M1 = np.atleast_2d(np.asarray(M1, dtype=np.complex128))
    s = M0.shape[0]
    return MaterialLaw(radius_r, s, lambda z: M0[None] + z[:, None, None] * M1[None],
                       name="M0_plus_zM1")


def parse_matrix(obj) -> np.ndarray:
    """Row-major nested lists; entries are reals or ``[re, im]`` pairs."""
    rows = []
    for row in obj:
        vals = []
        for x in (row if isinstance(row, list) else [row]):
            if isinstance(x, (list, tuple)):
                if len(x) != 2:
                    raise ValueError(f"complex entries must be [re, im], got {x}")
                vals.append(complex(float(x[0]), float(x[1])))
            else:
                vals.append(complex(float(x)))
        rows.append(vals)
    if len({len(r) for r in rows}) > 1:
        raise ValueError("ragged matrix")
    return np.array(rows, dtype=np.complex128)


def law_from_config(cfg: dict) -> MaterialLaw:
    family = cfg.get("family")
    if family == "constant":
        kw = {k: parse_matrix(cfg[k]) for k in ("M102", "M112", "M120", "M121", "M122") if k in cfg}
        if kw:
            kw["dim_obs"] = int(cfg["dim_obs"])
            kw["split_H0H1"] = cfg.get("split_H0H1")
        return constant_law(parse_matrix(cfg["K0"]), float(cfg.get("radius_r", 1e6)), **kw)
    if family == "M0_plus_zM1":
        return m0_plus_zm1_law(parse_matrix(cfg["M0"]), parse_matrix(cfg["M1"]),
                               float(cfg.get("radius_r", 1e6)))
    if family == "viscoelastic":
        from .viscoelastic import config_from_dict, assemble_visco_system

        return assemble_visco_system(config_from_dict(cfg)).law
    raise ValueError(f"unknown material-law family {family!r}")
