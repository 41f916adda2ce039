"""Sampled trajectories in the exponentially weighted space H_{nu,0}(R; H).

A signal lives on a uniform grid ``t_k = t0 + k dt`` and is weighted by
``exp(-2 nu t)``.  The Fourier-Laplace transform is the discrete Fourier
transform of ``exp(-nu t) f``, scaled so that the weighted norm of the signal
equals the norm of its spectrum (with frequency spacing ``2 pi / (n dt)``).
On this spectral side ``d/dt`` acts as multiplication by ``i tau + nu``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "IncompatibleGridError",
    "TimeGrid",
    "TimeSignal",
    "SpectralSignal",
    "weighted_inner",
    "weighted_norm",
    "spectral_norm",
    "fourier_laplace",
    "inverse_fourier_laplace",
    "multiply_spectrum",
    "time_derivative",
    "antiderivative",
    "causality_defect",
    "truncate_after",
    "recommend_nu",
    "write_signal_csv",
    "read_signal_csv",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)


class IncompatibleGridError(ValueError):
    """Signals on different grids (or of different dimension) were combined."""


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n: int
    nu: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 2, got {self.n}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "nu", float(self.nu))

    @classmethod
    def centered(cls, n: int, dt: float, nu: float) -> "TimeGrid":
        """Grid whose window is symmetric about t = 0."""
        return cls(t0=-0.5 * n * dt, dt=dt, n=n, nu=nu)

    @property
    def window(self) -> float:
        return self.n * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def freqs(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.dt)

    @property
    def dtau(self) -> float:
        return 2.0 * np.pi / (self.n * self.dt)

    @property
    def symbols(self) -> np.ndarray:
        """The values ``i tau_k + nu`` taken by the transformed derivative."""
        return 1j * self.freqs + self.nu

    @property
    def weights(self) -> np.ndarray:
        return np.exp(-2.0 * self.nu * self.times) * self.dt

    def with_nu(self, nu: float) -> "TimeGrid":
        return TimeGrid(self.t0, self.dt, self.n, nu)

    def middle(self) -> tuple[float, float]:
        """The middle half of the window, where padded signals must live."""
        return self.t0 + 0.25 * self.window, self.t0 + 0.75 * self.window


def _as_samples(samples, n) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise ValueError(f"samples must have shape ({n}, dim), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class TimeSignal:
    grid: TimeGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_samples(self.samples, self.grid.n))

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int) -> "TimeSignal":
        return cls(grid, np.zeros((grid.n, dim), dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "TimeSignal":
        return cls(grid, fn(grid.times))

    def _check(self, other: "TimeSignal"):
        if other.grid != self.grid or other.dim != self.dim:
            raise IncompatibleGridError("signals live on different grids or have different dims")

    def __add__(self, other: "TimeSignal") -> "TimeSignal":
        self._check(other)
        return TimeSignal(self.grid, self.samples + other.samples)

    def __sub__(self, other: "TimeSignal") -> "TimeSignal":
        self._check(other)
        return TimeSignal(self.grid, self.samples - other.samples)

    def __mul__(self, c) -> "TimeSignal":
        return TimeSignal(self.grid, self.samples * c)

    __rmul__ = __mul__

    def __neg__(self) -> "TimeSignal":
        return TimeSignal(self.grid, -self.samples)

    def component(self, idx) -> "TimeSignal":
        return TimeSignal(self.grid, self.samples[:, idx])

    def norm(self) -> float:
        return weighted_norm(self)


@dataclass(frozen=True)
class SpectralSignal:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    freqs: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "values", _as_samples(self.values, self.grid.n))
        if self.freqs is None:
            object.__setattr__(self, "freqs", self.grid.freqs)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __add__(self, other: "SpectralSignal") -> "SpectralSignal":
        if other.grid != self.grid or other.dim != self.dim:
            raise IncompatibleGridError("spectra live on different grids or have different dims")
        return SpectralSignal(self.grid, self.values + other.values)


def weighted_inner(f: TimeSignal, g: TimeSignal) -> complex:
    """Left-endpoint quadrature of ``int f(t)^* g(t) exp(-2 nu t) dt``."""
    f._check(g)
    return complex(np.sum(np.conj(f.samples) * g.samples * f.grid.weights[:, None]))


def weighted_norm(f: TimeSignal) -> float:
    return math.sqrt(float(np.sum(np.abs(f.samples) ** 2 * f.grid.weights[:, None])))


def spectral_norm(F: SpectralSignal) -> float:
    return math.sqrt(F.grid.dtau * float(np.sum(np.abs(F.values) ** 2)))


def fourier_laplace(f: TimeSignal) -> SpectralSignal:
    g = f.grid
    damped = np.exp(-g.nu * g.times)[:, None] * f.samples
    phase = np.exp(-1j * g.freqs * g.t0)[:, None]
    values = (g.dt / SQRT_2PI) * phase * np.fft.fft(damped, axis=0)
    return SpectralSignal(g, values)


def inverse_fourier_laplace(F: SpectralSignal) -> TimeSignal:
    g = F.grid
    phase = np.exp(1j * g.freqs * g.t0)[:, None]
    damped = np.fft.ifft(phase * F.values, axis=0) * (SQRT_2PI / g.dt)
    return TimeSignal(g, np.exp(g.nu * g.times)[:, None] * damped)


def multiply_spectrum(f: TimeSignal, symbol: np.ndarray) -> TimeSignal:
    """Apply a bin-wise multiplier: scalar per bin (n,) or matrix per bin (n, d, d)."""
    F = fourier_laplace(f)
    symbol = np.asarray(symbol)
    if symbol.ndim == 1:
        values = symbol[:, None] * F.values
    else:
        values = np.einsum("kij,kj->ki", symbol, F.values)
    return inverse_fourier_laplace(SpectralSignal(f.grid, values))


def time_derivative(f: TimeSignal) -> TimeSignal:
    return multiply_spectrum(f, f.grid.symbols)


def antiderivative(f: TimeSignal) -> TimeSignal:
    """``int_{-inf}^t f``, realized as the multiplier ``1/(i tau + nu)``."""
    return multiply_spectrum(f, 1.0 / f.grid.symbols)


def truncate_after(f: TimeSignal, a: float) -> TimeSignal:
    """``chi_{(-inf, a]} f``."""
    keep = (f.grid.times <= a)[:, None]
    return TimeSignal(f.grid, np.where(keep, f.samples, 0.0))


def causality_defect(Fmap: Callable[[TimeSignal], TimeSignal], f: TimeSignal, a: float) -> float:
    """``|| chi (F f) - chi F(chi f) ||_nu`` with ``chi`` the indicator of ``(-inf, a]``."""
    g = f.grid
    if not g.t0 <= a <= g.t0 + g.window:
        raise ValueError(f"a={a} outside the window [{g.t0}, {g.t0 + g.window}]")
    full = Fmap(f)
    cut = Fmap(truncate_after(f, a))
    return weighted_norm(truncate_after(full - cut, a))


def recommend_nu(nu_material: float, grid: TimeGrid) -> float:
    return max(float(nu_material), 4.0 / grid.window)


def write_signal_csv(path, f: TimeSignal) -> None:
    header = ["t"]
    for c in range(f.dim):
        header += [f"re_{c}", f"im_{c}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, row in zip(f.grid.times, f.samples):
            out = [repr(float(t))]
            for z in row:
                out += [repr(float(z.real)), repr(float(z.imag))]
            w.writerow(out)


def read_signal_csv(path, nu: float) -> TimeSignal:
    """Read a signal written by :func:`write_signal_csv`; the grid is rebuilt from the t column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if header[0] != "t" or len(header) % 2 != 1:
        raise ValueError(f"{path}: expected header t,re_0,im_0,...")
    data = np.array([[float(x) for x in r] for r in body], dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError(f"{path}: need at least two samples")
    t = data[:, 0]
    dt = float(t[-1] - t[0]) / (len(t) - 1)
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{path}: time column is not uniform")
    grid = TimeGrid(t0=float(t[0]), dt=dt, n=len(t), nu=nu)
    samples = data[:, 1::2] + 1j * data[:, 2::2]
    return TimeSignal(grid, samples)
