import numpy as np
import pytest

from evoctl.weighted_time import TimeGrid, TimeSignal


def bump_signal(grid: TimeGrid, rng, dim: int = 1, n_bumps: int = 4, region=None,
                widths=(0.3, 1.0)) -> TimeSignal:
    """Sum of Gaussian bumps with random complex amplitudes.

    Centres are drawn from ``region`` (default: the middle half of the window,
    shrunk by three widths) so the signal is zero-padded on both sides.
    """
    lo, hi = region if region is not None else grid.middle()
    t = grid.times
    out = np.zeros((grid.n, dim), dtype=np.complex128)
    for _ in range(n_bumps):
        w = rng.uniform(*widths)
        c = rng.uniform(lo + 3 * w, hi - 3 * w)
        amp = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        out += np.exp(-(((t - c) / w) ** 2))[:, None] * amp[None, :]
    return TimeSignal(grid, out)


def noise_signal(grid: TimeGrid, rng, dim: int = 1) -> TimeSignal:
    return TimeSignal(grid, rng.standard_normal((grid.n, dim)) + 1j * rng.standard_normal((grid.n, dim)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
