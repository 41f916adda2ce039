"""Evolutionary equations, boundary data spaces and boundary control systems.

Submodules:

* ``weighted_time``: exponentially weighted signals and the Fourier-Laplace transform
* ``material_law``: material laws M(z) and their positivity checks
* ``evo_solver``: per-bin solver and an implicit-Euler oracle
* ``discrete_ops``: skew-adjoint operator quartets on staggered grids
* ``boundary_data``: BD spaces, traces, unitary hat operators and the DtN map
* ``control_system``: F = (-G; C) systems, control and observation equations
* ``viscoelastic``: the boundary-controlled visco-elastic body
"""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402,F401
