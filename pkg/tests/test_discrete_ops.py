import math
from dataclasses import replace

import numpy as np
import pytest

from evoctl.discrete_ops import (
    OperatorQuartet,
    build_full_gradient_ops,
    build_grid_ops_2d,
    build_interval_ops,
    build_sym_elasticity_ops,
    korn_constant,
    load_bundle,
    projector_div,
    projector_grad,
    reduced_bases,
    rigid_motions_2d,
    save_bundle,
    verify_duality,
)

BUILDERS = {
    "interval": lambda: build_interval_ops(16, 1.0 / 16),
    "grid2d": lambda: build_grid_ops_2d(5, 4, 0.2),
    "sym1d": lambda: build_sym_elasticity_ops(1, 12, 0.1),
    "sym2d": lambda: build_sym_elasticity_ops(2, (4, 5), 0.25),
    "grad2d": lambda: build_full_gradient_ops(2, 4, 0.25),
}


@pytest.fixture(scope="module", params=sorted(BUILDERS))
def quartet(request) -> OperatorQuartet:
    return BUILDERS[request.param]()


# --- builders ------------------------------------------------------------------------


def test_gradient_of_constant_vanishes(quartet):
    comps = quartet.meta.get("components", 1)
    per = quartet.n0 // comps
    for c in range(comps):
        u = np.zeros(quartet.n0)
        u[c * per:(c + 1) * per] = 1.0
        assert np.max(np.abs(quartet.Gmax @ u)) <= 1e-12


def test_linear_function_has_unit_slope():
    h = 1.0 / 16
    q = build_interval_ops(16, h)
    x = h * np.arange(17)
    g = q.Gmax @ x
    assert np.max(np.abs(g - 1.0)) <= 1e-15 * 16


def test_duality_is_exact(quartet):
    rep = verify_duality(quartet)
    assert rep["max_defect"] <= 1e-13
    assert rep["inclusions_ok"] and rep["ok"]


def test_minimal_domains_are_restrictions(quartet):
    # G0 = Gmax E_intG and D0 = Dmax E_intD by construction; inclusions have full column rank
    for E in (quartet.E_intG, quartet.E_intD):
        assert np.linalg.matrix_rank(E) == E.shape[1]
    assert quartet.E_intG.shape[1] < quartet.n0


def test_interior_gradient_is_injective(quartet):
    s = np.linalg.svd(quartet.G0, compute_uv=False)
    assert s.min() > 1e-8


def test_sym_1d_is_the_interval_pair():
    a = build_sym_elasticity_ops(1, 10, 0.1)
    b = build_interval_ops(10, 0.1)
    for name in ("Gmax", "Dmax", "E_intG", "E_intD", "w0", "w1"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_rigid_motions_have_zero_strain():
    nx, ny, h = 6, 5, 0.2
    q = build_sym_elasticity_ops(2, (nx, ny), h)
    R = rigid_motions_2d(nx, ny, h)
    assert np.max(np.abs(q.Gmax @ R)) <= 1e-12
    # a full gradient does see the rotation
    g = build_full_gradient_ops(2, (nx, ny), h)
    assert np.max(np.abs(g.Gmax @ R[:, 2])) > 0.5


def test_voigt_coordinates_reproduce_the_trace_product(rng):
    nx, ny, h = 4, 3, 0.25
    q = build_sym_elasticity_ops(2, (nx, ny), h)
    full = build_full_gradient_ops(2, (nx, ny), h)
    m = nx * ny

    def strain(u):
        # full-gradient rows: d_x u_x, d_y u_x, d_x u_y, d_y u_y
        g = (full.Gmax @ u).reshape(4, m)
        grad = np.stack([[g[0], g[1]], [g[2], g[3]]])
        return 0.5 * (grad + np.swapaxes(grad, 0, 1))

    for _ in range(20):
        u = rng.standard_normal(q.n0) + 1j * rng.standard_normal(q.n0)
        v = rng.standard_normal(q.n0) + 1j * rng.standard_normal(q.n0)
        reduced = q.inner1(q.Gmax @ u, q.Gmax @ v)
        eu, ev = strain(u), strain(v)
        trace = np.einsum("ijc,ijc->", eu.conj(), ev) * h * h
        assert abs(reduced - trace) <= 1e-13 * max(1.0, abs(trace))


@pytest.mark.parametrize("call", [
    lambda: build_interval_ops(1, 0.1),
    lambda: build_interval_ops(4, 0.0),
    lambda: build_grid_ops_2d(1, 3, 0.1),
    lambda: build_sym_elasticity_ops(3, 4, 0.1),
    lambda: build_sym_elasticity_ops(2, (4,), 0.1),
    lambda: build_full_gradient_ops(3, 4, 0.1),
])
def test_builders_reject_bad_input(call):
    with pytest.raises(ValueError):
        call()


# --- duality report -------------------------------------------------------------------


def test_full_inclusion_breaks_duality():
    q = build_interval_ops(16, 1.0 / 16)
    broken = replace(q, E_intG=np.eye(q.n0))
    rep = verify_duality(broken)
    assert rep["defect_G0_D"] > 0 and not rep["ok"]


def test_poincare_constant_of_interval():
    n, h = 16, 1.0 / 16
    q = build_interval_ops(n, h)
    rep = verify_duality(q)
    # Dirichlet difference operator: singular values (2/h) sin(k pi / (2n))
    assert rep["poincare"] == pytest.approx(2 * n * math.sin(math.pi / (2 * n)), rel=1e-12)
    G0w = np.sqrt(q.w1)[:, None] * q.G0 / math.sqrt(h)
    assert rep["poincare"] == pytest.approx(np.linalg.svd(G0w, compute_uv=False).min(), rel=1e-12)


# --- projectors and Korn ------------------------------------------------------------------


def test_projectors_are_orthogonal(quartet):
    for P, w in ((projector_div(quartet), quartet.w0), (projector_grad(quartet), quartet.w1)):
        # defects measured in the weighted operator norm: W^{1/2} P W^{-1/2}
        r = np.sqrt(w)
        S = r[:, None] * P / r[None, :]
        assert np.linalg.norm(S @ S - S, 2) <= 1e-12
        assert np.linalg.norm(S - S.conj().T, 2) <= 1e-12


def test_reduced_gradient_is_diagonal_and_invertible(quartet):
    Q0, Q1, Gt = reduced_bases(quartet)
    lhs = Q1.conj().T @ (quartet.w1[:, None] * (quartet.Gmax @ Q0))
    assert np.max(np.abs(lhs - Gt)) <= 1e-10 * Gt.max()
    assert np.diag(Gt).min() > 0


def test_projector_onto_range_of_gradient_fixes_gradients(rng):
    q = build_grid_ops_2d(4, 4, 0.25)
    P = projector_grad(q)
    g = q.Gmax @ rng.standard_normal(q.n0)
    assert np.max(np.abs(P @ g - g)) <= 1e-10 * np.abs(g).max()


def test_korn_constant_is_finite():
    sym, full = build_sym_elasticity_ops(2, 4, 0.25), build_full_gradient_ops(2, 4, 0.25)
    kappa = korn_constant(sym, full)
    assert math.isfinite(kappa) and kappa >= 1 - 1e-12
    # in 1D both pairs coincide
    assert korn_constant(build_sym_elasticity_ops(1, 8, 0.1),
                         build_full_gradient_ops(1, 8, 0.1)) == pytest.approx(1.0)


# --- bundle I/O ------------------------------------------------------------------------


def test_bundle_round_trip(tmp_path, quartet):
    path = save_bundle(quartet, tmp_path / "q.json")
    back = load_bundle(path)
    for name in ("Gmax", "Dmax", "E_intG", "E_intD", "w0", "w1"):
        assert np.array_equal(getattr(back, name), getattr(quartet, name))
    assert back.name == quartet.name and back.meta["kind"] == quartet.meta["kind"]


def test_bundle_rejects_foreign_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_bundle(p)
