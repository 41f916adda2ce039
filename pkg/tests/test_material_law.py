import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bump_signal, noise_signal
from evoctl.evo_solver import EvolutionarySystem, bin_matrices
from evoctl.material_law import (
    DomainError,
    MaterialLaw,
    PreconditionError,
    apply_material_law,
    certify_wellposedness,
    constant_law,
    contour_points,
    coupling_J,
    evaluate,
    law_from_config,
    m0_plus_zm1_law,
    parse_matrix,
    positivity_margin,
)
from evoctl.viscoelastic import MemoryKernel, ViscoSystemConfig, assemble_visco_system
from evoctl.weighted_time import TimeGrid, antiderivative, causality_defect

S2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def visco():
    return assemble_visco_system(ViscoSystemConfig(n_cells=16, kernel=MemoryKernel(0.0, ((1.0, 2.0),))))


def _k_part(law: MaterialLaw) -> MaterialLaw:
    return MaterialLaw(law.radius_r, law.dim_state, law.K_eval, name="K")


# --- evaluate ------------------------------------------------------------------


def test_identity_law_without_coupling_is_block_diagonal():
    law = constant_law(np.eye(2), radius_r=1.0, dim_obs=1)
    M = evaluate(law, 1.0)
    expected = np.zeros((3, 3))
    expected[:2, :2] = np.eye(2)
    assert np.array_equal(M, expected)


def test_observation_block_is_linear_in_z():
    law = constant_law([[1.0]], radius_r=1.0, dim_obs=1, M122=[[1.0]])
    assert evaluate(law, 0.5)[1, 1] == 0.5


def test_visco_law_observation_block_equals_z(visco):
    law = visco.law
    for z in contour_points(2.0, 7):
        M = evaluate(law, z)
        sl = visco.slices["y"]
        np.testing.assert_allclose(M[sl, sl], z * np.eye(law.dim_obs), atol=1e-15)


def test_evaluate_outside_disk():
    law = constant_law(np.eye(2), radius_r=1.0)
    with pytest.raises(DomainError):
        evaluate(law, 2.5)
    with pytest.raises(DomainError):
        evaluate(law, -0.1)


def test_assembled_structure_matches_block_formula(rng):
    n0, n1, ny = 2, 3, 2
    blocks = {k: rng.standard_normal(s) + 1j * rng.standard_normal(s)
              for k, s in dict(M102=(n0, ny), M112=(n1, ny), M120=(ny, n0), M121=(ny, n1),
                               M122=(ny, ny)).items()}
    K0 = rng.standard_normal((5, 5))
    law = constant_law(K0, radius_r=3.0, dim_obs=ny, split_H0H1=n0, **blocks)
    z = 1.7 + 0.4j
    M = evaluate(law, z)
    np.testing.assert_allclose(M[:5, :5], K0)
    np.testing.assert_allclose(M[:n0, 5:], z * blocks["M102"])
    np.testing.assert_allclose(M[n0:5, 5:], z * blocks["M112"])
    np.testing.assert_allclose(M[5:, :n0], z * blocks["M120"])
    np.testing.assert_allclose(M[5:, n0:5], z * blocks["M121"])
    np.testing.assert_allclose(M[5:, 5:], z * blocks["M122"])


def test_real_part_of_coupling_block_is_J_structure(rng):
    n0, n1, ny = 3, 2, 2
    blocks = {k: rng.standard_normal(s) + 1j * rng.standard_normal(s)
              for k, s in dict(M102=(n0, ny), M112=(n1, ny), M120=(ny, n0), M121=(ny, n1),
                               M122=(ny, ny)).items()}
    law = constant_law(np.eye(5), dim_obs=ny, split_H0H1=n0, **blocks)
    J, _ = coupling_J(law)
    M1 = law.M1
    re = 0.5 * (M1 + M1.conj().T)
    expected = np.zeros_like(re)
    expected[:5, 5:] = J
    expected[5:, :5] = J.conj().T
    expected[5:, 5:] = 0.5 * (blocks["M122"] + blocks["M122"].conj().T)
    assert np.max(np.abs(re - expected)) <= 1e-12


# --- apply ---------------------------------------------------------------------


def test_identity_law_returns_signal(rng):
    g = TimeGrid.centered(1024, 1.0 / 32, 1.0)
    f = bump_signal(g, rng, 2)
    out = apply_material_law(constant_law(np.eye(2)), f)
    assert (out - f).norm() / f.norm() <= 1e-10


def test_z_law_is_antiderivative(rng):
    g = TimeGrid.centered(1024, 1.0 / 32, 1.0)
    f = bump_signal(g, rng, 2)
    out = apply_material_law(m0_plus_zm1_law(np.zeros((2, 2)), np.eye(2)), f)
    ref = antiderivative(f)
    assert (out - ref).norm() / ref.norm() <= 1e-8


def test_visco_law_is_causal_at_midpoint(visco, rng):
    law = visco.law
    g = TimeGrid.centered(8192, 1.0 / 128, 2.0)
    a = g.t0 + 0.5 * g.window
    worst = 0.0
    for _ in range(10):
        f = bump_signal(g, rng, law.dim)
        worst = max(worst, causality_defect(lambda s: apply_material_law(law, s), f, a) / f.norm())
    assert worst <= 1e-6


def test_apply_is_linear(visco, rng):
    law = visco.law
    g = TimeGrid.centered(512, 1.0 / 16, 2.0)
    f, h = noise_signal(g, rng, law.dim), noise_signal(g, rng, law.dim)
    a, b = 0.7 - 0.2j, -1.3
    lhs = apply_material_law(law, f * a + h * b)
    rhs = apply_material_law(law, f) * a + apply_material_law(law, h) * b
    assert (lhs - rhs).norm() / rhs.norm() <= 1e-10


def test_apply_rejects_small_nu():
    law = constant_law(np.eye(1), radius_r=0.25)
    g = TimeGrid.centered(64, 0.1, 1.0)
    with pytest.raises(PreconditionError):
        apply_material_law(law, noise_signal(g, np.random.default_rng(0)), nu=1.5)
    out = apply_material_law(law, noise_signal(g, np.random.default_rng(0)), nu=2.5)
    assert out.grid.nu == 2.5


# --- positivity ------------------------------------------------------------------


def test_identity_margin_is_nu():
    law = constant_law(np.eye(3))
    m = positivity_margin(law, 1.0, 200)
    assert m >= 1 - 1e-8
    assert m == pytest.approx(1.0, abs=1e-12)


def test_z_law_margin_is_one():
    law = m0_plus_zm1_law(np.zeros((2, 2)), np.eye(2))
    assert positivity_margin(law, 3.0, 200) >= 1 - 1e-8


def test_visco_K_margin_at_least_one(visco):
    assert positivity_margin(_k_part(visco.law), visco.cfg.nu, 200) >= 1 - 1e-6


def test_bin_matrices_dominate_the_margin(rng):
    # for K = M0 + z M1 with Hermitian M0: Re z^{-1} K(z) = nu M0 + Re M1 exactly
    d, nu = 4, 1.5
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    M0 = X @ X.conj().T + np.eye(d)
    Y = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    M1 = np.eye(d) + 0.5 * (Y - Y.conj().T)
    law = m0_plus_zm1_law(M0, M1)
    c_exact = np.linalg.eigvalsh(nu * M0 + np.eye(d))[0]
    c = positivity_margin(law, nu, 200)
    assert c == pytest.approx(c_exact, rel=1e-10)
    Z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    A = 0.5 * (Z - Z.conj().T)
    sys = EvolutionarySystem(law, A, nu)
    g = TimeGrid.centered(256, 0.05, nu)
    mats = bin_matrices(sys, g.symbols)
    herm = 0.5 * (mats + np.conj(np.swapaxes(mats, 1, 2)))
    assert np.linalg.eigvalsh(herm)[:, 0].min() >= c - 1e-10


# --- coupling and certificate --------------------------------------------------------


def test_J_vanishes_without_coupling():
    J, nJ = coupling_J(constant_law(np.eye(3), dim_obs=2))
    assert not np.any(J) and nJ == 0.0


def test_visco_J(visco):
    law = visco.law
    J, nJ = coupling_J(law)
    r, nV = visco.spec.r, law.dim_obs
    expected = np.zeros((law.dim_state, nV))
    expected[2 * r:] = np.eye(nV) / S2
    assert np.max(np.abs(J - expected)) <= 1e-15
    assert nJ == pytest.approx(1 / S2, abs=1e-15)


def test_J_from_symmetric_H0_coupling():
    law = constant_law(np.eye(3), dim_obs=2, split_H0H1=2, M102=np.eye(2), M120=np.eye(2))
    J, nJ = coupling_J(law)
    assert np.array_equal(J, np.vstack([np.eye(2), np.zeros((1, 2))]))
    assert nJ == pytest.approx(1.0)


def test_certificate_without_coupling():
    cert = certify_wellposedness(0.4, 2.0, 0.0)
    assert cert.margin == 0.4 and cert.delta_tradeoff == 1.0 and cert.valid


def test_certificate_for_unit_constants():
    cert = certify_wellposedness(1.0, 1.0, 1 / S2)
    assert cert.valid and cert.margin > 0


def test_certificate_infeasible_when_J_too_large():
    cert = certify_wellposedness(1.0, 1.0, 1.5)
    assert cert.margin <= 0 and not cert.valid
    deltas = np.logspace(-6, 6, 2001)
    assert max(cert.margin_at(d) for d in deltas) <= 0


@settings(max_examples=200, deadline=None)
@given(c0=st.floats(1e-3, 10), c1=st.floats(1e-3, 10),
       nJ=st.one_of(st.just(0.0), st.floats(1e-9, 10)))
def test_certificate_is_optimal_and_feasibility_is_product_test(c0, c1, nJ):
    cert = certify_wellposedness(c0, c1, nJ)
    deltas = np.logspace(-6, 6, 601)
    best = max(cert.margin_at(d) for d in deltas)
    assert cert.margin >= best - 1e-9 * max(1.0, abs(best))
    assert cert.margin == pytest.approx(cert.margin_at(cert.delta_tradeoff), abs=1e-9)
    if abs(c0 * c1 - nJ**2) > 1e-9:
        assert cert.valid == (c0 * c1 > nJ**2)


def test_certificate_rejects_bad_constants():
    with pytest.raises(ValueError):
        certify_wellposedness(0.0, 1.0, 0.1)


# --- configuration -------------------------------------------------------------------


def test_parse_matrix_accepts_complex_pairs():
    m = parse_matrix([[1, [0, 2]], [[3, -1], 4.5]])
    assert np.array_equal(m, np.array([[1, 2j], [3 - 1j, 4.5]]))
    with pytest.raises(ValueError):
        parse_matrix([[1, 2], [3]])
    with pytest.raises(ValueError):
        parse_matrix([[[1, 2, 3]]])


def test_law_from_config_families():
    law = law_from_config({"family": "M0_plus_zM1", "M0": [[1.0]], "M1": [[0.5]]})
    assert evaluate(law, 0.5)[0, 0] == pytest.approx(1.25)
    law = law_from_config({"family": "constant", "K0": [[2.0]], "dim_obs": 1, "M122": [[1.0]]})
    assert law.dim == 2
    with pytest.raises(ValueError):
        law_from_config({"family": "nope"})
