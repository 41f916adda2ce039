import math

import numpy as np
import pytest

from conftest import bump_signal
from evoctl.boundary_data import bd_spaces, interval_alignment
from evoctl.control_system import (
    AdjointDefectError,
    assemble_F,
    domain_condition_defect,
    extract_control_equation,
    extract_observation_equation,
    make_spec,
    project_admissible,
    wellposedness_report,
)
from evoctl.discrete_ops import build_interval_ops
from evoctl.evo_solver import IllPosedSystemError, solve_frequency
from evoctl.material_law import PreconditionError, constant_law
from evoctl.viscoelastic import MemoryKernel, ViscoSystemConfig, assemble_visco_system
from evoctl.weighted_time import TimeGrid, TimeSignal

S2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def q16():
    return build_interval_ops(16, 1.0 / 16)


@pytest.fixture(scope="module")
def visco():
    return assemble_visco_system(ViscoSystemConfig(n_cells=8, kernel=MemoryKernel(0.0, ((1.0, 2.0),))))


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _endpoint_C(q):
    # endpoint values of the H1(|G|+i)-projection onto BD(G)
    bd = bd_spaces(q)
    P = bd.basisBDG @ bd.basisBDG.conj().T @ bd.metric.gram_H1_G
    return interval_alignment(q)[0] @ P


def _adjoint_defect(q, F, Fstar, nV, rng, n=100):
    w_out = np.concatenate([q.w1, np.ones(nV)])
    worst = 0.0
    for _ in range(n):
        x, y = _cplx(rng, q.n0), _cplx(rng, q.n1 + nV)
        lhs = np.vdot(F @ x, w_out * y)
        rhs = np.vdot(x, q.w0 * (Fstar @ y))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
    return worst


# --- F and its adjoint -----------------------------------------------------------------


def test_zero_C_gives_D_on_its_minimal_domain(q16, rng):
    F, Fstar = assemble_F(q16, np.zeros((2, q16.n0)))
    assert not np.any(Fstar[:, q16.n1:])
    for _ in range(10):
        zeta = q16.E_intD @ rng.standard_normal(q16.E_intD.shape[1])
        w = rng.standard_normal(2)
        got = Fstar @ np.concatenate([zeta, w])
        ref = q16.Dmax @ zeta
        assert np.max(np.abs(got - ref)) <= 1e-10 * np.abs(ref).max()


def test_endpoint_control_adjoint_identity(q16, rng):
    C = _endpoint_C(q16)
    F, Fstar = assemble_F(q16, C, tol=1e-10)
    assert _adjoint_defect(q16, F, Fstar, C.shape[0], rng) <= 1e-10


def test_adjoint_is_antilinear_in_the_factor(q16):
    C = _endpoint_C(q16)
    B = np.zeros((2 * 16 + 2 + 2, 2))
    alpha = 0.4 - 1.3j
    s1 = make_spec(q16, C, B, None, 2)
    s2 = make_spec(q16, alpha * C, B, None, 2)
    np.testing.assert_allclose(s2.Cdual, np.conj(alpha) * s1.Cdual, rtol=1e-15)


def test_wrong_C_shape_is_rejected(q16):
    with pytest.raises(PreconditionError):
        assemble_F(q16, np.zeros((1, q16.n0 + 1)))


def test_adjoint_defect_beyond_tolerance_raises(q16):
    # the sampled defect is at rounding level, so a sub-rounding tolerance must trip
    with pytest.raises(AdjointDefectError):
        assemble_F(q16, _endpoint_C(q16), tol=1e-20)


def test_system_operator_is_skew(visco):
    A = visco.spec.A_sys
    assert np.max(np.abs(A + A.conj().T)) == 0


def test_make_spec_rejects_mismatched_shapes(q16):
    C = _endpoint_C(q16)
    with pytest.raises(PreconditionError):
        make_spec(q16, C, np.zeros((5, 2)), None, 2)
    with pytest.raises(PreconditionError):
        make_spec(q16, C, np.zeros((36, 2)), constant_law(np.eye(3)), 2)


# --- domain condition ----------------------------------------------------------------------


def test_minimal_domain_with_zero_control_is_admissible(visco, rng):
    spec = visco.spec
    q = spec.quartet
    for _ in range(5):
        zeta = q.E_intD @ rng.standard_normal(q.E_intD.shape[1])
        zeta /= np.linalg.norm(zeta)
        assert domain_condition_defect(spec, zeta, np.zeros(spec.dim_V)) <= 1e-12


def test_cancelling_pair_is_admissible(visco, rng):
    from evoctl.control_system import _phi

    spec = visco.spec
    for _ in range(5):
        w = _cplx(rng, spec.dim_V)
        assert domain_condition_defect(spec, -_phi(spec, w), w) <= 1e-10


def test_projection_restores_admissibility(visco, rng):
    spec = visco.spec
    zeta, w = _cplx(rng, spec.quartet.n1), _cplx(rng, spec.dim_V)
    before = domain_condition_defect(spec, zeta, w)
    assert before > 1e-3
    zp, wp = project_admissible(spec, zeta, w)
    assert domain_condition_defect(spec, zp, wp) <= 1e-8
    # projecting twice changes nothing
    zq, wq = project_admissible(spec, zp, wp)
    assert np.max(np.abs(np.concatenate([zq - zp, wq - wp]))) <= 1e-8


# --- extraction -----------------------------------------------------------------------------------


def _random_spec(rng, n=6, nV=2):
    q = build_interval_ops(n, 1.0 / n)
    C = _cplx(rng, nV, q.n0)
    r = n  # (ker G)^perp has dimension n
    total = 2 * r + 2 * nV
    B = _cplx(rng, total, nV)
    X = _cplx(rng, 2 * r + nV, 2 * r + nV)
    K0 = X @ X.conj().T / (2 * r) + np.eye(2 * r + nV)
    law = constant_law(K0, dim_obs=nV, split_H0H1=r,
                       M121=0.3 * _cplx(rng, nV, r + nV), M122=np.eye(nV) + 0.2 * _cplx(rng, nV, nV))
    return make_spec(q, C, B, law, nV)


def _solve(spec, rng, nu=1.0):
    g = TimeGrid.centered(1024, 1.0 / 32, nu)
    f = bump_signal(g, rng, spec.dim)
    u = bump_signal(g, rng, spec.dim_U)
    sol = solve_frequency(spec.system(nu), spec.total_forcing(f, u), check_margin=False)
    return g, f, u, sol


def test_zero_inputs_extract_zero(rng):
    spec = _random_spec(rng)
    g = TimeGrid.centered(256, 0.1, 1.0)
    w, y = extract_control_equation(spec, TimeSignal.zeros(g, spec.dim), None, None)
    assert not np.any(w.samples) and not np.any(y.samples)
    w, u = extract_observation_equation(spec, TimeSignal.zeros(g, spec.dim), None,
                                        TimeSignal.zeros(g, spec.dim_Y))
    assert not np.any(w.samples) and not np.any(u.samples)


def test_control_extraction_matches_monolithic_solve(rng):
    spec = _random_spec(rng)
    g, f, u, sol = _solve(spec, rng)
    sl = spec.slices
    w, y = extract_control_equation(spec, sol, f, u)
    for got, key in ((w, "w"), (y, "y")):
        ref = sol.component(sl[key])
        assert (got - ref).norm() / ref.norm() <= 1e-8


def test_observation_round_trip(rng):
    spec = _random_spec(rng)
    g, f, u, sol = _solve(spec, rng)
    y = sol.component(spec.slices["y"])
    w_o, u_o = extract_observation_equation(spec, sol, f, y)
    assert (u_o - u).norm() / u.norm() <= 1e-8
    w_c, _ = extract_control_equation(spec, sol, f, u_o)
    assert (w_c - w_o).norm() / w_o.norm() <= 1e-8


def test_singular_control_block_names_the_bin(rng):
    q = build_interval_ops(4, 0.25)
    r, nV = 4, 1
    law = constant_law(np.diag([1.0] * (2 * r) + [0.0]), dim_obs=nV, split_H0H1=r)
    spec = make_spec(q, np.zeros((nV, q.n0)), np.zeros((2 * r + 2 * nV, nV)), law, nV)
    g = TimeGrid.centered(64, 0.1, 1.0)
    with pytest.raises(IllPosedSystemError, match="tau_k="):
        extract_control_equation(spec, TimeSignal.zeros(g, spec.dim), None, None)


def test_visco_extraction_forms(visco, rng):
    # for the visco-elastic system the blocks reduce to w = -sqrt2 u - Cv and w = Cv - sqrt2 y
    spec = visco.spec
    g = TimeGrid.centered(1024, 1.0 / 32, visco.cfg.nu)
    u = bump_signal(g, rng, spec.dim_U)
    sol = solve_frequency(spec.system(g.nu), spec.total_forcing(None, u), check_margin=False)
    sl = visco.slices
    v, w, y = (sol.samples[:, sl[k]] for k in ("v", "w", "y"))
    Cv = -(v @ spec.C_e.T)

    def rel(a, b):
        return TimeSignal(g, a - b).norm() / TimeSignal(g, b).norm()

    assert rel(-S2 * u.samples - Cv, w) <= 1e-8
    assert rel(Cv - S2 * y, w) <= 1e-8


# --- well-posedness ---------------------------------------------------------------------------------


def test_sampled_margin_dominates_the_certificate(visco, rng):
    rep = wellposedness_report(visco.law, visco.cfg.nu, 200)
    assert rep["certified"] and rep["theorem_gap"] >= -1e-8
    assert rep["normJ"] == pytest.approx(1 / S2)
    for _ in range(5):
        spec = _random_spec(rng)
        rep = wellposedness_report(spec.law, 1.0, 100)
        if rep["theorem_gap"] is not None:
            assert rep["theorem_gap"] >= -1e-8
