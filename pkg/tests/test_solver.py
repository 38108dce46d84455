import math

import numpy as np
import pytest

from nlhelmholtz import boundary, specfun
from nlhelmholtz.assembly import PlaneWave, RadiatingSeries, assemble_linear, incident_functionals
from nlhelmholtz.boundary import FourierTrace
from nlhelmholtz.context import WaveContext
from nlhelmholtz.errors import ConfigurationError, DivergenceError
from nlhelmholtz.mesh import mesh_disk
from nlhelmholtz.solver import (
    Custom,
    Kerr,
    Linear,
    SaturatedKerr,
    SolverConfig,
    boundary_flux,
    check_sufficient_conditions,
    estimate_constants,
    estimate_infsup,
    prepare_system,
    solve_fixed_point,
)
from nlhelmholtz.verify import DiskOracle, oracle_flux

KERR = dict(kappa=4.0, R=1.0, a=0.5, eps=6.0, alpha=1e-4, N=14)


@pytest.fixture(scope="module")
def kerr_system():
    m = mesh_disk(KERR["R"], KERR["a"], 0.1)
    return assemble_linear(m, WaveContext(KERR["kappa"], KERR["R"], KERR["N"]))


@pytest.fixture(scope="module")
def lin_system():
    m = mesh_disk(1.0, 0.5, 0.1)
    return assemble_linear(m, WaveContext(2.0, 1.0, 12))


# ---------------------------------------------------------------- models


def test_kerr_law_and_lipschitz():
    x = np.zeros((4, 2))
    u = np.array([0.0, 1.0, 1j, 2.0])
    k = Kerr(eps=2.0, alpha=0.5)
    assert np.allclose(k.c(x, u), 2.0 + 0.5 * np.abs(u) ** 2)
    xi, eta = np.array([1.0, 2.0]), np.array([0.5, 3.0])
    assert np.allclose(k.L_c(x[:2], xi, eta), 0.5 * (xi + eta))
    assert k.p_c == 4


def test_saturated_kerr_law():
    x = np.zeros((3, 2))
    u = np.array([0.0, 1.0, 3.0])
    s = SaturatedKerr(eps=2.0, alpha=0.5, gamma=4.0)
    assert np.allclose(s.c(x, u), 2.0 + 0.5 * u**2 / (1 + 4 * u**2))
    xi, eta = np.array([1.0]), np.array([2.0])
    assert np.allclose(s.L_c(x[:1], xi, eta), Kerr(eps=2.0, alpha=0.5).L_c(x[:1], xi, eta))
    with pytest.raises(ConfigurationError):
        SaturatedKerr(gamma=0.0)


def test_saturated_kerr_lipschitz_holds():
    rng = np.random.default_rng(0)
    s = SaturatedKerr(eps=1.0, alpha=0.7, gamma=2.0)
    x = np.zeros((500, 2))
    a = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    b = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    lhs = np.abs(s.c(x, a) - s.c(x, b))
    assert np.all(lhs <= s.L_c(x, a, b) * np.abs(a - b) * (1 + 1e-12))


def test_solver_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(tol=1e-16)
    with pytest.raises(ConfigurationError):
        SolverConfig(damping=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(max_iter=0)


# ------------------------------------------------------------- iteration


def test_linear_one_iteration_and_exact(lin_system):
    nl = Linear(eps=2.25)
    inc = PlaneWave(1.0, 0.3)
    sol = solve_fixed_point(lin_system, nl, inc)
    assert sol.converged and sol.iterations == 1
    K = prepare_system(lin_system, nl)
    dense = (K.volume_matrix.toarray() - K.B.toarray() @ np.diag(K.D) @ K.B.conj().T.toarray())
    ref = np.linalg.solve(dense, incident_functionals(inc, K.ctx, K.mesh))
    assert np.linalg.norm(sol.u_h - ref) < 1e-10 * np.linalg.norm(ref)


def test_linear_scaling(lin_system):
    nl = Linear(eps=2.25)
    u1 = solve_fixed_point(lin_system, nl, PlaneWave(1.0, 0.0)).u_h
    u2 = solve_fixed_point(lin_system, nl, PlaneWave(2.0, 0.0)).u_h
    assert np.linalg.norm(u2 - 2 * u1) < 1e-10 * np.linalg.norm(u2)


def test_zero_data_gives_zero(kerr_system):
    sol = solve_fixed_point(kerr_system, Kerr(eps=6.0, alpha=1e-4), PlaneWave(0.0, 0.0))
    assert np.all(sol.u_h == 0)
    sol = solve_fixed_point(kerr_system, Kerr(eps=6.0, alpha=1e-4), None)
    assert np.all(sol.u_h == 0)


def test_kerr_fixture_converges(kerr_system):
    nl = Kerr(eps=KERR["eps"], alpha=KERR["alpha"])
    sol = solve_fixed_point(kerr_system, nl, PlaneWave(1.0, 0.0))
    assert sol.converged and sol.iterations <= 25
    assert sol.residual < 1e-8 and sol.contraction < 0.1
    h = sol.residual_history
    assert np.all(np.diff(h[1:]) < 0)
    # fixed-point consistency u = K^{-1} F(u)
    from nlhelmholtz.assembly import nonlinear_rhs

    K = prepare_system(kerr_system, nl)
    F = incident_functionals(PlaneWave(1.0, 0.0), K.ctx, K.mesh) + nonlinear_rhs(
        sol.u_h, nl, K.ctx, K.mesh, K.quad, increment=True
    )
    assert np.linalg.norm(sol.u_h - K.solve(F)) <= 1e-10 * (1 + np.linalg.norm(sol.u_h))


def test_kerr_breaks_linear_scaling(kerr_system):
    nl = Kerr(eps=KERR["eps"], alpha=KERR["alpha"])
    u1 = solve_fixed_point(kerr_system, nl, PlaneWave(1.0, 0.0)).u_h
    u2 = solve_fixed_point(kerr_system, nl, PlaneWave(2.0, 0.0)).u_h
    assert np.linalg.norm(u2 - 2 * u1) / np.linalg.norm(u2) > 1e-3


def test_saturation_ordering(kerr_system):
    inc = PlaneWave(1.0, 0.0)
    ulin = solve_fixed_point(kerr_system, Linear(eps=KERR["eps"]), inc).u_h
    d = []
    for g in (1.0, 10.0, 100.0):
        u = solve_fixed_point(kerr_system, SaturatedKerr(eps=KERR["eps"], alpha=KERR["alpha"], gamma=g), inc).u_h
        d.append(kerr_system.v_norm(u - ulin))
    assert d[0] > d[1] > d[2]


def test_max_iter_flagged(kerr_system):
    sol = solve_fixed_point(kerr_system, Kerr(eps=6.0, alpha=1e-2), PlaneWave(1.0, 0.0), SolverConfig(max_iter=2))
    assert not sol.converged and sol.status == "max_iter" and sol.iterations == 2


def test_divergence_reported_with_solution(kerr_system):
    with pytest.raises(DivergenceError) as e:
        solve_fixed_point(kerr_system, Kerr(eps=6.0, alpha=1.0), PlaneWave(1.0, 0.0), SolverConfig(max_iter=200))
    sol = e.value.solution
    assert sol is not None and sol.status == "diverged" and sol.damping == 0.125
    assert np.all(np.isfinite(sol.u_h))


def test_damping_reaches_same_fixed_point(kerr_system):
    nl = Kerr(eps=6.0, alpha=1e-4)
    a = solve_fixed_point(kerr_system, nl, PlaneWave(1.0, 0.0)).u_h
    b = solve_fixed_point(kerr_system, nl, PlaneWave(1.0, 0.0), SolverConfig(damping=0.5, max_iter=200)).u_h
    assert np.linalg.norm(a - b) < 1e-8 * np.linalg.norm(a)


def test_prepared_system_reused(kerr_system):
    nl = Kerr(eps=6.0, alpha=1e-4)
    K = prepare_system(kerr_system, nl)
    assert prepare_system(K, Kerr(eps=6.0, alpha=2e-4)) is K
    assert prepare_system(K, Kerr(eps=5.0, alpha=2e-4)) is not K


def test_custom_law_with_source(lin_system):
    # constant source f on the obstacle with c = 1: one linear solve
    nl = Custom(c_fn=lambda x, u: np.ones(np.shape(u)), f_fn=lambda x, u: np.full(np.shape(u), 1.0 + 0j))
    sol = solve_fixed_point(lin_system, nl, None)
    assert sol.converged and sol.iterations == 1 and np.linalg.norm(sol.u_h) > 0


# ------------------------------------------------------------- checker


def test_checker_trivial_case():
    ctx = WaveContext(2.0, 1.0, 8)
    rad = RadiatingSeries(FourierTrace.single_mode(2, 1.0, 8, 2, kappa=2.0))
    for rho in (1e-3, 1.0, 1e3):
        rep = check_sufficient_conditions(Kerr(eps=1.0, alpha=0.0), rad, ctx, rho, 0.3, {})
        assert rep.status == "satisfied" and rep.L_F == 0


def test_checker_large_alpha_violated():
    ctx = WaveContext(2.0, 1.0, 8)
    rep = check_sufficient_conditions(Kerr(eps=1.0, alpha=1e3), None, ctx, 1.0, 0.3, {"C_emb": 1.0, "C_tr": 1.0})
    assert rep.status == "violated" and rep.margin_contraction < 0


def test_checker_indeterminate():
    ctx = WaveContext(2.0, 1.0, 8)
    rep = check_sufficient_conditions(Kerr(eps=1.0, alpha=1.0), PlaneWave(), ctx, 1.0, 0.3, {})
    assert rep.status == "indeterminate" and "C_emb" in rep.reason
    rep = check_sufficient_conditions(Custom(c_fn=lambda x, u: 1 + 0 * u), None, ctx, 1.0, 0.3, {})
    assert rep.status == "indeterminate"


def test_checker_threshold_scan():
    ctx = WaveContext(2.0, 1.0, 8)
    rho, beta, C = 0.8, 0.4, {"C_emb": 0.9, "C_tr": 1.3}
    rep = check_sufficient_conditions(Kerr(eps=1.0, alpha=1e-3), PlaneWave(0.01, 0.0), ctx, rho, beta, C)
    eta = rep.terms["eta"]
    k2 = 4.0
    # hand-evaluated crossing of both inequalities with g = 0
    a1 = (rho * beta - C["C_tr"] * eta) / (k2 * C["C_emb"] * rho**3)
    a2 = beta / (3 * k2 * C["C_emb"] * rho**2)
    hand = min(a1, a2)
    assert abs(rep.critical_alpha - hand) <= 1e-12 * hand
    below = check_sufficient_conditions(Kerr(eps=1.0, alpha=hand * (1 - 1e-9)), PlaneWave(0.01, 0.0), ctx, rho, beta, C)
    above = check_sufficient_conditions(Kerr(eps=1.0, alpha=hand * (1 + 1e-9)), PlaneWave(0.01, 0.0), ctx, rho, beta, C)
    assert below.status == "satisfied" and above.status == "violated"


# ------------------------------------------------- inf-sup and constants


def test_infsup_positive_and_dense_agrees():
    m = mesh_disk(1.0, 0.5, 0.2)
    sys_ = assemble_linear(m, WaveContext(2.0, 1.0, 8))
    b = estimate_infsup(sys_)
    assert b > 0
    assert b == pytest.approx(estimate_infsup(sys_, dense=True), rel=1e-6)


def test_infsup_stable_in_N():
    m = mesh_disk(1.0, 0.5, 0.1)
    kappa = 2.0
    Ns = 2 + 2
    vals = [estimate_infsup(assemble_linear(m, WaveContext(kappa, 1.0, N))) for N in (Ns, Ns + 5, 2 * Ns)]
    assert max(vals) <= 1.1 * min(vals)


def test_infsup_under_refinement():
    kappa = 2.0
    b1 = estimate_infsup(assemble_linear(mesh_disk(1.0, 0.5, 0.2), WaveContext(kappa, 1.0, 8)))
    b2 = estimate_infsup(assemble_linear(mesh_disk(1.0, 0.5, 0.1), WaveContext(kappa, 1.0, 8)))
    assert b2 >= 0.5 * b1


def test_constants_positive(lin_system):
    c = estimate_constants(lin_system)
    assert c["C_tr"] > 0 and c["C_emb"] > 0


# ------------------------------------------------------------------ flux


def test_flux_zero_and_single_mode():
    ctx = WaveContext(2.0, 1.0, 4)
    assert boundary_flux(FourierTrace.zeros(2, 1.0, 4, 2.0), ctx=ctx) == 0
    t = FourierTrace.single_mode(2, 1.0, 4, 1, value=0.7 + 0.1j, kappa=2.0)
    f = boundary_flux(t, ctx=ctx)
    assert f == pytest.approx(specfun.dtn_symbol(2, 1, 2.0).value.imag * abs(0.7 + 0.1j) ** 2, rel=1e-14)
    assert f > 0


def test_flux_matches_oracle_series():
    o = DiskOracle(0.5, 2.25, 2.0, 1.0)
    N = 20
    f = boundary_flux(o.scattered_trace(N), ctx=WaveContext(2.0, 1.0, N))
    assert f == pytest.approx(oracle_flux(o, N), rel=1e-6)


def test_fem_flux_close_to_oracle():
    o = DiskOracle(0.5, 2.25, 2.0, 1.0)
    m = mesh_disk(1.0, 0.5, 0.05)
    sys_ = assemble_linear(m, WaveContext(2.0, 1.0, 12))
    inc = PlaneWave(1.0, 0.0)
    sol = solve_fixed_point(sys_, Linear(eps=2.25), inc)
    assert boundary_flux(sol.u_h, sys_, inc=inc) == pytest.approx(oracle_flux(o, 12), rel=1e-2)
