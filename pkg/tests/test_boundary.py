import math

import numpy as np
import pytest
import scipy.special as ss
from hypothesis import given, settings
from hypothesis import strategies as st

from nlhelmholtz import boundary, specfun
from nlhelmholtz.boundary import FourierTrace
from nlhelmholtz.context import WaveContext
from nlhelmholtz.errors import AliasingError, CapabilityError, ConfigurationError, DomainError

SQ2PI = math.sqrt(2 * math.pi)


def rand_trace(rng, dim, N, R=1.0, decay=0.0, kappa=None):
    n = boundary.mode_orders(dim, N).astype(float)
    c = (rng.standard_normal(n.size) + 1j * rng.standard_normal(n.size)) * (1 + n**2) ** (-decay / 2)
    return FourierTrace(dim, R, N, c, kappa)


def circle_samples(M):
    phi = 2 * math.pi * np.arange(M) / M
    return phi, np.column_stack([np.cos(phi), np.sin(phi)])


# ---------------------------------------------------------------- analyze


def test_analyze_constant():
    t = boundary.analyze_trace(np.full(40, 2.5), 8, 1.0)
    assert abs(t.coeff(0) - 2.5 * SQ2PI) < 1e-13
    others = np.delete(t.coeffs, boundary.mode_index(2, 8, 0))
    assert np.max(np.abs(others)) < 1e-13


def test_analyze_single_exponential():
    phi, _ = circle_samples(48)
    t = boundary.analyze_trace(np.exp(3j * phi), 10, 1.0)
    assert abs(t.coeff(3) - SQ2PI) < 1e-13
    others = np.delete(t.coeffs, boundary.mode_index(2, 10, 3))
    assert np.max(np.abs(others)) < 1e-13


def test_analyze_plane_wave_against_refined_quadrature():
    kappa, R, N = 3.0, 1.5, 12
    d = np.array([math.cos(0.4), -math.sin(0.4)])
    f = lambda u: 0.7 * np.exp(1j * kappa * R * (u @ d))  # noqa: E731
    coarse = boundary.analyze_trace(f, N, R)
    # refined oracle: plain trapezoid sum at 8x the sampling
    phi, u = circle_samples(8 * (4 * N + 8))
    Y = np.exp(-1j * np.outer(boundary.mode_orders(2, N), phi)) / SQ2PI
    ref = (2 * math.pi / phi.size) * Y @ f(u)
    # band-unlimited input: the default sampling aliases at the level of |J_{M-N}(kappa R)|
    assert np.max(np.abs(coarse.coeffs - ref)) < 1e-10


def test_analyze_aliasing_refused():
    with pytest.raises(AliasingError):
        boundary.analyze_trace(np.zeros(4 * 5 + 3), 5, 1.0)
    with pytest.raises(AliasingError):
        boundary.analyze_trace(np.zeros((3, 12)), 4, 1.0, dim=3)


def test_analyze_sphere_band_limited_roundtrip():
    rng = np.random.default_rng(4)
    t = rand_trace(rng, 3, 6)
    theta, phi, _ = specfun.sphere_grid(8, 16)
    vals = specfun.spherical_harmonics(6, theta, phi) @ t.coeffs
    back = boundary.analyze_trace(vals.reshape(8, 16), 6, 1.0, dim=3)
    assert np.max(np.abs(back.coeffs - t.coeffs)) < 1e-12


# -------------------------------------------------------------- synthesize


def test_synthesize_examples():
    t = FourierTrace.single_mode(2, 1.0, 3, 1)
    assert abs(boundary.synthesize_trace(t, [1.0, 0.0]) - 1 / SQ2PI) < 1e-15
    z = FourierTrace.zeros(2, 1.0, 3)
    assert boundary.synthesize_trace(z, [0.0, 1.0]) == 0


@settings(max_examples=25, deadline=None)
@given(N=st.integers(0, 24), seed=st.integers(0, 10_000))
def test_analyze_synthesize_roundtrip(N, seed):
    t = rand_trace(np.random.default_rng(seed), 2, N)
    _, u = circle_samples(4 * N + 4)
    back = boundary.analyze_trace(boundary.synthesize_trace(t, u), N, 1.0)
    assert np.max(np.abs(back.coeffs - t.coeffs)) < 1e-12 * max(1.0, np.max(np.abs(t.coeffs)))


def test_synthesize_rejects_non_unit_direction():
    with pytest.raises(DomainError):
        boundary.synthesize_trace(FourierTrace.zeros(2, 1.0, 2), [1.0, 1.0])


def test_p1_trace_moments_exact_for_piecewise_linear():
    rng = np.random.default_rng(2)
    ang = np.sort(rng.uniform(0, 2 * math.pi, 37))
    vals = rng.standard_normal(37) + 1j * rng.standard_normal(37)
    t = boundary.analyze_p1_trace(ang, vals, 6, 1.0)
    # oracle: dense sampling of the piecewise-linear interpolant (periodic)
    phi = np.linspace(0, 2 * math.pi, 400_001)[:-1]
    a = np.concatenate([ang, [ang[0] + 2 * math.pi]])
    v = np.concatenate([vals, [vals[0]]])
    g = np.interp(np.mod(phi - ang[0], 2 * math.pi) + ang[0], a, v.real) + 1j * np.interp(
        np.mod(phi - ang[0], 2 * math.pi) + ang[0], a, v.imag
    )
    ref = (2 * math.pi / phi.size) * np.exp(-1j * np.outer(t.orders, phi)) @ g / SQ2PI
    assert np.max(np.abs(t.coeffs - ref)) < 1e-8


# ------------------------------------------------------------------- norms


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 2.0])
def test_sobolev_single_mode(s):
    R, n = 2.0, 5
    t = FourierTrace.single_mode(2, R, 7, n)
    assert boundary.sobolev_norm(t, s) ** 2 == pytest.approx(R * (1 + n * n) ** s, rel=1e-14)


def test_sobolev_zero_and_errors():
    z = FourierTrace.zeros(2, 1.0, 4)
    assert boundary.sobolev_norm(z, 1.0) == 0
    with pytest.raises(CapabilityError):
        boundary.sobolev_norm(z, 2.5)
    with pytest.raises(CapabilityError):
        boundary.sobolev_norm(z, -0.5)


def test_sobolev_monotone_in_s():
    t = rand_trace(np.random.default_rng(3), 3, 5)
    vals = [boundary.sobolev_norm(t, s) for s in np.linspace(0, 2, 9)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("dim", [2, 3])
def test_parseval_against_quadrature(dim):
    rng = np.random.default_rng(dim)
    R, N = 1.7, 8
    for _ in range(100):
        t = rand_trace(rng, dim, N, R)
        if dim == 2:
            _, u = circle_samples(4 * N + 4)
            q = R * (2 * math.pi / u.shape[0]) * np.sum(np.abs(boundary.synthesize_trace(t, u)) ** 2)
        else:
            theta, phi, w = specfun.sphere_grid(N + 2, 2 * N + 4)
            vals = specfun.spherical_harmonics(N, theta, phi) @ t.coeffs
            q = R**2 * np.sum(w * np.abs(vals) ** 2)
        assert abs(boundary.sobolev_norm(t, 0) ** 2 - q) < 1e-10 * q


def test_dual_norm_is_dual():
    rng = np.random.default_rng(7)
    w = rand_trace(rng, 2, 10)
    # sup over v of |(w, v)| / ||v||_{1/2} is attained at v_n = w_n / (1+n^2)^{1/2}
    n = w.orders.astype(float)
    v = FourierTrace(2, 1.0, 10, w.coeffs / np.sqrt(1 + n**2))
    ratio = abs(boundary.l2_pairing(w, v)) / boundary.sobolev_norm(v, 0.5)
    assert ratio == pytest.approx(boundary.dual_norm_half(w), rel=1e-13)


# --------------------------------------------------------------------- DtN


def test_dtn_single_mode():
    ctx = WaveContext(2.0, 1.5, 6)
    out = boundary.apply_truncated_dtn(FourierTrace.single_mode(2, 1.5, 6, 4), ctx)
    assert out.coeff(4) == pytest.approx(specfun.dtn_symbol(2, 4, 3.0).value / 1.5, rel=1e-15)
    assert np.count_nonzero(out.coeffs) == 1


@pytest.mark.parametrize("dim", [2, 3])
def test_dtn_spectral_identity_and_sign(dim):
    rng = np.random.default_rng(11 + dim)
    R, kappa, N = 1.3, 2.7, 9
    ctx = WaveContext(kappa, R, N, dim=dim)
    sym = boundary.symbol_vector(dim, N, kappa * R)
    for _ in range(100):
        v = rand_trace(rng, dim, N, R)
        p = boundary.dtn_pairing(v, v, ctx)
        ref = np.sum(sym * np.abs(v.coeffs) ** 2) * (1 if dim == 2 else R)
        assert abs(p - ref) < 1e-10 * abs(ref)
        assert -p.real >= 0


def test_dtn_is_diagonal():
    ctx = WaveContext(3.0, 1.0, 8)
    G = np.array(
        [
            [boundary.dtn_pairing(FourierTrace.single_mode(2, 1.0, 8, j), FourierTrace.single_mode(2, 1.0, 8, i), ctx)
             for j in range(-8, 9)]
            for i in range(-8, 9)
        ]
    )
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-13


def test_dtn_against_radial_finite_difference():
    kappa, R, N = 2.0, 1.0, 6
    ctx = WaveContext(kappa, R, N)
    t = FourierTrace.single_mode(2, R, N, 3, value=ss.hankel1(3, kappa * R))
    got = boundary.apply_truncated_dtn(t, ctx).coeff(3)

    def d(h):
        return (ss.hankel1(3, kappa * (R + h)) - ss.hankel1(3, kappa * (R - h))) / (2 * h)

    h = 1e-3
    fd = (4 * d(h / 2) - d(h)) / 3  # Richardson
    assert abs(got - fd) < 1e-8 * abs(fd)


def test_dtn_annihilates_modes_beyond_context_N():
    t = FourierTrace.single_mode(2, 1.0, 10, 9)
    out = boundary.apply_truncated_dtn(t, WaveContext(1.0, 1.0, 5))
    assert np.all(out.coeffs == 0)


def test_dtn_context_mismatch():
    t = FourierTrace.single_mode(2, 1.0, 3, 1, kappa=2.0)
    with pytest.raises(ConfigurationError):
        boundary.apply_truncated_dtn(t, WaveContext(2.0, 1.1, 3))
    with pytest.raises(ConfigurationError):
        boundary.apply_truncated_dtn(t, WaveContext(2.5, 1.0, 3))


@pytest.mark.parametrize("dim", [2, 3])
def test_dtn_uniform_bound_independent_of_N(dim):
    rng = np.random.default_rng(5)
    for N in (1, 5, 20):
        ctx = WaveContext(3.0, 1.2, N, dim=dim)
        for _ in range(20):
            w, v = rand_trace(rng, dim, N, 1.2), rand_trace(rng, dim, N, 1.2)
            assert abs(boundary.dtn_pairing(w, v, ctx)) <= boundary.dtn_uniform_bound(w, v, ctx) * (1 + 1e-12)


# --------------------------------------------------------------- projector


def test_project_examples():
    rng = np.random.default_rng(8)
    t = rand_trace(rng, 2, 6)
    assert np.array_equal(boundary.project_PN(t, 6).coeffs, t.coeffs)
    p0 = boundary.project_PN(t, 0)
    assert np.count_nonzero(p0.coeffs) == 1 and p0.coeff(0) == t.coeff(0)


def test_project_idempotent_self_adjoint():
    rng = np.random.default_rng(9)
    w, v = rand_trace(rng, 3, 7), rand_trace(rng, 3, 7)
    P = lambda t: boundary.project_PN(t, 4)  # noqa: E731
    assert np.max(np.abs(P(P(w)).coeffs - P(w).coeffs)) < 1e-13
    assert abs(boundary.l2_pairing(P(w), v) - boundary.l2_pairing(w, P(v))) < 1e-13


def test_project_pairing_bound():
    rng = np.random.default_rng(10)
    for N in (0, 2, 5, 10):
        for _ in range(50):
            w, v = rand_trace(rng, 2, 16), rand_trace(rng, 2, 16)
            tail = FourierTrace(2, 1.0, 16, w.coeffs - boundary.project_PN(w, N).coeffs)
            lhs = abs(boundary.l2_pairing(tail, v))
            rhs = boundary.sobolev_norm(w, 0.5) * boundary.sobolev_norm(v, 0.5) / math.sqrt(1 + N * N)
            assert lhs <= rhs * (1 + 1e-12)


# ------------------------------------------------------------ exterior field


def test_exterior_field_hankel0():
    kappa, R = 2.0, 1.0
    ctx = WaveContext(kappa, R, 4)
    t = FourierTrace.single_mode(2, R, 4, 0, value=SQ2PI * ss.hankel1(0, kappa * R))
    for r in (1.2, 2.0, 7.5):
        p = r * np.array([math.cos(0.3), math.sin(0.3)])
        assert abs(boundary.exterior_field(t, ctx, p) - ss.hankel1(0, kappa * r)) < 1e-10


def test_exterior_field_zero_and_domain():
    ctx = WaveContext(1.0, 1.0, 3)
    z = FourierTrace.zeros(2, 1.0, 3)
    assert boundary.exterior_field(z, ctx, [2.0, 0.0]) == 0
    with pytest.raises(DomainError):
        boundary.exterior_field(z, ctx, [0.5, 0.5])
    with pytest.raises(DomainError):
        boundary.exterior_field(z, ctx, [1.0, 0.0])


def test_exterior_field_approaches_trace():
    rng = np.random.default_rng(12)
    ctx = WaveContext(2.0, 1.0, 6)
    t = rand_trace(rng, 2, 6, decay=2.0)
    d = np.array([math.cos(1.1), math.sin(1.1)])
    near = boundary.exterior_field(t, ctx, (1 + 1e-9) * d)
    assert abs(near - boundary.synthesize_trace(t, d)) < 1e-7


def test_exterior_field_solves_helmholtz():
    rng = np.random.default_rng(13)
    kappa = 2.0
    ctx = WaveContext(kappa, 1.0, 6)
    t = rand_trace(rng, 2, 6, decay=2.0)

    def u(r, p):
        return boundary.exterior_field(t, ctx, np.array([r * math.cos(p), r * math.sin(p)]))

    def residual(h):
        out = []
        for r in (1.4, 2.0, 3.1):
            for p in (0.2, 2.5, 4.0):
                c = u(r, p)
                urr = (u(r + h, p) - 2 * c + u(r - h, p)) / h**2
                ur = (u(r + h, p) - u(r - h, p)) / (2 * h)
                upp = (u(r, p + h) - 2 * c + u(r, p - h)) / h**2
                out.append((urr + ur / r + upp / r**2 + kappa**2 * c, abs(c)))
        return out

    coarse, fine = residual(2e-3), residual(1e-3)
    for (rc, mag), (rf, _) in zip(coarse, fine):
        extrap = (4 * rf - rc) / 3
        assert abs(extrap) < 1e-6 * max(mag, 1e-3)


# ----------------------------------------------------------- truncation


def test_truncation_pairing_examples():
    rng = np.random.default_rng(14)
    ctx = WaveContext(2.0, 1.0, 20)
    w = rand_trace(rng, 2, 20, kappa=2.0)
    band = boundary.project_PN(w, 6)
    v = rand_trace(rng, 2, 20)
    assert boundary.dtn_truncation_pairing(band, v, 6, ctx) == 0
    N = 6
    single_w = FourierTrace.single_mode(2, 1.0, 20, N + 1, value=0.3 - 0.4j)
    single_v = FourierTrace.single_mode(2, 1.0, 20, N + 1, value=1.1 + 0.2j)
    got = boundary.dtn_truncation_pairing(single_w, single_v, N, ctx)
    ref = specfun.dtn_symbol(2, N + 1, 2.0).value * (0.3 - 0.4j) * np.conj(1.1 + 0.2j)
    assert abs(got - ref) < 1e-14
    with pytest.raises(DomainError):
        boundary.dtn_truncation_pairing(w, v, 20, ctx)


def test_truncation_pairing_decays_and_is_bounded():
    rng = np.random.default_rng(15)
    ctx = WaveContext(2.0, 1.0, 40)
    w = rand_trace(rng, 2, 40, decay=4.0, kappa=2.0)
    sups = []
    for N in range(2, 40, 4):
        worst = 0.0
        for _ in range(30):
            v = rand_trace(rng, 2, 40)
            val = abs(boundary.dtn_truncation_pairing(w, v, N, ctx)) / boundary.sobolev_norm(v, 0.5)
            worst = max(worst, val)
            assert abs(boundary.dtn_truncation_pairing(w, v, N, ctx)) <= boundary.truncation_bound(w, v, N, ctx) * (
                1 + 1e-12
            )
        sups.append(worst)
    # the supremum over v equals ||tail of T w||_{-1/2}, which is monotone in N
    exact = []
    for N in range(2, 40, 4):
        tail = boundary.apply_truncated_dtn(w, ctx).coeffs * (np.abs(w.orders) > N)
        exact.append(boundary.dual_norm_half(FourierTrace(2, 1.0, 40, tail)))
    assert all(b <= a for a, b in zip(exact, exact[1:]))
    assert all(s <= e * (1 + 1e-12) for s, e in zip(sups, exact))


# --------------------------------------------------------------------- IO


@pytest.mark.parametrize("dim", [2, 3])
def test_trace_csv_roundtrip(tmp_path, dim):
    t = rand_trace(np.random.default_rng(16), dim, 4, R=1.25, kappa=3.0)
    p = tmp_path / "t.csv"
    boundary.write_trace(t, p, provenance="# provenance schema=1 x=y")
    back = boundary.read_trace(p)
    assert back.dim == dim and back.R == 1.25 and back.N == 4 and back.kappa == 3.0
    assert np.array_equal(back.coeffs, t.coeffs)
