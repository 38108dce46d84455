"""Analytic oracles and convergence studies.

The penetrable-disk oracle is evaluated with :mod:`scipy.special`, so it
shares no code path with :mod:`specfun`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special as ss

from . import boundary
from .assembly import QUAD_BARY, PlaneWave, RegularSeries, assemble_linear, quadrature
from .context import WaveContext
from .errors import DomainError, HelmholtzError, SweepError
from .mesh import DiskObstacle, Mesh2D, mesh_disk
from .solver import Linear, SolverConfig, solve_fixed_point

TAIL_TOL = 1e-12


def _solve2_cramer(m, rhs):
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    x0 = (rhs[0] * m[1, 1] - m[0, 1] * rhs[1]) / det
    x1 = (m[0, 0] * rhs[1] - rhs[0] * m[1, 0]) / det
    return np.array([x0, x1])


def _jv_table(nmax, x):
    """``J_m(x)`` for ``m = 0..nmax``: scipy seeds at the top, downward recurrence."""
    x = np.asarray(x)
    out = np.zeros((x.size, nmax + 1), dtype=np.result_type(x, float))
    out[:, nmax] = ss.jv(nmax, x)
    out[:, nmax - 1] = ss.jv(nmax - 1, x)
    with np.errstate(all="ignore"):
        for m in range(nmax - 1, 0, -1):
            out[:, m - 1] = 2 * m / x * out[:, m] - out[:, m + 1]
    bad = (out[:, nmax] == 0) | ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        out[bad] = ss.jv(np.arange(nmax + 1)[None, :], x[bad][:, None])
    return out


def _yv_table(nmax, x):
    """``Y_m(x)`` for ``m = 0..nmax`` by upward recurrence (stable for ``Y``)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((x.size, nmax + 1))
    out[:, 0] = ss.y0(x)
    out[:, 1] = ss.y1(x)
    with np.errstate(all="ignore"):
        for m in range(1, nmax):
            out[:, m + 1] = 2 * m / x * out[:, m] - out[:, m - 1]
    return out


@dataclass(eq=False)
class DiskOracle:
    """Plane wave scattered by a homogeneous disk of radius ``a``.

    Fields are ``sum_n a_n J_n(k_i r) e^{i n phi}`` inside and
    ``sum_n (c_n J_n(kappa r) + b_n H_n(kappa r)) e^{i n phi}`` outside, with
    ``k_i = kappa sqrt(eps)`` and ``c_n = alpha (-1)^n e^{-i n phi_inc}``.
    """

    a: float
    eps: complex
    kappa: float
    R: float
    amplitude: complex = 1.0
    angle: float = 0.0
    n_modes: int | None = None
    a_n: np.ndarray = field(init=False, repr=False)
    b_n: np.ndarray = field(init=False, repr=False)
    c_n: np.ndarray = field(init=False, repr=False)
    a_n_alt: np.ndarray = field(init=False, repr=False)
    b_n_alt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 < self.a < self.R):
            raise DomainError(f"need 0 < a < R, got a={self.a}, R={self.R}")
        if complex(self.eps).imag < 0:
            raise DomainError("eps must have nonnegative imaginary part")
        if self.n_modes is None:
            self.n_modes = int(math.ceil(self.kappa * self.R + 40))
        N = self.n_modes
        n = np.arange(-N, N + 1)
        k, a = self.kappa, self.a
        ki = k * np.sqrt(complex(self.eps))
        self.c_n = self.amplitude * np.where(n % 2 == 0, 1.0, -1.0) * np.exp(-1j * n * self.angle)
        A, B, A2, B2 = (np.zeros(n.size, complex) for _ in range(4))
        for i, nn in enumerate(n):
            m = np.array(
                [
                    [ss.jv(nn, ki * a), -ss.hankel1(nn, k * a)],
                    [ki * ss.jvp(nn, ki * a), -k * ss.h1vp(nn, k * a)],
                ]
            )
            rhs = self.c_n[i] * np.array([ss.jv(nn, k * a), k * ss.jvp(nn, k * a)])
            A[i], B[i] = np.linalg.solve(m, rhs)
            A2[i], B2[i] = _solve2_cramer(m, rhs)
        self.a_n, self.b_n, self.a_n_alt, self.b_n_alt = A, B, A2, B2
        tail = max(abs(B[0]), abs(B[-1]), abs(A[0] * ss.jv(N, ki * a)), abs(ss.jv(N, k * self.R)))
        if not np.isfinite(tail) or tail > TAIL_TOL:
            raise DomainError(f"oracle series tail {tail:.3e} exceeds {TAIL_TOL}; increase n_modes")

    @property
    def orders(self):
        return np.arange(-self.n_modes, self.n_modes + 1)

    @property
    def k_inner(self):
        return self.kappa * np.sqrt(complex(self.eps))

    def _polar(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.hypot(p[:, 0], p[:, 1]), np.arctan2(p[:, 1], p[:, 0])

    def _radial(self, r, inside):
        """Per-point radial factors and their ``r``-derivatives for all orders.

        Only orders ``0..N+1`` are evaluated; negative orders use
        ``C_{-n} = (-1)^n C_n`` and derivatives use ``2C'_n = C_{n-1} - C_{n+1}``.
        """
        N = self.n_modes
        sign = np.where(self.orders % 2 == 0, 1.0, -1.0)
        idx = np.abs(self.orders)
        val = np.zeros((r.size, idx.size), complex)
        inc = np.zeros_like(val)
        dval = np.zeros_like(val)
        dinc = np.zeros_like(val)
        neg = self.orders < 0

        def full(tab, k):
            f = tab[:, idx] * np.where(neg, sign, 1.0)
            lo = tab[:, np.abs(self.orders - 1)] * np.where(self.orders - 1 < 0, np.where((self.orders - 1) % 2 == 0, 1.0, -1.0), 1.0)
            hi = tab[:, np.abs(self.orders + 1)] * np.where(self.orders + 1 < 0, np.where((self.orders + 1) % 2 == 0, 1.0, -1.0), 1.0)
            return f, 0.5 * k * (lo - hi)

        ri, ro = r[inside], r[~inside]
        if ri.size:
            J = _jv_table(N + 1, self.k_inner * ri)
            v, d = full(J, self.k_inner)
            val[inside], dval[inside] = v * self.a_n, d * self.a_n
        if ro.size:
            x = self.kappa * ro
            J = _jv_table(N + 1, x)
            Y = _yv_table(N + 1, x)
            jv_, jd = full(J, self.kappa)
            hv, hd = full(J + 1j * Y, self.kappa)
            inc[~inside], dinc[~inside] = jv_ * self.c_n, jd * self.c_n
            val[~inside] = inc[~inside] + hv * self.b_n
            dval[~inside] = dinc[~inside] + hd * self.b_n
        return np.nan_to_num(val), np.nan_to_num(dval), inc

    def evaluate(self, pts, part="total"):
        """Total (default), ``"scattered"`` or ``"incident"`` field at points."""
        r, phi = self._polar(pts)
        E = np.exp(1j * np.outer(phi, self.orders))
        if part == "incident":
            vals = ss.jv(self.orders[None, :], (self.kappa * r)[:, None]) * self.c_n
        else:
            inside = r < self.a
            vals, _, inc = self._radial(r, inside)
            if part == "scattered":
                vals = np.where(inside[:, None], 0.0, vals - inc)
        out = np.sum(vals * E, axis=1)
        return out if np.ndim(pts) > 1 else complex(out[0])

    def gradient(self, pts):
        """Cartesian gradient of the total field."""
        r, phi = self._polar(pts)
        n = self.orders
        E = np.exp(1j * np.outer(phi, n))
        val, dr, _ = self._radial(r, r < self.a)
        ur = np.sum(dr * E, axis=1)
        uphi = np.sum(val * (1j * n) * E, axis=1)
        with np.errstate(all="ignore"):
            ut = np.where(r > 0, uphi / np.where(r > 0, r, 1.0), 0.0)
        c, s = np.cos(phi), np.sin(phi)
        return np.column_stack([c * ur - s * ut, s * ur + c * ut])

    def interface_mismatch(self):
        """Largest per-mode jump of value and radial derivative at ``r = a``."""
        n, k, a, ki = self.orders, self.kappa, self.a, self.k_inner
        v_in = self.a_n * ss.jv(n, ki * a)
        v_out = self.c_n * ss.jv(n, k * a) + self.b_n * ss.hankel1(n, k * a)
        d_in = ki * self.a_n * ss.jvp(n, ki * a)
        d_out = k * (self.c_n * ss.jvp(n, k * a) + self.b_n * ss.h1vp(n, k * a))
        return float(max(np.max(np.abs(v_in - v_out)), np.max(np.abs(d_in - d_out))))

    def scattered_trace(self, N=None) -> boundary.FourierTrace:
        """Harmonic coefficients (``Y_n`` basis) of the scattered field on S_R."""
        N = self.n_modes if N is None else N
        n = np.arange(-N, N + 1)
        full = dict(zip(self.orders, self.b_n))
        b = np.array([full.get(k, 0) for k in n])
        c = math.sqrt(2 * math.pi) * b * ss.hankel1(n, self.kappa * self.R)
        return boundary.FourierTrace(2, self.R, N, c, self.kappa)

    def incident(self):
        return PlaneWave(self.amplitude, self.angle)


def disk_exact(oracle: DiskOracle, point):
    return oracle.evaluate(point)


def oracle_flux(oracle: DiskOracle, N=None) -> float:
    """``Im sum Z_n |u^sc_n|^2`` with ``Z_n`` from :mod:`scipy.special`."""
    t = oracle.scattered_trace(N)
    n = t.orders
    x = oracle.kappa * oracle.R
    Z = x * ss.h1vp(n, x) / ss.hankel1(n, x)
    return float(np.sum(Z.imag * np.abs(t.coeffs) ** 2))


def flux_balance(oracle: DiskOracle, N=None):
    """``(scattered flux, -Im cross flux)``; equal for lossless media."""
    N = oracle.n_modes if N is None else N
    t = oracle.scattered_trace(N)
    n = t.orders
    x, R = oracle.kappa * oracle.R, oracle.R
    Z = x * ss.h1vp(n, x) / ss.hankel1(n, x)
    cn = np.array([dict(zip(oracle.orders, oracle.c_n)).get(k, 0) for k in n])
    ui = math.sqrt(2 * math.pi) * cn * ss.jv(n, x)
    dui = math.sqrt(2 * math.pi) * cn * oracle.kappa * ss.jvp(n, x)
    us = t.coeffs
    cross = np.sum(np.conj(ui) * Z * us) + R * np.sum(np.conj(us) * dui)
    return float(np.sum(Z.imag * np.abs(us) ** 2)), float(-cross.imag)


# --------------------------------------------------------------- error norms


def fem_errors(sys, u_h, exact, exact_grad):
    """Absolute and reference ``L2`` / ``V,kappa`` norms of ``u_h - exact`` on B_R."""
    mesh = sys.mesh
    q = quadrature(mesh, which="all")
    pts = q.points.reshape(-1, 2)
    ue = np.asarray(exact(pts)).reshape(q.weights.shape)
    ge = np.asarray(exact_grad(pts)).reshape(q.weights.shape + (2,))
    u = np.asarray(u_h, dtype=complex)
    uq = np.einsum("qk,ek->eq", QUAD_BARY, u[q.triangles])
    p = mesh.nodes[q.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / area2[:, None, None]
    gu = np.einsum("ek,ekd->ed", u[q.triangles], grads)
    k2 = sys.ctx.kappa**2
    l2 = np.sum(q.weights * np.abs(uq - ue) ** 2)
    h1 = np.sum(q.weights * np.sum(np.abs(gu[:, None, :] - ge) ** 2, axis=-1))
    l2_ref = np.sum(q.weights * np.abs(ue) ** 2)
    h1_ref = np.sum(q.weights * np.sum(np.abs(ge) ** 2, axis=-1))
    return {
        "l2": math.sqrt(l2),
        "v": math.sqrt(h1 + k2 * l2),
        "l2_ref": math.sqrt(l2_ref),
        "v_ref": math.sqrt(h1_ref + k2 * l2_ref),
    }


@dataclass
class OracleTable:
    rows: list  # (h, h_max, ndofs, rel_l2, rel_v)
    l2_slope: float
    v_slope: float

    columns = ("h", "h_max", "ndofs", "rel_l2", "rel_v")


def _slope(e1, e2, h1, h2):
    return math.log(e1 / e2) / math.log(h1 / h2)


def fem_vs_oracle(meshes, oracle: DiskOracle, ctx: WaveContext, hs=None) -> OracleTable:
    """FEM+DtN (linear medium ``oracle.eps``) against the disk oracle.

    ``meshes`` is a sequence of :class:`Mesh2D` or of target mesh sizes.
    Slopes use the last two entries and the nominal sizes.
    """
    rows = []
    nominal = []
    for i, m in enumerate(meshes):
        if not isinstance(m, Mesh2D):
            nominal.append(float(m))
            m = mesh_disk(ctx.R, DiskObstacle(oracle.a), float(m))
        else:
            nominal.append(hs[i] if hs is not None else m.h_max())
        sys = assemble_linear(m, ctx)
        sol = solve_fixed_point(sys, Linear(eps=oracle.eps), oracle.incident())
        err = fem_errors(sys, sol.u_h, oracle.evaluate, oracle.gradient)
        rows.append((nominal[-1], m.h_max(), m.n_nodes, err["l2"] / err["l2_ref"], err["v"] / err["v_ref"]))
    if len(rows) >= 2:
        (h1, _, _, l1, v1), (h2, _, _, l2, v2) = rows[-2], rows[-1]
        sl, sv = _slope(l1, l2, h1, h2), _slope(v1, v2, h1, h2)
    else:
        sl = sv = float("nan")
    return OracleTable(rows, sl, sv)


# ----------------------------------------------------------- sweeps in N


@dataclass(frozen=True)
class Problem:
    """Everything needed to solve at a given truncation order."""

    mesh: Mesh2D
    kappa: float
    nl: object
    inc: object
    cfg: SolverConfig = SolverConfig()

    def solve(self, N):
        ctx = WaveContext(self.kappa, self.mesh.R, N)
        sys = assemble_linear(self.mesh, ctx)
        return sys, solve_fixed_point(sys, self.nl, self.inc, self.cfg)


@dataclass
class NTable:
    N_ref: int
    rows: list  # (N, abs_err_V, rel_err_V)

    columns = ("N", "abs_err_v", "rel_err_v")

    @property
    def rel(self):
        return np.array([r[2] for r in self.rows])


def convergence_in_N(problem: Problem, N_list, N_ref=None) -> NTable:
    """Discrete ``V, kappa`` error of ``u_N`` against ``u_{N_ref}`` (same mesh).

    ``N_ref`` defaults to ``2 max(N_list)``.  Rows follow the order of
    ``N_list``.
    """
    N_list = [int(n) for n in N_list]
    if not N_list or min(N_list) < 0:
        raise DomainError("N_list must be a nonempty list of nonnegative integers")
    N_ref = 2 * max(N_list) if N_ref is None else int(N_ref)
    try:
        sys_ref, ref = problem.solve(N_ref)
    except HelmholtzError as exc:
        raise SweepError(f"reference solve at N={N_ref} failed: {exc}", N=N_ref) from exc
    norm_ref = sys_ref.v_norm(ref.u_h)
    rows = []
    for N in N_list:
        if N == N_ref:
            rows.append((N, 0.0, 0.0))
            continue
        try:
            _, sol = problem.solve(N)
        except HelmholtzError as exc:
            raise SweepError(f"solve at N={N} failed: {exc}", N=N) from exc
        e = sys_ref.v_norm(sol.u_h - ref.u_h)
        rows.append((N, e, e / norm_ref if norm_ref > 0 else e))
    return NTable(N_ref, rows)


def manufactured_problem(mesh: Mesh2D, kappa: float, bandwidth: int, seed: int = 0) -> Problem:
    """Free-space problem whose exact solution is an entire wave of degree ``bandwidth``."""
    rng = np.random.default_rng(seed)
    n = bandwidth
    c = rng.standard_normal(2 * n + 1) + 1j * rng.standard_normal(2 * n + 1)
    t = boundary.FourierTrace(2, mesh.R, n, c, kappa)
    return Problem(mesh, kappa, Linear(eps=1.0), RegularSeries(t))


# ---------------------------------------------------------------- suites

LINEAR_FIXTURE = {"kappa": 2.0, "R": 1.0, "a": 0.5, "eps": 2.25}
SUITES = ("specfun", "garding", "oracle")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    check: str
    passed: bool
    value: float
    threshold: float


def symbol_band_suite(n_xi=50, xi_range=(0.1, 50.0), nmax=200, slack=1e-12):
    """Check every band and bound on a log grid of ``xi`` for ``n <= nmax``."""
    from . import specfun

    out = []
    for dim in (2, 3):
        bad = 0
        total = 0
        for xi in np.geomspace(xi_range[0], xi_range[1], n_xi):
            vals, logs = specfun.dtn_symbols(dim, nmax, float(xi))
            for n in range(nmax + 1):
                sym = specfun.DtnSymbol(dim, n, float(xi), complex(vals[n]), float(logs[n]))
                total += 1
                if specfun.symbol_band_violations(sym, slack):
                    bad += 1
        out.append(CheckResult("specfun", f"symbol_bands_d{dim}", bad == 0, float(bad), 0.0))
        out.append(CheckResult("specfun", f"symbols_checked_d{dim}", total > 0, float(total), 1.0))
    return out


def garding_vectors(mesh, count, rng):
    """Random nodal vectors: white noise plus smooth angular/radial modes."""
    x, y = mesh.nodes.T
    r, phi = np.hypot(x, y), np.arctan2(y, x)
    vs = []
    for i in range(count):
        if i % 2 == 0:
            v = rng.standard_normal(mesh.n_nodes) + 1j * rng.standard_normal(mesh.n_nodes)
        else:
            n = rng.integers(-12, 13)
            v = (r / mesh.R) ** abs(n) * np.exp(1j * n * phi) * (rng.standard_normal() + 1j * rng.standard_normal())
            v = v + 0.1 * (rng.standard_normal(mesh.n_nodes) + 1j * rng.standard_normal(mesh.n_nodes))
        vs.append(v)
    return vs


def garding_suite(hs=(0.2, 0.1, 0.05), kappas=(1.0, 2.0, 5.0), count=200, seed=0, tol=1e-10):
    """``Re a_N(v, v) >= ||v||_{V,kappa}^2 - 2 kappa^2 ||v||^2 - tol`` with ``||v||_{V,kappa} = 1``."""
    rng = np.random.default_rng(seed)
    R = 1.0
    meshes = [mesh_disk(R, DiskObstacle(0.5), h) for h in hs]
    out = []
    worst = math.inf
    dtn_sign_worst = math.inf
    for mesh, h in zip(meshes, hs):
        vs = garding_vectors(mesh, count, rng)
        for kappa in kappas:
            for N in sorted({int(math.ceil(kappa * R)) + 2, int(math.ceil(2 * kappa * R))}):
                sys = assemble_linear(mesh, WaveContext(kappa, R, N), factorize=False)
                G = sys.gram()
                for v in vs:
                    v = v / math.sqrt(np.vdot(v, G @ v).real)
                    lhs = np.vdot(v, sys.apply(v)).real
                    rhs = 1.0 - 2 * kappa**2 * np.vdot(v, sys.mass @ v).real
                    worst = min(worst, lhs - rhs + tol)
                    bdb = np.vdot(v, sys.B @ (sys.D * (sys.B.conj().T @ v)))
                    dtn_sign_worst = min(dtn_sign_worst, -bdb.real)
    out.append(CheckResult("garding", "garding_margin_min", worst >= 0, float(worst), 0.0))
    out.append(CheckResult("garding", "minus_re_dtn_form_min", dtn_sign_worst >= 0, float(dtn_sign_worst), 0.0))
    return out


def oracle_suite(hs=(0.1, 0.05, 0.025)):
    f = LINEAR_FIXTURE
    ctx = WaveContext(f["kappa"], f["R"], int(math.ceil(f["kappa"] * f["R"])) + 10)
    oracle = DiskOracle(f["a"], f["eps"], f["kappa"], f["R"])
    tab = fem_vs_oracle(list(hs), oracle, ctx)
    at = {row[0]: row for row in tab.rows}
    e05 = at.get(0.05, tab.rows[-1])[3]
    return [
        CheckResult("oracle", "rel_l2_h0.05", e05 <= 0.02, float(e05), 0.02),
        CheckResult("oracle", "l2_slope", 1.7 <= tab.l2_slope <= 2.3, float(tab.l2_slope), 2.0),
        CheckResult("oracle", "v_slope", 0.8 <= tab.v_slope <= 1.2, float(tab.v_slope), 1.0),
        CheckResult("oracle", "interface_mismatch", oracle.interface_mismatch() < 1e-11, oracle.interface_mismatch(), 1e-11),
    ]


def run_suite(name: str):
    """Run ``specfun``, ``garding``, ``oracle`` or ``all``; returns check results."""
    if name == "all":
        return [r for s in SUITES for r in run_suite(s)]
    if name == "specfun":
        return symbol_band_suite()
    if name == "garding":
        return garding_suite()
    if name == "oracle":
        return oracle_suite()
    raise DomainError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
