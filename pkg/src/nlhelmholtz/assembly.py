"""P1 finite elements for the truncated DtN problem on B_R.

Matrix convention: ``K[i, j] = a_N(phi_j, phi_i)`` so that ``v^H K v`` is
``a_N(v, v)`` and right-hand sides hold ``l(phi_i)``.  The boundary term is
kept as a low-rank update ``B D B^H`` with ``B = R conj(M)`` and
``D = Z_n(kappa R)/R^2``, where ``M[i, n]`` are the analytic harmonic moments
of the hat functions on the S_R ring.  Solves go through a sparse LU of the
bordered matrix

    [ A_c   -B     ] [x]   [b]
    [ B^H   -D^{-1}] [y] = [0],

which is equivalent to ``(A_c - B D B^H) x = b`` and never densifies the DtN
coupling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import boundary, specfun
from .context import WaveContext
from .errors import AssemblyError, ConfigurationError
from .mesh import OBSTACLE, Mesh2D

COND_LIMIT = 1e12

# 6-point degree-4 rule on the reference triangle (barycentric, weights sum to 1)
_QA, _QB = 0.445948490915965, 0.091576213509771
_QW1, _QW2 = 0.223381589678011, 0.109951743655322
QUAD_BARY = np.array(
    [
        [_QA, _QA, 1 - 2 * _QA],
        [_QA, 1 - 2 * _QA, _QA],
        [1 - 2 * _QA, _QA, _QA],
        [_QB, _QB, 1 - 2 * _QB],
        [_QB, 1 - 2 * _QB, _QB],
        [1 - 2 * _QB, _QB, _QB],
    ]
)
QUAD_W = np.array([_QW1] * 3 + [_QW2] * 3)


# ------------------------------------------------------------ element kernels


def _geometry(mesh: Mesh2D):
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    # gradients of barycentric coordinates
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area)[:, None, None]
    return area, grads


def _scatter(mesh, local, n):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def stiffness_matrix(mesh: Mesh2D) -> sp.csr_matrix:
    area, g = _geometry(mesh)
    local = np.einsum("eid,ejd->eij", g, g) * area[:, None, None]
    return _scatter(mesh, local, mesh.n_nodes)


def mass_matrix(mesh: Mesh2D) -> sp.csr_matrix:
    area, _ = _geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, area[:, None, None] * ref[None], mesh.n_nodes)


@dataclass(frozen=True, eq=False)
class QuadratureData:
    """Quadrature points on a subset of triangles (default: the obstacle)."""

    elements: np.ndarray  # triangle ids
    points: np.ndarray  # (E, Q, 2)
    weights: np.ndarray  # (E, Q), include the element area
    triangles: np.ndarray  # (E, 3)


def quadrature(mesh: Mesh2D, which="obstacle") -> QuadratureData:
    ids = np.flatnonzero(mesh.tags == OBSTACLE) if which == "obstacle" else np.arange(len(mesh.triangles))
    tri = mesh.triangles[ids]
    p = mesh.nodes[tri]
    pts = np.einsum("qk,ekd->eqd", QUAD_BARY, p)
    area, _ = _geometry(mesh)
    w = area[ids][:, None] * QUAD_W[None, :]
    return QuadratureData(ids, pts, w, tri)


def weighted_mass(mesh: Mesh2D, coeff, quad: QuadratureData | None = None) -> sp.csr_matrix:
    """``C[i, j] = int_Omega coeff(x) phi_j phi_i`` with ``coeff`` a callable or constant."""
    q = quadrature(mesh) if quad is None else quad
    if len(q.elements) == 0:
        return sp.csr_matrix((mesh.n_nodes, mesh.n_nodes), dtype=complex)
    vals = _field(coeff, q.points)
    local = np.einsum("eq,qi,qj->eij", q.weights * vals, QUAD_BARY, QUAD_BARY)
    rows = np.repeat(q.triangles, 3, axis=1).ravel()
    cols = np.tile(q.triangles, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))


def _field(f, pts):
    if callable(f):
        return np.broadcast_to(np.asarray(f(pts), dtype=complex), pts.shape[:-1])
    return np.full(pts.shape[:-1], complex(f))


# -------------------------------------------------------------- the system


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Discrete ``a_N`` (optionally with a linear contrast) and its factorization.

    Attributes
    ----------
    A : sparse matrix
        ``(grad w, grad v) - kappa^2 (w, v)`` over ``B_R``.
    B : sparse matrix
        ``R conj(M)``, nonzero only on S_R ring rows; shape ``(dofs, 2N+1)``.
    D : ndarray
        ``Z_n(kappa R)/R^2`` for ``n = -N..N``.
    contrast : sparse matrix or None
        ``kappa^2 ((c0 - 1) w, v)_Omega`` subtracted from ``A``.
    """

    mesh: Mesh2D
    ctx: WaveContext
    A: sp.csr_matrix
    B: sp.csr_matrix
    D: np.ndarray
    stiffness: sp.csr_matrix = field(repr=False)
    mass: sp.csr_matrix = field(repr=False)
    moments: np.ndarray = field(repr=False)
    contrast: sp.csr_matrix | None = field(default=None, repr=False)
    lu: object = field(default=None, repr=False)
    condition: float = float("nan")
    quad: QuadratureData | None = field(default=None, repr=False)
    contrast_key: object = None

    @property
    def ndofs(self):
        return self.mesh.n_nodes

    @property
    def volume_matrix(self):
        return self.A if self.contrast is None else self.A - self.contrast

    def apply(self, x, include_contrast=True):
        """``K x`` where ``K = A (- contrast) - B D B^H``."""
        x = np.asarray(x, dtype=complex)
        M = self.volume_matrix if include_contrast else self.A
        return M @ x - self.B @ (self.D * (self.B.conj().T @ x))

    def solve(self, b):
        b = np.asarray(b, dtype=complex)
        rhs = np.concatenate([b, np.zeros(self.D.size, dtype=complex)])
        return self.lu.solve(rhs)[: self.ndofs]

    def trace_coeffs(self, x):
        """Harmonic coefficients ``v_n`` of the S_R trace (``n = -N..N``)."""
        x = np.asarray(x, dtype=complex)
        return self.moments.T @ x[self.mesh.ring]

    def trace(self, x, N=None) -> boundary.FourierTrace:
        """Full trace at order ``N`` (defaults to the context's)."""
        N = self.ctx.N if N is None else N
        M = self.moments if N == self.ctx.N else boundary.p1_trace_moments(self.mesh.ring_angles, N)
        c = M.T @ np.asarray(x, dtype=complex)[self.mesh.ring]
        return boundary.FourierTrace(2, self.ctx.R, N, c, self.ctx.kappa)

    def gram(self):
        """Gram matrix of the wavenumber norm ``|v|_1^2 + kappa^2 ||v||^2``."""
        return self.stiffness + self.ctx.kappa**2 * self.mass

    def v_norm(self, x):
        x = np.asarray(x, dtype=complex)
        return math.sqrt(max(np.vdot(x, self.gram() @ x).real, 0.0))

    def l2_norm(self, x):
        x = np.asarray(x, dtype=complex)
        return math.sqrt(max(np.vdot(x, self.mass @ x).real, 0.0))

    def with_contrast(self, coeff, key=None) -> "AssembledSystem":
        """Return a new system with ``kappa^2 ((coeff - 1) w, v)_Omega`` subtracted.

        ``key`` identifies the contrast so callers can detect reuse.
        """
        quad = self.quad if self.quad is not None else quadrature(self.mesh)
        C = self.ctx.kappa**2 * weighted_mass(self.mesh, lambda x: _field(coeff, x) - 1.0, quad)
        if not np.all(np.isfinite(C.data)):
            raise AssemblyError("linear contrast produced non-finite entries")
        lu, cond = _factorize(self.A - C, self.B, self.D)
        return AssembledSystem(
            self.mesh, self.ctx, self.A, self.B, self.D, self.stiffness, self.mass, self.moments,
            C.tocsr(), lu, cond, quad, key,
        )

    def export_coo(self, path):
        """Write ``K`` volume part and boundary data in coordinate text form."""
        V = self.volume_matrix.tocoo()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# volume {V.shape[0]} {V.nnz}\n")
            for i, j, v in zip(V.row, V.col, V.data):
                fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")
            Bc = self.B.tocoo()
            fh.write(f"# boundary {Bc.shape[1]} {Bc.nnz}\n")
            for i, j, v in zip(Bc.row, Bc.col, Bc.data):
                fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")
            fh.write("# D\n")
            for d in self.D:
                fh.write(f"{d.real:.17g} {d.imag:.17g}\n")


def _bordered(A, B, D):
    return sp.bmat([[A, -B], [B.conj().T, sp.diags(-1.0 / D)]], format="csc")


def _factorize(A, B, D):
    K = _bordered(A.astype(complex), B, D)
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise AssemblyError(
            f"factorization failed ({exc}); kappa may sit on a resonance of the truncated problem"
        ) from exc
    n = K.shape[0]
    inv = spla.LinearOperator(
        (n, n), matvec=lu.solve, rmatvec=lambda y: lu.solve(np.asarray(y), trans="H"), dtype=complex
    )
    cond = float(spla.norm(K, 1) * spla.onenormest(inv))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise AssemblyError(
            f"system is numerically singular (condition estimate {cond:.3e}); "
            "kappa may sit on a resonance of the truncated problem"
        )
    return lu, cond


def assemble_linear(mesh: Mesh2D, ctx: WaveContext, factorize: bool = True) -> AssembledSystem:
    """Assemble and (unless ``factorize=False``) factorize ``a_N`` on ``mesh``.

    Raises
    ------
    ConfigurationError
        If the mesh radius differs from ``ctx.R`` or ``ctx.dim != 2``.
    AssemblyError
        On non-finite entries or a (numerically) singular system.
    """
    if ctx.dim != 2:
        raise ConfigurationError("volume assembly is two-dimensional only", key="dim")
    if abs(mesh.R - ctx.R) > 1e-12 * ctx.R:
        raise ConfigurationError(f"mesh radius {mesh.R} differs from R={ctx.R}", key="R")
    S = stiffness_matrix(mesh)
    Mm = mass_matrix(mesh)
    A = (S - ctx.kappa**2 * Mm).astype(complex).tocsr()
    moments = boundary.p1_trace_moments(mesh.ring_angles, ctx.N)
    nb = moments.shape[1]
    Bring = ctx.R * moments.conj()
    rows = np.repeat(mesh.ring, nb)
    cols = np.tile(np.arange(nb), len(mesh.ring))
    B = sp.csr_matrix((Bring.ravel(), (rows, cols)), shape=(mesh.n_nodes, nb))
    D = boundary.symbol_vector(2, ctx.N, ctx.xi) / ctx.R**2
    if not (np.all(np.isfinite(A.data)) and np.all(np.isfinite(D))):
        raise AssemblyError("assembly produced non-finite entries")
    lu, cond = _factorize(A, B, D) if factorize else (None, float("nan"))
    return AssembledSystem(mesh, ctx, A, B, D, S.tocsr(), Mm.tocsr(), moments, None, lu, cond, quadrature(mesh))


# --------------------------------------------------------- incident fields


def _bessel_j_signed(nmax, x):
    """``J_n(x)`` and ``J_n'(x)`` for ``n = -nmax..nmax``."""
    j = specfun.besselj_all(nmax + 1, x)
    n = np.arange(-nmax, nmax + 1)
    sign = np.where((n < 0) & (n % 2 == 1), -1.0, 1.0)
    jn = sign * j[np.abs(n)]
    # J_n' = (J_{n-1} - J_{n+1})/2 with the same signed lookup
    def signed(k):
        s = np.where((k < 0) & (k % 2 != 0), -1.0, 1.0)
        return s * j[np.abs(k)]

    djn = 0.5 * (signed(n - 1) - signed(n + 1))
    return jn, djn


def incident_modes(kappa, R):
    """Number of modes that resolve a regular field on S_R to round-off."""
    xi = kappa * R
    return int(math.ceil(xi + 12.0 * xi ** (1.0 / 3.0) + 20))


@dataclass(frozen=True)
class PlaneWave:
    """``u = alpha exp(i (Phi x1 - Gamma x2))``, ``Phi = kappa sin phi``, ``Gamma = kappa cos phi``."""

    amplitude: complex = 1.0
    angle: float = 0.0
    tag: str = "plane"

    def __post_init__(self):
        if not abs(self.angle) < math.pi:
            raise ConfigurationError(f"incidence angle must satisfy |phi| < pi, got {self.angle}", key="incident.angle")

    def wavenumbers(self, kappa):
        return kappa * math.sin(self.angle), kappa * math.cos(self.angle)

    def evaluate(self, pts, kappa):
        pts = np.asarray(pts, dtype=float)
        Phi, Gam = self.wavenumbers(kappa)
        return self.amplitude * np.exp(1j * (Phi * pts[..., 0] - Gam * pts[..., 1]))

    def gradient(self, pts, kappa):
        Phi, Gam = self.wavenumbers(kappa)
        u = self.evaluate(pts, kappa)
        return np.stack([1j * Phi * u, -1j * Gam * u], axis=-1)

    def coefficients(self, kappa, R, nmax):
        """Trace and radial-derivative coefficients on S_R for ``|n| <= nmax``."""
        jn, djn = _bessel_j_signed(nmax, kappa * R)
        n = np.arange(-nmax, nmax + 1)
        # J_{-n} = (-1)^n J_n
        par = np.where(n % 2 == 0, 1.0, -1.0)
        phase = self.amplitude * math.sqrt(2 * math.pi) * par * np.exp(-1j * n * self.angle)
        return phase * jn, kappa * phase * djn


@dataclass(frozen=True)
class RadiatingSeries:
    """Radiating field whose Dirichlet data on S_R is ``trace``."""

    trace: boundary.FourierTrace
    tag: str = "radiating"

    def coefficients(self, kappa, R, nmax):
        t = self.trace.resized(nmax)
        d = np.zeros(t.coeffs.size, dtype=complex)
        for k, n in enumerate(t.orders):
            if t.coeffs[k] != 0:
                h = specfun.hankel_cyl(int(n), kappa * R)
                d[k] = kappa * h.derivative / h.value * t.coeffs[k]
        return t.coeffs.copy(), d

    def evaluate(self, pts, kappa):
        ctx = WaveContext(kappa, self.trace.R, self.trace.N)
        return boundary.exterior_field(self.trace, ctx, pts)


@dataclass(frozen=True)
class RegularSeries:
    """Entire Helmholtz solution ``sum c_n J_n(kappa r) Y_n`` with trace ``trace`` on S_R."""

    trace: boundary.FourierTrace
    tag: str = "regular"

    def _amplitudes(self, kappa, nmax):
        t = self.trace.resized(nmax)
        jn, djn = _bessel_j_signed(nmax, kappa * t.R)
        active = t.coeffs != 0
        # a zero is small relative to its neighbours; high orders are merely small
        nb = np.maximum(np.abs(np.roll(jn, 1)), np.abs(np.roll(jn, -1)))
        if np.any(np.abs(jn[active]) < 1e-12 * nb[active]):
            raise ConfigurationError("kappa R is (near) a Bessel zero of an active mode", key="kappa")
        c = np.where(active, t.coeffs / np.where(active, jn, 1.0), 0)
        return t, c, jn, djn

    def coefficients(self, kappa, R, nmax):
        t, c, jn, djn = self._amplitudes(kappa, nmax)
        return t.coeffs.copy(), kappa * c * djn

    def evaluate(self, pts, kappa):
        pts = np.asarray(pts, dtype=float)
        N = self.trace.N
        _, c, _, _ = self._amplitudes(kappa, N)
        flat = pts.reshape(-1, 2)
        r = np.hypot(flat[:, 0], flat[:, 1])
        phi = np.arctan2(flat[:, 1], flat[:, 0])
        Y = specfun.circular_harmonics(N, phi)
        J = np.empty((len(r), 2 * N + 1))
        for i, rr in enumerate(r):
            J[i] = _bessel_j_signed(N, kappa * rr)[0] if rr > 0 else (np.arange(-N, N + 1) == 0)
        return (J * Y) @ c if pts.ndim > 1 else complex(((J * Y) @ c)[0])


def incident_functionals(inc, ctx: WaveContext, mesh: Mesh2D) -> np.ndarray:
    """Vector ``l_i = (d_r u_inc - T_{kappa,N} u_inc, phi_i)_{S_R}``.

    Uses ``N_inc`` modes for ``d_r u_inc``; the truncated DtN part acts only
    on ``|n| <= ctx.N``.
    """
    if abs(mesh.R - ctx.R) > 1e-12 * ctx.R:
        raise ConfigurationError(f"mesh radius {mesh.R} differs from R={ctx.R}", key="R")
    if isinstance(inc, (RadiatingSeries, RegularSeries)) and abs(inc.trace.R - ctx.R) > 1e-12 * ctx.R:
        raise ConfigurationError("incident trace radius differs from R", key="R")
    n_inc = max(ctx.N, incident_modes(ctx.kappa, ctx.R))
    if isinstance(inc, (RadiatingSeries, RegularSeries)):
        n_inc = max(n_inc, inc.trace.N)
    u_n, du_n = inc.coefficients(ctx.kappa, ctx.R, n_inc)
    orders = np.arange(-n_inc, n_inc + 1)
    sym = np.zeros(orders.size, dtype=complex)
    keep = np.abs(orders) <= ctx.N
    sym[keep] = boundary.symbol_vector(2, ctx.N, ctx.xi)
    g = du_n - sym / ctx.R * u_n
    M = boundary.p1_trace_moments(mesh.ring_angles, n_inc)
    out = np.zeros(mesh.n_nodes, dtype=complex)
    out[mesh.ring] = ctx.R * (M.conj() @ g)
    return out


def nonlinear_rhs(u_h, nl, ctx: WaveContext, mesh: Mesh2D, quad: QuadratureData | None = None, increment=False):
    """``l_contr(u) + l_src(u)`` tested against every hat function.

    ``l_contr(u)(v) = kappa^2 ((c(., u) - 1) u, v)_Omega``.  With
    ``increment=True`` the linear part ``c(., 0)`` replaces the ``1``, i.e.
    only the nonlinear increment is returned (the linear contrast then lives
    in the system matrix).

    Raises
    ------
    AssemblyError
        If the material law returns non-finite values; the message names the
        first offending triangle.
    """
    q = quadrature(mesh) if quad is None else quad
    out = np.zeros(mesh.n_nodes, dtype=complex)
    if len(q.elements) == 0:
        return out
    u = np.asarray(u_h, dtype=complex)
    uq = np.einsum("qk,ek->eq", QUAD_BARY, u[q.triangles])
    c = nl.c(q.points, uq)
    base = nl.c(q.points, np.zeros_like(uq)) if increment else 1.0
    f = nl.f(q.points, uq)
    integrand = ctx.kappa**2 * (c - base) * uq + f
    bad = ~np.isfinite(integrand)
    if bad.any():
        e = int(q.elements[np.flatnonzero(bad.any(axis=1))[0]])
        raise AssemblyError(f"nonlinearity returned non-finite values on triangle {e}")
    local = np.einsum("eq,qi->ei", q.weights * integrand, QUAD_BARY)
    np.add.at(out, q.triangles.ravel(), local.ravel())
    return out
