"""Material laws, the damped Picard iteration and its diagnostics.

The linear part ``c(x, 0)`` of the material law is folded into the system
matrix (see :meth:`AssembledSystem.with_contrast`), so the iteration map is

    u <- K^{-1} (l_inc + l_src(u) + kappa^2 ((c(u) - c(0)) u, .)_Omega),

which is affine-free for linear media: one step reproduces the exact discrete
solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import boundary
from .assembly import AssembledSystem, incident_functionals, incident_modes, nonlinear_rhs
from .context import WaveContext
from .errors import CapabilityError, ConfigurationError, DivergenceError

_EPS = np.finfo(float).eps
_BLOWUP = 1e8


def _eval(field_, x):
    if callable(field_):
        return np.broadcast_to(np.asarray(field_(x), dtype=complex), np.shape(x)[:-1])
    return np.full(np.shape(x)[:-1], complex(field_))


# ------------------------------------------------------------ nonlinearities


class Nonlinearity:
    """Material law ``c(x, u)`` and source ``f(x, u)`` on the obstacle.

    Fields (``eps``, ``alpha``) are constants or callables of points with
    shape ``(..., 2)``.  Outside the obstacle ``c = 1`` and ``f = 0``; the
    assembly only ever evaluates these laws on obstacle quadrature points.
    """

    tag = "custom"
    p_c = None
    p_f = None

    def c(self, x, u):
        raise NotImplementedError

    def f(self, x, u):
        return np.zeros(np.shape(u), dtype=complex)

    def linear_part(self, x):
        """``c(x, 0)``, the contrast kept in the system matrix."""
        return self.c(x, np.zeros(np.shape(x)[:-1], dtype=complex))

    def L_c(self, x, xi, eta):
        raise NotImplementedError

    def L_f(self, x, xi, eta):
        return np.zeros(np.broadcast_shapes(np.shape(xi), np.shape(eta)))

    @property
    def is_linear(self):
        return False


@dataclass(frozen=True)
class Linear(Nonlinearity):
    eps: object = 1.0
    source: object = 0.0
    tag = "linear"
    p_c = 2
    p_f = 2

    def c(self, x, u):
        return _eval(self.eps, x) + 0 * np.asarray(u)

    def f(self, x, u):
        return _eval(self.source, x) + 0 * np.asarray(u)

    def L_c(self, x, xi, eta):
        return np.zeros(np.broadcast_shapes(np.shape(xi), np.shape(eta)))

    @property
    def is_linear(self):
        return True


@dataclass(frozen=True)
class Kerr(Nonlinearity):
    """``c = eps + alpha |u|^2``."""

    eps: object = 1.0
    alpha: object = 0.0
    tag = "kerr"
    p_c = 4

    def c(self, x, u):
        return _eval(self.eps, x) + _eval(self.alpha, x) * np.abs(u) ** 2

    def L_c(self, x, xi, eta):
        return np.abs(_eval(self.alpha, x)) * (np.abs(xi) + np.abs(eta))


@dataclass(frozen=True)
class SaturatedKerr(Nonlinearity):
    """``c = eps + alpha |u|^2 / (1 + gamma |u|^2)`` with ``gamma > 0``."""

    eps: object = 1.0
    alpha: object = 0.0
    gamma: float = 1.0
    tag = "satkerr"
    p_c = 4

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigurationError(f"saturation gamma must be positive, got {self.gamma}", key="nonlinearity.gamma")

    def c(self, x, u):
        a2 = np.abs(u) ** 2
        return _eval(self.eps, x) + _eval(self.alpha, x) * a2 / (1.0 + self.gamma * a2)

    L_c = Kerr.L_c


@dataclass(frozen=True)
class Custom(Nonlinearity):
    """User law; ``c_fn(x, u)`` and ``f_fn(x, u)`` must be vectorized."""

    c_fn: object = None
    f_fn: object = None
    L_c_fn: object = None
    L_f_fn: object = None
    p_c: float | None = None
    p_f: float | None = None
    tag = "custom"

    def c(self, x, u):
        return np.asarray(self.c_fn(x, u), dtype=complex)

    def f(self, x, u):
        if self.f_fn is None:
            return np.zeros(np.shape(u), dtype=complex)
        return np.asarray(self.f_fn(x, u), dtype=complex)

    def L_c(self, x, xi, eta):
        if self.L_c_fn is None:
            raise CapabilityError("custom nonlinearity has no Lipschitz function L_c")
        return self.L_c_fn(x, xi, eta)

    def L_f(self, x, xi, eta):
        if self.L_f_fn is None:
            raise CapabilityError("custom nonlinearity has no Lipschitz function L_f")
        return self.L_f_fn(x, xi, eta)


# ------------------------------------------------------------------ solving


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (self.tol >= 1e-14):
            raise ConfigurationError(f"solver.tol: must be >= 1e-14, got {self.tol}", key="solver.tol")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"solver.max_iter: must be a positive integer, got {self.max_iter}", key="solver.max_iter")
        if not (0 < self.damping <= 1):
            raise ConfigurationError(f"solver.damping: must lie in (0, 1], got {self.damping}", key="solver.damping")


@dataclass(eq=False)
class Solution:
    u_h: np.ndarray
    residual_history: np.ndarray
    contraction_estimates: np.ndarray
    converged: bool
    iterations: int
    status: str
    damping: float = 1.0
    step_norms: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def residual(self):
        return float(self.residual_history[-1]) if len(self.residual_history) else float("nan")

    @property
    def contraction(self):
        """Largest contraction ratio among steps above round-off."""
        scale = max(np.linalg.norm(self.u_h), 1e-300)
        est = self.contraction_estimates
        steps = self.step_norms[1 : len(est) + 1]
        ok = steps > 1e3 * _EPS * scale
        return float(np.max(est[ok])) if np.any(ok) else 0.0


def contrast_key(nl: Nonlinearity):
    """Hashable identity of the linear part ``c(x, 0)`` of ``nl``."""
    if isinstance(nl, (Linear, Kerr, SaturatedKerr)):
        return ("eps", nl.eps if not callable(nl.eps) else id(nl.eps))
    return ("law", id(nl))


def prepare_system(sys: AssembledSystem, nl: Nonlinearity) -> AssembledSystem:
    """Fold the linear contrast ``c(x, 0) - 1`` of ``nl`` into ``sys``."""
    key = contrast_key(nl)
    if sys.contrast is not None and sys.contrast_key == key:
        return sys
    return sys.with_contrast(nl.linear_part, key)


def solve_fixed_point(sys: AssembledSystem, nl: Nonlinearity, inc, cfg: SolverConfig = SolverConfig()) -> Solution:
    """Damped Picard iteration ``u <- (1 - theta) u + theta K^{-1} F(u)``.

    ``sys`` may be the bare system from :func:`assemble_linear` (the linear
    contrast of ``nl`` is then folded in here) or one already returned by
    :func:`prepare_system`.  The iteration starts from ``K^{-1} l_inc``.

    Raises
    ------
    DivergenceError
        If the residual grows over 5 consecutive steps (or the iterate blows
        up) even at ``theta = 1/8``; the best iterate is attached as
        ``exc.solution``.  Each halving of ``theta`` restarts from the best
        iterate seen so far.
    """
    sys = prepare_system(sys, nl)
    ctx, mesh, quad = sys.ctx, sys.mesh, sys.quad
    l_inc = incident_functionals(inc, ctx, mesh) if inc is not None else np.zeros(sys.ndofs, complex)

    def F(u):
        return l_inc + nonlinear_rhs(u, nl, ctx, mesh, quad, increment=True)

    def residual(u, Fu):
        r = np.linalg.norm(sys.apply(u) - Fu)
        d = np.linalg.norm(Fu)
        return float(r / d) if d > 0 else float(r)

    theta = cfg.damping
    u = sys.solve(l_inc)
    Fu = F(u)
    scale = max(float(np.linalg.norm(u)), 1.0)
    best = (math.inf, u, Fu)
    res, steps, contr = [], [], []
    growth = 0
    status = "max_iter"
    k = 0
    while k < cfg.max_iter:
        k += 1
        u_new = sys.solve(Fu)
        if theta < 1.0:
            u_new = (1.0 - theta) * u + theta * u_new
        step = float(np.linalg.norm(u_new - u))
        # blow-up guard: never feed runaway iterates to the material law
        if np.all(np.isfinite(u_new)) and np.linalg.norm(u_new) <= _BLOWUP * scale:
            F_new = F(u_new)
            r = residual(u_new, F_new)
        else:
            F_new, r = None, math.inf
        if steps:
            contr.append(step / steps[-1] if steps[-1] > 0 else 0.0)
        steps.append(step)
        res.append(r)
        if r <= cfg.tol:
            u, status = u_new, "converged"
            break
        growth = growth + 1 if len(res) > 1 and r > res[-2] else 0
        if growth >= 5 or not math.isfinite(r):
            if theta > 0.125 + 1e-15:
                theta /= 2.0
                growth = 0
                _, u, Fu = best
                continue
            _, u_best, _ = best
            sol = Solution(u_best, np.array(res), np.array(contr), False, k, "diverged", theta, np.array(steps))
            last = contr[-1] if contr else float("nan")
            raise DivergenceError(
                f"fixed-point iteration diverged after {k} steps (theta={theta}, last contraction {last:.3g})",
                solution=sol,
            )
        if r < best[0]:
            best = (r, u_new, F_new)
        u, Fu = u_new, F_new
    return Solution(u, np.array(res), np.array(contr), status == "converged", k, status, theta, np.array(steps))


# ------------------------------------------------------- sufficiency checker


@dataclass(frozen=True)
class SufficiencyReport:
    status: str  # satisfied | violated | indeterminate
    margin_ball: float | None
    margin_contraction: float | None
    L_F: float | None
    critical_alpha: float | None
    terms: dict
    reason: str = ""


def _obstacle_norms(nl, quad):
    """``||eps - 1||_{L2(Omega)}`` and ``||alpha||_inf`` (None if unknown)."""
    eps = getattr(nl, "eps", 1.0)
    alpha = getattr(nl, "alpha", 0.0)
    if not callable(eps) and complex(eps) == 1:
        g = 0.0
    elif quad is None:
        g = None
    else:
        vals = _eval(eps, quad.points) - 1.0
        g = math.sqrt(float(np.sum(quad.weights * np.abs(vals) ** 2)))
    if not callable(alpha):
        A = abs(complex(alpha))
    elif quad is None:
        A = None
    else:
        A = float(np.max(np.abs(_eval(alpha, quad.points)))) if quad.points.size else 0.0
    return g, A


def incident_residual_norm(inc, ctx: WaveContext) -> float:
    """``||d_r u_inc - T_{kappa,N} u_inc||_{-1/2, S_R}``; zero below ``1e-12`` relative."""
    if inc is None:
        return 0.0
    n_inc = max(ctx.N, incident_modes(ctx.kappa, ctx.R))
    if hasattr(inc, "trace"):
        n_inc = max(n_inc, inc.trace.N)
    u_n, du_n = inc.coefficients(ctx.kappa, ctx.R, n_inc)
    orders = np.arange(-n_inc, n_inc + 1)
    sym = np.zeros(orders.size, dtype=complex)
    keep = np.abs(orders) <= ctx.N
    sym[keep] = boundary.symbol_vector(2, ctx.N, ctx.xi)
    g = boundary.FourierTrace(2, ctx.R, n_inc, du_n - sym / ctx.R * u_n, ctx.kappa)
    eta = boundary.dual_norm_half(g)
    # exact cancellation (radiating data) is reported as zero, not round-off
    ref = boundary.dual_norm_half(boundary.FourierTrace(2, ctx.R, n_inc, du_n, ctx.kappa))
    return 0.0 if eta <= 1e-12 * ref else eta


def check_sufficient_conditions(nl, inc, ctx: WaveContext, rho: float, beta_est: float, constants=None, sys=None):
    """Evaluate the Kerr-type smallness conditions at radius ``rho``.

    Conditions checked (``g = ||eps - 1||_{L2(Omega)}``, ``A = ||alpha||_inf``,
    ``eta`` the incident boundary residual in ``H^{-1/2}``)::

        kappa^2 [g + C_emb A rho^2] rho + C_tr eta <= rho beta
        L_F := kappa^2 [g + 3 C_emb A rho^2] < beta

    A constant is only required when it multiplies a nonzero quantity; a
    missing required constant yields ``status="indeterminate"``.
    """
    if not (rho > 0):
        raise ConfigurationError(f"rho must be positive, got {rho}", key="rho")
    if not (beta_est > 0):
        raise ConfigurationError(f"beta must be positive, got {beta_est}", key="beta")
    constants = dict(constants or {})
    if not isinstance(nl, (Linear, Kerr, SaturatedKerr)):
        return SufficiencyReport("indeterminate", None, None, None, None, {}, "no specialization for custom laws")
    src = getattr(nl, "source", 0.0)
    if callable(src) or complex(src) != 0:
        return SufficiencyReport("indeterminate", None, None, None, None, {}, "source term present")
    quad = sys.quad if sys is not None else None
    g, A = _obstacle_norms(nl, quad)
    if isinstance(nl, Linear):
        A = 0.0
    eta = incident_residual_norm(inc, ctx)
    terms = {"g": g, "alpha_sup": A, "eta": eta, "kappa": ctx.kappa, "rho": rho, "beta": beta_est}
    missing = []
    if g is None or A is None:
        missing.append("mesh (field norms)")
    C_emb = constants.get("C_emb")
    C_tr = constants.get("C_tr")
    if A not in (None, 0.0) and C_emb is None:
        missing.append("C_emb")
    if eta > 0 and C_tr is None:
        missing.append("C_tr")
    if missing:
        return SufficiencyReport("indeterminate", None, None, None, None, terms, "missing " + ", ".join(missing))
    k2 = ctx.kappa**2
    ce = C_emb if C_emb is not None else 0.0
    ct = C_tr if C_tr is not None else 0.0
    lhs1 = k2 * (g + ce * A * rho**2) * rho + ct * eta
    L_F = k2 * (g + 3.0 * ce * A * rho**2)
    m1 = rho * beta_est - lhs1
    m2 = beta_est - L_F
    crit = None
    if ce > 0:
        a1 = (rho * beta_est - k2 * g * rho - ct * eta) / (k2 * ce * rho**3)
        a2 = (beta_est - k2 * g) / (3.0 * k2 * ce * rho**2)
        crit = min(a1, a2)
    terms.update({"C_emb": C_emb, "C_tr": C_tr, "lhs_ball": lhs1})
    ok = m1 >= 0 and m2 > 0
    return SufficiencyReport("satisfied" if ok else "violated", m1, m2, L_F, crit, terms)


# ------------------------------------------------------ discrete constants


def _dense_ok(sys, limit):
    if sys.ndofs > limit:
        raise CapabilityError(f"{sys.ndofs} dofs exceed the dense limit {limit}")


def estimate_infsup(sys: AssembledSystem, ctx: WaveContext | None = None, dense=False, max_dofs=20000) -> float:
    """Smallest singular value of ``K`` in the ``||.||_{V,kappa}`` metric.

    ``beta = lambda_max(K^{-1} G K^{-H} G)^{-1/2}`` with ``G`` the Gram matrix
    of the wavenumber norm.  ``dense=True`` uses a full generalized SVD.
    """
    if sys.ndofs > max_dofs:
        raise CapabilityError(f"{sys.ndofs} dofs exceed the supported maximum {max_dofs}")
    G = sys.gram().tocsc()
    if dense:
        Kd = sys.volume_matrix.toarray() - (sys.B @ np.diag(sys.D) @ sys.B.conj().T.toarray())
        L = np.linalg.cholesky(G.toarray())
        Li = sla.solve_triangular(L, np.eye(len(L)), lower=True)
        s = np.linalg.svd(Li @ Kd @ Li.conj().T, compute_uv=False)
        return float(s[-1])
    Glu = spla.splu(G.astype(complex))
    n = sys.ndofs

    def op(x):
        # G K^{-H} G K^{-1} G x, Hermitian; same spectrum as K^{-1} G K^{-H} G
        return G @ _solve_adjoint(sys, G @ sys.solve(G @ x))

    A = spla.LinearOperator((n, n), matvec=op, dtype=complex)
    Minv = spla.LinearOperator((n, n), matvec=Glu.solve, dtype=complex)
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lam = spla.eigsh(A, k=1, M=G.astype(complex), Minv=Minv, which="LM", v0=v0, tol=1e-8, return_eigenvectors=False)
    return float(1.0 / math.sqrt(abs(lam[0])))


def _solve_adjoint(sys, b):
    rhs = np.concatenate([np.asarray(b, dtype=complex), np.zeros(sys.D.size, dtype=complex)])
    return sys.lu.solve(rhs, trans="H")[: sys.ndofs]


def estimate_continuity(sys: AssembledSystem, max_dofs=20000) -> float:
    """Largest singular value of ``K`` in the ``||.||_{V,kappa}`` metric."""
    if sys.ndofs > max_dofs:
        raise CapabilityError(f"{sys.ndofs} dofs exceed the supported maximum {max_dofs}")
    G = sys.gram().tocsc().astype(complex)
    Glu = spla.splu(G)
    n = sys.ndofs
    KH = lambda x: sys.volume_matrix.conj().T @ x - sys.B @ (np.conj(sys.D) * (sys.B.conj().T @ x))
    A = spla.LinearOperator((n, n), matvec=lambda x: KH(Glu.solve(sys.apply(x))), dtype=complex)
    Minv = spla.LinearOperator((n, n), matvec=Glu.solve, dtype=complex)
    rng = np.random.default_rng(1)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lam = spla.eigsh(A, k=1, M=G, Minv=Minv, which="LM", v0=v0, tol=1e-8, return_eigenvectors=False)
    return float(math.sqrt(abs(lam[0])))


def estimate_constants(sys: AssembledSystem, iters=50, seed=0):
    """Discrete surrogates ``{"C_tr": ..., "C_emb": ...}`` in the ``V, kappa`` norm.

    ``C_tr`` bounds ``||v||_{1/2, S_R}`` and ``C_emb`` bounds ``||v||_{L4(Omega)}``
    by ``||v||_{V,kappa}``.  The first is a generalized eigenvalue; the second
    is a lower estimate from a nonlinear power iteration.
    """
    mesh = sys.mesh
    G = sys.gram().tocsc().astype(complex)
    Glu = spla.splu(G)
    n = sys.ndofs
    Nt = max(1, len(mesh.ring) // 2 - 1)
    from .boundary import p1_trace_moments

    Mt = p1_trace_moments(mesh.ring_angles, Nt)
    w = sys.ctx.R * np.sqrt(1.0 + np.arange(-Nt, Nt + 1) ** 2.0)
    ring = mesh.ring

    def T(x):
        c = Mt.T @ x[ring]
        out = np.zeros(n, dtype=complex)
        out[ring] = Mt.conj() @ (w * c)
        return out

    A = spla.LinearOperator((n, n), matvec=T, dtype=complex)
    Minv = spla.LinearOperator((n, n), matvec=Glu.solve, dtype=complex)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lam = spla.eigsh(A, k=1, M=G, Minv=Minv, which="LM", v0=v0, tol=1e-8, return_eigenvectors=False)
    C_tr = math.sqrt(abs(lam[0]))

    quad = sys.quad
    from .assembly import QUAD_BARY

    def l4(v):
        vq = np.einsum("qk,ek->eq", QUAD_BARY, v[quad.triangles])
        return float(np.sum(quad.weights * np.abs(vq) ** 4)) ** 0.25, vq

    C_emb = 0.0
    if len(quad.elements):
        v = np.ones(n, dtype=complex)
        for _ in range(iters):
            nv = math.sqrt(np.vdot(v, G @ v).real)
            v = v / nv
            val, vq = l4(v)
            C_emb = max(C_emb, val)
            g = np.zeros(n, dtype=complex)
            loc = np.einsum("eq,qi->ei", quad.weights * np.abs(vq) ** 2 * vq, QUAD_BARY)
            np.add.at(g, quad.triangles.ravel(), loc.ravel())
            v = Glu.solve(g)
    return {"C_tr": C_tr, "C_emb": C_emb}


# -------------------------------------------------------------------- flux


def boundary_flux(u_h, sys: AssembledSystem | None = None, ctx: WaveContext | None = None, inc=None) -> float:
    """``Im sum_n Z_n(kappa R) |u_n|^2`` over ``|n| <= N`` of the scattered trace.

    ``u_h`` is either a FEM vector (total field; ``inc`` is subtracted when
    given) or a :class:`boundary.FourierTrace` of the scattered field.
    """
    if isinstance(u_h, boundary.FourierTrace):
        ctx = ctx if ctx is not None else WaveContext(u_h.kappa, u_h.R, u_h.N)
        t = u_h.resized(ctx.N)
        c = t.coeffs
    else:
        ctx = sys.ctx if ctx is None else ctx
        c = sys.trace_coeffs(u_h)
        if inc is not None:
            c = c - inc.coefficients(ctx.kappa, ctx.R, ctx.N)[0]
    Z = boundary.symbol_vector(2, ctx.N, ctx.xi)
    return float(np.sum(Z.imag * np.abs(c) ** 2))
