"""Harmonic transforms, Sobolev norms and the truncated DtN map on S_R.

Traces are stored coefficient-first.  In 2D the coefficient of ``Y_n`` is
``v_n = int_0^{2pi} v(R, phi) conj(Y_n(phi)) dphi``; in 3D the integral runs
over the unit sphere.  With this convention

    (w, v)_{S_R} = R sum w_n conj(v_n)          (2D)
    (w, v)_{S_R} = R^2 sum w_n^m conj(v_n^m)    (3D)
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .context import WaveContext
from .errors import AliasingError, CapabilityError, ConfigurationError, DomainError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def trace_size(dim: int, N: int) -> int:
    return 2 * N + 1 if dim == 2 else (N + 1) ** 2


def mode_orders(dim: int, N: int) -> np.ndarray:
    """Order ``n`` of every coefficient slot (``|n|`` matters for all formulas)."""
    if dim == 2:
        return np.arange(-N, N + 1)
    return np.concatenate([np.full(2 * n + 1, n) for n in range(N + 1)])


def mode_index(dim: int, N: int, n: int, m: int = 0) -> int:
    if dim == 2:
        if abs(n) > N:
            raise DomainError(f"mode {n} outside |n| <= {N}")
        return n + N
    if n < 0 or n > N or abs(m) > n:
        raise DomainError(f"mode ({n}, {m}) outside 0 <= n <= {N}, |m| <= n")
    return specfun.sph_index(n, m)


@dataclass(frozen=True, eq=False)
class FourierTrace:
    """Boundary data on ``S_R`` as harmonic coefficients.

    Parameters
    ----------
    dim : int
        2 (circle) or 3 (sphere).
    R : float
        Radius of ``S_R``.
    N : int
        Largest retained order.
    coeffs : array_like
        ``2N+1`` entries ordered ``n=-N..N`` (2D) or ``(N+1)^2`` entries at
        ``n^2+n+m`` (3D).
    kappa : float, optional
        Wavenumber the trace is associated with; checked against contexts.
    """

    dim: int
    R: float
    N: int
    coeffs: np.ndarray = field(repr=False)
    kappa: float | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DomainError(f"dim must be 2 or 3, got {self.dim}")
        if not (math.isfinite(self.R) and self.R > 0):
            raise DomainError(f"R must be positive, got {self.R!r}")
        if self.N < 0:
            raise DomainError(f"N must be nonnegative, got {self.N}")
        c = np.array(self.coeffs, dtype=complex).ravel()
        if c.size != trace_size(self.dim, self.N):
            raise DomainError(
                f"expected {trace_size(self.dim, self.N)} coefficients for dim={self.dim}, N={self.N}; got {c.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def zeros(cls, dim, R, N, kappa=None):
        return cls(dim, R, N, np.zeros(trace_size(dim, N), dtype=complex), kappa)

    @classmethod
    def single_mode(cls, dim, R, N, n, m=0, value=1.0, kappa=None):
        c = np.zeros(trace_size(dim, N), dtype=complex)
        c[mode_index(dim, N, n, m)] = value
        return cls(dim, R, N, c, kappa)

    @property
    def orders(self) -> np.ndarray:
        return mode_orders(self.dim, self.N)

    def coeff(self, n: int, m: int = 0) -> complex:
        if abs(n) > self.N:
            return 0j
        return complex(self.coeffs[mode_index(self.dim, self.N, n, m)])

    def resized(self, N: int) -> "FourierTrace":
        """Same data represented with ``N`` modes (truncating or zero padding)."""
        c = np.zeros(trace_size(self.dim, N), dtype=complex)
        k = min(N, self.N)
        if self.dim == 2:
            c[N - k : N + k + 1] = self.coeffs[self.N - k : self.N + k + 1]
        else:
            c[: (k + 1) ** 2] = self.coeffs[: (k + 1) ** 2]
        return FourierTrace(self.dim, self.R, N, c, self.kappa)

    def _measure(self):
        return self.R if self.dim == 2 else self.R**2


def _same_radius(a, b):
    return abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def _check_compatible(w: FourierTrace, v: FourierTrace):
    if w.dim != v.dim:
        raise ConfigurationError(f"dimension mismatch: {w.dim} vs {v.dim}", key="dim")
    if not _same_radius(w.R, v.R):
        raise ConfigurationError(f"radius mismatch: {w.R} vs {v.R}", key="R")


def _common(w: FourierTrace, v: FourierTrace):
    _check_compatible(w, v)
    N = max(w.N, v.N)
    return w.resized(N).coeffs, v.resized(N).coeffs, N


# ---------------------------------------------------------------- transforms


def p1_arc_weights(L: np.ndarray, n: np.ndarray):
    """Weights of ``int_0^L ((1-t) v_a + t v_b) e^{-i n (theta_a + t L)}`` per arc.

    Returns ``(wa, wb)`` with shape ``(len(L), len(n))`` such that the integral
    equals ``e^{-i n theta_a} (wa v_a + wb v_b)``.
    """
    z = -1j * np.outer(L, n)
    small = np.abs(z) < 0.5
    e0 = np.empty_like(z)
    e1 = np.empty_like(z)
    zs = z[~small]
    ez = np.exp(zs)
    e0[~small] = (ez - 1.0) / zs
    e1[~small] = (ez * (zs - 1.0) + 1.0) / zs**2
    if small.any():
        zz = z[small]
        s0 = np.zeros_like(zz)
        s1 = np.zeros_like(zz)
        term = np.ones_like(zz)  # z^k / k!
        for k in range(18):
            s0 += term / (k + 1)
            s1 += term / (k + 2)
            term = term * zz / (k + 1)
        e0[small] = s0
        e1[small] = s1
    Lc = L[:, None]
    return Lc * (e0 - e1), Lc * e1


def p1_trace_moments(angles, N: int) -> np.ndarray:
    """``M[i, n] = (2pi)^{-1/2} int lambda_i(theta) e^{-i n theta} dtheta``.

    ``lambda_i`` is the hat function that is piecewise linear in angle on the
    cyclic node sequence ``angles`` (strictly increasing, in ``[0, 2pi)``).
    Columns are ordered ``n=-N..N``.  Integration is analytic per arc.
    """
    th = np.asarray(angles, dtype=float)
    nxt = np.roll(th, -1)
    L = np.mod(nxt - th, 2.0 * math.pi)
    L[L == 0] = 2.0 * math.pi if th.size == 1 else L[L == 0]
    n = np.arange(-N, N + 1)
    wa, wb = p1_arc_weights(L, n)
    phase = np.exp(-1j * np.outer(th, n))
    M = phase * wa
    M += np.roll(phase * wb, 1, axis=0)
    return M / _SQRT_2PI


def analyze_p1_trace(angles, values, N: int, R: float, kappa=None) -> FourierTrace:
    """Exact coefficients of the trace that is piecewise linear in angle."""
    M = p1_trace_moments(angles, N)
    return FourierTrace(2, R, N, M.T @ np.asarray(values, dtype=complex), kappa)


def _default_samples(dim, N):
    if dim == 2:
        return 4 * N + 8
    return N + 2, 2 * N + 4


def analyze_trace(samples, N: int, R: float, dim: int = 2, kappa=None) -> FourierTrace:
    """Harmonic coefficients of boundary samples.

    Parameters
    ----------
    samples : array_like or callable
        2D: values at ``phi_j = 2 pi j / M``, ``j < M``.  3D: array of shape
        ``(n_theta, n_phi)`` on :func:`specfun.sphere_grid`.  A callable is
        evaluated at unit directions of shape ``(k, dim)`` on a default grid.
    N : int
        Number of modes to extract.

    Raises
    ------
    AliasingError
        If the sampling cannot resolve all orders up to ``N``.
    """
    if N < 0:
        raise DomainError(f"N must be nonnegative, got {N}")
    if dim == 2:
        if callable(samples):
            M = _default_samples(2, N)
            phi = 2.0 * math.pi * np.arange(M) / M
            vals = np.asarray(samples(np.column_stack([np.cos(phi), np.sin(phi)])), dtype=complex)
        else:
            vals = np.asarray(samples, dtype=complex).ravel()
        M = vals.size
        if M < 4 * N + 4:
            raise AliasingError(f"{M} samples cannot resolve order {N}; need at least {4 * N + 4}")
        phi = 2.0 * math.pi * np.arange(M) / M
        Y = specfun.circular_harmonics(N, phi)
        c = (2.0 * math.pi / M) * (Y.conj().T @ vals)
        return FourierTrace(2, R, N, c, kappa)
    if dim != 3:
        raise DomainError(f"dim must be 2 or 3, got {dim}")
    if callable(samples):
        nt, nph = _default_samples(3, N)
        theta, phi, _ = specfun.sphere_grid(nt, nph)
        d = np.column_stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
        vals = np.asarray(samples(d), dtype=complex).reshape(nt, nph)
    else:
        vals = np.asarray(samples, dtype=complex)
        if vals.ndim != 2:
            raise DomainError("3D samples must be a (n_theta, n_phi) array")
    nt, nph = vals.shape
    if nt < N + 1 or nph < 2 * N + 2:
        raise AliasingError(
            f"grid {nt}x{nph} cannot resolve order {N}; need at least {N + 1}x{2 * N + 2}"
        )
    theta, phi, w = specfun.sphere_grid(nt, nph)
    Y = specfun.spherical_harmonics(N, theta, phi)
    c = Y.conj().T @ (w * vals.ravel())
    return FourierTrace(3, R, N, c, kappa)


def _directions_to_angles(dim, direction):
    d = np.asarray(direction, dtype=float)
    if d.ndim == 1:
        d = d[None, :]
    if d.shape[1] != dim:
        raise DomainError(f"directions must have {dim} components, got shape {d.shape}")
    nrm = np.linalg.norm(d, axis=1)
    if np.any(np.abs(nrm - 1.0) > 1e-12):
        raise DomainError(f"directions must be unit vectors, max | |d| - 1 | = {np.max(np.abs(nrm - 1.0)):.3e}")
    if dim == 2:
        return (np.arctan2(d[:, 1], d[:, 0]),)
    return np.arccos(np.clip(d[:, 2], -1.0, 1.0)), np.arctan2(d[:, 1], d[:, 0])


def _basis(t: FourierTrace, angles):
    if t.dim == 2:
        return specfun.circular_harmonics(t.N, angles[0])
    return specfun.spherical_harmonics(t.N, angles[0], angles[1])


def synthesize_trace(t: FourierTrace, direction):
    """Evaluate ``sum coeffs Y`` at one unit direction (or an array of them)."""
    scalar = np.asarray(direction).ndim == 1
    vals = _basis(t, _directions_to_angles(t.dim, direction)) @ t.coeffs
    return complex(vals[0]) if scalar else vals


# --------------------------------------------------------------------- norms


def _weighted_norm(t: FourierTrace, s: float) -> float:
    w = (1.0 + t.orders.astype(float) ** 2) ** s
    return math.sqrt(t._measure() * float(np.sum(w * np.abs(t.coeffs) ** 2)))


def sobolev_norm(t: FourierTrace, s: float) -> float:
    """Spectral ``H^s(S_R)`` norm, ``s`` in ``[0, 2]``."""
    if not (0.0 <= s <= 2.0):
        raise CapabilityError(f"Sobolev index s={s} outside supported range [0, 2]")
    return _weighted_norm(t, s)


def dual_norm_half(t: FourierTrace) -> float:
    """``H^{-1/2}(S_R)`` norm, dual to ``H^{1/2}`` under the ``L2(S_R)`` pairing."""
    return _weighted_norm(t, -0.5)


def l2_pairing(w: FourierTrace, v: FourierTrace) -> complex:
    """``(w, v)_{S_R} = int_{S_R} w conj(v) ds``."""
    a, b, _ = _common(w, v)
    return complex(w._measure() * np.vdot(b, a))


# ----------------------------------------------------------------------- DtN


def symbol_vector(dim: int, N: int, xi: float) -> np.ndarray:
    """Symbols ``Z_|n|`` / ``z_n`` laid out like a trace's coefficients."""
    values, _ = specfun.dtn_symbols(dim, N, xi)
    return values[np.abs(mode_orders(dim, N))]


def _check_context(t: FourierTrace, ctx: WaveContext):
    if t.dim != ctx.dim:
        raise ConfigurationError(f"trace dimension {t.dim} differs from context dimension {ctx.dim}", key="dim")
    if not _same_radius(t.R, ctx.R):
        raise ConfigurationError(f"trace radius {t.R} differs from context radius {ctx.R}", key="R")
    if t.kappa is not None and not _same_radius(t.kappa, ctx.kappa):
        raise ConfigurationError(f"trace wavenumber {t.kappa} differs from context kappa {ctx.kappa}", key="kappa")


def apply_truncated_dtn(t: FourierTrace, ctx: WaveContext) -> FourierTrace:
    """``T_{kappa,N} t``: multiply mode ``n`` by ``Z_n(kappa R)/R`` for ``|n| <= ctx.N``.

    Modes of ``t`` beyond ``ctx.N`` are annihilated; the output keeps ``t.N``.
    """
    _check_context(t, ctx)
    sym = np.zeros(t.coeffs.size, dtype=complex)
    k = min(t.N, ctx.N)
    full = symbol_vector(t.dim, t.N, ctx.xi)
    keep = np.abs(t.orders) <= k
    sym[keep] = full[keep]
    return FourierTrace(t.dim, t.R, t.N, sym * t.coeffs / t.R, ctx.kappa)


def project_PN(t: FourierTrace, N: int) -> FourierTrace:
    """Orthogonal projector onto orders ``<= N`` (representation size unchanged)."""
    if N < 0:
        raise DomainError(f"N must be nonnegative, got {N}")
    c = np.where(np.abs(t.orders) <= N, t.coeffs, 0)
    return FourierTrace(t.dim, t.R, t.N, c, t.kappa)


def exterior_field(t: FourierTrace, ctx: WaveContext, point):
    """Radiating extension of Dirichlet data ``t`` evaluated at ``|point| > R``.

    ``point`` may be a single coordinate vector or an array of them.
    """
    _check_context(t, ctx)
    p = np.asarray(point, dtype=float)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != t.dim:
        raise DomainError(f"points must have {t.dim} coordinates")
    r = np.linalg.norm(p, axis=1)
    if np.any(r <= t.R):
        raise DomainError(f"exterior evaluation requires r > R={t.R}; got min r = {r.min()}")
    ratios = specfun.hankel_ratios(t.N, ctx.xi, ctx.kappa * r, half=(t.dim == 3))
    ratios = ratios[:, np.abs(t.orders)]
    u = p / r[:, None]
    Y = _basis(t, _directions_to_angles(t.dim, u))
    vals = np.sum(Y * ratios * t.coeffs[None, :], axis=1)
    return complex(vals[0]) if scalar else vals


def dtn_pairing(w: FourierTrace, v: FourierTrace, ctx: WaveContext) -> complex:
    """``(T_{kappa,N} w, v)_{S_R}`` evaluated spectrally."""
    return l2_pairing(apply_truncated_dtn(w, ctx), v)


def _kappa_of(w, ctx):
    if ctx is not None:
        return ctx.kappa
    if w.kappa is None:
        raise ConfigurationError("wavenumber unknown: pass ctx or a trace carrying kappa", key="kappa")
    return w.kappa


def dtn_truncation_pairing(w: FourierTrace, v: FourierTrace, N: int, ctx: WaveContext | None = None) -> complex:
    """``((T_kappa - T_{kappa,N}) w, v)_{S_R}`` with ``T_kappa`` represented by order ``w.N``."""
    if N >= w.N:
        raise DomainError(f"truncation order {N} must be below the reference order {w.N}")
    _check_compatible(w, v)
    kappa = _kappa_of(w, ctx)
    a = w.coeffs
    b = v.resized(w.N).coeffs
    sym = symbol_vector(w.dim, w.N, kappa * w.R)
    tail = np.abs(w.orders) > N
    scale = 1.0 if w.dim == 2 else w.R
    return complex(scale * np.sum(sym[tail] * a[tail] * np.conj(b[tail])))


def _tail_ratio(t: FourierTrace, N: int) -> float:
    wts = np.sqrt(1.0 + t.orders.astype(float) ** 2) * np.abs(t.coeffs) ** 2
    tot = wts.sum()
    return 0.0 if tot == 0 else float(wts[np.abs(t.orders) > N].sum() / tot)


def _symbol_bound(dim, xi):
    if dim == 2:
        z0 = abs(specfun.dtn_symbol(2, 0, xi).value)
        return max(z0, math.sqrt(1.0 + xi * xi))
    return math.sqrt(2.0 + xi * xi)


def truncation_constant(w: FourierTrace, v: FourierTrace, N: int, ctx: WaveContext | None = None) -> float:
    """Computable ``c(N, w, v)`` bounding the truncation pairing.

    ``|((T - T_N) w, v)| <= c ||w||_{1/2} ||v||_{1/2}``, where ``c`` is the
    symbol bound divided by ``R`` and multiplied by the square root of the
    product of the ``H^{1/2}`` tail fractions of ``w`` and ``v``.
    """
    kappa = _kappa_of(w, ctx)
    vv = v.resized(w.N)
    c_tilde = math.sqrt(_tail_ratio(w, N) * _tail_ratio(vv, N))
    return c_tilde * _symbol_bound(w.dim, kappa * w.R) / w.R


def truncation_bound(w, v, N, ctx=None) -> float:
    return truncation_constant(w, v, N, ctx) * sobolev_norm(w, 0.5) * sobolev_norm(v.resized(w.N), 0.5)


def dtn_uniform_bound(w: FourierTrace, v: FourierTrace, ctx: WaveContext) -> float:
    """N-independent bound on ``|(T_{kappa,N} w, v)_{S_R}|``."""
    return _symbol_bound(w.dim, ctx.xi) / ctx.R * sobolev_norm(w, 0.5) * sobolev_norm(v, 0.5)


# ------------------------------------------------------------------------ IO


def trace_to_csv(t: FourierTrace, provenance: str | None = None) -> str:
    out = io.StringIO()
    if provenance:
        out.write(provenance.rstrip("\n") + "\n")
    kappa = "none" if t.kappa is None else format(t.kappa, ".17g")
    out.write(f"# dim={t.dim} R={t.R:.17g} N={t.N} kappa={kappa}\n")
    wr = csv.writer(out, lineterminator="\n")
    if t.dim == 2:
        wr.writerow(["n", "re", "im"])
        for n, c in zip(t.orders, t.coeffs):
            wr.writerow([int(n), format(c.real, ".17g"), format(c.imag, ".17g")])
    else:
        wr.writerow(["n", "m", "re", "im"])
        i = 0
        for n in range(t.N + 1):
            for m in range(-n, n + 1):
                c = t.coeffs[i]
                wr.writerow([n, m, format(c.real, ".17g"), format(c.imag, ".17g")])
                i += 1
    return out.getvalue()


def write_trace(t: FourierTrace, path, provenance: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_to_csv(t, provenance))


def read_trace(path) -> FourierTrace:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        while header.startswith("# provenance"):
            header = fh.readline()
        if not header.startswith("#"):
            raise DomainError(f"{path}: missing '# dim R N kappa' header")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        try:
            dim, R, N = int(meta["dim"]), float(meta["R"]), int(meta["N"])
        except (KeyError, ValueError) as exc:
            raise DomainError(f"{path}: malformed header {header.strip()!r}") from exc
        kappa = None if meta.get("kappa", "none") == "none" else float(meta["kappa"])
        rows = list(csv.reader(fh))
    body = rows[1:]
    c = np.array([complex(float(r[-2]), float(r[-1])) for r in body])
    return FourierTrace(dim, R, N, c, kappa)
