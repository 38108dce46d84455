"""Cylindrical/spherical Hankel functions, harmonics and the DtN symbols.

Only real positive arguments are supported.  Evaluation strategy:

* ``J_n`` by Miller's downward recurrence normalised with
  ``J_0 + 2 sum_k J_2k = 1``;
* ``Y_0`` and ``Y_1`` from the Neumann series over the same ``J_2k`` /
  ``J_2k+1`` values;
* everything of higher order is propagated upward through the logarithmic
  derivative ``R_nu = H'_nu / H_nu`` (the Riccati form of the three-term
  recurrence, stable for the dominant solution ``H = J + iY``).

Working with ``R_nu`` rather than ``H_nu`` keeps the symbols finite where the
Hankel functions themselves overflow.  ``Im R_nu`` obeys a purely
multiplicative recurrence, so its logarithm is carried alongside; this keeps
the strict positivity of ``Im Z_n`` checkable even where the value underflows
double precision (e.g. n=200 at xi=0.1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, DomainError

MAX_ORDER = 512
XI_MIN = 1e-3
XI_MAX = 1e4

_EULER_GAMMA = 0.57721566490153286061
_RESCALE = 1e250


@dataclass(frozen=True)
class HankelValue:
    order: float
    argument: float
    value: complex
    derivative: complex


@dataclass(frozen=True)
class DtnSymbol:
    """``Z_n(xi)`` (dim 2) or ``z_n(xi)`` (dim 3).

    ``log_imag`` is the natural log of the imaginary part; ``value.imag`` may
    have underflowed to 0.0 while ``log_imag`` stays finite.
    """

    dim: int
    order: int
    xi: float
    value: complex
    log_imag: float


@dataclass(frozen=True)
class HarmonicIndex:
    dim: int
    n: int
    m: int = 0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DomainError(f"harmonic dimension must be 2 or 3, got {self.dim}")
        if self.dim == 3 and (self.n < 0 or abs(self.m) > self.n):
            raise DomainError(f"spherical harmonic index requires n >= 0 and |m| <= n, got ({self.n}, {self.m})")


def _check_argument(x, max_order=None, order=0):
    if not np.isfinite(x) or x <= 0:
        raise DomainError(f"argument must be a positive real, got {x!r}")
    if x < XI_MIN or x > XI_MAX:
        raise CapabilityError(f"argument {x!r} outside supported range [{XI_MIN}, {XI_MAX}]")
    cap = MAX_ORDER if max_order is None else max_order
    if abs(order) > cap:
        raise CapabilityError(f"order {order} exceeds the supported maximum {cap}")


def besselj_all(nmax: int, x: float) -> np.ndarray:
    """Return ``J_0(x), ..., J_nmax(x)`` via Miller's algorithm."""
    if x <= 0:
        raise DomainError(f"argument must be positive, got {x!r}")
    big = max(nmax, x)
    m = int(big) + 20 + int(12.0 * x ** (1.0 / 3.0)) + int(math.sqrt(40.0 * max(nmax, 1)))
    m += m % 2
    j = np.zeros(m + 2)
    j[m] = 1e-30
    two_over_x = 2.0 / x
    for k in range(m, 0, -1):
        j[k - 1] = k * two_over_x * j[k] - j[k + 1]
        if abs(j[k - 1]) > _RESCALE:
            j[k - 1 :] /= _RESCALE
    norm = j[0] + 2.0 * j[2:m + 1:2].sum()
    j /= norm
    return j[: nmax + 1].copy() if nmax <= m else np.concatenate([j[: m + 1], np.zeros(nmax - m)])


def _bessel_base(x: float):
    """``(J_0, J_1, Y_0, Y_1)`` at ``x`` from Miller values and Neumann series."""
    jm = besselj_all(int(x) + 60 + int(12.0 * x ** (1.0 / 3.0)), x)
    # restart from Miller's own normalised table (includes high orders)
    n_hi = len(jm) - 1
    k = np.arange(1, n_hi // 2 + 1)
    even = jm[2 * k[2 * k <= n_hi]]
    ke = k[2 * k <= n_hi]
    log_term = math.log(x / 2.0) + _EULER_GAMMA
    y0 = (2.0 / math.pi) * log_term * jm[0] - (4.0 / math.pi) * np.sum((-1.0) ** ke * even / ke)
    ko = k[2 * k + 1 <= n_hi]
    odd = jm[2 * ko + 1]
    y1 = (
        -2.0 / (math.pi * x) * jm[0]
        + (2.0 / math.pi) * (log_term - 1.0) * jm[1]
        - (2.0 / math.pi) * np.sum((-1.0) ** ko * (2 * ko + 1) * odd / (ko * (ko + 1)))
    )
    return jm[0], jm[1], y0, y1


def log_derivative_sequence(nmax: int, x: float, half: bool = False):
    """``R_k = H'_nu/H_nu`` for ``nu = k (+1/2)``, ``k = 0..nmax``.

    Returns ``(R, log_im)`` where ``log_im[k] = log(Im R_k)``.
    """
    R = np.empty(nmax + 1, dtype=complex)
    log_im = np.empty(nmax + 1)
    if half:
        R[0] = complex(-0.5 / x, 1.0)
        log_im[0] = 0.0
        offset = 0.5
    else:
        j0, j1, y0, y1 = _bessel_base(x)
        h0 = complex(j0, y0)
        h1 = complex(j1, y1)
        R[0] = -h1 / h0
        # Wronskian: Im(H0' conj(H0)) = 2/(pi x)
        log_im[0] = math.log(2.0 / (math.pi * x)) - 2.0 * math.log(abs(h0))
        offset = 0.0
    for k in range(nmax):
        nu = k + offset
        d = nu / x - R[k]
        R[k + 1] = 1.0 / d - (nu + 1.0) / x
        log_im[k + 1] = log_im[k] - 2.0 * math.log(abs(d))
    return R, log_im


def hankel_cyl(order: int, x: float, max_order: int = MAX_ORDER) -> HankelValue:
    """``H^(1)_order(x)`` and its derivative for integer order."""
    _check_argument(x, max_order, order)
    n = abs(int(order))
    j0, _, y0, _ = _bessel_base(x)
    R, _ = log_derivative_sequence(n, x)
    h = complex(j0, y0)
    with np.errstate(over="raise"):
        for k in range(n):
            h = h * (k / x - R[k])
            if not np.isfinite(h.real) or not np.isfinite(h.imag):
                raise CapabilityError(f"H_{order}({x}) overflows double precision")
    dh = R[n] * h
    if not (np.isfinite(dh.real) and np.isfinite(dh.imag)):
        raise CapabilityError(f"H'_{order}({x}) overflows double precision")
    if order < 0 and n % 2 == 1:
        h, dh = -h, -dh
    return HankelValue(float(order), float(x), complex(h), complex(dh))


def hankel_sph(order: int, x: float) -> HankelValue:
    """Spherical Hankel function ``h^(1)_order(x)`` and derivative."""
    if order < 0:
        raise DomainError(f"spherical Hankel order must be nonnegative, got {order}")
    _check_argument(x, MAX_ORDER, order)
    h_prev = -1j * np.exp(1j * x) / x
    if order == 0:
        return HankelValue(0.0, float(x), complex(h_prev), complex(h_prev * (1j - 1.0 / x)))
    h = -np.exp(1j * x) * (x + 1j) / x**2
    for n in range(1, order):
        h_prev, h = h, (2 * n + 1) / x * h - h_prev
        if not np.isfinite(abs(h)):
            raise CapabilityError(f"h_{order}({x}) overflows double precision")
    dh = h_prev - (order + 1) / x * h
    return HankelValue(float(order), float(x), complex(h), complex(dh))


def dtn_symbols(dim: int, nmax: int, xi: float):
    """Vector of symbols for orders ``0..nmax``; returns ``(values, log_imag)``."""
    if dim not in (2, 3):
        raise DomainError(f"dim must be 2 or 3, got {dim}")
    _check_argument(xi, MAX_ORDER, nmax)
    if dim == 2:
        R, log_im = log_derivative_sequence(nmax, xi)
        re = xi * R.real
        log_imag = math.log(xi) + log_im
    else:
        R, log_im = log_derivative_sequence(nmax, xi, half=True)
        re = xi * R.real - 0.5
        log_imag = math.log(xi) + log_im
        re[0] = -1.0
        log_imag[0] = math.log(xi)
    with np.errstate(under="ignore"):
        im = np.exp(log_imag)
    if dim == 3:
        im[0] = xi
    return re + 1j * im, log_imag


def dtn_symbol(dim: int, n: int, xi: float) -> DtnSymbol:
    """``Z_n(xi) = xi H_n'(xi)/H_n(xi)`` (dim 2) or ``z_n(xi)`` (dim 3)."""
    if dim == 3 and n < 0:
        raise DomainError(f"spherical symbol order must be nonnegative, got {n}")
    values, log_imag = dtn_symbols(dim, abs(n), xi)
    return DtnSymbol(dim, int(n), float(xi), complex(values[-1]), float(log_imag[-1]))


def symbol_band_violations(sym: DtnSymbol, slack: float = 1e-12) -> list[str]:
    """Names of the band inequalities and bounds that ``sym`` violates."""
    n, xi, re, log_im = abs(sym.order), sym.xi, sym.value.real, sym.log_imag
    bad = []

    def tol(bound):
        return slack * max(1.0, abs(bound))

    log_xi = math.log(xi)
    if not math.isfinite(log_im):
        bad.append("Im > 0")
    if sym.dim == 2:
        if n >= 1:
            if re < -n - tol(n):
                bad.append("Re Z_n >= -n")
            if re > -0.5 + tol(0.5):
                bad.append("Re Z_n <= -1/2")
            if not log_im < log_xi:
                bad.append("Im Z_n < xi")
            if abs(sym.value) ** 2 > (1 + n * n) * (1 + xi * xi) * (1 + slack):
                bad.append("|Z_n|^2 <= (1+n^2)(1+xi^2)")
        else:
            if re < -0.5 - tol(0.5):
                bad.append("Re Z_0 >= -1/2")
            if not re < 0:
                bad.append("Re Z_0 < 0")
            if not log_im > log_xi:
                bad.append("Im Z_0 > xi")
    else:
        if n >= 1:
            if re < -(n + 1) - tol(n + 1):
                bad.append("Re z_n >= -(n+1)")
            if re > -1.0 + tol(1.0):
                bad.append("Re z_n <= -1")
            if log_im > log_xi + slack:
                bad.append("Im z_n <= xi")
        else:
            if abs(re + 1.0) > 1e-13 or abs(sym.value.imag - xi) > 1e-13 * max(1.0, xi):
                bad.append("z_0 = -1 + i xi")
        if abs(sym.value) ** 2 > (1 + n * n) * (2 + xi * xi) * (1 + slack):
            bad.append("|z_n|^2 <= (1+n^2)(2+xi^2)")
    return bad


def circular_harmonics(N: int, phi) -> np.ndarray:
    """``Y_n(phi) = e^{i n phi}/sqrt(2 pi)`` for ``n=-N..N``; shape (len(phi), 2N+1)."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    n = np.arange(-N, N + 1)
    return np.exp(1j * np.outer(phi, n)) / math.sqrt(2.0 * math.pi)


def legendre_normalized(N: int, x) -> np.ndarray:
    """``sqrt((2n+1)/(4pi) (n-m)!/(n+m)!) P_n^m(x)`` for ``0<=m<=n<=N``.

    No Condon-Shortley phase.  Shape (len(x), N+1, N+1) indexed ``[:, n, m]``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((x.size, N + 1, N + 1))
    P[:, 0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, N + 1):
        P[:, m, m] = math.sqrt((2 * m + 1) / (2.0 * m)) * s * P[:, m - 1, m - 1]
    for m in range(0, N):
        P[:, m + 1, m] = math.sqrt(2 * m + 3) * x * P[:, m, m]
    for m in range(0, N + 1):
        for n in range(m + 2, N + 1):
            a = math.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
            b = math.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
            P[:, n, m] = a * (x * P[:, n - 1, m] - b * P[:, n - 2, m])
    return P


def sph_index(n, m):
    """Flat position of ``(n, m)`` in a length-(N+1)^2 coefficient vector."""
    return n * n + n + m


def spherical_harmonics(N: int, theta, phi) -> np.ndarray:
    """``Y_n^m(phi, theta)`` for all ``n<=N, |m|<=n``; shape (len, (N+1)^2)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    P = legendre_normalized(N, np.cos(theta))
    out = np.empty((theta.size, (N + 1) ** 2), dtype=complex)
    for n in range(N + 1):
        for m in range(-n, n + 1):
            out[:, sph_index(n, m)] = P[:, n, abs(m)] * np.exp(1j * m * phi)
    return out


def harmonic_eval(idx: HarmonicIndex, direction) -> complex:
    """Evaluate the circular (d=2) or spherical (d=3) harmonic at a unit vector."""
    d = np.asarray(direction, dtype=float)
    if d.shape != (idx.dim,):
        raise DomainError(f"direction must have {idx.dim} components, got shape {d.shape}")
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise DomainError(f"direction must be a unit vector, |d| = {np.linalg.norm(d)!r}")
    if idx.dim == 2:
        phi = math.atan2(d[1], d[0])
        return complex(np.exp(1j * idx.n * phi) / math.sqrt(2.0 * math.pi))
    theta = math.acos(max(-1.0, min(1.0, d[2])))
    phi = math.atan2(d[1], d[0])
    P = legendre_normalized(idx.n, [math.cos(theta)])
    return complex(P[0, idx.n, abs(idx.m)] * np.exp(1j * idx.m * phi))


def hankel_ratios(nmax: int, x: float, y, half: bool = False) -> np.ndarray:
    """``H_nu(y)/H_nu(x)`` for ``nu = 0..nmax`` (or ``h_n(y)/h_n(x)`` if ``half``).

    ``y`` may be an array; the result has shape ``y.shape + (nmax+1,)``.  The
    ratio is built from products of log-derivative factors, so it stays finite
    where the individual Hankel values overflow.
    """
    _check_argument(x, MAX_ORDER, nmax)
    y = np.asarray(y, dtype=float)
    flat = y.ravel()
    out = np.empty((flat.size, nmax + 1), dtype=complex)
    Rx, _ = log_derivative_sequence(nmax, x, half=half)
    if half:
        base_x = None
    else:
        j0, _, y0, _ = _bessel_base(x)
        base_x = complex(j0, y0)
    for i, yy in enumerate(flat):
        _check_argument(yy, MAX_ORDER, nmax)
        Ry, _ = log_derivative_sequence(nmax, yy, half=half)
        if half:
            # h_0(t) = -i e^{it}/t
            r = (x / yy) * np.exp(1j * (yy - x))
        else:
            j0, _, y0, _ = _bessel_base(yy)
            r = complex(j0, y0) / base_x
        offset = 0.5 if half else 0.0
        out[i, 0] = r
        for k in range(nmax):
            nu = k + offset
            r = r * (nu / yy - Ry[k]) / (nu / x - Rx[k])
            out[i, k + 1] = r
    return out.reshape(y.shape + (nmax + 1,))


def sphere_grid(n_theta: int, n_phi: int):
    """Gauss-Legendre (in cos theta) x trapezoid (in phi) grid on the unit sphere.

    Returns ``(theta, phi, weights)`` as flattened arrays of length
    ``n_theta * n_phi``; the weights integrate against the surface measure.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.outer(w, np.full(n_phi, 2.0 * math.pi / n_phi))
    return T.ravel(), P.ravel(), W.ravel()
