"""Mittag-Leffler functions and functions of matrices.

Scalar evaluation of ``E_alpha(z) = sum_k z^k / Gamma(alpha k + 1)`` uses the
Taylor series with compensated summation where it is accurate, and otherwise
the Hankel-contour representation

    E_alpha(z) = [pole] exp(z^(1/alpha)) / alpha
                 + 1/(2 pi i) int_Ha e^s s^(alpha-1) / (s^alpha - z) ds

with the contour made of the two rays ``arg s = +-phi`` and the substitution
``w = r^alpha`` which removes the algebraic singularity at the origin.

Matrix functions follow the Jordan-block definition: a well conditioned
eigendecomposition is used directly, everything else goes through a
Schur-Parlett recurrence fed with derivatives of the scalar function.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy import integrate
from scipy.special import gammaln, rgamma

from .models import GeneratorMatrix

__all__ = [
    "ml_scalar",
    "ml_scalar_deriv",
    "SpectralDecomposition",
    "spectral_decomposition",
    "apply_scalar_function",
    "ml_matrix",
    "exp_function",
    "ml_function",
    "MatrixFunctionError",
    "SWITCH_RADIUS",
    "MAX_TERMS",
    "DIAG_COND_LIMIT",
    "MAX_DERIV_ORDER",
]

log = logging.getLogger(__name__)

SWITCH_RADIUS = 5.0
MAX_TERMS = 500
DIAG_COND_LIMIT = 1e6
MAX_DERIV_ORDER = 8

# Taylor sums are accepted only if the cancellation they suffer keeps the
# relative error below this bound.
_TAYLOR_REL_TOL = 1e-12
_EPS = np.finfo(float).eps


class MatrixFunctionError(ArithmeticError):
    """A matrix function could not be evaluated on the given spectrum."""


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")


# ---------------------------------------------------------------------------
# scalar Mittag-Leffler function
# ---------------------------------------------------------------------------


def _neumaier(values):
    """Compensated sum of a sequence of complex numbers."""
    s = complex(0.0)
    c = complex(0.0)
    for v in values:
        t = s + v
        cr = (s.real - t.real) + v.real if abs(s.real) >= abs(v.real) else (v.real - t.real) + s.real
        ci = (s.imag - t.imag) + v.imag if abs(s.imag) >= abs(v.imag) else (v.imag - t.imag) + s.imag
        c += complex(cr, ci)
        s = t
    return s + c


def _taylor(alpha: float, z: complex, order: int = 0):
    """Series for the ``order``-th derivative; ``None`` when not trustworthy."""
    if z == 0:
        return complex(math.factorial(order) * rgamma(alpha * order + 1))
    logz = np.log(complex(z))
    terms = []
    abs_sum = 0.0
    for j in range(MAX_TERMS):
        k = j + order
        # k!/(k-order)! * z^j / Gamma(alpha k + 1)
        logmag = gammaln(k + 1) - gammaln(j + 1) - gammaln(alpha * k + 1) + j * logz.real
        if logmag > 700:
            return None
        mag = math.exp(logmag)
        term = mag * complex(math.cos(j * logz.imag), math.sin(j * logz.imag))
        terms.append(term)
        abs_sum += mag
        if j > 2 and mag <= 1e-17 * abs_sum and (j + order) * alpha > abs(z) ** (1 / alpha if alpha < 1 else 1):
            break
    else:
        return None
    value = _neumaier(terms)
    if abs_sum * 4 * _EPS > _TAYLOR_REL_TOL * abs(value):
        return None
    return value


def _ray_integral(alpha: float, z: complex, phi: float) -> complex:
    """Hankel contour part along the rays ``arg s = +-phi`` (no pole term)."""
    ea = np.exp(1j * alpha * phi)
    e1 = np.exp(1j * phi)
    inv_a = 1.0 / alpha

    def integrand(w):
        r = w**inv_a
        up = np.exp(r * e1) * ea / (w * ea - z)
        dn = np.exp(r * np.conj(e1)) * np.conj(ea) / (w * np.conj(ea) - z)
        return (up - dn) / (2j * np.pi * alpha)

    # exp(r cos(phi)) has decayed below 1e-22 beyond w_max
    w_max = (52.0 / abs(math.cos(phi))) ** alpha
    brk = abs(z)
    pieces = [(0.0, min(brk, w_max))] if brk > 0 else []
    if brk < w_max:
        pieces.append((brk, w_max))
    total = complex(0.0)
    real_z = z.imag == 0.0 and phi == math.pi
    for a, b in pieces:
        if b <= a:
            continue
        re, _ = integrate.quad(lambda w: integrand(w).real, a, b, epsabs=1e-15, epsrel=1e-13, limit=400)
        im = 0.0
        if not real_z:
            im, _ = integrate.quad(lambda w: integrand(w).imag, a, b, epsabs=1e-15, epsrel=1e-13, limit=400)
        total += complex(re, im)
    return total


def _cexp(w: complex, scale: float = 1.0) -> complex:
    """``scale * exp(w)`` that keeps a zero phase exact when the modulus overflows."""
    mod = scale * math.exp(w.real) if w.real < 709.0 else math.inf
    if w.imag == 0.0:
        return complex(mod, 0.0)
    return complex(mod * math.cos(w.imag), mod * math.sin(w.imag))


def _ml_integral(alpha: float, z: complex) -> complex:
    argz = abs(np.angle(z))
    # pick the ray angle that keeps the pole away from the contour
    phi = math.pi
    if abs(argz - alpha * math.pi) < 0.1 * alpha * math.pi:
        phi = 0.75 * math.pi
    val = _ray_integral(alpha, z, phi)
    if argz < alpha * phi:
        val += _cexp(complex(z) ** (1.0 / alpha), 1.0 / alpha)
    return val


def _ml_one(alpha: float, z: complex) -> complex:
    if alpha == 1.0:
        return _cexp(complex(z))
    if abs(z) <= SWITCH_RADIUS:
        val = _taylor(alpha, z)
        if val is not None:
            return val
    return _ml_integral(alpha, z)


def ml_scalar(alpha: float, z):
    """One-parameter Mittag-Leffler function ``E_alpha(z)`` for alpha in (0, 1].

    Accepts scalars or arrays.  Real input gives real output.  The relative
    accuracy target is 1e-10 for ``|z| <= 100``; beyond that the result is
    still computed but degrades slowly.

    Examples
    --------
    >>> round(ml_scalar(0.5, -1.0), 7)
    0.4275836
    """
    _check_alpha(alpha)
    arr = np.asarray(z)
    is_real = not np.iscomplexobj(arr)
    flat = arr.astype(complex).ravel()
    out = np.array([_ml_one(float(alpha), complex(v)) for v in flat], dtype=complex)
    out = out.reshape(arr.shape)
    if is_real:
        out = out.real
    return out[()] if out.ndim == 0 else out


def _cauchy_deriv(alpha: float, z: complex, order: int) -> complex:
    if z.real < 0:
        rho = 0.5 * max(1.0, abs(z))
    else:
        # growth region: the radius follows the scale of exp(z^(1/alpha))
        rho = 0.5 * min(max(1.0, abs(z)), max(0.25, alpha * max(abs(z), 1.0) ** (1 - 1 / alpha)))
    M = 64
    theta = 2 * np.pi * np.arange(M) / M
    pts = z + rho * np.exp(1j * theta)
    vals = np.array([_ml_one(alpha, complex(p)) for p in pts])
    coef = np.mean(vals * np.exp(-1j * order * theta))
    return complex(math.factorial(order) * coef / rho**order)


def ml_scalar_deriv(alpha: float, z, order: int):
    """``order``-th derivative of ``E_alpha`` at ``z`` (order <= 8)."""
    _check_alpha(alpha)
    if int(order) != order or order < 0:
        raise ValueError("order must be a non-negative integer")
    if order > MAX_DERIV_ORDER:
        raise ValueError(f"derivative order {order} exceeds the supported maximum {MAX_DERIV_ORDER}")
    order = int(order)
    if order == 0:
        return ml_scalar(alpha, z)
    arr = np.asarray(z)
    is_real = not np.iscomplexobj(arr)
    res = []
    for v in arr.astype(complex).ravel():
        v = complex(v)
        if alpha == 1.0:
            res.append(complex(np.exp(v)))
            continue
        val = _taylor(alpha, v, order) if abs(v) <= SWITCH_RADIUS else None
        if val is None:
            val = _cauchy_deriv(alpha, v, order)
        res.append(val)
    out = np.array(res, dtype=complex).reshape(arr.shape)
    if is_real:
        out = out.real
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# scalar functions with derivatives, as consumed by apply_scalar_function
# ---------------------------------------------------------------------------

ScalarFunction = Callable[[np.ndarray, int], np.ndarray]


def exp_function(z, order: int = 0):
    return np.exp(np.asarray(z, dtype=complex))


def ml_function(alpha: float, scale: float = 1.0) -> ScalarFunction:
    """``z -> E_alpha(scale z)`` with derivatives, for matrix evaluation."""

    def f(z, order=0):
        z = np.asarray(z, dtype=complex)
        return scale**order * np.asarray(ml_scalar_deriv(alpha, scale * z, order), dtype=complex)

    return f


# ---------------------------------------------------------------------------
# matrix functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralDecomposition:
    """``A = Q diag(eigenvalues) Q^{-1}`` with a condition estimate of ``Q``."""

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    diagonalizable: bool
    condition_estimate: float

    def reconstruct(self) -> np.ndarray:
        return (self.right_vectors * self.eigenvalues) @ self.left_vectors


def spectral_decomposition(A, cond_limit: float = DIAG_COND_LIMIT) -> SpectralDecomposition:
    A = np.asarray(A, dtype=float)
    try:
        ev, Q = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        from .models import EigenSolverError

        raise EigenSolverError(str(exc)) from exc
    cond = float(np.linalg.cond(Q))
    if not np.isfinite(cond):
        return SpectralDecomposition(ev, Q, np.full_like(Q, np.nan), False, math.inf)
    Qinv = np.linalg.inv(Q)
    scale = max(np.linalg.norm(A), 1e-300)
    resid = np.linalg.norm((Q * ev) @ Qinv - A) / scale if np.any(A) else 0.0
    ok = cond <= cond_limit and resid <= 1e-10
    return SpectralDecomposition(ev, Q, Qinv, bool(ok), cond)


def _as_matrix(A) -> np.ndarray:
    return A.A if isinstance(A, GeneratorMatrix) else np.asarray(A)


def _cluster(ev: np.ndarray, delta: float) -> np.ndarray:
    """Group eigenvalues whose chains of pairwise distances stay <= delta."""
    n = len(ev)
    labels = np.arange(n)

    def find(i):
        while labels[i] != i:
            labels[i] = labels[labels[i]]
            i = labels[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(ev[i] - ev[j]) <= delta:
                ri, rj = find(i), find(j)
                if ri != rj:
                    labels[max(ri, rj)] = min(ri, rj)
    return np.array([find(i) for i in range(n)])


def _reorder_schur(T, Z, labels):
    """Make each eigenvalue cluster contiguous on the diagonal of ``T``."""
    from scipy.linalg.lapack import ztrexc

    order = []
    for lab in labels:
        if lab not in order:
            order.append(lab)
    cur = list(labels)
    pos = 0
    for lab in order:
        while True:
            idx = [i for i in range(pos, len(cur)) if cur[i] == lab]
            if not idx:
                break
            i = idx[0]
            if i != pos:
                T, Z, info = ztrexc(T, Z, i + 1, pos + 1, wantq=1)
                if info != 0:
                    raise MatrixFunctionError(f"Schur reordering failed (info={info})")
                cur.insert(pos, cur.pop(i))
            pos += 1
    return T, Z, np.array(cur)


def _schur_parlett(f: ScalarFunction, A: np.ndarray, delta: float = 0.1) -> np.ndarray:
    T, Z = scipy.linalg.schur(A.astype(complex), output="complex")
    ev = np.diag(T).copy()
    labels = _cluster(ev, delta)
    T, Z, labels = _reorder_schur(T, Z, labels)
    n = T.shape[0]
    blocks = []
    start = 0
    for i in range(1, n + 1):
        if i == n or labels[i] != labels[start]:
            blocks.append((start, i))
            start = i
    F = np.zeros_like(T)
    for a, b in blocks:
        Tii = T[a:b, a:b]
        m = b - a
        sigma = np.mean(np.diag(Tii))
        Nn = Tii - sigma * np.eye(m)
        spread = np.max(np.abs(np.diag(Nn))) if m > 1 else 0.0
        needed = m - 1 if spread == 0.0 else MAX_DERIV_ORDER
        if m - 1 > MAX_DERIV_ORDER:
            raise MatrixFunctionError(
                f"eigenvalue cluster of size {m} needs derivatives beyond order {MAX_DERIV_ORDER}"
            )
        Fi = np.zeros((m, m), dtype=complex)
        P = np.eye(m, dtype=complex)
        for j in range(needed + 1):
            try:
                dj = complex(np.asarray(f(np.array([sigma]), j)).ravel()[0])
            except (ValueError, NotImplementedError) as exc:
                raise MatrixFunctionError(f"derivative of order {j} unavailable: {exc}") from exc
            Fi += dj / math.factorial(j) * P
            P = P @ Nn
            if not np.any(P):
                break
        F[a:b, a:b] = Fi
    # block Parlett recurrence, one superdiagonal at a time
    nb = len(blocks)
    for dist in range(1, nb):
        for bi in range(nb - dist):
            bj = bi + dist
            ia, ib = blocks[bi]
            ja, jb = blocks[bj]
            rhs = F[ia:ib, ia:ib] @ T[ia:ib, ja:jb] - T[ia:ib, ja:jb] @ F[ja:jb, ja:jb]
            for bk in range(bi + 1, bj):
                ka, kb = blocks[bk]
                rhs += F[ia:ib, ka:kb] @ T[ka:kb, ja:jb] - T[ia:ib, ka:kb] @ F[ka:kb, ja:jb]
            F[ia:ib, ja:jb] = scipy.linalg.solve_sylvester(T[ia:ib, ia:ib], -T[ja:jb, ja:jb], rhs)
    return Z @ F @ Z.conj().T


def apply_scalar_function(f: ScalarFunction, A, *, decomposition: SpectralDecomposition | None = None,
                          return_info: bool = False):
    """Evaluate ``f(A)`` following the Jordan-block definition.

    Parameters
    ----------
    f : callable
        ``f(z, order)`` returns the ``order``-th derivative of the scalar
        function at the complex array ``z``.
    A : array_like or GeneratorMatrix
        Square matrix.
    decomposition : SpectralDecomposition, optional
        Reused eigendecomposition of ``A``.
    return_info : bool
        Also return a dict with the route taken and the discarded imaginary
        residue.

    Notes
    -----
    A diagonalizable matrix whose eigenvector matrix has condition number
    below ``DIAG_COND_LIMIT`` is handled as ``Q f(D) Q^{-1}``.  Otherwise a
    Schur-Parlett recurrence is used; eigenvalues closer than 0.1 are grouped
    and the function is expanded in a Taylor series around each group mean.
    For real ``A`` the imaginary part of the result is dropped when it is
    below ``1e-9 ||f(A)||``.
    """
    M = _as_matrix(A)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("apply_scalar_function needs a square matrix")
    n = M.shape[0]
    if n == 0:
        return M.copy()
    real_input = not np.iscomplexobj(M)
    dec = decomposition
    if dec is None and isinstance(A, GeneratorMatrix):
        dec = A.spectral
    if dec is None:
        dec = spectral_decomposition(M)
    if dec.diagonalizable:
        fv = np.asarray(f(dec.eigenvalues.astype(complex), 0), dtype=complex)
        F = (dec.right_vectors * fv) @ dec.left_vectors
        route = "spectral"
    else:
        F = _schur_parlett(f, M)
        route = "schur-parlett"
    residue = float(np.max(np.abs(F.imag))) if np.iscomplexobj(F) else 0.0
    scale = max(float(np.max(np.abs(F))), 1e-300)
    if real_input:
        if residue <= 1e-9 * scale:
            F = F.real
        else:
            warnings.warn(
                f"f(A) has an imaginary residue {residue:.3g} relative to {scale:.3g}; returning complex result",
                RuntimeWarning,
                stacklevel=2,
            )
    log.debug("apply_scalar_function route=%s imag_residue=%.3g", route, residue)
    if return_info:
        return F, {"route": route, "imag_residue": residue, "condition": dec.condition_estimate}
    return F


def _nilpotency(M: np.ndarray) -> int | None:
    """Index m with M^m == 0 (m <= N), or None if M is not nilpotent."""
    n = M.shape[0]
    if not np.any(M):
        return 1
    # strictly triangular matrices are caught exactly
    if not np.any(np.tril(M)) or not np.any(np.triu(M)):
        P = M.copy()
        for m in range(2, n + 1):
            P = P @ M
            if not np.any(P):
                return m
        return n
    P = M.copy()
    tol = 1e-14 * max(1.0, np.linalg.norm(M)) ** n
    for m in range(2, n + 1):
        P = P @ M
        if np.linalg.norm(P) <= tol:
            return m
    return None


def ml_matrix(alpha: float, t: float, G, *, return_info: bool = False):
    """Matrix Mittag-Leffler function ``E_alpha(t^alpha A)``.

    Nilpotent matrices use the finite power series, well-conditioned
    diagonalizable ones ``Q E_alpha(t^alpha D) Q^{-1}``, and anything else
    the Schur-Parlett route with Mittag-Leffler derivatives.
    """
    _check_alpha(alpha)
    if t < 0:
        raise ValueError("t must be non-negative")
    M = np.asarray(_as_matrix(G), dtype=float)
    n = M.shape[0]
    if t == 0:
        out = np.eye(n)
        return (out, {"route": "identity"}) if return_info else out
    scale = t**alpha
    m = _nilpotency(M)
    if m is not None:
        S = scale * M
        out = np.zeros((n, n))
        P = np.eye(n)
        for l in range(m):
            out += P * rgamma(alpha * l + 1)
            P = P @ S
        return (out, {"route": "nilpotent", "index": m}) if return_info else out
    dec = G.spectral if isinstance(G, GeneratorMatrix) else spectral_decomposition(M)
    scaled = SpectralDecomposition(
        dec.eigenvalues * scale, dec.right_vectors, dec.left_vectors, dec.diagonalizable, dec.condition_estimate
    )
    F, info = apply_scalar_function(ml_function(alpha), scale * M, decomposition=scaled, return_info=True)
    return (F, info) if return_info else F
