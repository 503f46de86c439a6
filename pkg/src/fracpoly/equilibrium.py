"""Equilibrium moments, cross-moments and correlations.

Everything starts from the left null vector ``v`` of a zero-stable generator
matrix, normalised so that ``v[0] = 1``: then ``v . p`` is the stationary
mean of ``p``.  Cross-moments at lag ``s`` for the time-changed process
replace ``expm(sA)`` by ``F(-A)``, where ``F(beta)`` is the Laplace transform
of the clock increment ``L_{t+s} - L_t`` (``fhat_scalar``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import integrate
from scipy.special import gamma

from .mittag import apply_scalar_function, ml_scalar, ml_scalar_deriv
from .models import GeneratorMatrix, ModelSpec, generator_matrix, is_zero_stable
from .polybasis import PolyVec, product_vec

__all__ = [
    "EquilibriumContext",
    "make_context",
    "stationary_vector",
    "stationary_moment",
    "fhat_scalar",
    "fhat_matrix",
    "cross_moment",
    "covariance",
    "correlation",
    "correlation_generic",
    "lrd_asymptote",
    "EquilibriumError",
    "QuadratureError",
]


class EquilibriumError(ArithmeticError):
    """No usable equilibrium: zero-stability fails or the null vector degenerates."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested accuracy."""


def stationary_vector(G) -> np.ndarray:
    """Left null vector of a zero-stable generator, scaled to ``v[0] = 1``."""
    A = G.A if isinstance(G, GeneratorMatrix) else np.asarray(G, dtype=float)
    if not is_zero_stable(A):
        raise EquilibriumError("generator matrix is not zero-stable; no equilibrium moments")
    _, sv, vh = np.linalg.svd(A.T)
    v = vh[-1].copy()
    # one inverse-iteration step on A A^T, shifted slightly off zero
    n = A.shape[0]
    shift = 1e-10 * max(1.0, sv[0])
    try:
        w = np.linalg.solve(A @ A.T + shift * np.eye(n), v)
        if np.all(np.isfinite(w)) and np.linalg.norm(w) > 0:
            v = w / np.linalg.norm(w)
    except np.linalg.LinAlgError:
        pass
    if abs(v[0]) < 1e-12:
        raise EquilibriumError(
            f"leading entry of the null vector is {v[0]:.3g}; cannot normalise to 1"
        )
    return v / v[0]


@dataclass(frozen=True)
class EquilibriumContext:
    model: ModelSpec
    k: int
    A_k: GeneratorMatrix
    A_2k: GeneratorMatrix
    v: np.ndarray

    def __post_init__(self):
        for name, G in (("A_k", self.A_k), ("A_2k", self.A_2k)):
            if not is_zero_stable(G):
                raise EquilibriumError(f"{name} is not zero-stable")
        resid = np.linalg.norm(self.v @ self.A_2k.A)
        if resid > 1e-9 * max(1.0, np.linalg.norm(self.A_2k.A)):
            raise EquilibriumError(f"v is not a left null vector (residual {resid:.3g})")
        if self.v[0] != 1.0:
            raise EquilibriumError("v must be normalised to v[0] = 1")
        self.v.setflags(write=False)


def make_context(model: ModelSpec, k: int) -> EquilibriumContext:
    A_k = generator_matrix(model, k)
    A_2k = generator_matrix(model, 2 * k)
    if not is_zero_stable(A_k):
        raise EquilibriumError(f"generator on degree {k} is not zero-stable")
    return EquilibriumContext(model, k, A_k, A_2k, stationary_vector(A_2k))


def _coeffs_in(p: PolyVec, G: GeneratorMatrix) -> np.ndarray:
    if p.basis.d != G.basis.d:
        raise ValueError("polynomial dimension does not match the model")
    if p.degree > G.k:
        raise ValueError(f"polynomial of degree {p.degree} exceeds the context degree {G.k}")
    return p.embed(G.basis).coeffs if p.basis != G.basis else p.coeffs


def stationary_moment(ctx: EquilibriumContext, p: PolyVec) -> float:
    """Stationary mean ``v . p`` (same for every clock and every t)."""
    return float(ctx.v @ _coeffs_in(p, ctx.A_2k))


# ---------------------------------------------------------------------------
# Laplace transform of clock increments
# ---------------------------------------------------------------------------


def _fhat_quad(alpha: float, z: complex, s: float, t: float, order: int = 0) -> complex:
    """``order``-th derivative in ``z`` of ``E[exp(z (L_{t+s} - L_t))]``.

    With ``T = t + s`` and ``c = T^alpha`` the transform reads

        E_alpha(z c) - z c / Gamma(1 + alpha) * int_0^{(t/T)^alpha}
            E_alpha(z c (1 - w^(1/alpha))^alpha) dw

    after the substitution ``w = u^alpha``; derivatives in ``z`` are taken
    under the integral sign.
    """
    T = t + s
    c = T**alpha
    wmax = (t / T) ** alpha
    g = 1.0 / gamma(1 + alpha)

    def inner(w, j):
        m = c * (1.0 - w ** (1.0 / alpha)) ** alpha
        return m**j * complex(ml_scalar_deriv(alpha, z * m, j))

    def integral(j):
        if wmax == 0.0:
            return 0.0
        re, e1 = integrate.quad(lambda w: inner(w, j).real, 0.0, wmax, epsabs=1e-11, epsrel=1e-11, limit=200)
        im, e2 = (0.0, 0.0)
        if isinstance(z, complex) and z.imag != 0.0:
            im, e2 = integrate.quad(lambda w: inner(w, j).imag, 0.0, wmax, epsabs=1e-11, epsrel=1e-11, limit=200)
        if max(e1, e2) > 1e-9:
            raise QuadratureError(f"increment transform quadrature error {max(e1, e2):.3g} exceeds 1e-9")
        return complex(re, im)

    # d^j/dz^j [z I(z)] = z I^(j)(z) + j I^(j-1)(z)
    head = c**order * complex(ml_scalar_deriv(alpha, z * c, order))
    tail = z * integral(order)
    if order > 0:
        tail += order * integral(order - 1)
    return head - c * g * tail


def fhat_scalar(alpha: float, beta: float, s: float, t: float) -> float:
    """``E[exp(-beta (L_{t+s} - L_t))]`` for the inverse alpha-stable clock.

    >>> round(fhat_scalar(0.5, 1.0, 1.0, 0.0), 10) == round(float(ml_scalar(0.5, -1.0)), 10)
    True
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    if beta < 0 or s < 0 or t < 0:
        raise ValueError("beta, s and t must be non-negative")
    if s == 0.0 and t == 0.0:
        return 1.0
    val = _fhat_quad(alpha, complex(-beta), s, t).real
    if -1e-9 <= val < 0.0:
        val = 0.0
    elif 1.0 < val <= 1.0 + 1e-9:
        val = 1.0
    return float(val)


def fhat_matrix(alpha: float, G, s: float, t: float) -> np.ndarray:
    """``F(-A)`` applied through the Jordan-block definition."""
    A = G.A if isinstance(G, GeneratorMatrix) else np.asarray(G, dtype=float)
    if not is_zero_stable(A):
        raise EquilibriumError("fhat_matrix needs a zero-stable generator")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    n = A.shape[0]
    if s == 0.0:
        return np.eye(n)

    def f(z, order=0):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.empty(z.shape, dtype=complex)
        for i, zi in enumerate(z):
            if order == 0 and zi.imag == 0.0 and zi.real <= 0.0:
                out[i] = fhat_scalar(alpha, -zi.real, s, t)
            else:
                out[i] = _fhat_quad(alpha, complex(zi), s, t, order)
        return out

    return apply_scalar_function(f, G)


def cross_moment(ctx: EquilibriumContext, p: PolyVec, q: PolyVec, s: float, t: float,
                 alpha: float | None = None) -> float:
    """Stationary ``E[p(X_{t+s}) q(X_t)]`` on the alpha-stable clock.

    With ``alpha=None`` the identity clock is used, i.e. ``expm(s A)``.
    """
    if s < 0 or t < 0:
        raise ValueError("s and t must be non-negative")
    pc = _coeffs_in(p, ctx.A_k)
    qv = PolyVec(ctx.A_k.basis, _coeffs_in(q, ctx.A_k))
    if s == 0.0:
        moved = pc
    elif alpha is None:
        moved = scipy.linalg.expm(s * ctx.A_k.A) @ pc
    else:
        moved = fhat_matrix(alpha, ctx.A_k, s, t) @ pc
    prod = product_vec(qv, PolyVec(ctx.A_k.basis, moved))
    return float(ctx.v @ prod.embed(ctx.A_2k.basis).coeffs)


def covariance(ctx: EquilibriumContext, p: PolyVec, q: PolyVec, s: float, t: float,
               alpha: float | None = None) -> float:
    mp = stationary_moment(ctx, p)
    mq = stationary_moment(ctx, q)
    return cross_moment(ctx, p, q, s, t, alpha) - mp * mq


def correlation_generic(ctx: EquilibriumContext, p: PolyVec, s: float, t: float,
                        alpha: float | None = None) -> float:
    """``corr(p(X_{t+s}), p(X_t))`` in equilibrium, via cross-moments."""
    var = covariance(ctx, p, p, 0.0, t, alpha)
    if var <= 1e-12:
        raise EquilibriumError(f"stationary variance {var:.3g} is degenerate")
    return covariance(ctx, p, p, s, t, alpha) / var


def _mean_reversion_rate(ctx: EquilibriumContext) -> float:
    if ctx.model.state_dim != 1:
        raise ValueError("correlation needs a one-dimensional model")
    ev = np.linalg.eigvals(ctx.A_k.restrict(1))
    neg = ev[np.argmin(ev.real)]
    if abs(neg.imag) > 1e-12 or neg.real >= 0:
        raise EquilibriumError("degree-one generator has no negative real eigenvalue")
    return float(-neg.real)


def correlation(ctx: EquilibriumContext, s: float, t: float, alpha: float | None = None,
                *, return_covariance: bool = False):
    """Equilibrium autocorrelation of ``X`` on the alpha-stable clock.

    For a one-dimensional model whose degree-one generator has eigenvalues
    ``{0, -beta}`` the correlation is ``fhat_scalar(alpha, beta, s, t)``
    (``exp(-beta s)`` on the identity clock).  With ``return_covariance``
    the raw covariance from :func:`cross_moment` is returned too.
    """
    beta = _mean_reversion_rate(ctx)
    from .polybasis import monomial

    x = monomial(ctx.A_k.basis, (1,))
    var = covariance(ctx, x, x, 0.0, t, alpha)
    if var <= 1e-12:
        raise EquilibriumError(f"stationary variance {var:.3g} is degenerate")
    if alpha is None:
        corr = math.exp(-beta * s)
    else:
        corr = fhat_scalar(alpha, beta, s, t)
    if return_covariance:
        return corr, covariance(ctx, x, x, s, t, alpha)
    return corr


def lrd_asymptote(alpha: float, lam: float, s: float, t: float) -> float:
    """Power-law envelope of ``fhat_scalar(alpha, lam, s, t)`` for large ``s``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return (1.0 / lam + t**alpha / gamma(1 + alpha)) / ((t + s) ** alpha * gamma(1 - alpha))
