"""Moments of polynomial processes run on a classical or a random clock.

Three clocks are supported:

* the identity clock, where ``E_x[p(X_t)] = H(x) . expm(tA) p``;
* the inverse alpha-stable subordinator, where the exponential is replaced by
  the matrix Mittag-Leffler function ``E_alpha(t^alpha A)``;
* a general inverse subordinator with Laplace exponent ``f``, handled by
  inverting the vector Laplace transform
  ``lambda -> f(lambda) / lambda * (f(lambda) I - A)^{-1} p`` on a Talbot
  contour.

``caputo_residual`` checks a sampled solution against the linear fractional
equation ``D^alpha q = A q`` and is used as an oracle in the tests.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from scipy import optimize
from scipy.special import betainc, gamma

from .mittag import ml_matrix
from .models import GeneratorMatrix, ModelSpec, _warn_domain, generator_matrix, stability_index
from .polybasis import PolyVec, build_basis

__all__ = [
    "StableAlpha",
    "GeneralBernstein",
    "SubordinatorSpec",
    "MomentQuery",
    "moment_classical",
    "moment_fractional",
    "moment_general_f",
    "moment",
    "caputo_residual",
    "LaplaceInversionError",
    "InversionResult",
]


class LaplaceInversionError(ArithmeticError):
    """Raised when the Talbot contour cannot be placed or a solve fails on it."""


@dataclass(frozen=True)
class StableAlpha:
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"stable index must lie strictly inside (0, 1), got {self.alpha!r}")

    def laplace_exponent(self, lam):
        return lam**self.alpha


@dataclass(frozen=True)
class GeneralBernstein:
    """Subordinator given by its Laplace exponent ``f`` (no killing).

    ``f`` must accept complex arguments with positive real part.  ``b`` is
    the drift and ``nu_tail`` the tail ``s -> nu((s, inf))`` of the Levy
    measure; both are informational for the moment formulas, which only
    need ``f``.
    """

    f: Callable[[complex], complex]
    b: float = 0.0
    nu_tail: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("drift b must be non-negative")
        # f(0+) = a: a killed exponent plateaus at a instead of decaying to 0
        near, far = abs(complex(self.f(1e-80))), abs(complex(self.f(1e-160)))
        if far > 1e-6 and far >= 0.9 * near:
            raise ValueError(f"f(0+) = {far:.3g}; killed subordinators are not supported")

    def laplace_exponent(self, lam):
        return self.f(lam)

    @classmethod
    def stable(cls, alpha: float) -> "GeneralBernstein":
        """``f(lambda) = lambda^alpha`` wrapped as a general exponent."""
        return cls(
            f=lambda lam: lam**alpha,
            b=0.0,
            nu_tail=lambda s: s ** (-alpha) / gamma(1 - alpha),
        )


SubordinatorSpec = StableAlpha | GeneralBernstein


@dataclass(frozen=True)
class MomentQuery:
    model: ModelSpec
    p: PolyVec
    x: tuple[float, ...]
    t: float
    subordinator: SubordinatorSpec | None = None

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if self.p.basis.d != self.model.state_dim:
            raise ValueError("polynomial dimension does not match the model state dimension")


def _setup(model: ModelSpec, p: PolyVec, x):
    if p.basis.d != model.state_dim:
        raise ValueError(
            f"polynomial in {p.basis.d} variables used with a {model.state_dim}-dimensional model"
        )
    k = max(p.degree, 1)
    G = generator_matrix(model, k)
    coeffs = p.embed(G.basis).coeffs if p.basis != G.basis else p.coeffs
    _warn_domain(model, x)
    H = G.basis.monomials(x)
    return G, coeffs, H


def moment_classical(model: ModelSpec, p: PolyVec, x, t: float) -> float:
    """``E_x[p(X_t)]`` via the matrix exponential."""
    if t < 0:
        raise ValueError("t must be non-negative")
    G, coeffs, H = _setup(model, p, x)
    if t == 0:
        return float(H @ coeffs)
    return float(H @ (scipy.linalg.expm(t * G.A) @ coeffs))


def moment_fractional(model: ModelSpec, p: PolyVec, x, t: float, alpha: float) -> float:
    """``E_x[p(X_{L_t})]`` for the inverse alpha-stable clock.

    >>> from fracpoly.models import BrownianMotion
    >>> from fracpoly.polybasis import build_basis, monomial
    >>> round(moment_fractional(BrownianMotion(), monomial(build_basis(1, 2), (2,)), 0.0, 1.0, 0.5), 7)
    1.1283792
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if t < 0:
        raise ValueError("t must be non-negative")
    G, coeffs, H = _setup(model, p, x)
    if t == 0:
        return float(H @ coeffs)
    return float(H @ (ml_matrix(alpha, t, G) @ coeffs))


# ---------------------------------------------------------------------------
# general Bernstein clock: Talbot inversion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InversionResult:
    value: float
    vector: np.ndarray
    error_estimate: float
    nodes: int
    shift: float


def _abscissa(f: Callable, target: float) -> float:
    """Solve ``f(c) = target`` for real ``c`` in (0, 1e6)."""
    if target <= 0:
        return 0.0
    g = lambda c: float(np.real(f(c))) - target
    lo, hi = 1e-12, 1e6
    if g(hi) < 0:
        raise LaplaceInversionError(
            f"f never reaches the index of stability {target:.6g} on (0, 1e6); contour cannot be placed"
        )
    return optimize.brentq(g, lo, hi, xtol=1e-12)


def _talbot(transform: Callable[[complex], np.ndarray], t: float, M: int, shift: float) -> np.ndarray:
    r = 2.0 * M / (5.0 * t)
    theta = np.arange(1, M) * np.pi / M
    cot = 1.0 / np.tan(theta)
    lam = shift + r * theta * (cot + 1j)
    dlam = r * (1j + cot - theta / np.sin(theta) ** 2)  # d lambda / d theta
    acc = 0.5 * math.exp((shift + r) * t) * r * np.real(transform(complex(shift + r)))
    for lk, dk in zip(lam, dlam):
        acc = acc + np.real(np.exp(lk * t) * transform(lk) * dk / 1j)
    return acc / M


def moment_general_f(
    model: ModelSpec,
    p: PolyVec,
    x,
    t: float,
    sub: GeneralBernstein | StableAlpha,
    *,
    nodes: int = 32,
    full_output: bool = False,
):
    """``E_x[p(X_{L_t})]`` for a general inverse subordinator.

    The vector ``q(t) = E[exp(L_t A)] p`` is recovered from its Laplace
    transform on a fixed-Talbot contour shifted to the right of the abscissa
    ``c`` where ``f(c)`` equals the index of stability of ``A``.  The margin
    right of ``c`` is ``min(0.5, 1/t)``: the contour prefactor grows like
    ``exp(margin * t)``, so a fixed margin cancels catastrophically at large
    ``t``.  The error estimate is the difference between ``nodes`` and
    ``nodes // 2`` contour points; a RuntimeWarning is issued when it exceeds
    ``1e-6`` relative.  Rounding grows like ``exp(0.4 * nodes)`` on this contour, so
    values much beyond 40 lose accuracy in double precision.
    """
    if t <= 0:
        raise ValueError("t must be positive for the Laplace inversion")
    f = sub.laplace_exponent
    G, coeffs, H = _setup(model, p, x)
    A = G.A
    n = A.shape[0]
    c = _abscissa(f, max(stability_index(G), 0.0))
    shift = c + min(0.5, 1.0 / t)
    eye = np.eye(n)

    def transform(lam):
        fl = complex(f(lam))
        M = fl * eye - A
        try:
            sol = np.linalg.solve(M, coeffs.astype(complex))
        except np.linalg.LinAlgError as exc:
            raise LaplaceInversionError(f"singular resolvent at lambda={lam!r}") from exc
        return fl / lam * sol

    if not 8 <= nodes <= 64:
        raise ValueError("nodes must lie in [8, 64]")
    q1 = _talbot(transform, t, nodes // 2, shift)
    q2 = _talbot(transform, t, nodes, shift)
    if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(q2))):
        raise LaplaceInversionError("non-finite values on the inversion contour")
    value = float(H @ q2)
    err = float(abs(H @ (q2 - q1)))
    if err > 1e-6 * max(abs(value), 1e-300):
        warnings.warn(f"Laplace inversion error estimate {err:.3g} exceeds 1e-6 relative at t={t:g}",
                      RuntimeWarning, stacklevel=2)
    if full_output:
        return InversionResult(value, q2, err, nodes, shift)
    return value


def moment(query: MomentQuery) -> float:
    """Dispatch a :class:`MomentQuery` on its clock."""
    sub = query.subordinator
    if sub is None:
        return moment_classical(query.model, query.p, query.x, query.t)
    if isinstance(sub, StableAlpha):
        return moment_fractional(query.model, query.p, query.x, query.t, sub.alpha)
    if query.t == 0:
        return moment_classical(query.model, query.p, query.x, 0.0)
    return moment_general_f(query.model, query.p, query.x, query.t, sub)


# ---------------------------------------------------------------------------
# Caputo residual oracle
# ---------------------------------------------------------------------------


def _caputo_power(q: np.ndarray, alpha: float, grid: np.ndarray) -> np.ndarray:
    """Caputo derivative of q interpolated piecewise quadratically in ``t^alpha``.

    On each cell q is written as ``a + B u + C u^2`` with ``u = t^alpha`` (the
    quadratic through the cell and its right neighbour, left neighbour on the
    last cell).  Its derivative is ``B alpha s^(alpha-1) + 2 C alpha
    s^(2 alpha - 1)``, and the kernel integrals of both powers are incomplete
    beta functions, so the quadrature is exact for quadratics in ``t^alpha``.
    """
    u = grid**alpha
    h = np.diff(u)
    d1 = np.diff(q, axis=0) / h[:, None]
    d2 = np.empty_like(d1)
    d2[:-1] = (d1[1:] - d1[:-1]) / (u[2:] - u[:-2])[:, None]
    d2[-1] = d2[-2] if len(d1) < 2 else (d1[-1] - d1[-2]) / (u[-1] - u[-3])
    B = d1 - d2 * (u[:-1] + u[1:])[:, None]
    C = d2
    out = np.zeros_like(q)
    g1 = gamma(1 + alpha)
    g2 = 2 * alpha * gamma(2 * alpha) / gamma(1 + alpha)
    for n in range(1, len(grid)):
        y = grid[: n + 1] / grid[n]
        w1 = np.diff(betainc(alpha, 1 - alpha, y))
        w2 = np.diff(betainc(2 * alpha, 1 - alpha, y))
        out[n] = g1 * (w1 @ B[:n]) + g2 * u[n] * (w2 @ C[:n])
    return out


def _caputo_linear(q: np.ndarray, alpha: float, grid: np.ndarray) -> np.ndarray:
    """Classical L1 scheme: q piecewise linear in t."""
    slope = np.diff(q, axis=0) / np.diff(grid)[:, None]
    out = np.zeros_like(q)
    c = 1.0 / gamma(2 - alpha)
    for n in range(1, len(grid)):
        tn = grid[n]
        a = (tn - grid[:n]) ** (1 - alpha)
        b = (tn - grid[1 : n + 1]) ** (1 - alpha)
        out[n] = c * ((a - b) @ slope[:n])
    return out


def caputo_residual(q, alpha: float, A, grid, scheme: str = "power") -> float:
    """Largest relative residual of ``D^alpha q = A q`` on ``grid``.

    Parameters
    ----------
    q : array of shape (len(grid), N) or (len(grid),)
        Samples of the candidate solution.
    alpha : float
        Caputo order in (0, 1).
    A : array_like or GeneratorMatrix
    grid : increasing array starting at 0, at least 16 points.
    scheme : {"power", "linear"}
        Interpolation used inside the product integration.  ``"power"`` is
        piecewise quadratic in ``t^alpha`` and resolves the ``t^alpha`` onset
        of Mittag-Leffler solutions; ``"linear"`` is the L1 scheme.

    Returns
    -------
    float
        ``max_n ||D^alpha q(t_n) - A q(t_n)|| / (1 + ||A q(t_n)||)`` over n >= 1.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 16:
        raise ValueError("caputo_residual needs a grid of at least 16 points")
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and be strictly increasing")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    M = A.A if isinstance(A, GeneratorMatrix) else np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.asarray(q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    if Q.shape != (len(grid), M.shape[0]):
        raise ValueError(f"q has shape {Q.shape}, expected {(len(grid), M.shape[0])}")
    if scheme == "power":
        D = _caputo_power(Q, alpha, grid)
    elif scheme == "linear":
        D = _caputo_linear(Q, alpha, grid)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    AQ = Q @ M.T
    res = np.linalg.norm(D[1:] - AQ[1:], axis=1) / (1.0 + np.linalg.norm(AQ[1:], axis=1))
    return float(res.max())
