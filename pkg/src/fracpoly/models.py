"""Polynomial processes of the model zoo and their generator matrices.

Matrix layout
-------------
For a basis ``H = (h_0, ..., h_{N-1})`` of polynomials of degree <= k the
generator matrix ``A`` stores the coordinates of ``G h_j`` in column ``j``::

    G h_j = sum_i A[i, j] h_i

so that ``E_x[u(X_t)] = H(x) @ expm(t A) @ u``.  Every matrix printed for the
zoo (Brownian motion, Pearson, Jacobi, Levy-OU, QTSM) follows this layout,
and degree preservation shows up as ``A[i, j] == 0`` whenever
``deg h_i > deg h_j`` (block upper triangular), with a zero constant column.
"""
from __future__ import annotations

import dataclasses
import math
import threading
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, ClassVar, Mapping

import numpy as np

from .polybasis import Basis, build_basis

__all__ = [
    "ModelSpec",
    "BrownianMotion",
    "Pearson",
    "JacobiJump",
    "LevyOU",
    "QTSM",
    "GeneratorMatrix",
    "EigenSolverError",
    "generator_matrix",
    "stability_index",
    "is_zero_stable",
    "model_from_config",
    "MODEL_KINDS",
]


class EigenSolverError(RuntimeError):
    """The dense eigensolver did not converge."""


# Sparse polynomials as {exponent tuple: coefficient}; only used to apply the
# generator to monomials.
_Poly = dict


def _padd(*polys: _Poly) -> _Poly:
    out: _Poly = {}
    for p in polys:
        for e, c in p.items():
            out[e] = out.get(e, 0.0) + c
    return out


def _pscale(p: _Poly, a: float) -> _Poly:
    return {e: a * c for e, c in p.items()}


def _pmul(p: _Poly, q: _Poly) -> _Poly:
    out: _Poly = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, 0.0) + c1 * c2
    return out


def _pderiv(p: _Poly, i: int) -> _Poly:
    out: _Poly = {}
    for e, c in p.items():
        if e[i] == 0:
            continue
        e2 = list(e)
        e2[i] -= 1
        out[tuple(e2)] = out.get(tuple(e2), 0.0) + c * e[i]
    return out


def _const(d: int, c: float) -> _Poly:
    return {(0,) * d: float(c)}


def _linear(d: int, c0: float, coeffs) -> _Poly:
    p = _const(d, c0)
    for i, c in enumerate(coeffs):
        e = [0] * d
        e[i] = 1
        p[tuple(e)] = float(c)
    return p


class ModelSpec:
    """Base class for the supported polynomial processes.

    Subclasses describe the extended generator through a polynomial drift
    vector, a polynomial diffusion matrix and an optional jump operator acting
    on polynomials.
    """

    kind: ClassVar[str] = ""
    state_dim: ClassVar[int] = 1

    def drift(self) -> list[_Poly]:
        raise NotImplementedError

    def diffusion(self) -> list[list[_Poly]]:
        raise NotImplementedError

    def jump(self, g: _Poly, k: int) -> _Poly:
        return {}

    def in_domain(self, x) -> bool:
        return True

    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def apply_generator(self, g: _Poly, k: int) -> _Poly:
        d = self.state_dim
        b = self.drift()
        a = self.diffusion()
        parts = [_pmul(b[i], _pderiv(g, i)) for i in range(d)]
        for i in range(d):
            for j in range(d):
                if a[i][j]:
                    parts.append(_pscale(_pmul(a[i][j], _pderiv(_pderiv(g, i), j)), 0.5))
        parts.append(self.jump(g, k))
        return _padd(*parts)


@dataclass(frozen=True)
class BrownianMotion(ModelSpec):
    """Standard Brownian motion, generator ``g''/2``."""

    kind: ClassVar[str] = "BrownianMotion"

    def drift(self):
        return [{}]

    def diffusion(self):
        return [[_const(1, 1.0)]]


@dataclass(frozen=True)
class Pearson(ModelSpec):
    """Pearson diffusion ``dX = -beta (X - theta) dt + sqrt(a0 + a1 X + a2 X^2) dW``.

    ``domain`` is the state interval on which the diffusion polynomial must be
    non-negative; when omitted it is inferred for the common cases
    (OU: the real line, CIR-type ``a2 = 0``: a half line).
    """

    kind: ClassVar[str] = "Pearson"
    beta: float
    theta: float
    a0: float = 1.0
    a1: float = 0.0
    a2: float = 0.0
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", self._infer_domain())
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"empty state interval {self.domain}")
        a1, a2 = self.a1, self.a2
        if not math.isfinite(hi) and (a2 < 0 or (a2 == 0 and a1 < 0)):
            raise ValueError("diffusion coefficient turns negative as x -> +inf")
        if not math.isfinite(lo) and (a2 < 0 or (a2 == 0 and a1 > 0)):
            raise ValueError("diffusion coefficient turns negative as x -> -inf")
        pts = [v for v in (lo, hi) if math.isfinite(v)] or [0.0]
        if a2 != 0.0 and lo <= -a1 / (2 * a2) <= hi:
            pts.append(-a1 / (2 * a2))
        for v in pts:
            if self.a0 + self.a1 * v + self.a2 * v * v < -1e-12:
                raise ValueError(f"diffusion coefficient negative at x={v} on the state interval")

    def _infer_domain(self):
        a0, a1, a2 = self.a0, self.a1, self.a2
        inf = math.inf
        if a1 == 0 and a2 == 0:
            return (-inf, inf)
        if a2 == 0:
            root = -a0 / a1
            return (root, inf) if a1 > 0 else (-inf, root)
        disc = a1 * a1 - 4 * a0 * a2
        if a2 > 0 and disc <= 0:
            return (-inf, inf)
        if a2 > 0:
            # two real roots: use the right half line beyond the larger one
            return ((-a1 + math.sqrt(disc)) / (2 * a2), inf)
        r1 = (-a1 + math.sqrt(disc)) / (2 * a2)
        r2 = (-a1 - math.sqrt(disc)) / (2 * a2)
        return (min(r1, r2), max(r1, r2))

    def drift(self):
        return [_linear(1, self.beta * self.theta, [-self.beta])]

    def diffusion(self):
        return [[{(0,): self.a0, (1,): self.a1, (2,): self.a2}]]

    def in_domain(self, x):
        lo, hi = self.domain
        return lo <= float(np.atleast_1d(x)[0]) <= hi

    def params(self):
        return {"beta": self.beta, "theta": self.theta, "a0": self.a0, "a1": self.a1, "a2": self.a2}


@dataclass(frozen=True)
class JacobiJump(ModelSpec):
    """Jacobi diffusion on [0, 1] with Poisson jumps reflecting at 1/2.

    ``dX = -beta (X - theta) dt + sigma sqrt(X (1 - X)) dW + (1 - 2 X) dJ``
    with ``J`` a Poisson process of intensity ``lam``.
    """

    kind: ClassVar[str] = "JacobiJump"
    beta: float
    theta: float
    sigma: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("JacobiJump needs beta > 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("JacobiJump needs theta in [0, 1]")
        if not self.sigma > 0 or self.lam < 0:
            raise ValueError("JacobiJump needs sigma > 0 and lam >= 0")

    def drift(self):
        return [_linear(1, self.beta * self.theta, [-self.beta])]

    def diffusion(self):
        s2 = self.sigma**2
        return [[{(1,): s2, (2,): -s2}]]

    def jump(self, g, k):
        # lam * (g(1 - x) - g(x)), expanded binomially
        out: _Poly = {}
        for (m,), c in g.items():
            for j in range(m + 1):
                out[(j,)] = out.get((j,), 0.0) + self.lam * c * math.comb(m, j) * (-1) ** j
            out[(m,)] = out.get((m,), 0.0) - self.lam * c
        return out

    def in_domain(self, x):
        return 0.0 <= float(np.atleast_1d(x)[0]) <= 1.0


@dataclass(frozen=True)
class LevyOU(ModelSpec):
    """Levy-driven OU process ``dX = -beta (X - theta) dt + sigma dY``.

    ``Y`` has drift ``levy_b`` (already compensated for the truncation
    ``xi -> xi``), Gaussian volatility ``levy_a`` and Levy measure with
    second moment ``levy_m2``.  ``levy_moments`` holds the higher raw moments
    ``(m3, m4, ...)`` of the Levy measure; generators of degree ``k > 2`` need
    ``m3 .. mk``.  ``jump_rate`` only fixes the default compound-Poisson law
    used by the simulator (symmetric jumps of size ``sqrt(m2 / rate)``).
    """

    kind: ClassVar[str] = "LevyOU"
    beta: float
    theta: float
    sigma: float
    levy_b: float = 0.0
    levy_a: float = 0.0
    levy_m2: float = 0.0
    levy_moments: tuple[float, ...] = ()
    jump_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "levy_moments", tuple(float(m) for m in self.levy_moments))
        if not self.beta > 0 or not self.sigma > 0:
            raise ValueError("LevyOU needs beta > 0 and sigma > 0")
        if self.levy_m2 < 0:
            raise ValueError("levy_m2 must be non-negative")
        if self.jump_rate <= 0:
            raise ValueError("jump_rate must be positive")

    def moment(self, n: int) -> float:
        if n == 2:
            return self.levy_m2
        idx = n - 3
        if idx >= len(self.levy_moments):
            raise ValueError(
                f"LevyOU generator on degree >= {n} needs the Levy moment m{n}; "
                f"supply it through levy_moments"
            )
        return self.levy_moments[idx]

    def drift(self):
        return [_linear(1, self.levy_b * self.sigma + self.beta * self.theta, [-self.beta])]

    def diffusion(self):
        return [[_const(1, (self.sigma * self.levy_a) ** 2)]]

    def jump(self, g, k):
        # int (g(x + s xi) - g(x) - s xi g'(x)) nu(dxi) = sum_{n>=2} s^n m_n g^(n)/n!
        out: _Poly = {}
        deriv = g
        deriv = _pderiv(deriv, 0)
        for n in range(2, k + 1):
            deriv = _pderiv(deriv, 0)
            if not deriv:
                break
            w = self.sigma**n * self.moment(n) / math.factorial(n)
            out = _padd(out, _pscale(deriv, w))
        return out


@dataclass(frozen=True)
class QTSM(ModelSpec):
    """Quadratic term-structure model on the state ``(y, r)``.

    ``dY = (b - beta Y) dt + sigma dW`` and ``r = R0 + R1 Y + R2 Y^2``; the
    pair is a polynomial diffusion in R^2 ordered ``(1, y, r, y^2, y r, r^2)``.
    """

    kind: ClassVar[str] = "QTSM"
    state_dim: ClassVar[int] = 2
    b: float
    beta: float
    sigma: float
    R0: float
    R1: float
    R2: float

    def drift(self):
        b, be, s = self.b, self.beta, self.sigma
        R0, R1, R2 = self.R0, self.R1, self.R2
        return [
            _linear(2, b, [-be, 0.0]),
            _linear(2, R1 * b + R2 * s * s + 2 * R0 * be, [2 * R2 * b + R1 * be, -2 * be]),
        ]

    def diffusion(self):
        s2 = self.sigma**2
        R1, R2 = self.R1, self.R2
        ryy = {(0, 0): s2}
        ryr = {(0, 0): s2 * R1, (1, 0): 2 * s2 * R2}
        rrr = {(0, 0): s2 * R1 * R1, (1, 0): 4 * s2 * R1 * R2, (2, 0): 4 * s2 * R2 * R2}
        return [[ryy, ryr], [ryr, rrr]]

    def short_rate(self, y):
        return self.R0 + self.R1 * y + self.R2 * y * y

    def in_domain(self, x):
        y, r = np.atleast_1d(x)[:2]
        return abs(r - self.short_rate(y)) <= 1e-9 * max(1.0, abs(r))


MODEL_KINDS: dict[str, type] = {
    cls.kind: cls for cls in (BrownianMotion, Pearson, JacobiJump, LevyOU, QTSM)
}


def model_from_config(section: Mapping) -> ModelSpec:
    """Build a model from a ``[model]`` config section.

    The section holds ``kind`` plus the flat constructor parameters of that
    kind; unknown keys are rejected.
    """
    section = dict(section)
    try:
        kind = section.pop("kind")
    except KeyError:
        raise ValueError("model section needs a 'kind' key") from None
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}") from None
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown {kind} parameters: {sorted(unknown)}")
    if "levy_moments" in section:
        section["levy_moments"] = tuple(section["levy_moments"])
    if "domain" in section and section["domain"] is not None:
        section["domain"] = tuple(float(v) for v in section["domain"])
    return cls(**section)


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Matrix of the generator restricted to polynomials of degree <= k."""

    A: np.ndarray
    basis: Basis
    model: ModelSpec | None
    k: int
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        with self._lock:
            return _eigvals(self.A)

    @cached_property
    def spectral(self):
        from .mittag import spectral_decomposition

        with self._lock:
            return spectral_decomposition(self.A)

    def restrict(self, m: int) -> np.ndarray:
        idx = self.basis.sub_indices(m)
        return self.A[np.ix_(idx, idx)]


def _eigvals(A: np.ndarray) -> np.ndarray:
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigenvalue computation failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise EigenSolverError("eigenvalue computation produced non-finite values")
    return ev


def _as_array(G) -> np.ndarray:
    return G.A if isinstance(G, GeneratorMatrix) else np.asarray(G, dtype=float)


@lru_cache(maxsize=256)
def _generator_cached(model: ModelSpec, k: int) -> GeneratorMatrix:
    basis = build_basis(model.state_dim, k)
    N = basis.size
    A = np.zeros((N, N))
    for j, e in enumerate(basis.ordering):
        image = model.apply_generator({e: 1.0}, k)
        for ei, c in image.items():
            if c == 0.0:
                continue
            if ei not in basis:
                raise ValueError(f"{model.kind} generator raises the degree of {e}")
            A[basis.index(ei), j] += c
    return GeneratorMatrix(A=A, basis=basis, model=model, k=k)


def generator_matrix(model: ModelSpec, k: int) -> GeneratorMatrix:
    """Matrix of the generator of ``model`` on polynomials of degree <= ``k``.

    Column ``j`` holds the coordinates of ``G h_j``; see the module docstring.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"degree k must be an integer >= 1, got {k!r}")
    return _generator_cached(model, int(k))


def stability_index(G) -> float:
    """Largest real part of the eigenvalues of ``G``."""
    ev = G.eigenvalues if isinstance(G, GeneratorMatrix) else _eigvals(_as_array(G))
    return float(np.max(ev.real))


def is_zero_stable(G, tol: float = 1e-9) -> bool:
    """True iff 0 is a simple eigenvalue and all others have negative real part.

    ``tol`` is relative to ``max(1, ||A||)``.  The zero eigenvalue counts as
    simple when no other eigenvalue has ``|Re| <= 10 tol`` and the numerical
    null space of ``A`` is one-dimensional.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = _as_array(G)
    ev = G.eigenvalues if isinstance(G, GeneratorMatrix) else _eigvals(A)
    eps = tol * max(1.0, np.linalg.norm(A, 2))
    near = np.abs(ev) <= eps
    if near.sum() != 1:
        return False
    others = ev[~near]
    if others.size and not np.all(others.real < -10 * eps):
        return False
    sv = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(sv <= eps)) == 1


def _warn_domain(model: ModelSpec, x):
    if model is not None and not model.in_domain(x):
        warnings.warn(
            f"state {np.atleast_1d(x).tolist()} lies outside the {model.kind} state space; "
            "evaluating the polynomial formula anyway",
            stacklevel=3,
        )
