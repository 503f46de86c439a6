"""Monomial bases of polynomial spaces and coordinate vectors.

A :class:`Basis` lists every monomial ``x**k`` of total degree ``<= n`` in
``d`` variables in graded lexicographic order: lower total degree first, and
within one degree the exponent tuples are sorted in decreasing lexicographic
order, i.e. the first variable is the most significant one.  For ``d = 2`` and
``n = 2`` this gives ``(1, x, y, x^2, xy, y^2)``.  Every generator matrix in
the package is laid out in this order.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Basis",
    "PolyVec",
    "build_basis",
    "evaluate",
    "product_vec",
    "monomial",
    "polyvec_from_mapping",
]


def _exponents_of_degree(d: int, deg: int) -> list[tuple[int, ...]]:
    out = [
        c
        for c in itertools.product(range(deg + 1), repeat=d)
        if sum(c) == deg
    ]
    out.sort(reverse=True)
    return out


@dataclass(frozen=True)
class Basis:
    """Graded-lex monomial basis of the polynomials of degree <= ``n`` on R^d."""

    d: int
    n: int
    ordering: tuple[tuple[int, ...], ...] = field(repr=False)
    _index: Mapping[tuple[int, ...], int] = field(repr=False, compare=False, hash=False)

    @property
    def size(self) -> int:
        return len(self.ordering)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([sum(e) for e in self.ordering], dtype=int)

    def index(self, exponents: Sequence[int]) -> int:
        """Linear index of a multi-index; ``KeyError`` if not in the basis."""
        return self._index[tuple(int(e) for e in exponents)]

    def __contains__(self, exponents) -> bool:
        return tuple(exponents) in self._index

    def monomials(self, x) -> np.ndarray:
        """The vector ``H(x)`` of all basis monomials evaluated at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.d,):
            raise ValueError(f"expected a point of dimension {self.d}, got shape {x.shape}")
        powers = x[None, :] ** np.array(self.ordering, dtype=float)
        return np.prod(powers, axis=1)

    def sub_indices(self, m: int) -> np.ndarray:
        """Positions of the monomials of degree <= m (a leading block)."""
        return np.flatnonzero(self.degrees <= m)


@lru_cache(maxsize=None)
def build_basis(d: int, n: int) -> Basis:
    """Return the graded-lex basis of polynomials of degree <= n in d variables.

    Examples
    --------
    >>> build_basis(2, 2).ordering
    ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    """
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if int(n) != n or n < 0:
        raise ValueError(f"degree must be a non-negative integer, got {n!r}")
    d, n = int(d), int(n)
    ordering = tuple(e for deg in range(n + 1) for e in _exponents_of_degree(d, deg))
    assert len(ordering) == comb(n + d, d)
    index = {e: i for i, e in enumerate(ordering)}
    return Basis(d=d, n=n, ordering=ordering, _index=index)


@dataclass(frozen=True, eq=False)
class PolyVec:
    """Coefficient vector of a polynomial in a fixed :class:`Basis`."""

    basis: Basis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.basis.size,):
            raise ValueError(
                f"coefficient vector has shape {c.shape}, basis has {self.basis.size} monomials"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        """Actual total degree (-1 for the zero polynomial)."""
        nz = np.flatnonzero(self.coeffs)
        return int(self.basis.degrees[nz].max()) if nz.size else -1

    def embed(self, basis: Basis) -> "PolyVec":
        """Re-express in a larger basis of the same dimension."""
        if basis.d != self.basis.d:
            raise ValueError("cannot embed into a basis of different dimension")
        out = np.zeros(basis.size)
        for e, c in zip(self.basis.ordering, self.coeffs):
            if c == 0.0:
                continue
            if e not in basis:
                raise ValueError(f"monomial {e} does not fit into degree {basis.n}")
            out[basis.index(e)] = c
        return PolyVec(basis, out)

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def _check_same(self, other: "PolyVec"):
        if other.basis != self.basis:
            raise ValueError("polynomials live in different bases")

    def __add__(self, other: "PolyVec") -> "PolyVec":
        self._check_same(other)
        return PolyVec(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "PolyVec") -> "PolyVec":
        self._check_same(other)
        return PolyVec(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "PolyVec":
        return PolyVec(self.basis, float(a) * self.coeffs)

    __rmul__ = __mul__

    def to_mapping(self) -> dict[str, float]:
        """Config-file form, e.g. ``{"[0,0]": 1.0, "[1,0]": 2.0}``."""
        return {
            json.dumps(list(e), separators=(",", ":")): float(c)
            for e, c in zip(self.basis.ordering, self.coeffs)
            if c != 0.0
        }


def monomial(basis: Basis, exponents: Sequence[int], coeff: float = 1.0) -> PolyVec:
    c = np.zeros(basis.size)
    c[basis.index(exponents)] = coeff
    return PolyVec(basis, c)


def polyvec_from_mapping(mapping: Mapping[str, float], d: int, n: int | None = None) -> PolyVec:
    """Build a polynomial from ``{"[i,j]": coeff}``.

    Keys may also be plain integers (or their string form) when ``d == 1``.
    If ``n`` is omitted the smallest degree holding every monomial is used.
    """
    terms = {}
    for key, value in mapping.items():
        if isinstance(key, str):
            parsed = json.loads(key)
        else:
            parsed = key
        exps = tuple(int(e) for e in np.atleast_1d(parsed))
        if len(exps) != d:
            raise ValueError(f"monomial key {key!r} does not have {d} exponents")
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {key!r}")
        terms[exps] = terms.get(exps, 0.0) + float(value)
    deg = max((sum(e) for e in terms), default=0)
    if n is None:
        n = deg
    elif deg > n:
        raise ValueError(f"polynomial has degree {deg} > {n}")
    basis = build_basis(d, n)
    c = np.zeros(basis.size)
    for e, v in terms.items():
        c[basis.index(e)] += v
    return PolyVec(basis, c)


def evaluate(p: PolyVec, x) -> float:
    """Evaluate ``p`` at the point ``x``: ``H(x) @ coeffs``."""
    return float(p.basis.monomials(x) @ p.coeffs)


def product_vec(p: PolyVec, q: PolyVec) -> PolyVec:
    """Coefficient vector of ``p * q`` in the degree-``2n`` basis.

    ``p`` and ``q`` must share the same basis of degree ``n``.
    """
    if p.basis != q.basis:
        raise ValueError("product_vec needs both factors in the same basis")
    b = p.basis
    out_basis = build_basis(b.d, 2 * b.n)
    table = _product_table(b.d, b.n)
    out = np.zeros(out_basis.size)
    outer = np.outer(p.coeffs, q.coeffs)
    # symmetrised so that swapping p and q is exact in floating point
    outer = 0.5 * (outer + outer.T)
    np.add.at(out, table.ravel(), outer.ravel())
    return PolyVec(out_basis, out)


@lru_cache(maxsize=None)
def _product_table(d: int, n: int) -> np.ndarray:
    b = build_basis(d, n)
    big = build_basis(d, 2 * n)
    e = np.array(b.ordering)
    table = np.empty((b.size, b.size), dtype=int)
    for i in range(b.size):
        for j in range(b.size):
            table[i, j] = big.index(e[i] + e[j])
    table.setflags(write=False)
    return table
