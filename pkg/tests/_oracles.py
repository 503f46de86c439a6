"""Independent reference computations used by several test files.

Nothing here calls into fracpoly: each routine is a brute-force or
textbook formula evaluated with numpy/scipy only.
"""
import math

import numpy as np
from scipy import integrate
from scipy.special import gammaln


def ml_half_quadrature(x: float) -> float:
    """``E_{1/2}(-x) = exp(x^2) erfc(x) = 2/sqrt(pi) int_0^inf exp(-u^2 - 2 x u) du``."""
    val, err = integrate.quad(lambda u: math.exp(-u * u - 2.0 * x * u), 0.0, math.inf,
                              epsabs=1e-15, epsrel=1e-13, limit=200)
    return 2.0 / math.sqrt(math.pi) * val


def ml_taylor_matrix(alpha: float, S: np.ndarray, terms: int = 200) -> np.ndarray:
    """``sum_{l < terms} S^l / Gamma(alpha l + 1)`` with Neumaier compensation per entry."""
    S = np.asarray(S, dtype=complex if np.iscomplexobj(S) else float)
    n = S.shape[0]
    total = np.zeros_like(S)
    comp = np.zeros_like(S)
    P = np.eye(n, dtype=S.dtype)
    for l in range(terms):
        term = P * math.exp(-gammaln(alpha * l + 1))
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
        P = P @ S
    return total + comp


def ml_taylor_scalar(alpha: float, z: complex, terms: int = 200) -> complex:
    return complex(ml_taylor_matrix(alpha, np.array([[complex(z)]]), terms)[0, 0])
