"""Moments of an Ornstein-Uhlenbeck process run on an inverse stable clock.

Slowing the clock leaves the stationary mean untouched but makes the
approach to it sub-exponential; the smaller alpha, the longer the memory.
"""
from fracpoly.fracmoments import moment_classical, moment_fractional
from fracpoly.models import Pearson
from fracpoly.polybasis import build_basis, monomial

ou = Pearson(beta=1.0, theta=0.5, a0=0.5)
basis = build_basis(1, 2)
x, x2 = monomial(basis, (1,)), monomial(basis, (2,))
x0 = 2.0

print(f"start x0={x0}, stationary mean 0.5, stationary second moment {0.5**2 + 0.25:.3f}\n")
print(f"{'t':>6} {'E x classical':>14} {'E x a=0.5':>12} {'E x^2 classical':>16} {'E x^2 a=0.5':>12}")
for t in (0.1, 0.5, 1.0, 3.0, 10.0, 100.0):
    print(f"{t:6.1f} {moment_classical(ou, x, x0, t):14.6f} {moment_fractional(ou, x, x0, t, 0.5):12.6f}"
          f" {moment_classical(ou, x2, x0, t):16.6f} {moment_fractional(ou, x2, x0, t, 0.5):12.6f}")
