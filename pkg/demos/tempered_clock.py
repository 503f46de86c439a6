"""Moments under a tempered stable clock, via numerical Laplace inversion.

The Laplace exponent f(lam) = (lam + 1)^a - 1 keeps small jumps stable-like
but damps the large ones, so long-time behaviour returns to exponential.
Once the mean has decayed to ~1e-10 the inversion can no longer promise six
relative digits and says so with a RuntimeWarning.
"""
from fracpoly.fracmoments import GeneralBernstein, moment_classical, moment_fractional, moment_general_f
from fracpoly.models import Pearson
from fracpoly.polybasis import build_basis, monomial

a = 0.5
tempered = GeneralBernstein(lambda lam: (lam + 1.0) ** a - 1.0)
ou = Pearson(beta=1.0, theta=0.0, a0=0.5)
x = monomial(build_basis(1, 1), (1,))

print(f"{'t':>6} {'classical':>12} {'stable a=0.5':>13} {'tempered':>12}")
for t in (0.5, 1.0, 2.0, 5.0, 10.0):
    print(f"{t:6.1f} {moment_classical(ou, x, 1.0, t):12.4e} {moment_fractional(ou, x, 1.0, t, a):13.4e}"
          f" {moment_general_f(ou, x, 1.0, t, tempered):12.4e}")
