"""Mittag-Leffler relaxation against exponential relaxation.

E_alpha(-t^alpha) starts faster than exp(-t) but decays only like a power
law, which is the signature every time-changed moment below inherits.
"""
import numpy as np

from fracpoly.mittag import ml_matrix, ml_scalar

ts = np.array([0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0])
print(f"{'t':>7} {'exp(-t)':>12}" + "".join(f"{'a=' + str(a):>12}" for a in (0.9, 0.6, 0.3)))
for t in ts:
    row = [float(ml_scalar(a, -t**a)) for a in (0.9, 0.6, 0.3)]
    print(f"{t:7.2f} {np.exp(-t):12.4e}" + "".join(f"{v:12.4e}" for v in row))

# A non-diagonalisable matrix goes through the Schur-Parlett route.
A = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [0.0, 0.0, -1.0]])
M, info = ml_matrix(0.7, 2.0, A, return_info=True)
print("\nE_0.7(2^0.7 A) for a Jordan block, route:", info["route"])
print(np.array2string(M, precision=6))
