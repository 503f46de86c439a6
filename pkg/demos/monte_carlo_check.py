"""Closed-form moments against simulated paths.

A CIR process is simulated on its own clock, then read off at the first
passage times of an alpha-stable subordinator.  Estimates should sit within
a few standard errors of the matrix formula.
"""
import math

from fracpoly.fracmoments import moment_fractional
from fracpoly.models import Pearson
from fracpoly.montecarlo import SimConfig, moment_samples
from fracpoly.polybasis import build_basis, monomial

cir = Pearson(beta=1.0, theta=1.0, a0=0.0, a1=0.5)
basis = build_basis(1, 2)
ps = [monomial(basis, (1,)), monomial(basis, (2,))]
ts = [0.5, 1.0, 2.0]
cfg = SimConfig(n_paths=20_000, seed=2024)
samples = moment_samples(cir, ps, 0.5, 0.6, ts, cfg)

print(f"{'poly':>5} {'t':>5} {'closed':>10} {'estimate':>10} {'z':>7}")
for j, t in enumerate(ts):
    for i, name in enumerate(("x", "x^2")):
        col = samples[:, j, i]
        closed = moment_fractional(cir, ps[i], 0.5, t, 0.6)
        z = (col.mean() - closed) / (col.std(ddof=1) / math.sqrt(col.size))
        print(f"{name:>5} {t:5.1f} {closed:10.5f} {col.mean():10.5f} {z:7.2f}")
