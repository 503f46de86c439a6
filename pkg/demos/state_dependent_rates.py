"""State-dependent memory: which coefficient-rate rule is self-consistent.

The coefficients of q(t, x) = sum_m c_m(t) x^m solve decoupled Volterra
equations whose rates depend on the bookkeeping of the generator.  Only the
rule whose assembled solution satisfies the full equation passes.
"""
import numpy as np

from fracpoly.polybasis import PolyVec, build_basis
from fracpoly.statedep import AlphaKernel, StateDepProblem, compare_rate_rules, solve_coefficients

grid = (np.arange(256) / 255.0) ** 2
prob = StateDepProblem(1.0, 1.0, AlphaKernel(0.5), PolyVec(build_basis(1, 2), [0.0, 0.0, 1.0]))
for rule, info in compare_rate_rules(prob, grid).items():
    rates = ", ".join(f"{r:g}" for r in info["solution"].rates)
    verdict = "pass" if info["passed"] else f"fail (first bad degree {info['failing_degree']})"
    print(f"rule {rule:8s} rates [{rates}]  assembled residual {info['residual']:.2e}  {verdict}")

sol = solve_coefficients(prob, grid)
print(f"\nselected rule: {sol.rule}")
for n in (0, 64, 128, 255):
    print(f"t={grid[n]:.3f}  q(t, 1) = {sol.q(1.0)[n]:.6f}")
