"""Exact moments of polynomial processes under inverse-subordinator time changes.

Submodules
----------
polybasis    monomial bases and coefficient vectors
models       model zoo and generator matrices
mittag       Mittag-Leffler functions and matrix functions
fracmoments  classical, alpha-stable and general-clock moments
equilibrium  stationary moments, cross-moments, correlations
montecarlo   simulation oracle
statedep     Volterra equation with state-dependent memory
cli          batch front end
"""
from .equilibrium import (
    correlation,
    cross_moment,
    fhat_matrix,
    fhat_scalar,
    lrd_asymptote,
    make_context,
    stationary_moment,
    stationary_vector,
)
from .fracmoments import (
    GeneralBernstein,
    StableAlpha,
    caputo_residual,
    moment_classical,
    moment_fractional,
    moment_general_f,
)
from .mittag import apply_scalar_function, ml_matrix, ml_scalar, ml_scalar_deriv
from .models import (
    QTSM,
    BrownianMotion,
    JacobiJump,
    LevyOU,
    Pearson,
    generator_matrix,
    is_zero_stable,
    stability_index,
)
from .polybasis import PolyVec, build_basis, evaluate, monomial, product_vec

__version__ = "0.1.0"
