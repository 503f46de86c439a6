import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from fracpoly.mittag import (
    apply_scalar_function,
    exp_function,
    ml_function,
    ml_matrix,
    ml_scalar,
    ml_scalar_deriv,
    spectral_decomposition,
)
from fracpoly.models import BrownianMotion, Pearson, generator_matrix

from _oracles import ml_half_quadrature, ml_taylor_matrix

alphas = st.floats(0.1, 1.0)
small = st.floats(-4.0, 4.0)


def test_scalar_examples(oracles):
    assert abs(ml_scalar(1.0, -1.0) - oracles["exp_minus_one"]) < 1e-15
    for a in (0.2, 0.5, 0.9, 1.0):
        assert ml_scalar(a, 0.0) == 1.0
    assert abs(ml_scalar(0.5, -1.0) - oracles["ml_half_minus_one"]) < 1e-14


def test_scalar_against_frozen_high_precision(oracles):
    for a, zr, zi, vr, vi in oracles["ml_points"]:
        got = complex(ml_scalar(a, complex(zr, zi)))
        want = complex(vr, vi)
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want)), (a, zr, zi)


def test_half_against_erfc_quadrature():
    xs = np.linspace(0.0, 10.0, 101)
    got = ml_scalar(0.5, -xs)
    want = np.array([ml_half_quadrature(x) for x in xs])
    assert np.max(np.abs(got - want) / np.abs(want)) < 1e-8


def test_real_input_real_output():
    out = ml_scalar(0.7, np.array([-1.0, 2.0]))
    assert out.dtype == float


def test_derivative_examples(oracles):
    assert abs(ml_scalar_deriv(1.0, 0.0, 1) - 1.0) < 1e-15
    assert abs(ml_scalar_deriv(0.5, 0.0, 1) - oracles["inv_gamma_1p5"]) < 1e-15
    assert abs(ml_scalar_deriv(1.0, 2.0, 3) - math.exp(2.0)) < 1e-12 * math.exp(2.0)
    for a, z, order, want in oracles["ml_deriv_points"]:
        got = float(np.real(ml_scalar_deriv(a, z, order)))
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


@given(alphas, small, st.floats(-4.0, 4.0))
def test_conjugate_symmetry(a, x, y):
    z = complex(x, y)
    assert complex(ml_scalar(a, z.conjugate())) == complex(ml_scalar(a, z)).conjugate()


def test_overflow_on_positive_axis_stays_real():
    # E_0.1(2) ~ 10 exp(2^10) is beyond double range; the phase must stay zero
    for a, z in ((0.1015625, 2.0), (1.0, 800.0), (0.5, 30.0)):
        v = complex(ml_scalar(a, complex(z, 0.0)))
        assert v.real == math.inf and v.imag == 0.0


@given(st.floats(0.05, 0.99))
def test_complete_monotonicity_spot_check(a):
    xs = np.linspace(0.01, 30.0, 120)
    vals = ml_scalar(a, -xs)
    assert np.all((vals > 0) & (vals < 1))
    assert np.all(np.diff(vals) < 0)


@given(st.floats(-6, 6))
def test_alpha_one_is_exp(x):
    assert abs(ml_scalar(1.0, x) - math.exp(x)) <= 1e-12 * math.exp(x)


def test_alpha_validation():
    with pytest.raises(ValueError):
        ml_scalar(0.0, 1.0)
    with pytest.raises(ValueError):
        ml_scalar(1.5, 1.0)


# --- matrix functions ------------------------------------------------------


def test_identity_function():
    A = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [0.5, 0.0, 0.2]])
    assert np.allclose(apply_scalar_function(lambda z, o=0: np.asarray(z) if o == 0 else np.ones_like(z)
                                             if o == 1 else np.zeros_like(z), A), A, atol=1e-13)


def test_nilpotent_exponential():
    F = apply_scalar_function(exp_function, np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert np.allclose(F, [[1.0, 1.0], [0.0, 1.0]], atol=1e-14)


def test_resolvent_example():
    mu = 3.0

    def f(z, order=0):
        z = np.asarray(z, dtype=complex)
        return mu * (-1.0) ** order * math.factorial(order) / (mu + z) ** (order + 1)

    F = apply_scalar_function(f, np.diag([1.0, -1.0]))
    assert np.allclose(F, np.diag([0.75, 1.5]), atol=1e-15)


def test_defective_matrices_against_expm():
    rng = np.random.default_rng(11)
    J = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [0.0, 0.0, -1.0]])
    for _ in range(5):
        Q = rng.normal(size=(3, 3))
        A = Q @ J @ np.linalg.inv(Q)
        F, info = apply_scalar_function(exp_function, A, return_info=True)
        assert info["route"] == "schur-parlett"
        ref = scipy.linalg.expm(A)
        assert np.linalg.norm(F - ref) <= 1e-9 * np.linalg.norm(ref)


def test_defective_ml_against_taylor():
    A = np.array([[-1.0, 1.0, 0.0, 0.3], [0.0, -1.0, 1.0, 0.0], [0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, -2.0]])
    F, info = ml_matrix(0.7, 1.3, A, return_info=True)
    assert info["route"] == "schur-parlett"
    ref = ml_taylor_matrix(0.7, 1.3**0.7 * A)
    assert np.linalg.norm(F - ref) <= 1e-9 * np.linalg.norm(ref)


def stable_matrix(draw, n=4):
    vals = draw(st.lists(st.floats(-1, 1), min_size=n * n, max_size=n * n))
    M = np.array(vals).reshape(n, n)
    norm = np.linalg.norm(M, 2)
    if norm < 1e-3:
        M = -np.eye(n)
        norm = 1.0
    scale = draw(st.floats(0.1, 5.0)) / norm
    M = scale * M
    # shift to make every eigenvalue negative
    return M - (np.max(np.linalg.eigvals(M).real) + 0.1) * np.eye(n)


@given(st.data())
def test_exp_semigroup(data):
    A = stable_matrix(data.draw)
    E1 = apply_scalar_function(exp_function, A)
    E2 = apply_scalar_function(exp_function, 2 * A)
    assert np.linalg.norm(E1 @ E1 - E2) <= 1e-9 * max(np.linalg.norm(E2), 1e-300) + 1e-13


def test_schur_reordering_of_interleaved_clusters():
    # eigenvalues (0, 0, 1, 0) with a Jordan coupling: the zero cluster is
    # split on the Schur diagonal and must be swapped together
    A = np.zeros((4, 4))
    A[1, 3] = 1.0
    A[2, 2] = 1.0
    E, info = apply_scalar_function(exp_function, A, return_info=True)
    assert np.allclose(E, scipy.linalg.expm(A), rtol=1e-12, atol=1e-13)
    for a in (0.5, 0.8):
        M = ml_matrix(a, 1.0, A)
        assert np.allclose(M, ml_taylor_matrix(a, A), rtol=1e-10, atol=1e-12)


@given(st.floats(0.3, 0.95), st.floats(0.1, 3.0), st.data())
def test_ml_matrix_equals_scalar_on_diagonal(a, t, data):
    d = np.array(data.draw(st.lists(st.floats(-5, 0), min_size=3, max_size=3)))
    F = ml_matrix(a, t, np.diag(d))
    assert np.allclose(np.diag(F), ml_scalar(a, t**a * d), rtol=1e-12, atol=1e-14)


def test_ml_matrix_examples(oracles):
    A = generator_matrix(Pearson(1.0, 0.5, a0=0.5), 2)
    assert np.array_equal(ml_matrix(0.4, 0.0, A), np.eye(3))
    ref = scipy.linalg.expm(1.7 * A.A)
    assert np.linalg.norm(ml_matrix(1.0, 1.7, A) - ref) <= 1e-9 * np.linalg.norm(ref)
    F, info = ml_matrix(0.5, 1.0, generator_matrix(BrownianMotion(), 2), return_info=True)
    assert info["route"] == "nilpotent"
    assert abs(F[0, 2] - oracles["inv_gamma_1p5"]) < 1e-14


def test_brownian_nilpotent_series_higher_degree():
    # E_0 of x^4 under the nilpotent series: (t^a G)^2 entry (0,4) = 1*6, over Gamma(2a+1)
    a, t = 0.6, 2.0
    F = ml_matrix(a, t, generator_matrix(BrownianMotion(), 4))
    assert abs(F[0, 4] - 6.0 * t ** (2 * a) / gamma(2 * a + 1)) < 1e-12


@given(st.floats(0.5, 0.99), st.integers(0, 10_000))
def test_ml_matrix_against_taylor_random(a, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(4, 4))
    S = M * (rng.uniform(0.1, 3.0) / np.linalg.norm(M, 2))
    ref = ml_taylor_matrix(a, S)
    got = ml_matrix(a, 1.0, S)
    assert np.linalg.norm(got - ref) <= 1e-8 * np.linalg.norm(ref)


def test_spectral_decomposition_reconstructs():
    A = generator_matrix(Pearson(2.0, 0.3, a0=0.1, a1=0.2, a2=0.3), 3)
    dec = spectral_decomposition(A.A)
    assert dec.diagonalizable
    assert np.allclose(dec.reconstruct(), A.A, atol=1e-12)


def test_ml_function_scaling():
    f = ml_function(0.5, scale=2.0)
    assert abs(f(np.array([-0.5]), 0)[0] - ml_scalar(0.5, -1.0)) < 1e-15
