import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import Polynomial as P

from fracpoly.models import (
    QTSM,
    BrownianMotion,
    JacobiJump,
    LevyOU,
    Pearson,
    generator_matrix,
    is_zero_stable,
    model_from_config,
    stability_index,
)

pos = st.floats(0.1, 3.0)
unit = st.floats(0.05, 0.95)


def brute_generator_1d(drift, diff, k, jump=None):
    """Column j = coefficients of G x^j, built with numpy.polynomial."""
    A = np.zeros((k + 1, k + 1))
    for j in range(k + 1):
        g = P([0] * j + [1])
        img = drift * g.deriv(1) + 0.5 * diff * g.deriv(2) if j >= 2 else drift * g.deriv(1) if j == 1 else P([0])
        if jump is not None:
            img = img + jump(g)
        c = img.coef
        A[: len(c), j] = c[: k + 1]
        assert np.all(np.abs(c[k + 1 :]) < 1e-14)
    return A


def pearson_oracle(m, k):
    return brute_generator_1d(P([m.beta * m.theta, -m.beta]), P([m.a0, m.a1, m.a2]), k)


def test_brownian_matrix_shape():
    A = generator_matrix(BrownianMotion(), 4).A
    expected = np.zeros((5, 5))
    for i in range(3):
        expected[i, i + 2] = (i + 2) * (i + 1) / 2
    assert np.array_equal(A, expected)
    assert np.array_equal(np.linalg.matrix_power(A, 3), np.zeros((5, 5)))


@given(pos, st.floats(-2, 2))
def test_pearson_degree_one(beta, theta):
    A = generator_matrix(Pearson(beta, theta), 1).A
    assert np.allclose(A, [[0, beta * theta], [0, -beta]], rtol=1e-15, atol=0)


@given(pos, unit, pos, st.floats(0, 2))
def test_jacobi_degree_one(beta, theta, sigma, lam):
    A = generator_matrix(JacobiJump(beta, theta, sigma, lam), 1).A
    assert np.allclose(A, [[0, beta * theta + lam], [0, -(beta + 2 * lam)]], rtol=1e-14, atol=1e-15)


def test_levy_ou_degree_one():
    m = LevyOU(beta=1.5, theta=0.2, sigma=0.7, levy_b=0.3, levy_a=0.4, levy_m2=0.5)
    A = generator_matrix(m, 1).A
    assert np.allclose(A, [[0, 1.5 * 0.2 + 0.3 * 0.7], [0, -1.5]], rtol=1e-15)


def test_qtsm_diagonals():
    m = QTSM(b=0.1, beta=0.8, sigma=0.3, R0=0.02, R1=0.1, R2=0.5)
    A1 = generator_matrix(m, 1).A
    A2 = generator_matrix(m, 2).A
    assert np.allclose(np.diag(A1), [0, -0.8, -1.6], atol=1e-15)
    assert np.allclose(np.diag(A2), [0, -0.8, -1.6, -1.6, -2.4, -3.2], atol=1e-15)
    assert np.array_equal(A1, np.triu(A1))
    assert np.array_equal(A2, np.triu(A2))


@pytest.mark.parametrize("k", [1, 2, 3, 4, 6])
def test_pearson_against_polynomial_oracle(k):
    m = Pearson(1.3, 0.4, a0=0.2, a1=0.5, a2=0.1)
    assert np.allclose(generator_matrix(m, k).A, pearson_oracle(m, k), rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_jacobi_jump_against_polynomial_oracle(k):
    m = JacobiJump(1.2, 0.3, 0.6, lam=0.8)
    oracle = brute_generator_1d(
        P([m.beta * m.theta, -m.beta]),
        m.sigma**2 * P([0, 1, -1]),
        k,
        jump=lambda g: m.lam * (g(P([1, -1])) - g),
    )
    assert np.allclose(generator_matrix(m, k).A, oracle, rtol=1e-13, atol=1e-13)


def test_levy_ou_against_polynomial_oracle():
    m = LevyOU(1.0, 0.5, 0.5, levy_b=0.1, levy_a=0.5, levy_m2=0.4, levy_moments=(0.05, 0.3))
    moments = {2: 0.4, 3: 0.05, 4: 0.3}

    def jump(g):
        out = P([0])
        for n in range(2, 5):
            out = out + m.sigma**n * moments[n] / math.factorial(n) * g.deriv(n)
        return out

    oracle = brute_generator_1d(P([m.levy_b * m.sigma + m.beta * m.theta, -m.beta]),
                                P([(m.sigma * m.levy_a) ** 2]), 4, jump=jump)
    assert np.allclose(generator_matrix(m, 4).A, oracle, rtol=1e-14, atol=1e-14)


def test_levy_ou_needs_higher_moments():
    with pytest.raises(ValueError, match="m3"):
        generator_matrix(LevyOU(1.0, 0.0, 1.0, levy_m2=1.0), 3)


ZOO = [
    BrownianMotion(),
    Pearson(1.0, 0.5, a0=0.5),
    Pearson(1.0, 1.0, a0=0.0, a1=0.5),
    Pearson(2.0, 0.3, a0=0.1, a1=0.2, a2=0.3),
    JacobiJump(1.0, 0.3, 0.5, 0.7),
    LevyOU(1.0, 0.5, 0.5, 0.1, 0.5, 0.4, levy_moments=(0.0, 0.08, 0.0, 0.016)),
    QTSM(0.1, 1.0, 0.3, 0.02, 0.1, 0.5),
]


@pytest.mark.parametrize("model", ZOO, ids=lambda m: m.kind)
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_degree_filtration_and_constant_column(model, k):
    G = generator_matrix(model, k)
    deg = G.basis.degrees
    # column convention: G h_j only involves h_i with deg h_i <= deg h_j
    mask = deg[:, None] > deg[None, :]
    assert np.all(G.A[mask] == 0.0)
    assert np.all(G.A[:, 0] == 0.0)


@pytest.mark.parametrize("model", ZOO, ids=lambda m: m.kind)
@pytest.mark.parametrize("k", [2, 3, 4])
def test_nesting(model, k):
    big = generator_matrix(model, k)
    small = generator_matrix(model, k - 1)
    assert np.array_equal(big.restrict(k - 1), small.A)


@given(pos, unit, pos)
def test_jacobi_without_jumps_is_pure_jacobi(beta, theta, sigma):
    jj = generator_matrix(JacobiJump(beta, theta, sigma, 0.0), 4).A
    pure = pearson_oracle(Pearson(beta, theta, a0=0.0, a1=sigma**2, a2=-sigma**2, domain=(0.0, 1.0)), 4)
    assert np.allclose(jj, pure, rtol=1e-14, atol=1e-14)


@given(st.floats(-3, 3))
def test_pearson_without_reversion_is_brownian(theta):
    pe = generator_matrix(Pearson(0.0, theta, a0=1.0), 5).A
    assert np.array_equal(pe, generator_matrix(BrownianMotion(), 5).A)


def test_stability_index_examples():
    for k in (1, 2, 5):
        assert stability_index(generator_matrix(BrownianMotion(), k)) == 0.0
    assert stability_index(generator_matrix(Pearson(2.0, 1.0), 1)) == 0.0
    assert stability_index(np.diag([1.0, -3.0])) == 1.0


def test_zero_stability_examples():
    for a2 in (0.0, 0.5, 1.5):
        A = generator_matrix(Pearson(1.0, 0.0, a0=1.0, a2=a2), 2)
        ev = np.sort(np.linalg.eigvals(A.A).real)
        assert np.allclose(ev, np.sort([0.0, -1.0, a2 - 2.0]))
        assert is_zero_stable(A)
    assert not is_zero_stable(generator_matrix(BrownianMotion(), 2))
    assert is_zero_stable(np.diag([0.0, -1.0, -2.0]))
    assert not is_zero_stable(np.diag([0.0, 0.0, -2.0]))
    assert not is_zero_stable(np.diag([0.0, 0.5]))


def test_model_config_roundtrip():
    m = model_from_config({"kind": "Pearson", "beta": 1.0, "theta": 0.5, "a0": 0.5})
    assert m == Pearson(1.0, 0.5, a0=0.5)
    with pytest.raises(ValueError, match="unknown"):
        model_from_config({"kind": "Pearson", "beta": 1.0, "theta": 0.5, "gamma": 2})
    with pytest.raises(ValueError):
        model_from_config({"kind": "Heston"})


def test_parameter_validation():
    with pytest.raises(ValueError):
        Pearson(1.0, 0.0, a0=-1.0)
    with pytest.raises(ValueError):
        JacobiJump(1.0, 1.5, 0.5)
    with pytest.raises(ValueError):
        generator_matrix(BrownianMotion(), 0)


def test_out_of_domain_warns():
    from fracpoly import moment_classical, monomial, build_basis

    m = JacobiJump(1.0, 0.3, 0.5)
    with pytest.warns(UserWarning, match="outside"):
        moment_classical(m, monomial(build_basis(1, 1), (1,)), 1.5, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        moment_classical(m, monomial(build_basis(1, 1), (1,)), 0.5, 1.0)
