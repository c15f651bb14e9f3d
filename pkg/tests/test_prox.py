import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quadenv.lifting import (
    L0,
    CardCap,
    PosCardCap,
    PosRank,
    RankCap,
    ScaledRank,
    envelope_value,
    s1_vector,
)
from quadenv.penalty_core import (
    DomainError,
    EnvelopeParams,
    PosCard,
    ScaledCard,
    s1_scalar,
    s2_scalar,
)
from quadenv.prox import (
    ProxRequest,
    isotonic_decreasing,
    prox_s1_scaled,
    prox_s2,
    prox_s2_with_quadratic,
)


def test_request_validation():
    with pytest.raises(DomainError):
        ProxRequest(ScaledCard(1.0), 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        ProxRequest("l0", 1.0, 2.0, 0.0)
    with pytest.raises(DomainError):
        ProxRequest(ScaledCard(1.0), 1.0, 2.0, math.inf)
    assert ProxRequest(ScaledCard(1.0), 1.0, 2.0, 0.0).beta == 0.5


def test_scalar_examples():
    assert prox_s1_scaled(ProxRequest(ScaledCard(1.0), 1.0, 2.0, 2.0)) == 2.0
    assert prox_s2(ProxRequest(ScaledCard(1.0), 1.0, 2.0, 0.5)) == 0.0
    assert prox_s2(ProxRequest(ScaledCard(1.0), 1.0, 2.0, 2.0)) == 2.0
    assert np.array_equal(prox_s2(ProxRequest(CardCap(1), 1.0, 2.0, [3.0, 1.0])), [3.0, 0.0])


def _objective_s1(pen, gamma, beta, y, x):
    if isinstance(pen, (ScaledCard, PosCard)):
        s1 = s1_scalar(EnvelopeParams(gamma, pen), x)
    else:
        s1 = s1_vector(pen, gamma, x)
    return beta * s1 + 0.5 * np.sum((np.asarray(x) - y) ** 2)


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(1.05, 5.0), st.floats(-6, 6))
def test_scalar_prox_s1_minimizes(mu, gamma, ratio, y):
    for pen in (ScaledCard(mu), PosCard(mu)):
        req = ProxRequest(pen, gamma, gamma * ratio, y)
        x = prox_s1_scaled(req)
        grid = np.linspace(y - 8, y + 8, 40001)
        best = np.min(_objective_s1(pen, gamma, req.beta, y, grid))
        assert _objective_s1(pen, gamma, req.beta, y, x) <= best + 1e-9


@given(arrays(np.float64, st.integers(2, 5), elements=st.floats(-4, 4)),
       st.floats(0.3, 3.0), st.floats(1.1, 4.0), st.integers(1, 4))
def test_cap_prox_s1_beats_random_candidates(y, gamma, ratio, M):
    M = min(M, y.size)
    rng = np.random.default_rng(0)
    for pen in (CardCap(M), PosCardCap(M)):
        req = ProxRequest(pen, gamma, gamma * ratio, y)
        x = prox_s1_scaled(req)
        fx = _objective_s1(pen, gamma, req.beta, y, x)
        for _ in range(200):
            z = x + rng.standard_normal(y.size) * rng.choice([1e-3, 0.1, 1.0])
            assert fx <= _objective_s1(pen, gamma, req.beta, y, z) + 1e-10


def test_isotonic_pool():
    out = isotonic_decreasing([1.0, 3.0, 2.0], [1.0, 1.0, 1.0])
    assert np.allclose(out, [2.0, 2.0, 2.0])
    assert np.allclose(isotonic_decreasing([3.0, 2.0, 1.0], np.ones(3)), [3, 2, 1])
    # negative pooled values use the negative-side curvature
    assert np.allclose(isotonic_decreasing([-1.0, 1.0], [1.0, 1.0], [2.0, 2.0]), [0.0, 0.0])


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(1.05, 5.0), st.floats(-6, 6))
def test_prox_s2_minimizes_envelope_objective(mu, gamma, ratio, y):
    pen = ScaledCard(mu)
    rho = gamma * ratio
    x = prox_s2(ProxRequest(pen, gamma, rho, y))
    grid = np.linspace(y - 8, y + 8, 40001)
    p = EnvelopeParams(gamma, pen)
    obj = s2_scalar(p, grid) + 0.5 * rho * (grid - y) ** 2
    assert s2_scalar(p, x) + 0.5 * rho * (x - y) ** 2 <= obj.min() + 1e-9


def test_prox_s2_vector_against_local_perturbation():
    rng = np.random.default_rng(3)
    for _ in range(50):
        y = rng.uniform(-3, 3, 3)
        gamma = rng.uniform(0.3, 2)
        rho = gamma * rng.uniform(1.2, 4)
        for pen in (L0(0.8), CardCap(2)):
            x = prox_s2(ProxRequest(pen, gamma, rho, y))

            def F(z):
                return envelope_value(pen, gamma, z) + 0.5 * rho * np.sum((z - y) ** 2)

            fx = F(x)
            for _ in range(100):
                assert fx <= F(x + 0.05 * rng.standard_normal(3)) + 1e-10


def test_matrix_prox_spectral():
    rng = np.random.default_rng(4)
    Y = rng.standard_normal((4, 3))
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    for pen, vpen in ((ScaledRank(0.5), L0(0.5)), (RankCap(1), CardCap(1))):
        X = prox_s2(ProxRequest(pen, 1.0, 3.0, Y))
        xs = prox_s2(ProxRequest(vpen, 1.0, 3.0, s))
        assert np.allclose(X, (U * xs) @ Vt)
    P = Y.T @ Y - np.eye(3)
    X = prox_s2(ProxRequest(PosRank(0.2), 1.0, 3.0, P))
    assert np.allclose(X, X.T)
    assert np.linalg.eigvalsh(X).min() >= -1e-12


def test_prox_with_quadratic():
    # a=0 reduces to prox_s2
    y = np.array([1.5, -0.2])
    a = prox_s2_with_quadratic(L0(1.0), 1.0, 2.0, y, np.zeros(2), 0.0)
    assert np.allclose(a, prox_s2(ProxRequest(L0(1.0), 1.0, 2.0, y)))
    # rho below gamma is fine as long as a + rho exceeds it
    b = prox_s2_with_quadratic(L0(1.0), 1.5, 1.0, y, np.array([3.0, 0.0]), 1.0)
    center = (np.array([3.0, 0.0]) + y) / 2.0
    assert np.allclose(b, prox_s2(ProxRequest(L0(1.0), 1.5, 2.0, center)))
    with pytest.raises(DomainError):
        prox_s2_with_quadratic(L0(1.0), 3.0, 1.0, y, y, 1.0)


def test_exact_zeros():
    x = prox_s2(ProxRequest(L0(1.0), 1.0, 1.001, np.array([0.1, 1e-3, 5.0])))
    assert x[0] == 0.0 and x[1] == 0.0
    # rho close to gamma amplifies rounding in the combination step
    assert x[2] == pytest.approx(5.0, abs=1e-9)
