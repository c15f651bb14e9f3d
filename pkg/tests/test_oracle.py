import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quadenv.lifting import L0, CardCap, ScaledRank
from quadenv.oracle import (
    GridOracleConfig,
    OracleFailure,
    Tabulated,
    curvature_scan,
    exhaustive_l0_minimizer,
    gamma_sweep,
    grid_convex_envelope,
    grid_lasry_lions,
    grid_legendre,
    grid_s2,
    grid_s2_legendre,
    grid_seminorm_s2,
    lower_envelope,
    tabulate,
)
from quadenv.penalty_core import DomainError, EnvelopeParams, ScaledCard, s1_scalar, s2_scalar


def _card(P):
    return (P[:, 0] != 0).astype(float)


def test_config_validation_and_axes():
    cfg = GridOracleConfig.cube(1.0, 0.25, 1, extra=(math.sqrt(2) / 2,))
    ax = cfg.axis(0)
    assert 0.0 in ax and math.sqrt(2) / 2 in ax and ax.size == 10
    with pytest.raises(DomainError):
        GridOracleConfig((0.0,), (1.0,), 0.0)
    with pytest.raises(DomainError):
        GridOracleConfig((0.0,) * 4, (1.0,) * 4, 0.5)
    with pytest.raises(DomainError):
        GridOracleConfig.cube(1.0, 1e-4, 3)


@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-5, 5)),
       arrays(np.float64, st.integers(1, 20), elements=st.floats(-5, 5)),
       st.floats(0.01, 10))
def test_lower_envelope_matches_brute_force(v, q, a):
    p = np.linspace(-3, 3, v.size)
    brute = (v[None, :] + a * (q[:, None] - p[None, :]) ** 2).min(axis=1)
    assert np.allclose(lower_envelope(p, v, q, a), brute, atol=1e-9)


def test_lower_envelope_skips_infinity():
    out = lower_envelope([0.0, 1.0, 2.0], [np.inf, 0.0, np.inf], [0.0, 2.0], 1.0)
    assert np.array_equal(out, [1.0, 1.0])
    assert np.all(np.isinf(lower_envelope([0.0, 1.0], [np.inf, np.inf], [0.5], 1.0)))


def test_legendre_of_square():
    cfg = GridOracleConfig.cube(4.0, 0.01, 1)
    g = tabulate(lambda P: 0.5 * P[:, 0] ** 2, cfg)
    conj = grid_legendre(g)
    y = g.axes[0]
    inner = np.abs(y) <= 3.0
    assert np.all(np.abs(conj.values - 0.5 * y**2)[inner] <= 0.01 * np.abs(y[inner]) + 1e-4)


def test_legendre_of_origin_indicator():
    cfg = GridOracleConfig.cube(2.0, 0.1, 1)
    g = tabulate(lambda P: np.where(P[:, 0] == 0, 0.0, np.inf), cfg)
    assert np.allclose(grid_legendre(g).values, 0.0)
    with pytest.raises(DomainError):
        grid_legendre(Tabulated(g.axes, np.full(g.values.shape, np.inf)))


def test_legendre_reproduces_s1_plus_square():
    cfg = GridOracleConfig.cube(6.0, 0.005, 1, extra=(math.sqrt(2), -math.sqrt(2)))
    g = tabulate(lambda P: _card(P) + 0.5 * P[:, 0] ** 2, cfg)
    conj = grid_legendre(g)
    y = g.axes[0]
    exact = s1_scalar(EnvelopeParams(1.0, ScaledCard(1.0)), y) + 0.5 * y**2
    inner = np.abs(y) <= 4.0
    assert np.max(np.abs(conj.values - exact)[inner]) <= 0.05


def test_double_conjugate_of_convex_is_identity():
    cfg = GridOracleConfig.cube(3.0, 0.01, 1)
    g = tabulate(lambda P: np.abs(P[:, 0] - 0.5) + P[:, 0] ** 2, cfg)
    assert np.max(np.abs(grid_convex_envelope(g).values - g.values)) <= 1e-2


@pytest.mark.parametrize("gamma", [0.5, 1.0, 3.0])
def test_grid_s2_routes_agree_with_closed_form(gamma):
    T = math.sqrt(2 / gamma)
    cfg = GridOracleConfig.cube(10 * T, 0.002, 1, extra=(T, -T))
    f = tabulate(_card, cfg)
    x = f.axes[0]
    exact = s2_scalar(EnvelopeParams(gamma, ScaledCard(1.0)), x)
    inner = np.abs(x) <= 5 * T
    assert np.max(np.abs(grid_s2(f, gamma).values - exact)[inner]) <= 1e-9
    assert np.max(np.abs(grid_s2_legendre(f, gamma).values - exact)[inner]) <= 10 * 0.002
    ll = grid_lasry_lions(f, 1 / gamma, 1 / gamma).values
    assert np.array_equal(ll, grid_s2(f, gamma).values)


def test_grid_s2_of_zero():
    cfg = GridOracleConfig.cube(1.0, 0.1, 2)
    f = tabulate(lambda P: np.zeros(len(P)), cfg)
    assert np.allclose(grid_s2(f, 2.0).values, 0.0)


def test_seminorm_identity_and_degenerate_cases():
    cfg = GridOracleConfig.cube(2.0, 0.05, 2)
    f = tabulate(lambda P: np.count_nonzero(P, axis=1).astype(float), cfg)
    assert np.allclose(grid_seminorm_s2(f, np.eye(2)).values, grid_s2(f, 1.0).values)
    assert np.allclose(grid_seminorm_s2(f, np.zeros((2, 2))).values, 0.0)
    # non-diagonal operators take the brute-force route
    small = GridOracleConfig.cube(1.0, 0.1, 2)
    g = tabulate(lambda P: np.count_nonzero(P, axis=1).astype(float), small)
    B = np.array([[1.0, 0.5], [0.0, 1.0]])
    out = grid_seminorm_s2(g, B)
    assert np.all(out.values <= g.values + 1e-12)
    assert np.all(out.values >= -1e-12)


def test_gamma_sweep():
    res = gamma_sweep(ScaledCard(1.0), 0.1, [0.01, 0.1, 1, 10, 100, 1e4, 1e6])
    assert np.all(np.diff(res.values) >= 0)
    assert res.values[-1] == 1.0
    assert np.all(gamma_sweep(L0(1.0), np.zeros(3), [1, 2, 3]).values == 0.0)
    assert np.all(gamma_sweep(ScaledCard(2.0), 50.0, [0.1, 1.0, 10.0]).values == 2.0)
    with pytest.raises(DomainError):
        gamma_sweep(ScaledCard(1.0), 0.1, [2.0, 1.0])


def test_curvature_scan():
    out = curvature_scan(ScaledCard(1.0), 1.0, 0.5, [1.0], h=1e-4)
    assert out[0] == pytest.approx(-1.0, abs=1e-2)
    assert curvature_scan(ScaledCard(1.0), 1.0, 3.0, [1.0])[0] == pytest.approx(0.0, abs=1e-6)
    dirs = [[1, 0], [0, 1], [1, 1], [1, -1]]
    out = curvature_scan(CardCap(1), 1.0, np.array([1.0, 1.0]), dirs, h=1e-4)
    assert np.min(np.abs(out + 1.0)) <= 1e-2


def test_curvature_scan_flags_missing_curvature():
    # only the +gamma direction of |x1 x2| is scanned at (1, 1)
    with pytest.raises(OracleFailure):
        curvature_scan(CardCap(1), 1.0, np.array([1.0, 1.0]), [[1.0, 1.0]], h=1e-4)


def test_exhaustive_examples():
    x, J = exhaustive_l0_minimizer([[1.0]], [1.0], L0(1.0))
    assert x[0] == 0.0 and J == 0.5
    x, J = exhaustive_l0_minimizer([[1.0]], [2.0], L0(1.0))
    assert x[0] == pytest.approx(2.0) and J == pytest.approx(1.0)
    x, J = exhaustive_l0_minimizer(np.eye(2), [3.0, 0.1], L0(1.0))
    assert np.allclose(x, [3.0, 0.0]) and J == pytest.approx(1.005)
    x, J = exhaustive_l0_minimizer(np.eye(3), [3.0, -2.0, 0.1], CardCap(1))
    assert np.allclose(x, [3.0, 0.0, 0.0]) and J == pytest.approx(0.5 * (4 + 0.01))
    with pytest.raises(DomainError):
        exhaustive_l0_minimizer(np.eye(13), np.zeros(13), L0(1.0))
    with pytest.raises(DomainError):
        exhaustive_l0_minimizer(np.eye(2), np.zeros(2), ScaledRank(1.0))


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("QUADENV_THREADS", "1")
    p = np.linspace(0, 1, 5)
    assert np.allclose(lower_envelope(p, np.zeros(5), p, 1.0), 0.0)
