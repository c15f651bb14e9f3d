"""Proximal operators of quadratic envelopes.

For ``rho > gamma`` the minimizer of ``S_g^2(f)(x) + rho/2 ||x - y||^2`` is
``(rho*y - gamma*z) / (rho - gamma)`` with
``z = prox_{beta S_g(f)}(y)`` and ``beta = (rho - gamma) / (rho * gamma)``.
Only ``S_g(f)`` is needed, which is what makes the cardinality caps
tractable.

``beta * S_g(f) + 1/2 ||. - y||^2`` is strictly convex because
``beta * gamma < 1``.  Scalar penalties are minimized by evaluating the
stationary point of each quadratic piece.  The caps are permutation
invariant, so the minimizer is ordered like ``y`` and the problem reduces to
a weighted isotonic regression, solved exactly by pool-adjacent-violators.
Matrix penalties act on singular values (eigenvalues for ``PosRank``) with
the singular vectors of ``y`` kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .lifting import (
    SYM_TOL,
    L0,
    CardCap,
    PosCardCap,
    PosRank,
    RankCap,
    ScaledRank,
    sort_magnitudes,
)
from .penalty_core import DomainError, PosCard, ScaledCard, _check_positive

__all__ = [
    "ProxRequest",
    "prox_s1_scaled",
    "prox_s2",
    "prox_s2_with_quadratic",
    "isotonic_decreasing",
]

_SCALAR = (ScaledCard, PosCard)
_VECTOR = (L0, CardCap, PosCardCap)
_MATRIX = (ScaledRank, RankCap, PosRank)


@dataclass(frozen=True)
class ProxRequest:
    """Penalty, curvature ``gamma``, prox weight ``rho > gamma`` and point ``y``."""

    penalty: Any
    gamma: float
    rho: float
    y: Any

    def __post_init__(self):
        g = _check_positive("gamma", self.gamma)
        r = _check_positive("rho", self.rho)
        if not r > g:
            raise DomainError(f"rho={r} must exceed gamma={g}")
        if not isinstance(self.penalty, _SCALAR + _VECTOR + _MATRIX):
            raise DomainError(f"unsupported penalty {self.penalty!r}")
        y = np.asarray(self.y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("y must be finite")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "rho", r)
        object.__setattr__(self, "y", y)
        assert 0.0 < self.beta * g < 1.0

    @property
    def beta(self) -> float:
        return (self.rho - self.gamma) / (self.rho * self.gamma)


def _scalar_prox_s1(pen, gamma, beta, y):
    """Elementwise minimizer of ``beta*S_g(f)(x) + (x - y)^2 / 2``."""
    y = np.asarray(y, dtype=float)
    c = beta * gamma
    mu = pen.mu
    T = math.sqrt(2.0 * mu / gamma)
    interior = y / (1.0 - c)
    if isinstance(pen, ScaledCard):
        sgn = np.where(y < 0, -1.0, 1.0)
        cands = np.stack([
            np.clip(interior, -T, T),
            np.where(np.abs(y) >= T, y, sgn * T),
            sgn * T,
            -sgn * T,
        ])
        s1 = -np.minimum(0.5 * gamma * cands**2, mu)
    else:
        cands = np.stack([np.minimum(interior, T), np.maximum(y, T)])
        s1 = np.where(cands >= 0, -np.minimum(0.5 * gamma * cands**2, mu),
                      -0.5 * gamma * cands**2)
    obj = beta * s1 + 0.5 * (cands - y) ** 2
    # ties go to the smaller magnitude
    tied = obj <= obj.min(axis=0)
    best = np.where(tied, np.abs(cands), np.inf).argmin(axis=0)
    return np.take_along_axis(cands, best[None, ...], axis=0)[0]


def isotonic_decreasing(q, p_pos, p_neg=None) -> np.ndarray:
    """Minimize ``sum_j phi_j(x_j)`` subject to ``x_1 >= x_2 >= ...``.

    ``phi_j(x) = p_pos[j]/2 x^2 - q[j] x`` for ``x >= 0`` and
    ``p_neg[j]/2 x^2 - q[j] x`` for ``x < 0``; all curvatures positive.
    Pool-adjacent-violators: each pooled block sits at the minimizer of the
    sum of its losses.
    """
    q = np.asarray(q, dtype=float)
    p_pos = np.asarray(p_pos, dtype=float)
    p_neg = p_pos if p_neg is None else np.asarray(p_neg, dtype=float)
    blocks: list[list[float]] = []  # [Q, P+, P-, count, value]

    def solve(Q, Pp, Pn):
        return Q / Pp if Q >= 0 else Q / Pn

    for j in range(q.size):
        blk = [q[j], p_pos[j], p_neg[j], 1, solve(q[j], p_pos[j], p_neg[j])]
        while blocks and blocks[-1][4] < blk[4]:
            prev = blocks.pop()
            Q, Pp, Pn = prev[0] + blk[0], prev[1] + blk[1], prev[2] + blk[2]
            blk = [Q, Pp, Pn, prev[3] + blk[3], solve(Q, Pp, Pn)]
        blocks.append(blk)
    return np.concatenate([np.full(b[3], b[4]) for b in blocks]) if blocks else q.copy()


def _cap_prox_s1(pen, gamma, beta, y):
    c = beta * gamma
    d = y.size
    if pen.M > d:
        raise DomainError(f"M={pen.M} exceeds dimension {d}")
    tail = np.arange(d) >= pen.M
    if isinstance(pen, CardCap):
        sm = sort_magnitudes(y)
        p = np.where(tail, 1.0 - c, 1.0)
        return sm.restore(isotonic_decreasing(sm.values, p))
    order = np.argsort(-y, kind="stable")
    ys = y[order]
    p_pos = np.where(tail, 1.0 - c, 1.0)
    p_neg = np.full(d, 1.0 - c)
    out = np.empty(d)
    out[order] = isotonic_decreasing(ys, p_pos, p_neg)
    return out


def _vector_prox_s1(pen, gamma, beta, y):
    if y.ndim != 1:
        raise DomainError(f"expected a vector, got shape {y.shape}")
    if pen.dim is not None and y.size != pen.dim:
        raise DomainError(f"dimension mismatch: {y.size} != {pen.dim}")
    if isinstance(pen, L0):
        return _scalar_prox_s1(ScaledCard(pen.mu), gamma, beta, y)
    return _cap_prox_s1(pen, gamma, beta, y)


def _spectral(pen, y):
    """Decompose ``y``; returns (spectrum, rebuild)."""
    if y.ndim != 2:
        raise DomainError(f"expected a matrix, got shape {y.shape}")
    if pen.shape is not None and tuple(y.shape) != tuple(pen.shape):
        raise DomainError(f"shape mismatch: {y.shape} != {tuple(pen.shape)}")
    if isinstance(pen, PosRank):
        if y.shape[0] != y.shape[1] or np.linalg.norm(y - y.T) > SYM_TOL * np.linalg.norm(y):
            raise DomainError("PosRank needs a symmetric matrix")
        lam, V = np.linalg.eigh(0.5 * (y + y.T))
        return lam, lambda s: (V * s) @ V.T
    U, s, Vt = np.linalg.svd(y, full_matrices=False)
    return s, lambda t: (U * t) @ Vt


def _matrix_vector_penalty(pen):
    if isinstance(pen, ScaledRank):
        return L0(pen.mu)
    if isinstance(pen, RankCap):
        return CardCap(pen.M)
    return None


def _apply_s1(pen, gamma, beta, y):
    if isinstance(pen, _SCALAR):
        return _scalar_prox_s1(pen, gamma, beta, y)
    if isinstance(pen, _VECTOR):
        return _vector_prox_s1(pen, gamma, beta, y)
    s, rebuild = _spectral(pen, y)
    if isinstance(pen, PosRank):
        return rebuild(_scalar_prox_s1(PosCard(pen.mu), gamma, beta, s))
    return rebuild(_vector_prox_s1(_matrix_vector_penalty(pen), gamma, beta, s))


def prox_s1_scaled(req: ProxRequest):
    """Minimizer of ``beta * S_gamma(f)(x) + 1/2 ||x - y||^2``."""
    out = _apply_s1(req.penalty, req.gamma, req.beta, req.y)
    return float(out) if np.ndim(out) == 0 else out


def _combine(rho, gamma, y, z):
    num_a, num_b = rho * y, gamma * z
    x = (num_a - num_b) / (rho - gamma)
    # differences at rounding level are exact zeros (sparse representatives)
    noise = 8 * np.finfo(float).eps * (np.abs(num_a) + np.abs(num_b)) / (rho - gamma)
    return np.where(np.abs(x) <= noise, 0.0, x)


def prox_s2(req: ProxRequest):
    """Minimizer of ``S_gamma^2(f)(x) + rho/2 ||x - y||^2``."""
    pen, g, r = req.penalty, req.gamma, req.rho
    if isinstance(pen, _MATRIX):
        s, rebuild = _spectral(pen, req.y)
        if isinstance(pen, PosRank):
            z = _scalar_prox_s1(PosCard(pen.mu), g, req.beta, s)
        else:
            z = _vector_prox_s1(_matrix_vector_penalty(pen), g, req.beta, s)
        return rebuild(_combine(r, g, s, z))
    z = _apply_s1(pen, g, req.beta, req.y)
    out = _combine(r, g, req.y, z)
    return float(out) if np.ndim(out) == 0 else out


def prox_s2_with_quadratic(penalty, gamma: float, rho: float, y, d, a: float):
    """Minimizer of ``S^2(f)(x) + a/2 ||x - d||^2 + rho/2 ||x - y||^2``.

    The two quadratics merge into one of weight ``a + rho`` centred at the
    weighted average of ``d`` and ``y``; only ``a + rho > gamma`` is needed.
    """
    a = float(a)
    rho = float(rho)
    if not (math.isfinite(a) and a >= 0 and math.isfinite(rho) and rho >= 0):
        raise DomainError(f"weights must be nonnegative, got a={a!r}, rho={rho!r}")
    rho_eff = a + rho
    if not rho_eff > gamma:
        raise DomainError(f"a + rho = {rho_eff} must exceed gamma = {gamma}")
    center = (a * np.asarray(d, dtype=float) + rho * np.asarray(y, dtype=float)) / rho_eff
    return prox_s2(ProxRequest(penalty, gamma, rho_eff, center))
