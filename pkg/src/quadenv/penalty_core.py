"""Scalar S-gamma transforms of the cardinality-type penalties.

Two one-dimensional penalties are supported:

* ``ScaledCard(mu)``: ``mu * |x|_0`` (0 at the origin, ``mu`` elsewhere).
* ``PosCard(mu)``: 0 at the origin, ``mu`` for ``x > 0`` and ``+inf`` for
  ``x < 0``.

``s1_scalar`` evaluates ``S_g(f)(y) = sup_x -f(x) - g/2 (x - y)^2`` and
``s2_scalar`` evaluates ``S_g^2(f)``, so that ``s2 + g/2 (x - d)^2`` is the
l.s.c. convex envelope of ``f + g/2 (x - d)^2``.  Every function accepts
scalars or arrays and broadcasts elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScaledCard",
    "PosCard",
    "ScalarPenalty",
    "EnvelopeParams",
    "DomainError",
    "scalar_threshold",
    "scalar_value",
    "s1_scalar",
    "s2_scalar",
]


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ScaledCard:
    """``mu * |x|_0``."""

    mu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_positive("mu", self.mu))


@dataclass(frozen=True)
class PosCard:
    """``mu * chi_(0, inf)(x) + iota_(-inf, 0)(x)``."""

    mu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_positive("mu", self.mu))


ScalarPenalty = ScaledCard | PosCard


@dataclass(frozen=True)
class EnvelopeParams:
    """Curvature parameter ``gamma`` paired with a scalar penalty."""

    gamma: float
    penalty: ScalarPenalty

    def __post_init__(self):
        object.__setattr__(self, "gamma", _check_positive("gamma", self.gamma))
        if not isinstance(self.penalty, (ScaledCard, PosCard)):
            raise TypeError(f"unsupported scalar penalty {self.penalty!r}")

    @property
    def threshold(self) -> float:
        return scalar_threshold(self)


def scalar_threshold(p: EnvelopeParams) -> float:
    """Return ``T = sqrt(2 mu / gamma)``, where the envelope meets ``f``."""
    return math.sqrt(2.0 * p.penalty.mu / p.gamma)


def _finite(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def scalar_value(pen: ScalarPenalty, x, zero_tol: float = 0.0):
    """Evaluate the penalty itself; ``|x| <= zero_tol`` counts as zero."""
    x = _finite(x, "x")
    nonzero = np.abs(x) > zero_tol
    val = np.where(nonzero, pen.mu, 0.0)
    if isinstance(pen, PosCard):
        val = np.where(nonzero & (x < 0), np.inf, val)
    return _out(val)


def s1_scalar(p: EnvelopeParams, y):
    """``S_gamma(f)(y)``; values lie in ``(-inf, 0]``."""
    y = _finite(y, "y")
    mu, g = p.penalty.mu, p.gamma
    if isinstance(p.penalty, ScaledCard):
        val = -np.minimum(0.5 * g * y * y, mu)
    else:
        # for y < 0 the min picks the negative branch, whose square is g y^2 / 2
        val = -np.minimum(math.sqrt(g / 2.0) * y, math.sqrt(mu)) ** 2
    return _out(val)


def s2_scalar(p: EnvelopeParams, x):
    """``S_gamma^2(f)(x)``; values lie in ``[0, f(x)]``, ``+inf`` off the domain."""
    x = _finite(x, "x")
    mu, g = p.penalty.mu, p.gamma
    rg = math.sqrt(g / 2.0)
    rm = math.sqrt(mu)
    # mu - (rm - t)^2 written as t (2 rm - t): exactly 0 at the origin
    t = rg * np.abs(x)
    val = np.where(t < rm, t * (2.0 * rm - t), mu)
    if isinstance(p.penalty, PosCard):
        val = np.where(x < 0, np.inf, val)
    return _out(val)
