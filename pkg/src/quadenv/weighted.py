"""Direct-tensor weighted matrix spaces and square Hankel machinery.

A weight ``w[i, j] = v[i] * u[j]`` makes ``X -> diag(sqrt(v)) X diag(sqrt(u))``
an isometry from the weighted Frobenius space onto the flat one, so rank
envelopes in the weighted space are the flat envelopes of the conjugated
matrix.  Hankel indices are 0-based here: ``H[i, j] = f[i + j]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lifting import RankCap, ScaledRank, s2_matrix
from .penalty_core import DomainError

__all__ = [
    "DirectTensorWeight",
    "HankelContext",
    "conjugate_to_flat",
    "s2_weighted_rank",
    "s2_weighted_rankcap",
    "hankel_embed",
    "hankel_adjoint",
    "hankel_project",
    "hankel_signal",
    "triangle_weights",
    "flatten_u",
    "flatten_omega",
]


@dataclass(frozen=True)
class DirectTensorWeight:
    """Weight ``w[i, j] = v[i] * u[j]`` on ``m x n`` matrices."""

    u: np.ndarray  # column weights, length n
    v: np.ndarray  # row weights, length m

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        v = np.asarray(self.v, dtype=float).ravel()
        for name, arr in (("u", u), ("v", v)):
            if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise DomainError(f"weight {name} must be positive and finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.v.size, self.u.size)

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.v, self.u)

    @classmethod
    def unit(cls, m: int, n: int) -> "DirectTensorWeight":
        return cls(np.ones(n), np.ones(m))


def conjugate_to_flat(w: DirectTensorWeight, X) -> np.ndarray:
    """Return ``diag(sqrt(v)) X diag(sqrt(u))``."""
    X = np.asarray(X, dtype=float)
    if X.shape != w.shape:
        raise DomainError(f"shape mismatch: {X.shape} != {w.shape}")
    return np.sqrt(w.v)[:, None] * X * np.sqrt(w.u)[None, :]


def s2_weighted_rank(w: DirectTensorWeight, gamma: float, mu: float, X) -> float:
    """Envelope of ``mu * rank`` in the weighted space."""
    return s2_matrix(ScaledRank(mu), gamma, conjugate_to_flat(w, X))


def s2_weighted_rankcap(w: DirectTensorWeight, gamma: float, M: int, X) -> float:
    """Envelope of the rank-``M`` cap in the weighted space."""
    return s2_matrix(RankCap(M), gamma, conjugate_to_flat(w, X))


def _side(length: int) -> int:
    if length < 1 or length % 2 == 0:
        raise DomainError(f"signal length must be odd (2n - 1), got {length}")
    return (length + 1) // 2


def hankel_embed(f) -> np.ndarray:
    """Square Hankel matrix ``H[i, j] = f[i + j]`` for a signal of length ``2n - 1``."""
    f = np.asarray(f, dtype=float).ravel()
    n = _side(f.size)
    idx = np.arange(n)
    return f[idx[:, None] + idx[None, :]]


def hankel_adjoint(X) -> np.ndarray:
    """Antidiagonal sums; the adjoint of ``hankel_embed``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DomainError("expected a square matrix")
    n = X.shape[0]
    flipped = X[:, ::-1]
    # offset n-1-k of the flipped matrix is antidiagonal k
    return np.array([np.trace(flipped, offset=n - 1 - k) for k in range(2 * n - 1)])


def triangle_weights(n: int) -> np.ndarray:
    """Antidiagonal lengths ``n - |j - n|`` for ``j = 1..2n-1``."""
    j = np.arange(1, 2 * n)
    return (n - np.abs(j - n)).astype(float)


def hankel_signal(X) -> np.ndarray:
    """Antidiagonal means of a square matrix."""
    X = np.asarray(X, dtype=float)
    return hankel_adjoint(X) / triangle_weights(X.shape[0])


def hankel_project(X) -> np.ndarray:
    """Orthogonal projection onto square Hankel matrices."""
    return hankel_embed(hankel_signal(X))


def flatten_u(n: int) -> np.ndarray:
    """``u_i = 1 / sqrt(k - |i - k|)`` for odd ``n = 2k - 1``, ``i = 1..n``."""
    if n < 1 or n % 2 == 0:
        raise DomainError(f"n must be odd, got {n}")
    k = (n + 1) // 2
    i = np.arange(1, n + 1)
    return 1.0 / np.sqrt(k - np.abs(i - k))


def flatten_omega(n: int) -> np.ndarray:
    """Signal weights induced by ``w[i, l] = u_i u_l`` on Hankel matrices."""
    u = flatten_u(n)
    omega = np.zeros(2 * n - 1)
    for i in range(n):
        for l in range(n):
            omega[i + l] += u[i] * u[l]
    return omega


@dataclass(frozen=True)
class HankelContext:
    """Weights attached to ``n x n`` Hankel matrices."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")

    @property
    def length(self) -> int:
        return 2 * self.n - 1

    @property
    def triangle_weights(self) -> np.ndarray:
        return triangle_weights(self.n)

    @property
    def flatten_u(self) -> np.ndarray:
        return flatten_u(self.n)

    @property
    def omega(self) -> np.ndarray:
        return flatten_omega(self.n)

    @property
    def flat_weight(self) -> DirectTensorWeight:
        u = self.flatten_u
        return DirectTensorWeight(u, u)

    def flatness(self) -> tuple[float, float]:
        """``max/min`` ratios of the triangle and the flattened weights."""
        tri, om = self.triangle_weights, self.omega
        return float(tri.max() / tri.min()), float(om.max() / om.min())

