"""Vector and matrix penalties built from the scalar transforms.

Separable penalties (``L0``) are lifted coordinatewise, unitarily invariant
ones (``ScaledRank``, ``RankCap``) through singular values and ``PosRank``
through the eigenvalues of a symmetric matrix.  The cardinality caps
``CardCap`` and ``PosCardCap`` are indicator functions of
``{||x||_0 <= M}`` and ``{||x||_0 <= M, x >= 0}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .penalty_core import (
    DomainError,
    EnvelopeParams,
    PosCard,
    ScaledCard,
    _check_positive,
    s1_scalar,
    s2_scalar,
)

__all__ = [
    "L0",
    "CardCap",
    "PosCardCap",
    "ScaledRank",
    "RankCap",
    "PosRank",
    "VectorPenalty",
    "MatrixPenalty",
    "SortedMagnitudes",
    "sort_magnitudes",
    "cardcap_kstar",
    "s1_vector",
    "s2_vector",
    "s2_vector_batch",
    "penalty_value",
    "envelope_value",
    "s1_matrix",
    "s2_matrix",
    "vector_value",
    "matrix_value",
    "spectrum",
    "SYM_TOL",
]

SYM_TOL = 1e-10


def _check_count(M) -> int:
    if int(M) != M or M < 1:
        raise DomainError(f"M must be a positive integer, got {M!r}")
    return int(M)


def _check_dim(dim):
    if dim is None:
        return None
    if int(dim) != dim or dim < 1:
        raise DomainError(f"dimension must be a positive integer, got {dim!r}")
    return int(dim)


@dataclass(frozen=True)
class L0:
    """``mu * ||x||_0``."""

    mu: float = 1.0
    dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_positive("mu", self.mu))
        object.__setattr__(self, "dim", _check_dim(self.dim))


@dataclass(frozen=True)
class CardCap:
    """Indicator of ``{||x||_0 <= M}``."""

    M: int
    dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "M", _check_count(self.M))
        object.__setattr__(self, "dim", _check_dim(self.dim))
        if self.dim is not None and self.M > self.dim:
            raise DomainError(f"M={self.M} exceeds dimension {self.dim}")


@dataclass(frozen=True)
class PosCardCap:
    """Indicator of ``{||x||_0 <= M, x >= 0}``."""

    M: int
    dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "M", _check_count(self.M))
        object.__setattr__(self, "dim", _check_dim(self.dim))
        if self.dim is not None and self.M > self.dim:
            raise DomainError(f"M={self.M} exceeds dimension {self.dim}")


@dataclass(frozen=True)
class ScaledRank:
    """``mu * rank(X)``."""

    mu: float = 1.0
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_positive("mu", self.mu))


@dataclass(frozen=True)
class RankCap:
    """Indicator of ``{rank(X) <= M}``."""

    M: int
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "M", _check_count(self.M))
        if self.shape is not None and self.M > min(self.shape):
            raise DomainError(f"M={self.M} exceeds min{tuple(self.shape)}")


@dataclass(frozen=True)
class PosRank:
    """``mu * rank(X)`` plus the indicator of positive semidefinite ``X``."""

    mu: float = 1.0
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_positive("mu", self.mu))
        if self.shape is not None and self.shape[0] != self.shape[1]:
            raise DomainError("PosRank needs a square shape")


VectorPenalty = L0 | CardCap | PosCardCap
MatrixPenalty = ScaledRank | RankCap | PosRank


@dataclass(frozen=True)
class SortedMagnitudes:
    """Magnitudes of ``x`` in nonincreasing order.

    ``x[permutation[i]] == signs[i] * values[i]`` for every ``i``.
    """

    values: np.ndarray
    permutation: np.ndarray
    signs: np.ndarray

    def restore(self, values=None) -> np.ndarray:
        """Undo the sort, optionally substituting new magnitudes."""
        vals = self.values if values is None else np.asarray(values, dtype=float)
        out = np.empty_like(vals)
        out[self.permutation] = self.signs * vals
        return out


def sort_magnitudes(x) -> SortedMagnitudes:
    """Stable sort by ``|x|``, largest first; ties keep the original order."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise DomainError("entries must be finite")
    perm = np.argsort(-np.abs(x), kind="stable")
    signs = np.where(x[perm] < 0, -1.0, 1.0)
    return SortedMagnitudes(np.abs(x[perm]), perm, signs)


def _vector(pen, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DomainError(f"expected a vector, got shape {y.shape}")
    if pen.dim is not None and y.shape[0] != pen.dim:
        raise DomainError(f"dimension mismatch: {y.shape[0]} != {pen.dim}")
    if isinstance(pen, (CardCap, PosCardCap)) and pen.M > y.shape[0]:
        raise DomainError(f"M={pen.M} exceeds dimension {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise DomainError("entries must be finite")
    return y


def vector_value(pen: VectorPenalty, x, zero_tol: float = 0.0) -> float:
    """Evaluate the penalty; entries with ``|x_j| <= zero_tol`` count as zero."""
    x = _vector(pen, x)
    nnz = int(np.count_nonzero(np.abs(x) > zero_tol))
    if isinstance(pen, L0):
        return pen.mu * nnz
    if nnz > pen.M:
        return np.inf
    if isinstance(pen, PosCardCap) and np.any(x < -zero_tol):
        return np.inf
    return 0.0


def s1_vector(pen: VectorPenalty, gamma: float, y) -> float:
    """``S_gamma(f)(y)`` for a vector penalty."""
    gamma = _check_positive("gamma", gamma)
    y = _vector(pen, y)
    if isinstance(pen, L0):
        return float(np.sum(s1_scalar(EnvelopeParams(gamma, ScaledCard(pen.mu)), y)))
    if isinstance(pen, CardCap):
        tail = sort_magnitudes(y).values[pen.M:]
        return -0.5 * gamma * float(tail @ tail)
    head = np.maximum(np.sort(y)[::-1][: pen.M], 0.0)
    return 0.5 * gamma * float(head @ head - y @ y)


def cardcap_kstar(values, M: int) -> int:
    """Select ``k*`` for the cardinality-cap envelope.

    ``values`` are nonincreasing magnitudes.  With tail averages
    ``t_k = sum(values[M-k:]) / k`` (0-based), ``k*`` is the smallest ``k``
    in ``1..M`` with ``values[M-k-1] >= t_k >= values[M-k]``, where
    ``values[-1]`` is read as ``+inf``.
    """
    v = np.asarray(values, dtype=float)
    scale = max(float(v[0]) if v.size else 0.0, 1.0)
    slack = 1e-12 * scale
    tails = np.cumsum(v[::-1])[::-1]  # tails[i] = sum(v[i:])
    for k in range(1, M + 1):
        t = tails[M - k] / k
        upper = np.inf if M - k == 0 else v[M - k - 1]
        if upper + slack >= t >= v[M - k] - slack:
            return k
    raise AssertionError(f"no admissible k* for M={M}, values={v}")


def _cardcap_s2(values, M: int, gamma: float) -> float:
    v = np.asarray(values, dtype=float)
    k = cardcap_kstar(v, M)
    tail = v[M - k:]
    s = tail.sum()
    val = 0.5 * gamma * (s * s / k - tail @ tail)
    # any other admissible k must give the same value
    for j in range(k + 1, M + 1):
        tj = v[M - j:]
        t = tj.sum() / j
        upper = np.inf if M - j == 0 else v[M - j - 1]
        if upper >= t >= v[M - j]:
            other = 0.5 * gamma * (tj.sum() ** 2 / j - tj @ tj)
            assert abs(other - val) <= 1e-9 * (1.0 + abs(val)), (k, j, val, other)
    return max(float(val), 0.0)


def s2_vector(pen: VectorPenalty, gamma: float, x) -> float:
    """``S_gamma^2(f)(x)`` for ``L0`` and ``CardCap``.

    ``PosCardCap`` has no closed form here; its proximal operator is still
    available through ``prox_engine``.
    """
    gamma = _check_positive("gamma", gamma)
    x = _vector(pen, x)
    if isinstance(pen, L0):
        return float(np.sum(s2_scalar(EnvelopeParams(gamma, ScaledCard(pen.mu)), x)))
    if isinstance(pen, CardCap):
        return _cardcap_s2(sort_magnitudes(x).values, pen.M, gamma)
    raise NotImplementedError("no closed-form S^2 for PosCardCap")


def s2_vector_batch(pen: VectorPenalty, gamma: float, X) -> np.ndarray:
    """``s2_vector`` applied to every row of ``X``."""
    gamma = _check_positive("gamma", gamma)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(pen, L0):
        return np.sum(s2_scalar(EnvelopeParams(gamma, ScaledCard(pen.mu)), X), axis=1)
    if not isinstance(pen, CardCap):
        raise NotImplementedError("no closed-form S^2 for PosCardCap")
    d, M = X.shape[1], pen.M
    if M > d:
        raise DomainError(f"M={pen.M} exceeds dimension {d}")
    v = -np.sort(-np.abs(X), axis=1)
    tails = np.cumsum(v[:, ::-1], axis=1)[:, ::-1]
    sq = np.cumsum((v * v)[:, ::-1], axis=1)[:, ::-1]
    out = np.full(X.shape[0], np.nan)
    for k in range(M, 0, -1):  # overwrite so the smallest admissible k wins
        t = tails[:, M - k] / k
        upper = np.inf if M - k == 0 else v[:, M - k - 1]
        slack = 1e-12 * np.maximum(v[:, 0], 1.0)
        ok = (upper + slack >= t) & (t >= v[:, M - k] - slack)
        val = 0.5 * gamma * (k * t * t - sq[:, M - k])
        out = np.where(ok, val, out)
    assert not np.any(np.isnan(out)), "no admissible k*"
    return np.maximum(out, 0.0)


def _matrix(pen, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DomainError(f"expected a matrix, got shape {Y.shape}")
    if pen.shape is not None and tuple(Y.shape) != tuple(pen.shape):
        raise DomainError(f"shape mismatch: {Y.shape} != {tuple(pen.shape)}")
    if not np.all(np.isfinite(Y)):
        raise DomainError("entries must be finite")
    if isinstance(pen, RankCap) and pen.M > min(Y.shape):
        raise DomainError(f"M={pen.M} exceeds min{Y.shape}")
    if isinstance(pen, PosRank):
        if Y.shape[0] != Y.shape[1]:
            raise DomainError("PosRank needs a square matrix")
        if np.linalg.norm(Y - Y.T) > SYM_TOL * np.linalg.norm(Y):
            raise DomainError("PosRank needs a symmetric matrix")
    return Y


def spectrum(pen: MatrixPenalty, Y) -> np.ndarray:
    """Singular values (nonincreasing), or eigenvalues for ``PosRank``."""
    Y = _matrix(pen, Y)
    try:
        if isinstance(pen, PosRank):
            return np.linalg.eigvalsh(0.5 * (Y + Y.T))[::-1]
        return np.linalg.svd(Y, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"spectral decomposition failed: {exc}") from exc


def matrix_value(pen: MatrixPenalty, X, zero_tol: float | None = None) -> float:
    """Evaluate the matrix penalty.

    Singular values (or eigenvalue magnitudes) at most ``zero_tol`` count as
    zero; the default is numpy's ``matrix_rank`` tolerance.
    """
    lam = spectrum(pen, X)
    X = np.asarray(X, dtype=float)
    if zero_tol is None:
        top = float(np.max(np.abs(lam))) if lam.size else 0.0
        zero_tol = top * max(X.shape) * np.finfo(float).eps
    rank = int(np.count_nonzero(np.abs(lam) > zero_tol))
    if isinstance(pen, ScaledRank):
        return pen.mu * rank
    if isinstance(pen, RankCap):
        return 0.0 if rank <= pen.M else np.inf
    if np.any(lam < -zero_tol):
        return np.inf
    return pen.mu * rank


def s1_matrix(pen: MatrixPenalty, gamma: float, Y) -> float:
    """``S_gamma(F)(Y)`` through the spectrum of ``Y``."""
    gamma = _check_positive("gamma", gamma)
    lam = spectrum(pen, Y)
    if isinstance(pen, ScaledRank):
        return s1_vector(L0(pen.mu), gamma, lam)
    if isinstance(pen, RankCap):
        return s1_vector(CardCap(pen.M), gamma, lam)
    return float(np.sum(s1_scalar(EnvelopeParams(gamma, PosCard(pen.mu)), lam)))


def s2_matrix(pen: MatrixPenalty, gamma: float, X) -> float:
    """``S_gamma^2(F)(X)`` through the spectrum of ``X``."""
    gamma = _check_positive("gamma", gamma)
    lam = spectrum(pen, X)
    if isinstance(pen, ScaledRank):
        return s2_vector(L0(pen.mu), gamma, lam)
    if isinstance(pen, RankCap):
        return _cardcap_s2(lam, pen.M, gamma)
    scale = np.linalg.norm(np.asarray(X, dtype=float))
    if np.any(lam < -SYM_TOL * scale):
        return np.inf
    lam = np.maximum(lam, 0.0)
    return float(np.sum(s2_scalar(EnvelopeParams(gamma, PosCard(pen.mu)), lam)))


def penalty_value(pen, x, zero_tol: float | None = None) -> float:
    """Evaluate any supported penalty (scalar, vector or matrix) at ``x``."""
    from .penalty_core import scalar_value

    if isinstance(pen, (ScaledCard, PosCard)):
        return scalar_value(pen, x, 0.0 if zero_tol is None else zero_tol)
    if isinstance(pen, (L0, CardCap, PosCardCap)):
        return vector_value(pen, x, 0.0 if zero_tol is None else zero_tol)
    return matrix_value(pen, x, zero_tol)


def envelope_value(pen, gamma: float, x) -> float:
    """``S_gamma^2(f)(x)`` for any supported penalty with a closed form."""
    if isinstance(pen, (ScaledCard, PosCard)):
        return s2_scalar(EnvelopeParams(gamma, pen), x)
    if isinstance(pen, (L0, CardCap, PosCardCap)):
        return s2_vector(pen, gamma, x)
    return s2_matrix(pen, gamma, x)
