"""Brute-force oracles on tabulated functions.

Everything here works on functions sampled on rectilinear grids and
computes *exact discrete* suprema/infima over the grid points:

* ``grid_legendre``: ``g*(y) = sup_x <x, y> - g(x)``;
* ``grid_s2``: inf-convolution with ``gamma/2 |.|^2`` followed by a
  sup-convolution, i.e. ``S_gamma^2``;
* ``grid_seminorm_s2``: the same with the seminorm ``|A .|``;
* ``grid_convex_envelope``: double conjugate.

Quadratic kernels with a diagonal metric are separable, so a transform is a
sequence of one-dimensional passes, each evaluated with the lower envelope
of parabolas (linear time per grid line).  Non-diagonal kernels fall back to
a chunked all-pairs scan.  The remaining oracles (``gamma_sweep``,
``curvature_scan``, ``exhaustive_l0_minimizer``) probe closed forms and
solvers directly.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import numba
from numba import get_num_threads, njit, prange, set_num_threads

from .lifting import L0, CardCap, envelope_value, penalty_value
from .penalty_core import DomainError

__all__ = [
    "OracleFailure",
    "GridOracleConfig",
    "Tabulated",
    "tabulate",
    "lower_envelope",
    "grid_legendre",
    "grid_convex_envelope",
    "slope_axes",
    "grid_s2",
    "grid_s2_legendre",
    "grid_lasry_lions",
    "grid_seminorm_s2",
    "gamma_sweep",
    "curvature_scan",
    "exhaustive_l0_minimizer",
]

MAX_GRID_POINTS = 10**8

# the bundled TBB is too old for numba and only produces a warning
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"


class OracleFailure(AssertionError):
    """An oracle check found a violation."""


def _configure_threads():
    cap = os.environ.get("QUADENV_THREADS")
    if cap:
        try:
            set_num_threads(max(1, min(int(cap), get_num_threads())))
        except ValueError:
            pass


@dataclass(frozen=True)
class GridOracleConfig:
    """Box ``[lower, upper]`` sampled with spacing ``step``.

    Axes are integer multiples of ``step`` (so 0 is always a node) plus any
    ``extra`` points, e.g. the thresholds ``+-T``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    step: float
    extra: tuple[float, ...] = ()

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or not 1 <= len(lower) <= 3:
            raise DomainError("need matching bounds in 1 to 3 dimensions")
        if not (math.isfinite(self.step) and self.step > 0):
            raise DomainError(f"step must be positive, got {self.step!r}")
        if not all(math.isfinite(a) and math.isfinite(b) and a < b for a, b in zip(lower, upper)):
            raise DomainError("bounds must be finite with lower < upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "extra", tuple(float(e) for e in self.extra))
        if self.size > MAX_GRID_POINTS:
            raise DomainError(f"grid of {self.size} points exceeds {MAX_GRID_POINTS}")

    @classmethod
    def cube(cls, half_width: float, step: float, dims: int = 1, extra=()):
        return cls((-half_width,) * dims, (half_width,) * dims, step, tuple(extra))

    @property
    def dims(self) -> int:
        return len(self.lower)

    def axis(self, i: int) -> np.ndarray:
        lo = math.ceil(self.lower[i] / self.step - 1e-9)
        hi = math.floor(self.upper[i] / self.step + 1e-9)
        nodes = np.arange(lo, hi + 1) * self.step
        extra = [e for e in self.extra if self.lower[i] <= e <= self.upper[i]]
        if extra:
            nodes = np.union1d(nodes, extra)
            # drop nodes that merely duplicate an extra point up to rounding
            keep = np.concatenate([[True], np.diff(nodes) > 1e-9 * self.step])
            nodes = nodes[keep]
        return nodes

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.axis(i) for i in range(self.dims))

    @property
    def size(self) -> int:
        n = 1
        for i in range(self.dims):
            n *= (math.floor(self.upper[i] / self.step) - math.ceil(self.lower[i] / self.step) + 1
                  + len(self.extra))
        return n


@dataclass
class Tabulated:
    """Function values on the tensor grid spanned by ``axes``."""

    axes: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        shape = tuple(a.size for a in self.axes)
        if self.values.shape != shape:
            raise DomainError(f"values of shape {self.values.shape} do not match grid {shape}")

    @property
    def dims(self) -> int:
        return len(self.axes)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def points(self) -> np.ndarray:
        """Grid points as rows, in C order of ``values``."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def sqnorm(self, weights=None) -> np.ndarray:
        w = np.ones(self.dims) if weights is None else np.asarray(weights, dtype=float)
        return sum(wi * m * m for wi, m in zip(w, self.mesh()))

    def index_of(self, point) -> tuple[int, ...]:
        """Index of the node closest to ``point``."""
        point = np.atleast_1d(point)
        return tuple(int(np.abs(a - p).argmin()) for a, p in zip(self.axes, point))

    def at(self, point) -> float:
        return float(self.values[self.index_of(point)])


def tabulate(func: Callable[[np.ndarray], np.ndarray], cfg: GridOracleConfig,
             vectorized: bool = True) -> Tabulated:
    """Sample ``func`` on the grid of ``cfg``.

    ``func`` receives points as rows of an ``(N, dims)`` array when
    ``vectorized`` and single points otherwise.
    """
    axes = cfg.axes
    pts = Tabulated(axes, np.zeros(tuple(a.size for a in axes))).points()
    if vectorized:
        vals = np.asarray(func(pts), dtype=float)
    else:
        vals = np.array([func(p) for p in pts], dtype=float)
    return Tabulated(axes, vals.reshape(tuple(a.size for a in axes)))


@njit(cache=True)
def _envelope_line(p, v, q, a, out):
    # out[i] = min_k v[k] + a (q[i] - p[k])^2 ; p, q ascending; +inf v skipped
    n = p.size
    idx = np.empty(n, np.int64)
    z = np.empty(n + 1)
    k = -1
    for j in range(n):
        if not v[j] < np.inf:
            continue
        hj = v[j] + a * p[j] * p[j]
        while True:
            if k < 0:
                k = 0
                idx[0] = j
                z[0] = -np.inf
                break
            i = idx[k]
            s = (hj - (v[i] + a * p[i] * p[i])) / (2.0 * a * (p[j] - p[i]))
            if s <= z[k]:
                k -= 1
                continue
            k += 1
            idx[k] = j
            z[k] = s
            break
    if k < 0:
        for i in range(q.size):
            out[i] = np.inf
        return
    z[k + 1] = np.inf
    m = 0
    for i in range(q.size):
        while z[m + 1] < q[i]:
            m += 1
        d = q[i] - p[idx[m]]
        out[i] = v[idx[m]] + a * d * d


@njit(parallel=True, cache=True)
def _envelope_lines(p, V, q, a, out):
    for r in prange(V.shape[0]):
        _envelope_line(p, V[r], q, a, out[r])


def lower_envelope(points, values, queries, a: float, axis: int = -1) -> np.ndarray:
    """``out[..., i, ...] = min_k values[..., k, ...] + a (queries[i] - points[k])^2``.

    The minimum runs along ``axis``; ``+inf`` values are skipped and an
    all-infinite line yields ``+inf``.  Exact over the sample points.
    """
    p = np.asarray(points, dtype=float)
    q = np.asarray(queries, dtype=float)
    V = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    lead = V.shape[:-1]
    flat = np.ascontiguousarray(V.reshape(-1, V.shape[-1]))
    if a == 0:
        res = np.repeat(flat.min(axis=1, initial=np.inf)[:, None], q.size, axis=1)
    else:
        if a < 0:
            raise DomainError("kernel weight must be nonnegative")
        _configure_threads()
        order_p, order_q = np.argsort(p), np.argsort(q)
        res_sorted = np.empty((flat.shape[0], q.size))
        _envelope_lines(p[order_p], np.ascontiguousarray(flat[:, order_p]), q[order_q],
                        float(a), res_sorted)
        res = np.empty_like(res_sorted)
        res[:, order_q] = res_sorted
    return np.moveaxis(res.reshape(lead + (q.size,)), -1, axis)


def _brute_min(points_in, vals, points_out, metric, chunk=2048):
    """``min_k vals[k] + (x - p_k)^T metric (x - p_k)`` over all grid pairs."""
    P = points_in[np.isfinite(vals)]
    v = vals[np.isfinite(vals)]
    out = np.empty(points_out.shape[0])
    if P.size == 0:
        out[:] = np.inf
        return out
    for s in range(0, points_out.shape[0], chunk):
        D = points_out[s:s + chunk, None, :] - P[None, :, :]
        q = np.einsum("ijk,kl,ijl->ij", D, metric, D)
        out[s:s + chunk] = (q + v[None, :]).min(axis=1)
    return out


def _inf_conv(g: Tabulated, metric: np.ndarray, out_axes=None) -> Tabulated:
    """``min_w g(w) + 1/2 (x-w)^T metric (x-w)`` on the grid ``out_axes``."""
    out_axes = g.axes if out_axes is None else tuple(out_axes)
    metric = np.atleast_2d(np.asarray(metric, dtype=float))
    if np.allclose(metric, np.diag(np.diag(metric)), rtol=0, atol=0):
        vals = g.values
        for i, weight in enumerate(np.diag(metric)):
            vals = lower_envelope(g.axes[i], vals, out_axes[i], 0.5 * weight, axis=i)
        return Tabulated(out_axes, vals)
    out = Tabulated(out_axes, np.zeros(tuple(a.size for a in out_axes)))
    vals = _brute_min(g.points(), g.values.ravel(), out.points(), 0.5 * metric)
    return Tabulated(out_axes, vals.reshape(out.values.shape))


def _require_finite_somewhere(g: Tabulated):
    if not np.any(np.isfinite(g.values)):
        raise DomainError("tabulated function is +inf everywhere")
    if np.any(g.values == -np.inf) or np.any(np.isnan(g.values)):
        raise DomainError("tabulated function must not take -inf or nan")


def grid_legendre(g: Tabulated, out_axes=None) -> Tabulated:
    """Discrete Fenchel conjugate ``sup_x <x, y> - g(x)`` over grid nodes ``x``.

    Uses ``<x, y> = (|x|^2 + |y|^2 - |x - y|^2) / 2`` so each axis is a lower
    envelope of parabolas.  Output nodes default to the input grid.
    """
    _require_finite_somewhere(g)
    out_axes = g.axes if out_axes is None else tuple(np.asarray(a, dtype=float) for a in out_axes)
    shifted = Tabulated(g.axes, g.values - 0.5 * g.sqnorm())
    env = _inf_conv(shifted, np.eye(g.dims), out_axes)
    out = Tabulated(out_axes, np.zeros(env.values.shape))
    return Tabulated(out_axes, 0.5 * out.sqnorm() - env.values)


def slope_axes(g: Tabulated, margin: float = 0.1) -> tuple[np.ndarray, ...]:
    """Dual grids for the double conjugate of ``g``, with the primal spacing.

    A convex function with values in an interval of length ``R`` has slopes
    at most ``R / delta`` at distance ``delta`` from the edge of the box, and
    the slopes of the discrete envelope never leave the range of
    neighbouring differences.  The dual grid along each axis covers the
    intersection of both ranges with ``delta = margin * width``, so the
    double conjugate is exact away from a ``margin`` strip at the edges.
    """
    finite = g.values[np.isfinite(g.values)]
    spread = float(finite.max() - finite.min()) if finite.size else 0.0
    out = []
    for i, ax in enumerate(g.axes):
        if ax.size < 2:
            out.append(np.zeros(1))
            continue
        shape = [1] * g.dims
        shape[i] = ax.size - 1
        slopes = np.diff(g.values, axis=i) / np.diff(ax).reshape(shape)
        slopes = slopes[np.isfinite(slopes)]
        cap = spread / (margin * float(ax[-1] - ax[0]))
        lo = max(float(slopes.min()), -cap) if slopes.size else 0.0
        hi = min(float(slopes.max()), cap) if slopes.size else 0.0
        h = float(np.min(np.diff(ax)))
        out.append(h * np.arange(math.floor(lo / h) - 1, math.ceil(hi / h) + 2))
    return tuple(out)


def grid_convex_envelope(g: Tabulated, dual_axes=None) -> Tabulated:
    """Double conjugate of ``g`` restricted to its grid (``g = +inf`` off the box).

    ``dual_axes`` defaults to ``slope_axes(g)``.
    """
    dual = grid_legendre(g, slope_axes(g) if dual_axes is None else dual_axes)
    return grid_legendre(dual, g.axes)


def grid_lasry_lions(f: Tabulated, s: float, t: float) -> Tabulated:
    """``sup_y (inf_w f(w) + |w - y|^2/(2t)) - |x - y|^2/(2s)``."""
    _require_finite_somewhere(f)
    eye = np.eye(f.dims)
    inner = _inf_conv(f, eye / t)
    neg = Tabulated(inner.axes, -inner.values)
    outer = _inf_conv(neg, eye / s)
    return Tabulated(f.axes, -outer.values)


def grid_s2(f: Tabulated, gamma: float) -> Tabulated:
    """``S_gamma^2(f)`` as an inf-convolution followed by a sup-convolution."""
    return grid_lasry_lions(f, 1.0 / gamma, 1.0 / gamma)


def grid_s2_legendre(f: Tabulated, gamma: float) -> Tabulated:
    """``S_gamma^2(f)`` as the double conjugate of ``f + gamma/2 |.|^2``, minus the square.

    """
    _require_finite_somewhere(f)
    quad = 0.5 * gamma * f.sqnorm()
    lifted = Tabulated(f.axes, f.values + quad)
    env = grid_convex_envelope(lifted)
    return Tabulated(f.axes, env.values - quad)


def grid_seminorm_s2(f: Tabulated, A) -> Tabulated:
    """``S^2`` in the seminorm ``|A x|``.

    ``sup_y (inf_w f(w) + |A(w - y)|^2 / 2) - |A(x - y)|^2 / 2``; both
    convolutions run over the grid of ``f``.
    """
    _require_finite_somewhere(f)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != f.dims:
        raise DomainError(f"operator with {A.shape[1]} columns on a {f.dims}-d grid")
    metric = A.T @ A
    if not np.any(metric):
        return Tabulated(f.axes, np.full(f.values.shape, np.min(f.values)))
    inner = _inf_conv(f, metric)
    outer = _inf_conv(Tabulated(inner.axes, -inner.values), metric)
    return Tabulated(f.axes, -outer.values)


@dataclass(frozen=True)
class SweepResult:
    gammas: np.ndarray
    values: np.ndarray
    target: float

    @property
    def top_gap(self) -> float:
        return float(self.target - self.values[-1])


def gamma_sweep(penalty, x, gammas: Sequence[float], tol: float = 1e-12) -> SweepResult:
    """Envelope values along an ascending list of ``gamma``.

    Raises ``OracleFailure`` if the values decrease by more than ``tol``
    (relative) or exceed ``f(x)``.
    """
    g = np.asarray(gammas, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0) or np.any(g <= 0):
        raise DomainError("gammas must be positive and strictly ascending")
    vals = np.array([envelope_value(penalty, gi, x) for gi in g])
    target = float(penalty_value(penalty, x))
    slack = tol * (1.0 + np.abs(vals[:-1]))
    if np.any(np.diff(vals) < -slack):
        raise OracleFailure(f"envelope decreased along gamma: {vals}")
    if np.any(vals > target + tol * (1.0 + abs(target))):
        raise OracleFailure(f"envelope exceeds f(x) = {target}: {vals}")
    return SweepResult(g, vals, target)


def curvature_scan(penalty, gamma: float, x0, directions, h: float = 1e-4) -> np.ndarray:
    """Central second differences of ``S_gamma^2(f)`` at ``x0`` along unit directions.

    If the envelope is strictly below ``f`` at ``x0``, at least one direction
    must show curvature ``-gamma`` (within ``100 h``); otherwise
    ``OracleFailure`` is raised.
    """
    x0 = np.asarray(x0, dtype=float)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float)) if x0.ndim else \
        np.asarray(directions, dtype=float).reshape(-1, 1)
    center = envelope_value(penalty, gamma, x0)
    if not np.isfinite(center):
        raise DomainError("envelope is infinite at x0")
    out = []
    for nu in dirs:
        nu = nu / np.linalg.norm(nu)
        step = (h * nu).reshape(x0.shape) if x0.ndim else float(h * nu[0])
        plus = envelope_value(penalty, gamma, x0 + step)
        minus = envelope_value(penalty, gamma, x0 - step)
        out.append((plus - 2.0 * center + minus) / (h * h))
    out = np.array(out)
    if center < penalty_value(penalty, x0) - 1e-9:
        if not np.any(np.abs(out + gamma) <= 100 * h):
            raise OracleFailure(f"no direction with curvature -{gamma}: {out}")
    return out


def exhaustive_l0_minimizer(A, d, penalty, ridge: float = 1e-12):
    """Global minimizer of ``f(x) + 1/2 |A x - d|^2`` by enumerating supports.

    ``penalty`` is ``L0(mu)`` (all ``2^n`` supports) or ``CardCap(M)``
    (supports of size at most ``M``).  Each restriction is solved through
    ridge-regularized normal equations.  Returns ``(x, J)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    n = A.shape[1]
    if n > 12:
        raise DomainError(f"exhaustive search limited to n <= 12, got {n}")
    if isinstance(penalty, L0):
        max_size, mu = n, penalty.mu
    elif isinstance(penalty, CardCap):
        max_size, mu = min(penalty.M, n), 0.0
    else:
        raise DomainError(f"unsupported penalty {penalty!r}")
    G = A.T @ A
    b = A.T @ d
    best_x, best_J = np.zeros(n), 0.5 * float(d @ d)
    for size in range(1, max_size + 1):
        for supp in itertools.combinations(range(n), size):
            s = list(supp)
            xs = np.linalg.solve(G[np.ix_(s, s)] + ridge * np.eye(size), b[s])
            x = np.zeros(n)
            x[s] = xs
            r = A @ x - d
            J = mu * size + 0.5 * float(r @ r)
            if J < best_J:
                best_x, best_J = x, J
    return best_x, best_J
