"""Solvers for ``J(x) = f(x) + 1/2 ||A x - d||^2`` through its quadratic envelope.

``J_gamma`` replaces ``f`` by ``S_gamma^2(f)``.  Two regimes matter:

* convex minorant, ``gamma <= sigma_min(A^T A)``: ``J_gamma`` is convex and
  below the convex envelope of ``J``, so a certified minimizer of
  ``J_gamma`` (``f(x) = S_gamma^2(f)(x)``) is a global minimizer of ``J``;
* minimizer preserving, ``gamma >= ||A||^2``: ``J_gamma`` is sandwiched
  between the convex envelope of ``J`` and ``J`` and has the same global
  minimizers.

``solve_fbs`` runs forward-backward splitting on ``J_gamma``.
``solve_admm`` handles ``A = I`` with a convex prior (Hankel structure) and
``solve_cadzow`` is the alternating-projection baseline for the same
problem.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .lifting import (
    CardCap,
    PosCardCap,
    PosRank,
    RankCap,
    ScaledRank,
    envelope_value,
    penalty_value,
)
from .penalty_core import DomainError, _check_positive
from .prox import ProxRequest, prox_s2, prox_s2_with_quadratic
from .weighted import DirectTensorWeight, conjugate_to_flat, hankel_embed

__all__ = [
    "Regime",
    "RegimeError",
    "LeastSquaresProblem",
    "SolverConfig",
    "SolverReport",
    "operator_norms",
    "certify",
    "objective",
    "surrogate_objective",
    "solve_fbs",
    "solve_admm",
    "solve_cadzow",
]

_INDICATORS = (CardCap, PosCardCap, RankCap)
_MATRIX = (ScaledRank, RankCap, PosRank)


class Regime(str, enum.Enum):
    CONVEX_MINORANT = "convex_minorant"
    MINIMIZER_PRESERVING = "minimizer_preserving"
    AUTO = "auto"


class RegimeError(DomainError):
    """The requested regime is inconsistent with ``gamma`` and ``A``."""


@dataclass
class LeastSquaresProblem:
    """``min f(x) + 1/2 ||A x - d||^2`` over ``x`` of shape ``shape``.

    ``A`` acts on ``x.ravel()``; ``A=None`` is the identity, in which case
    ``d`` has the shape of ``x``.  ``gamma=None`` lets the solver choose.
    ``prior="hankel"`` restricts ``x`` to square Hankel matrices; a 1-D
    ``d`` is then read as the generating signal.  ``weight`` turns the data
    term into ``1/2 sum w_ij (x_ij - d_ij)^2`` (Hankel problems only).
    """

    penalty: Any
    d: Any
    A: Any = None
    gamma: float | None = None
    prior: str | None = None
    weight: DirectTensorWeight | None = None
    shape: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if not np.all(np.isfinite(d)):
            raise DomainError("data must be finite")
        if self.prior not in (None, "hankel"):
            raise DomainError(f"unknown prior {self.prior!r}")
        if self.prior == "hankel" and d.ndim == 1:
            d = hankel_embed(d)
        if self.A is not None:
            A = np.asarray(self.A, dtype=float)
            A = A.reshape(1, 1) if A.ndim == 0 else A
            if A.ndim != 2 or not np.all(np.isfinite(A)):
                raise DomainError("A must be a finite matrix")
            d = d.reshape(-1) if d.ndim == 0 else d
            if d.ndim != 1 or d.size != A.shape[0]:
                raise DomainError(f"A has {A.shape[0]} rows but d has shape {d.shape}")
            self.A = A
        if self.gamma is not None:
            self.gamma = _check_positive("gamma", self.gamma)
        self.d = d
        if self.A is None:
            self.shape = d.shape
        elif isinstance(self.penalty, _MATRIX):
            pen_shape = getattr(self.penalty, "shape", None)
            if pen_shape is None:
                raise DomainError("a matrix penalty with a general A needs penalty.shape")
            self.shape = tuple(pen_shape)
        else:
            self.shape = (self.A.shape[1],)
        if self.A is not None and int(np.prod(self.shape)) != self.A.shape[1]:
            raise DomainError(f"A has {self.A.shape[1]} columns for x of shape {self.shape}")
        if self.weight is not None:
            if self.prior != "hankel" or self.A is not None:
                raise DomainError("weights are supported for Hankel problems with A = I")
            if self.weight.shape != tuple(d.shape):
                raise DomainError(f"weight shape {self.weight.shape} != data shape {d.shape}")
        if self.prior == "hankel":
            if d.ndim != 2 or d.shape[0] != d.shape[1] or self.A is not None:
                raise DomainError("the Hankel prior needs square data and A = I")

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.A is None else self.A @ x.ravel()

    def adjoint(self, r) -> np.ndarray:
        return np.asarray(r) if self.A is None else (self.A.T @ r).reshape(self.shape)


@dataclass
class SolverConfig:
    """Iteration controls shared by the solvers.

    ``rho=None`` selects ``1.001 * max(||A||^2, gamma)`` for FBS; for ADMM
    ``rho`` is the augmentation weight (default 1.0).  ``x0`` overrides the
    starting point; ``random_init`` perturbs the default start with a
    standard normal draw from ``seed``.
    """

    max_iters: int = 100_000
    tol: float = 1e-9
    admm_tol: float = 1e-8
    rho: float | None = None
    regime: Regime = Regime.AUTO
    seed: int = 0
    x0: Any = None
    random_init: bool = False
    record: bool = True

    def __post_init__(self):
        self.regime = Regime(self.regime)
        _check_positive("tol", self.tol)
        _check_positive("admm_tol", self.admm_tol)
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DomainError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        self.max_iters = int(self.max_iters)
        if self.rho is not None:
            _check_positive("rho", self.rho)


@dataclass(frozen=True)
class SolverReport:
    """Outcome of a solve.  ``converged`` and ``certified`` are independent."""

    x: np.ndarray
    objective_gamma: float
    objective: float
    certified: bool
    gap: float
    converged: bool
    iterations: int
    regime: str
    gamma: float
    norm_upper: float
    norm_lower: float
    seed: int
    method: str
    feasibility: float = 0.0
    degenerate: bool = False
    log: tuple = ()
    anchor: np.ndarray | None = None  # ADMM: z - u, where the next x-update is centred

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return v if math.isfinite(v) else str(v)

        return {
            "method": self.method,
            "x": np.asarray(self.x).tolist(),
            "objective_gamma": num(self.objective_gamma),
            "objective": num(self.objective),
            "certified": bool(self.certified),
            "gap": num(self.gap),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "regime": self.regime,
            "gamma": num(self.gamma),
            "norm_upper": num(self.norm_upper),
            "norm_lower": num(self.norm_lower),
            "feasibility": num(self.feasibility),
            "degenerate": bool(self.degenerate),
            "seed": int(self.seed),
        }


def _power(apply, n, rng, iters=200, rtol=1e-12):
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply(v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v
        v = w / nw
        if abs(new - lam) <= rtol * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return float(v @ apply(v)), v


def operator_norms(A, seed: int = 0) -> tuple[float, float]:
    """``(||A||^2, sigma_min(A^T A))`` by power iteration.

    The smallest eigenvalue comes from power iteration on ``c I - A^T A``
    with ``c = ||A||^2``.  Each estimate is accepted only if its eigenvector
    residual is small; otherwise the dense symmetric eigensolver is used.
    ``A=None`` is the identity.
    """
    if A is None:
        return 1.0, 1.0
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        raise DomainError("A must be finite")
    G = A.T @ A
    n = G.shape[0]
    scale = float(np.abs(G).max()) if G.size else 0.0
    if scale == 0.0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    upper, v = _power(lambda x: G @ x, n, rng)
    ok = np.linalg.norm(G @ v - upper * v) <= 1e-10 * scale * math.sqrt(n)
    c = upper
    top, w = _power(lambda x: c * x - G @ x, n, rng)
    lower = c - top
    ok &= np.linalg.norm(G @ w - lower * w) <= 1e-10 * scale * math.sqrt(n)
    if not ok:
        eig = np.linalg.eigvalsh(G)
        upper, lower = float(eig[-1]), float(eig[0])
    return float(upper), float(max(lower, 0.0))


def _threshold(x) -> float:
    x = np.asarray(x, dtype=float)
    return 1e-8 * (float(np.abs(x).max(initial=0.0)) + 1.0)


def _f_value(penalty, x, tau) -> float:
    return float(np.sum(penalty_value(penalty, x, tau)))


def _s2_value(penalty, gamma, x) -> float:
    if isinstance(penalty, PosCardCap):
        # no closed form; on the feasible set the envelope vanishes
        return 0.0 if _f_value(penalty, x, _threshold(x)) == 0 else math.nan
    return float(np.sum(envelope_value(penalty, gamma, x)))


def certify(penalty, gamma: float, x) -> tuple[bool, float]:
    """Check ``f(x) = S_gamma^2(f)(x)``.

    Entries (singular values for matrices) below
    ``tau = 1e-8 (||x||_inf + 1)`` count as zero.  For finite-valued
    penalties the gap is ``f - S^2`` and the certificate needs
    ``gap <= 1e-6 (1 + f)``.  For indicators the certificate needs
    feasibility and ``S^2 <= 1e-6``; the returned gap is then ``S^2``.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("x must be finite")
    tau = _threshold(x)
    fval = _f_value(penalty, x, tau)
    if isinstance(penalty, _INDICATORS):
        if not math.isfinite(fval):
            return False, math.inf
        s2 = _s2_value(penalty, gamma, x)
        return bool(s2 <= 1e-6), float(s2)
    if not math.isfinite(fval):
        return False, math.inf
    gap = fval - _s2_value(penalty, gamma, x)
    assert gap >= -1e-10 * (1.0 + fval), f"envelope above the penalty by {-gap}"
    gap = max(gap, 0.0)
    return bool(gap <= 1e-6 * (1.0 + fval)), float(gap)


def _data_term(prob: LeastSquaresProblem, x) -> float:
    r = prob.apply(x) - prob.d
    if prob.weight is not None:
        return 0.5 * float(np.sum(prob.weight.matrix * r * r))
    return 0.5 * float(np.sum(r * r))


def objective(prob: LeastSquaresProblem, x, zero_tol: float | None = None) -> float:
    """``J(x) = f(x) + data term``; ``+inf`` off the penalty's domain.

    The prior is not included; solvers report its residual separately.
    """
    tau = _threshold(x) if zero_tol is None else zero_tol
    return _f_value(prob.penalty, x, tau) + _data_term(prob, x)


def surrogate_objective(prob: LeastSquaresProblem, gamma: float, x) -> float:
    """``J_gamma(x) = S_gamma^2(f)(x) + data term``."""
    return _s2_value(prob.penalty, gamma, x) + _data_term(prob, x)


def _resolve_regime(prob, cfg, upper, lower):
    gamma = prob.gamma
    slack = 1e-9 * max(upper, 1.0)
    cm = gamma is not None and gamma <= lower + slack
    mp = gamma is not None and gamma >= upper - slack
    if cfg.regime is Regime.AUTO:
        if gamma is None:
            if upper == 0.0:
                raise RegimeError("gamma must be given when A = 0")
            return Regime.MINIMIZER_PRESERVING, 1.001 * upper
        if mp:
            return Regime.MINIMIZER_PRESERVING, gamma
        if cm:
            return Regime.CONVEX_MINORANT, gamma
        raise RegimeError(
            f"gamma={gamma} lies strictly between sigma_min(A^T A)={lower} and ||A||^2={upper}")
    if gamma is None:
        if cfg.regime is Regime.MINIMIZER_PRESERVING and upper > 0:
            return cfg.regime, 1.001 * upper
        raise RegimeError(f"gamma must be given for regime {cfg.regime.value}")
    if cfg.regime is Regime.CONVEX_MINORANT and not cm:
        raise RegimeError(f"convex minorant regime needs gamma <= {lower}, got {gamma}")
    if cfg.regime is Regime.MINIMIZER_PRESERVING and not mp:
        raise RegimeError(f"minimizer preserving regime needs gamma >= {upper}, got {gamma}")
    return cfg.regime, gamma


def _starting_point(prob, cfg, regime, upper):
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float).reshape(prob.shape)
    elif regime is Regime.MINIMIZER_PRESERVING and upper > 0:
        x0 = prob.adjoint(prob.d).reshape(prob.shape) / upper
    else:
        x0 = np.zeros(prob.shape)
    if cfg.random_init:
        x0 = x0 + np.random.default_rng(cfg.seed).standard_normal(prob.shape)
    return x0.astype(float)


def _finish(prob, x, gamma, **kw) -> SolverReport:
    ok, gap = certify(prob.penalty, gamma, x)
    jg = surrogate_objective(prob, gamma, x)
    j = objective(prob, x)
    # a certificate must also make the two objectives agree
    if ok and not (math.isfinite(j) and abs(j - jg) <= 1e-8 * max(1.0, abs(j))):
        ok = False
    out = np.asarray(x, dtype=float)
    return SolverReport(x=out if out.ndim else np.asarray(float(out)), objective_gamma=jg,
                        objective=j, certified=ok, gap=gap, gamma=gamma, **kw)


def solve_fbs(prob: LeastSquaresProblem, cfg: SolverConfig | None = None) -> SolverReport:
    """Forward-backward splitting on ``J_gamma``.

    ``x+ = prox_s2(rho; x - A^T (A x - d) / rho)`` with
    ``rho = 1.001 max(||A||^2, gamma)``, stopping when
    ``||x+ - x|| <= tol (1 + ||x||)``.  The log holds
    ``(iteration, J_gamma, step norm)`` rows.
    """
    cfg = cfg or SolverConfig()
    if prob.prior is not None:
        raise DomainError("solve_fbs does not handle priors; use solve_admm")
    upper, lower = operator_norms(prob.A, cfg.seed)
    regime, gamma = _resolve_regime(prob, cfg, upper, lower)
    rho = cfg.rho if cfg.rho is not None else 1.001 * max(upper, gamma)
    if not (rho > gamma and rho >= upper):
        raise DomainError(f"rho={rho} must exceed gamma={gamma} and ||A||^2={upper}")
    x = _starting_point(prob, cfg, regime, upper)
    log = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = prob.adjoint(prob.apply(x) - prob.d).reshape(prob.shape)
        y = x - grad / rho
        x_new = np.asarray(prox_s2(ProxRequest(prob.penalty, gamma, rho, y)), dtype=float)
        step = float(np.linalg.norm(x_new - x))
        if cfg.record:
            log.append((it, surrogate_objective(prob, gamma, x_new), step))
        done = step <= cfg.tol * (1.0 + float(np.linalg.norm(x)))
        x = x_new
        if done:
            converged = True
            break
    return _finish(prob, x, gamma, converged=converged, iterations=it, regime=regime.value,
                   norm_upper=upper, norm_lower=lower, seed=cfg.seed, method="fbs",
                   degenerate=upper == 0.0, log=tuple(log))


class _Flat:
    """Maps a (possibly weighted) Hankel problem onto flat Frobenius space."""

    def __init__(self, prob: LeastSquaresProblem):
        n = prob.d.shape[0]
        w = prob.weight or DirectTensorWeight.unit(n, n)
        self.w = w
        self.sv, self.su = np.sqrt(w.v), np.sqrt(w.u)
        idx = np.arange(n)
        self.anti = idx[:, None] + idx[None, :]
        self.mass = np.bincount(self.anti.ravel(), weights=w.matrix.ravel(), minlength=2 * n - 1)

    def to_flat(self, X):
        return conjugate_to_flat(self.w, X)

    def from_flat(self, Y):
        return Y / self.sv[:, None] / self.su[None, :]

    def project(self, Y):
        """Flat-space projection onto the conjugated Hankel subspace."""
        X = self.from_flat(Y)
        wx = self.w.matrix * X
        sig = np.bincount(self.anti.ravel(), weights=wx.ravel(), minlength=self.mass.size)
        return self.to_flat((sig / self.mass)[self.anti])


def _check_penalty_matrix(prob):
    if not isinstance(prob.penalty, (ScaledRank, RankCap)):
        raise DomainError("Hankel solvers need a ScaledRank or RankCap penalty")


def solve_admm(prob: LeastSquaresProblem, cfg: SolverConfig | None = None) -> SolverReport:
    """ADMM for ``S_gamma^2(f)(x) + data term + prior`` with ``A = I``.

    Splitting ``x = z``: the x-update folds the data term and the
    augmentation into one prox of the envelope, the z-update projects onto
    the prior and ``u`` is the scaled dual.  Stops when the primal residual
    ``||x - z||`` and the dual residual ``rho ||z - z_prev||`` are both at
    most ``admm_tol (1 + ||d||)``.  Returns ``x`` and its prior residual.
    ``gamma`` defaults to 1, where ``J_gamma`` is the convex envelope of the
    unconstrained ``J``.
    """
    cfg = cfg or SolverConfig()
    if prob.prior != "hankel":
        raise DomainError("solve_admm needs a prior")
    _check_penalty_matrix(prob)
    gamma = 1.0 if prob.gamma is None else prob.gamma
    rho = 1.0 if cfg.rho is None else cfg.rho
    flat = _Flat(prob)
    D = flat.to_flat(prob.d)
    scale = 1.0 + float(np.linalg.norm(D))
    x = flat.to_flat(np.asarray(cfg.x0, dtype=float)) if cfg.x0 is not None else D.copy()
    z = flat.project(x)
    u = np.zeros_like(x)
    log = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        x = prox_s2_with_quadratic(prob.penalty, gamma, rho, z - u, D, 1.0)
        z_prev = z
        z = flat.project(x + u)
        u = u + x - z
        primal = float(np.linalg.norm(x - z))
        dual = rho * float(np.linalg.norm(z - z_prev))
        if cfg.record:
            obj = _s2_value(prob.penalty, gamma, x) + 0.5 * float(np.sum((x - D) ** 2))
            log.append((it, obj, max(primal, dual)))
        if primal <= cfg.admm_tol * scale and dual <= cfg.admm_tol * scale:
            converged = True
            break
    X = flat.from_flat(x)
    feas = float(np.linalg.norm(x - flat.project(x)))
    # envelope values are taken in flat coordinates, where ranks agree
    ok, gap = certify(prob.penalty, gamma, x)
    jg = _s2_value(prob.penalty, gamma, x) + _data_term(prob, X)
    j = _f_value(prob.penalty, x, _threshold(x)) + _data_term(prob, X)
    if ok and not (math.isfinite(j) and abs(j - jg) <= 1e-8 * max(1.0, abs(j))):
        ok = False
    return SolverReport(x=X, objective_gamma=jg, objective=j, certified=ok, gap=gap,
                        converged=converged, iterations=it, regime="admm", gamma=gamma,
                        norm_upper=1.0, norm_lower=1.0, seed=cfg.seed, method="admm",
                        feasibility=feas, log=tuple(log), anchor=flat.from_flat(z - u))


def solve_cadzow(prob: LeastSquaresProblem, cfg: SolverConfig | None = None) -> SolverReport:
    """Alternate rank-``M`` truncation and Hankel projection from ``X0 = H_d``.

    Stops when ``||X+ - X|| <= tol (1 + ||X||)``.  The certificate requires
    ``rank(X) <= M`` at threshold ``tau`` and a Hankel residual within
    ``tol (1 + ||X||)``.  ``objective`` is ``J`` (``+inf`` if the rank
    constraint fails); ``objective_gamma`` is the plain data term.
    """
    cfg = cfg or SolverConfig()
    if prob.prior != "hankel" or not isinstance(prob.penalty, RankCap):
        raise DomainError("solve_cadzow needs a Hankel prior and a RankCap penalty")
    n = prob.d.shape[0]
    M = prob.penalty.M
    if not 1 <= M <= n:
        raise DomainError(f"M={M} out of range for {n}x{n} matrices")
    flat = _Flat(prob)
    Y = flat.project(flat.to_flat(prob.d)) if cfg.x0 is None else \
        flat.to_flat(np.asarray(cfg.x0, dtype=float))
    log = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        U, s, Vt = np.linalg.svd(Y)
        Y_new = flat.project((U[:, :M] * s[:M]) @ Vt[:M])
        step = float(np.linalg.norm(Y_new - Y))
        if cfg.record:
            log.append((it, _data_term(prob, flat.from_flat(Y_new)), step))
        done = step <= cfg.tol * (1.0 + float(np.linalg.norm(Y)))
        Y = Y_new
        if done:
            converged = True
            break
    X = flat.from_flat(Y)
    feas = float(np.linalg.norm(Y - flat.project(Y)))
    tau = _threshold(Y)
    rank_ok = math.isfinite(_f_value(prob.penalty, Y, tau))
    ok = rank_ok and feas <= cfg.tol * (1.0 + float(np.linalg.norm(Y)))
    data = _data_term(prob, X)
    gamma = 1.0 if prob.gamma is None else prob.gamma
    return SolverReport(x=X, objective_gamma=data, objective=data if rank_ok else math.inf,
                        certified=bool(ok), gap=0.0 if rank_ok else math.inf,
                        converged=converged, iterations=it, regime="cadzow", gamma=gamma,
                        norm_upper=1.0, norm_lower=1.0, seed=cfg.seed, method="cadzow",
                        feasibility=feas, log=tuple(log))

