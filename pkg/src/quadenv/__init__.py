"""Quadratic envelopes (S-gamma transforms) of cardinality and rank penalties."""

from .lifting import (
    L0,
    CardCap,
    PosCardCap,
    PosRank,
    RankCap,
    ScaledRank,
    envelope_value,
    penalty_value,
    s1_matrix,
    s1_vector,
    s2_matrix,
    s2_vector,
)
from .penalty_core import (
    DomainError,
    EnvelopeParams,
    PosCard,
    ScaledCard,
    s1_scalar,
    s2_scalar,
    scalar_value,
)
from .prox import ProxRequest, prox_s1_scaled, prox_s2, prox_s2_with_quadratic
from .solvers import (
    LeastSquaresProblem,
    Regime,
    RegimeError,
    SolverConfig,
    SolverReport,
    certify,
    operator_norms,
    solve_admm,
    solve_cadzow,
    solve_fbs,
)

__version__ = "0.1.0"
