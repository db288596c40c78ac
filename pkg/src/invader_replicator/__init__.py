"""Invader-driven replicator dynamics: equilibria, stability, coexistence
probabilities, invasion outcomes, negative-trait multistability, model
transforms and multi-site frequency tests."""

from .core import (
    EXTINCTION_CUTOFF,
    NUMERIC_TOL,
    SIMPLEX_TOL,
    STABILITY_TOL,
    EquilibriumResult,
    FitnessVector,
    InvasionMatrix,
    SimplexState,
    build_invader_driven,
    mean_fitness,
    validate_simplex,
)
from .dynamics import (
    StabilityReport,
    StepControl,
    Trajectory,
    classify_stability,
    integrate,
    jacobian_at,
    lyapunov_potential,
    rhs,
)
from .equilibrium import (
    CandidateEquilibrium,
    enumerate_candidates,
    positive_filter,
    q_star,
    select_support,
)
from .errors import (
    DegenerateThresholdError,
    IntegrationError,
    NumericalError,
    PreconditionError,
    ReplicatorError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "EXTINCTION_CUTOFF", "NUMERIC_TOL", "SIMPLEX_TOL", "STABILITY_TOL",
    "EquilibriumResult", "FitnessVector", "InvasionMatrix", "SimplexState",
    "build_invader_driven", "mean_fitness", "validate_simplex",
    "StabilityReport", "StepControl", "Trajectory", "classify_stability", "integrate",
    "jacobian_at", "lyapunov_potential", "rhs",
    "CandidateEquilibrium", "enumerate_candidates", "positive_filter", "q_star", "select_support",
    "DegenerateThresholdError", "IntegrationError", "NumericalError", "PreconditionError",
    "ReplicatorError", "ValidationError",
]
