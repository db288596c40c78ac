"""Integration, linearisation and stability of the invader-driven replicator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from . import _kernels
from .core import (
    EXTINCTION_CUTOFF,
    SIMPLEX_TOL,
    STABILITY_TOL,
    EquilibriumResult,
    SimplexState,
    state_array,
    trait_array,
    validate_simplex,
)
from .errors import IntegrationError, NumericalError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepControl:
    """Fixed-step RK4 settings.

    ``theta`` rescales time only; trajectories trace the same orbit.
    """

    h: float = 0.01
    t_max: float = 1e4
    conv_tol: float = 1e-10
    conv_window: int = 10
    record_every: int = 1
    theta: float = 1.0
    simplex_tol: float = SIMPLEX_TOL
    boundary_allowed: bool = False

    def __post_init__(self):
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValidationError(f"step size must be positive, got {self.h}")
        if not self.t_max >= 0:
            raise ValidationError(f"t_max must be non-negative, got {self.t_max}")
        if self.conv_window < 1 or self.record_every < 1:
            raise ValidationError("conv_window and record_every must be >= 1")
        if not self.theta > 0:
            raise ValidationError("theta must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.h))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    q_series: np.ndarray
    terminated_by: str
    lambdas: np.ndarray = field(repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, i: int) -> SimplexState:
        return SimplexState(self.states[i], float(self.times[i]))

    def survivors(self, cutoff: float = EXTINCTION_CUTOFF) -> np.ndarray:
        return np.flatnonzero(self.final > cutoff)


@dataclass
class StabilityReport:
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvalue_real_parts: np.ndarray
    verdict: str


def rhs(z, lambdas, theta: float = 1.0) -> np.ndarray:
    """Vector field ``dz_i = z_i (lambda_i (1 - z_i) - Q(z))``."""
    zz = state_array(z)
    lam = trait_array(lambdas)
    if zz.shape != lam.shape:
        raise ValidationError(f"state has {zz.size} entries but there are {lam.size} traits")
    f = lam * (1.0 - zz)
    q = np.dot(f, zz)
    return theta * zz * (f - q)


def jacobian_at(z, lambdas) -> np.ndarray:
    """Analytic Jacobian of :func:`rhs` (theta = 1)."""
    zz = state_array(z)
    lam = trait_array(lambdas)
    if zz.shape != lam.shape:
        raise ValidationError("state and trait dimensions differ")
    q = float(np.sum(lam * (1.0 - zz) * zz))
    J = -np.outer(zz, lam * (1.0 - 2.0 * zz))
    np.fill_diagonal(J, lam * (1.0 - zz) - q - 2.0 * lam * zz * (1.0 - zz))
    return J


def lyapunov_potential(z, lambdas) -> float:
    """Potential ``sum_i lambda_i z_i - lambda_i z_i^2 / 2``; non-decreasing along orbits."""
    zz = state_array(z)
    lam = trait_array(lambdas)
    return float(np.sum(lam * zz - 0.5 * lam * zz * zz))


def _prepare_start(z0, n: int, control: StepControl) -> np.ndarray:
    if isinstance(z0, str):
        if z0 != "uniform":
            raise ValidationError(f"unknown initial condition {z0!r}")
        return np.full(n, 1.0 / n)
    z = validate_simplex(state_array(z0), control.simplex_tol).z.copy()
    if z.size != n:
        raise ValidationError(f"initial state has {z.size} entries but there are {n} traits")
    if not control.boundary_allowed and n > 1 and np.any(z <= 0.0):
        raise ValidationError("initial state must be strictly interior (set boundary_allowed)")
    return z


def integrate(z0, lambdas, control: StepControl | None = None, **overrides) -> Trajectory:
    """Fixed-step RK4 with per-step renormalisation onto the simplex.

    Stops at ``t_max`` or once ``max|dz| < conv_tol`` holds for
    ``conv_window`` consecutive steps. States are recorded every
    ``record_every`` steps plus the terminal state.
    """
    control = control or StepControl()
    if overrides:
        control = StepControl(**{**control.__dict__, **overrides})
    lam = np.ascontiguousarray(trait_array(lambdas), dtype=float)
    z = _prepare_start(z0, lam.size, control)
    total = control.n_steps
    every = control.record_every
    blocks = [z.copy()[None, :]]
    steps = [np.zeros(1, dtype=np.int64)]
    done = 0
    calm = 0
    status = _kernels.STATUS_RUNNING
    while done < total and status == _kernels.STATUS_RUNNING:
        cap = int(min(4096, -(-(total - done) // every)))
        buf = np.empty((cap, lam.size))
        taken, rec, calm, status = _kernels.rk4_record(
            z, lam, control.theta, control.h, total - done, every, control.conv_tol,
            control.conv_window, calm, control.simplex_tol, buf,
        )
        if status == _kernels.STATUS_ERROR:
            raise IntegrationError(
                f"state left the simplex near tau={(done + taken) * control.h:.6g}: z={z.tolist()}"
            )
        # recorded rows sit at multiples of `every`; the last may be a partial chunk
        at = done + every * np.arange(1, rec + 1, dtype=np.int64)
        if rec:
            at[-1] = done + taken
        blocks.append(buf[:rec])
        steps.append(at)
        done += taken
    S = np.concatenate(blocks)
    times = np.concatenate(steps) * control.h
    terminated = "converged" if status == _kernels.STATUS_CONVERGED else "t_max"
    q = np.sum(lam * (1.0 - S) * S, axis=1)
    return Trajectory(times, S, q, terminated, lam)


def integrate_final(z0, lambdas, control: StepControl | None = None, **overrides):
    """Like :func:`integrate` but keep only the terminal state.

    Returns ``(z_final, tau_final, terminated_by)``.
    """
    control = control or StepControl()
    if overrides:
        control = StepControl(**{**control.__dict__, **overrides})
    lam = np.ascontiguousarray(trait_array(lambdas), dtype=float)
    z = _prepare_start(z0, lam.size, control)
    taken, _, status = _kernels.rk4_advance(
        z, lam, control.theta, control.h, control.n_steps, control.conv_tol,
        control.conv_window, 0, control.simplex_tol,
    )
    if status == _kernels.STATUS_ERROR:
        raise IntegrationError(f"state left the simplex near tau={taken * control.h:.6g}")
    terminated = "converged" if status == _kernels.STATUS_CONVERGED else "t_max"
    return z, taken * control.h, terminated


def integrate_ensemble(starts, traits, control: StepControl | None = None) -> np.ndarray:
    """Terminal states for a batch of independent replicates (row-aligned)."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    traits = np.atleast_2d(np.asarray(traits, dtype=float))
    if starts.shape != traits.shape:
        raise ValidationError("starts and traits must have the same shape")
    out = np.empty_like(starts)
    for r in range(starts.shape[0]):
        out[r] = integrate_final(starts[r], traits[r], control)[0]
    return out


def _tangent_eigenvalues(block: np.ndarray) -> np.ndarray:
    k = block.shape[0]
    if k <= 1:
        return np.empty(0, dtype=complex)
    V = null_space(np.ones((1, k)))
    try:
        return np.linalg.eigvals(V.T @ block @ V)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc


def verdict_from_real_parts(re: np.ndarray, tol: float = STABILITY_TOL) -> str:
    re = np.asarray(re, dtype=float)
    if re.size == 0:
        return "stable"
    if np.any(re > tol):
        return "unstable"
    if np.any(np.abs(re) <= tol):
        return "marginal"
    return "stable"


def classify_stability(eq: EquilibriumResult, lambdas=None, tol: float = STABILITY_TOL) -> StabilityReport:
    """Linear stability restricted to the simplex tangent space.

    Rows of non-support species are zero except for the diagonal, so their
    eigenvalues are ``lambda_i - Q*`` exactly. The support block is reduced
    to the hyperplane ``sum v = 0`` (removing the transverse eigenvalue
    ``-Q*``) and solved numerically.
    """
    lam = trait_array(eq.lambdas if lambdas is None else lambdas)
    z = np.asarray(eq.z_star, dtype=float)
    J = jacobian_at(z, lam)
    sup = eq.support_index
    mask = np.zeros(lam.size, dtype=bool)
    mask[sup] = True
    interior = _tangent_eigenvalues(J[np.ix_(sup, sup)])
    excluded = lam[~mask] - eq.q_star
    eig = np.concatenate([interior.astype(complex), excluded.astype(complex)])
    re = eig.real
    return StabilityReport(J, eig, re, verdict_from_real_parts(re, tol))
