"""All-negative trait pools: vertex multistability and basin predictions."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    EquilibriumResult,
    FitnessVector,
    as_fitness_vector,
    equilibrium_from_support,
    paired_state,
    state_array,
    trait_array,
    validate_simplex,
)
from .dynamics import StepControl, classify_stability, integrate_final
from .equilibrium import coexistence_equilibrium, enumerate_candidates
from .errors import PreconditionError, ValidationError

log = logging.getLogger(__name__)

WINNER_LEVEL = 1.0 - 1e-6
FULL_ENUMERATION_MAX = 12


@dataclass(frozen=True)
class BasinPrediction:
    """``winner`` is a species id, or None when no certificate applies."""

    winner: object
    certificate: str
    threshold_value: float | None = None


def _negative_traits(lambdas) -> np.ndarray:
    lam = trait_array(lambdas)
    if lam.size == 0:
        raise ValidationError("empty trait vector")
    if np.any(lam >= 0.0):
        raise PreconditionError("all traits must be strictly negative")
    return lam


def _ids(lambdas, n):
    return tuple(lambdas.ids) if isinstance(lambdas, FitnessVector) else tuple(range(1, n + 1))


def n2_basin_threshold(lambda1: float, lambda2: float) -> float:
    """Initial share ``z1 = lambda1 / (lambda1 + lambda2)`` separating the two vertex basins.

    Above it the orbit goes to species 1, below it to species 2, and the
    point itself is an interior fixed point.
    """
    l1, l2 = float(lambda1), float(lambda2)
    if not (0.0 > l1 > l2):
        raise PreconditionError(f"need 0 > lambda1 > lambda2, got {l1}, {l2}")
    return l1 / (l1 + l2)


def in_cone(z0, lambdas) -> bool:
    """``z_1 >= (lambda_1 / lambda_j) z_j`` for all j, species 1 the least negative."""
    lam = _negative_traits(lambdas)
    z = state_array(z0)
    if z.size != lam.size:
        raise ValidationError("state and trait dimensions differ")
    top = int(np.argmax(lam))
    return bool(np.all(z[top] >= lam[top] / lam * z))


def necessary_dominance(z0, lambdas, winner: int) -> bool:
    """Check ``z_j(0)/z_i(0) < lambda_j/lambda_i`` for every fitter j than ``i``.

    ``winner`` is a position in the arrays. A species that wins from ``z0``
    must pass this; failing it rules the species out.
    """
    lam = _negative_traits(lambdas)
    z = state_array(z0)
    i = int(winner)
    if z[i] <= 0.0:
        return False
    fitter = lam > lam[i]
    return bool(np.all(z[fitter] / z[i] < lam[fitter] / lam[i]))


def cone_certificate(z0, lambdas) -> BasinPrediction:
    """Sufficient condition for the least negative species to win."""
    lam = _negative_traits(lambdas)
    ids = _ids(lambdas, lam.size)
    if in_cone(z0, lam):
        return BasinPrediction(ids[int(np.argmax(lam))], "cone_condition")
    return BasinPrediction(None, "none")


def predict_winner(z0, lambdas) -> BasinPrediction:
    """Best available certificate for the winner from ``z0``.

    Two species use the sharp threshold. Otherwise the cone condition is
    tried; if it fails, species that violate the necessary dominance
    condition are ruled out and a unique remaining candidate is reported
    with certificate ``necessary_violation``.
    """
    lam = _negative_traits(lambdas)
    ids = _ids(lambdas, lam.size)
    z = validate_simplex(state_array(z0)).z
    if lam.size == 1:
        return BasinPrediction(ids[0], "none")
    if lam.size == 2 and lam[0] != lam[1]:
        a, b = (0, 1) if lam[0] > lam[1] else (1, 0)
        t = n2_basin_threshold(lam[a], lam[b])
        if z[a] > t:
            return BasinPrediction(ids[a], "n2_threshold", t)
        if z[a] < t:
            return BasinPrediction(ids[b], "n2_threshold", t)
        return BasinPrediction(None, "n2_threshold", t)
    cert = cone_certificate(z, lam)
    if cert.winner is not None:
        return BasinPrediction(ids[int(np.argmax(lam))], "cone_condition")
    alive = [i for i in range(lam.size) if z[i] > 0 and necessary_dominance(z, lam, i)]
    if len(alive) == 1:
        return BasinPrediction(ids[alive[0]], "necessary_violation")
    return BasinPrediction(None, "none")


def ode_winner(z0, lambdas, control: StepControl | None = None, level: float = WINNER_LEVEL):
    """Position of the species whose share exceeds ``level`` at the end, else None."""
    lam = trait_array(lambdas)
    control = control or StepControl(boundary_allowed=True)
    z, _, _ = integrate_final(z0, lam, control)
    top = int(np.argmax(z))
    return top if z[top] > level else None


def locate_n2_boundary(lambda1: float, lambda2: float, iterations: int = 60,
                       control: StepControl | None = None) -> float:
    """Bisect the initial share of species 1 where the ODE winner flips."""
    n2_basin_threshold(lambda1, lambda2)
    lam = np.array([lambda1, lambda2], dtype=float)
    control = control or StepControl(t_max=1e4)
    lo, hi = 0.0, 1.0  # species 2 wins at lo, species 1 at hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        w = ode_winner([mid, 1.0 - mid], lam, control)
        if w is None:
            return mid
        if w == 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def basin_grid(lambdas, resolution: int, control: StepControl | None = None) -> list[tuple]:
    """Winner for a grid of interior starts (N = 2 or 3).

    Rows are ``(z_1, ..., z_N, winner_id, predicted_id, certificate)`` with
    ``None`` for an undetermined winner.
    """
    lam = _negative_traits(lambdas)
    ids = _ids(lambdas, lam.size)
    n = lam.size
    m = int(resolution)
    if n not in (2, 3):
        raise PreconditionError("basin grids are limited to N = 2 or 3")
    if m < 2:
        raise ValidationError("resolution must be >= 2")
    starts = []
    if n == 2:
        for i in range(1, m):
            starts.append(np.array([i / m, 1 - i / m]))
    else:
        for i in range(1, m):
            for j in range(1, m - i):
                starts.append(np.array([i, j, m - i - j], dtype=float) / m)
    rows = []
    for z0 in starts:
        w = ode_winner(z0, lam, control)
        p = predict_winner(z0, lambdas)
        rows.append((*z0.tolist(), None if w is None else ids[w], p.winner, p.certificate))
    return rows


def negative_stability_audit(lambdas, tol: float | None = None) -> dict:
    """Linear stability of every vertex and of every feasible multi-species candidate.

    Expected for all-negative traits: each vertex is stable and each interior
    candidate is unstable. ``symmetric_witness`` records ``1' S 1`` for the
    symmetric part ``S`` of the support Jacobian block, which equals
    ``-k Q*`` and is positive.
    """
    lam = _negative_traits(lambdas)
    fv = lambdas if isinstance(lambdas, FitnessVector) else FitnessVector.from_values(lam)
    kw = {} if tol is None else {"tol": tol}
    vertices = []
    for r in range(len(fv)):
        eq = equilibrium_from_support(fv, [r], "unknown")
        rep = classify_stability(eq, **kw)
        vertices.append({"species": fv.ids[r], "verdict": rep.verdict,
                         "max_real_part": float(rep.eigenvalue_real_parts.max()) if rep.eigenvalue_real_parts.size else None})
    candidates = []
    if len(fv) >= 2:
        full = len(fv) <= FULL_ENUMERATION_MAX
        for c in enumerate_candidates(fv, fast=not full, **({} if tol is None else {"stability_tol": tol})):
            if c.k < 2:
                continue
            rec = {"subset": list(c.subset), "q": c.q_value, "feasible": c.feasible, "verdict": c.verdict}
            if c.feasible:
                rank = fv.rank_of
                eq = equilibrium_from_support(fv, [rank[s] for s in c.subset], "unknown")
                idx = eq.support_index
                J = classify_stability(eq, **kw).jacobian[np.ix_(idx, idx)]
                S = 0.5 * (J + J.T)
                rec["symmetric_witness"] = float(S.sum())
            candidates.append(rec)
    all_v = all(v["verdict"] == "stable" for v in vertices)
    feas = [c for c in candidates if c["feasible"]]
    all_c = all(c["verdict"] == "unstable" for c in feas)
    return {"vertices": vertices, "candidates": candidates, "all_vertices_stable": all_v,
            "all_interior_unstable": all_c, "ok": all_v and all_c}


def route_pool(z0, lambdas) -> tuple[str, object]:
    """Pick the positive-group solver or the negative-pool path.

    Returns ``("positive", EquilibriumResult)`` when the strictly positive
    species carry initial mass and ``("negative", BasinPrediction)`` otherwise.
    """
    fv, z = paired_state(z0, lambdas)
    lam = np.asarray(fv.values)
    pos = lam > 0
    if pos.any() and z[pos].sum() > 0:
        return "positive", coexistence_equilibrium(fv)
    neg = (lam < 0) & (z > 0)
    if not neg.any():
        raise PreconditionError("no species with initial mass has a nonzero trait")
    keep = np.flatnonzero(lam < 0)
    sub = fv.subset([fv.ids[i] for i in keep])
    zz = z[keep] / z[keep].sum()
    return "negative", predict_winner(zz, sub)


def vertex_equilibrium(lambdas, species) -> EquilibriumResult:
    fv = as_fitness_vector(lambdas)
    return equilibrium_from_support(fv, [fv.rank_of[species]], "stable")
