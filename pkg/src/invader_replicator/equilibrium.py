"""Stable support selection by the threshold rule and candidate enumeration."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    NUMERIC_TOL,
    STABILITY_TOL,
    EquilibriumResult,
    FitnessVector,
    as_fitness_vector,
    equilibrium_from_support,
)
from .errors import DegenerateThresholdError, PreconditionError, ValidationError

log = logging.getLogger(__name__)

ENUMERATION_GUARD = 20


@dataclass(frozen=True)
class CandidateEquilibrium:
    """Equilibrium supported on ``subset``; ``stable`` is only True when feasible."""

    subset: tuple
    q_value: float
    feasible: bool
    stable: bool
    bitmask: int = 0
    verdict: str = ""

    @property
    def k(self) -> int:
        return len(self.subset)


def positive_filter(lambdas) -> tuple[set, set]:
    """Split species ids by trait sign; zero goes with the non-negative group."""
    fv = as_fitness_vector(lambdas)
    plus = {sid for sid, v in zip(fv.ids, fv.values) if v >= 0.0}
    minus = {sid for sid, v in zip(fv.ids, fv.values) if v < 0.0}
    return plus, minus


def q_star(lambdas, subset: Iterable) -> float:
    """``(|S| - 1) / sum_{i in S} 1/lambda_i``, zero for singletons.

    ``subset`` holds species ids of ``lambdas``.
    """
    fv = as_fitness_vector(lambdas)
    rank = fv.rank_of
    ids = list(subset)
    if not ids:
        raise ValidationError("subset must be nonempty")
    try:
        idx = [rank[i] for i in ids]
    except KeyError as exc:
        raise ValidationError(f"unknown species id {exc.args[0]!r}") from None
    if len(set(idx)) != len(idx):
        raise ValidationError("subset contains duplicate ids")
    if len(idx) == 1:
        return 0.0
    lam = fv.values[idx]
    if np.any(lam == 0.0):
        raise PreconditionError("zero trait inside a multi-species subset")
    return float((len(idx) - 1) / np.sum(1.0 / lam))


def prefix_thresholds(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``Q*_k`` and ``D_k = Q*_k - lambda_{k+1}`` for k = 1..N (sorted input)."""
    lam = np.asarray(values, dtype=float)
    n = lam.size
    k = np.arange(1, n + 1)
    q = (k - 1) / np.cumsum(1.0 / lam)
    nxt = np.append(lam[1:], 0.0)
    return q, q - nxt


def select_support(lambdas, tol: float = NUMERIC_TOL) -> EquilibriumResult:
    """Unique stable equilibrium of a strictly positive pool.

    Scans prefixes of the descending order and returns the first ``k`` with
    ``Q*_k > lambda_{k+1}`` (with ``lambda_{N+1} = 0``). Once positive, the
    gap stays positive, so the first crossing is the only one.

    Raises
    ------
    PreconditionError
        If fewer than two species are given or any trait is not positive.
    DegenerateThresholdError
        If some ``|Q*_k - lambda_{k+1}| <= tol`` up to the selected prefix.
    """
    fv = as_fitness_vector(lambdas)
    lam = np.asarray(fv.values)
    if lam.size < 2:
        raise PreconditionError("need at least two species")
    if np.any(lam <= 0.0):
        raise PreconditionError("all traits must be strictly positive")
    q, d = prefix_thresholds(lam)
    for k in range(1, lam.size + 1):
        if abs(d[k - 1]) <= tol:
            nxt = lam[k] if k < lam.size else 0.0
            raise DegenerateThresholdError(
                f"Q*_{k} = {q[k - 1]:.17g} coincides with lambda_{k + 1} = {nxt:.17g}"
            )
        if d[k - 1] > 0.0:
            return equilibrium_from_support(fv, range(k), "stable")
    raise AssertionError("threshold scan did not terminate")  # unreachable for N >= 2


def support_sizes(pools: np.ndarray, tol: float = NUMERIC_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised threshold rule over the rows of ``pools``.

    Returns ``(k, degenerate)``; rows need not be sorted.
    """
    lam = -np.sort(-np.atleast_2d(np.asarray(pools, dtype=float)), axis=1)
    if np.any(lam <= 0.0):
        raise PreconditionError("all traits must be strictly positive")
    r, n = lam.shape
    kk = np.arange(1, n + 1)
    q = (kk - 1) / np.cumsum(1.0 / lam, axis=1)
    nxt = np.concatenate([lam[:, 1:], np.zeros((r, 1))], axis=1)
    d = q - nxt
    pos = d > 0.0
    k = np.argmax(pos, axis=1) + 1
    scanned = kk[None, :] <= k[:, None]
    degenerate = np.any((np.abs(d) <= tol) & scanned, axis=1)
    return k, degenerate


def _subset_masks(n: int, fast: bool) -> list[int]:
    if fast:
        masks = {(1 << k) - 1 for k in range(1, n + 1)}
        masks.update(1 << i for i in range(n))
        return sorted(masks)
    return list(range(1, 1 << n))


def _classify_candidate(fv: FitnessVector, mask: int, stability_tol: float) -> CandidateEquilibrium:
    from .dynamics import classify_stability

    lam = np.asarray(fv.values)
    idx = [i for i in range(lam.size) if mask >> i & 1]
    subset = tuple(fv.ids[i] for i in idx)
    if len(idx) == 1:
        q = 0.0
        feasible = True
    elif np.any(lam[idx] == 0.0):
        return CandidateEquilibrium(subset, float("nan"), False, False, mask, "undefined")
    else:
        q = (len(idx) - 1) / float(np.sum(1.0 / lam[idx]))
        feasible = bool(np.all(lam[idx] > q))
    if not feasible:
        return CandidateEquilibrium(subset, q, False, False, mask, "infeasible")
    eq = equilibrium_from_support(fv, idx, "unknown")
    report = classify_stability(eq, tol=stability_tol)
    return CandidateEquilibrium(subset, q, True, report.verdict == "stable", mask, report.verdict)


def enumerate_candidates(
    lambdas,
    fast: bool = True,
    max_species: int = ENUMERATION_GUARD,
    stability_tol: float = STABILITY_TOL,
    jobs: int = 1,
) -> list[CandidateEquilibrium]:
    """All candidate equilibria with feasibility and linear stability.

    With ``fast=True`` only the top-k prefixes and the singletons are
    visited; stable supports are always prefixes so nothing stable is
    missed. Results are ordered by subset bitmask (bit ``r`` = rank ``r``).
    """
    fv = as_fitness_vector(lambdas)
    n = len(fv)
    if n < 1:
        raise ValidationError("need at least one species")
    if n > max_species:
        raise PreconditionError(
            f"enumeration over {n} species exceeds the guard of {max_species}; raise max_species explicitly"
        )
    masks = _subset_masks(n, fast)
    if jobs == 1 or len(masks) < 64:
        return [_classify_candidate(fv, m, stability_tol) for m in masks]
    from ._parallel import parallel_map

    return parallel_map(_classify_candidate, [(fv, m, stability_tol) for m in masks], jobs, star=True)


def coexistence_equilibrium(lambdas, tol: float = NUMERIC_TOL) -> EquilibriumResult:
    """Stable state of a pool that may contain zero or negative traits.

    Negative and zero traits are dropped (zeros with a warning) and the
    threshold rule is applied to the remaining positive species; the result
    is expressed over the full pool with zeros elsewhere. Requires the
    initial state to put mass on the positive group, which is the caller's
    responsibility.
    """
    fv = as_fitness_vector(lambdas)
    lam = np.asarray(fv.values)
    zeros = [sid for sid, v in zip(fv.ids, lam) if v == 0.0]
    if zeros:
        warnings.warn(f"zero-trait species {zeros} treated as never coexisting", stacklevel=2)
    pos = [i for i in range(lam.size) if lam[i] > 0.0]
    if not pos:
        raise PreconditionError("no strictly positive trait; use the negative-pool routines")
    if len(pos) == 1:
        eq = equilibrium_from_support(fv, pos, "stable")
    else:
        sub = select_support(fv.subset([fv.ids[i] for i in pos]), tol)
        eq = equilibrium_from_support(fv, [fv.rank_of[s] for s in sub.support], "stable")
    log.debug("positive group %s, support %s", [fv.ids[i] for i in pos], eq.support)
    return eq
