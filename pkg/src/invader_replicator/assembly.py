"""Invasion outcomes against a resident equilibrium and sequential assembly."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ._rng import make_rng, open_uniform
from .core import (
    NUMERIC_TOL,
    EquilibriumResult,
    FitnessVector,
    as_fitness_vector,
    equilibrium_from_support,
)
from .dynamics import integrate
from .equilibrium import select_support
from .errors import (
    DegenerateThresholdError,
    NumericalError,
    PreconditionError,
    ValidationError,
)

log = logging.getLogger(__name__)

KINDS = (
    "rejection",
    "augmentation_less_fit",
    "augmentation_fitter",
    "replacement_invader_least_fit",
    "replacement_resident_least_fit",
)


@dataclass(frozen=True)
class InvasionOutcome:
    kind: str
    removed: tuple
    new_equilibrium: EquilibriumResult
    thresholds: dict
    invader_id: object = None
    depth: int | None = None  # k' for replacements

    def to_dict(self) -> dict:
        from .core import _jsonable_id

        return {
            "kind": self.kind,
            "invader_id": _jsonable_id(self.invader_id),
            "removed": [_jsonable_id(i) for i in self.removed],
            "depth": self.depth,
            "thresholds": _json_thresholds(self.thresholds),
            "new_equilibrium": self.new_equilibrium.to_dict(),
        }


def _json_thresholds(th: dict) -> dict:
    def conv(v):
        if isinstance(v, dict):
            return {str(a): conv(b) for a, b in v.items()}
        if isinstance(v, (list, tuple)):
            return [conv(b) for b in v]
        if isinstance(v, (bool, np.bool_)):
            return bool(v)
        if isinstance(v, (float, np.floating)):
            return float(v) if math.isfinite(v) else None
        return v
    return conv(th)


def _inv(d: float) -> float:
    return 1.0 / d if d > 0.0 else math.inf


def _resident_support(residents: EquilibriumResult) -> np.ndarray:
    lam = np.asarray(residents.lambdas)
    idx = residents.support_index
    if idx.size == 0:
        raise ValidationError("residents have an empty support")
    if not np.array_equal(np.sort(idx), np.arange(idx.size)):
        raise PreconditionError("resident support is not a prefix of the fitness order")
    sup = lam[np.sort(idx)]
    if np.any(sup <= 0.0):
        raise PreconditionError("resident traits must be positive")
    k = sup.size
    q = 0.0 if k == 1 else (k - 1) / float(np.sum(1.0 / sup))
    if abs(q - residents.q_star) > NUMERIC_TOL * max(1.0, abs(q)):
        raise PreconditionError("residents are not at the equilibrium of their support")
    if np.any(lam[k:] >= q):
        raise PreconditionError("residents are not the stable state of their pool")
    return sup


def invasion_thresholds(support_lambdas) -> dict:
    """Interval end points for a resident support sorted descending.

    Keys: ``q_star_k``, ``lambda_k``, ``U_k`` and a ``depths`` list with,
    per replacement depth k' = k-1..1, ``V`` (lower end of the invader-least-fit
    window), ``W = max(lambda_k', V)``, ``U`` (upper end of the
    resident-least-fit window) and ``window_exists``.
    """
    lam = np.asarray(support_lambdas, dtype=float)
    k = lam.size
    S = np.cumsum(1.0 / lam)
    qk = 0.0 if k == 1 else (k - 1) / S[-1]
    out = {"k": k, "q_star_k": qk, "lambda_k": float(lam[-1]), "U_k": _inv(k / lam[-1] - S[-1]), "depths": []}
    for kp in range(k - 1, 0, -1):
        V = _inv(kp / lam[kp] - S[kp - 1])
        U = _inv(kp / lam[kp - 1] - S[kp - 1])
        lk = float(lam[kp - 1])
        # feasibility inequality written out directly; algebraically V < lambda_k'
        stated = kp / lam[kp] > S[kp - 1] + 1.0 / lam[kp - 1]
        out["depths"].append({
            "k_prime": kp, "V": V, "W": max(lk, V), "U": U, "lambda_k_prime": lk,
            "window_exists": bool(V < lk), "window_inequality": bool(stated),
        })
        if bool(V < lk) != bool(stated):
            log.info("depth %d: window predicate and feasibility inequality disagree", kp)
    return out


def _intervals(th: dict):
    """All (kind, depth, lo, hi) intervals, ordered by increasing lower end."""
    ivs = [
        ("rejection", None, 0.0, th["q_star_k"]),
        ("augmentation_less_fit", None, th["q_star_k"], th["lambda_k"]),
        ("augmentation_fitter", None, th["lambda_k"], th["U_k"]),
    ]
    for d in th["depths"]:
        ivs.append(("replacement_invader_least_fit", d["k_prime"], d["V"], d["lambda_k_prime"]))
        ivs.append(("replacement_resident_least_fit", d["k_prime"], d["W"], d["U"]))
    return ivs


def matching_intervals(th: dict, x: float) -> list:
    return [(kind, kp) for kind, kp, lo, hi in _intervals(th) if lo < x < hi]


def classify_invader(
    residents: EquilibriumResult,
    lambda_new: float,
    lambdas: FitnessVector | None = None,
    invader_id=None,
    tol: float = NUMERIC_TOL,
    cross_check: bool = False,
) -> InvasionOutcome:
    """Outcome of a rare invader with trait ``lambda_new``.

    Parameters
    ----------
    residents : EquilibriumResult
        Stable state of a positive pool. Its ``ids``/``lambdas`` define the
        pool unless ``lambdas`` is given.
    cross_check : bool
        Re-solve the pooled traits with :func:`select_support` and raise
        :class:`NumericalError` if the supports differ.
    """
    x = float(lambda_new)
    if not (x > 0.0 and math.isfinite(x)):
        raise PreconditionError("invader trait must be positive and finite")
    fv = residents.fitness_vector() if lambdas is None else as_fitness_vector(lambdas)
    if tuple(fv.ids) != tuple(residents.ids) or not np.allclose(fv.values, residents.lambdas):
        raise ValidationError("lambdas do not match the resident equilibrium")
    sup = _resident_support(residents)
    k = sup.size
    th = invasion_thresholds(sup)

    points = [th["q_star_k"], th["U_k"], *sup]
    for d in th["depths"]:
        points += [d["V"], d["U"]]
    for p in points:
        if math.isfinite(p) and abs(x - p) <= tol:
            raise DegenerateThresholdError(f"invader trait {x!r} within {tol:g} of threshold {p!r}")

    hits = matching_intervals(th, x)
    if len(hits) != 1:
        raise NumericalError(f"invader trait {x!r} matched {len(hits)} outcome intervals: {hits}")
    kind, kp = hits[0]

    if invader_id is None:
        invader_id = fv.next_id()
    pooled = fv.with_species(invader_id, x)
    if kind == "rejection":
        removed = ()
        new_eq = residents
    else:
        keep = k if kp is None else kp
        removed = tuple(residents.support[keep:])
        new_ids = list(residents.support[:keep]) + [invader_id]
        rank = pooled.rank_of
        new_eq = equilibrium_from_support(pooled, [rank[i] for i in new_ids], "stable")
    out = InvasionOutcome(kind, removed, new_eq, th, invader_id, kp)
    if cross_check:
        _cross_check(out, pooled, tol)
    return out


def _cross_check(out: InvasionOutcome, pooled: FitnessVector, tol: float) -> None:
    oracle = select_support(pooled, tol)
    expect = set(oracle.support)
    got = set(out.new_equilibrium.support)
    if got != expect:
        raise NumericalError(
            f"classifier support {sorted(map(str, got))} disagrees with threshold rule {sorted(map(str, expect))}"
        )


def ode_invasion_check(residents: EquilibriumResult, lambda_new: float, seed_frequency: float = 1e-6,
                       t_max: float = 1e5, cutoff: float = 1e-4) -> tuple:
    """Integrate residents plus a rare invader; return surviving ids.

    The invader enters at ``seed_frequency`` with residents rescaled to make
    room. Only the resident support takes part.
    """
    sup_idx = np.sort(residents.support_index)
    lam = np.append(np.asarray(residents.lambdas)[sup_idx], float(lambda_new))
    z0 = np.append(np.asarray(residents.z_star)[sup_idx] * (1.0 - seed_frequency), seed_frequency)
    tr = integrate(z0, lam, t_max=t_max, record_every=10_000)
    ids = [residents.ids[i] for i in sup_idx] + ["invader"]
    return tuple(ids[i] for i in np.flatnonzero(tr.final > cutoff))


@dataclass
class AssemblyStep:
    step: int
    trait: float
    outcome: str
    invader_id: object
    removed: tuple
    k: int
    q_star: float

    def to_row(self) -> dict:
        return {"step": self.step, "trait": self.trait, "outcome": self.outcome,
                "removed": ";".join(str(r) for r in self.removed), "k": self.k, "Q*": self.q_star}


@dataclass
class AssemblyLog:
    steps: list = field(default_factory=list)
    final: EquilibriumResult | None = None
    counts: dict = field(default_factory=dict)

    def q_series(self) -> np.ndarray:
        return np.array([s.q_star for s in self.steps])


def _community(eq: EquilibriumResult) -> EquilibriumResult:
    """Drop extinct species so the state lists only the support."""
    fv = eq.fitness_vector().subset(eq.support)
    return equilibrium_from_support(fv, range(len(fv)), eq.stability)


def _initial_state(initial) -> EquilibriumResult | None:
    if initial is None:
        return None
    fv = as_fitness_vector(initial)
    if len(fv) == 0:
        return None
    if np.any(np.asarray(fv.values) <= 0):
        raise PreconditionError("all traits must be positive")
    if len(fv) == 1:
        return equilibrium_from_support(fv, [0], "stable")
    return _community(select_support(fv))


def assemble_sequence(initial, invaders: Iterable[float], record: bool = True,
                      cross_check: bool = False, tol: float = NUMERIC_TOL) -> AssemblyLog:
    """Feed invaders one at a time into the current stable community.

    An empty start is seeded by the first invader (outcome ``founder``).
    Invaders receive integer ids continuing after the largest integer id in
    ``initial`` (or ``inv<n>`` labels when ids are not integers).
    """
    state = _initial_state(initial)
    if state is not None and all(isinstance(i, (int, np.integer)) for i in state.ids):
        counter = int(max(as_fitness_vector(initial).ids)) + 1
        make_id = lambda n: n  # noqa: E731
    elif state is None:
        counter = 1
        make_id = lambda n: n  # noqa: E731
    else:
        counter = 1
        make_id = lambda n: f"inv{n}"  # noqa: E731
    alog = AssemblyLog(counts={k: 0 for k in ("founder",) + KINDS})
    for step, x in enumerate(invaders, start=1):
        x = float(x)
        if not (x > 0.0 and math.isfinite(x)):
            raise PreconditionError(f"invader {step} has non-positive trait {x!r}")
        sid = make_id(counter)
        counter += 1
        if state is None:
            fv = FitnessVector.from_values([x], [sid])
            state = equilibrium_from_support(fv, [0], "stable")
            kind, removed = "founder", ()
        else:
            out = classify_invader(state, x, invader_id=sid, tol=tol, cross_check=cross_check)
            kind, removed = out.kind, out.removed
            if kind != "rejection":
                state = _community(out.new_equilibrium)
        alog.counts[kind] += 1
        if record:
            alog.steps.append(AssemblyStep(step, x, kind, sid, removed, state.k, state.q_star))
    alog.final = state
    return alog


def random_invaders(count: int, seed: int) -> np.ndarray:
    """U(0, 1] invader traits from the seeded Philox stream."""
    return open_uniform(make_rng(seed), int(count))


def augmentation_chain(lambdas, steps: int) -> np.ndarray:
    """Traits that extend the community by one species each step.

    Each new trait is the midpoint of the less-fit augmentation window
    ``(Q*_k, lambda_k)`` of the current community.
    """
    lam = list(np.sort(np.asarray(trait_values(lambdas), dtype=float))[::-1])
    if len(lam) < 1:
        raise ValidationError("need a nonempty starting community")
    out = []
    for _ in range(int(steps)):
        k = len(lam)
        q = 0.0 if k == 1 else (k - 1) / sum(1.0 / v for v in lam)
        x = 0.5 * (q + lam[-1])
        out.append(x)
        lam.append(x)
    return np.array(out)


def trait_values(lambdas) -> np.ndarray:
    return np.asarray(as_fitness_vector(lambdas).values)


def saturation_gap(lambdas, prefix_range: Iterable[int] | None = None) -> list[tuple[int, float]]:
    """Width ``lambda_k - Q*_k`` of the less-fit augmentation window per prefix."""
    fv = as_fitness_vector(lambdas)
    lam = np.asarray(fv.values)
    if np.any(lam <= 0):
        raise PreconditionError("all traits must be positive")
    ks = range(1, lam.size + 1) if prefix_range is None else prefix_range
    S = np.cumsum(1.0 / lam)
    out = []
    for k in ks:
        k = int(k)
        if not (1 <= k <= lam.size):
            raise ValidationError(f"prefix {k} outside 1..{lam.size}")
        out.append((k, float(lam[k - 1] - (k - 1) / S[k - 1])))
    return out
