"""Domain types and the mean invasion fitness functional.

Arrays that accompany a :class:`FitnessVector` are always laid out in the
vector's *rank order* (descending fitness). Raw arrays passed to the
dynamics routines are used as given; the caller is responsible for pairing
``z`` and ``lambda`` entries consistently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import PreconditionError, ValidationError

SIMPLEX_TOL = 1e-9
NUMERIC_TOL = 1e-8
STABILITY_TOL = 1e-7
EXTINCTION_CUTOFF = 1e-4

SpeciesId = Hashable


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FitnessVector:
    """Species invasiveness traits sorted in descending order.

    Attributes
    ----------
    ids : tuple
        Species identities in rank order.
    values : ndarray
        Traits in rank order, ``values[0] >= values[1] >= ...``.
    original_index : ndarray of int
        ``original_index[r]`` is the input position of the species at rank ``r``.
    meta : dict, optional
        Free-form provenance (e.g. the scale used to fit the traits).
    """

    ids: tuple
    values: np.ndarray
    original_index: np.ndarray
    meta: dict | None = field(default=None, compare=False)

    @classmethod
    def from_values(cls, values: Iterable[float], ids: Sequence | None = None, meta: dict | None = None) -> "FitnessVector":
        vals = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
        if vals.ndim != 1:
            raise ValidationError(f"fitness values must be one-dimensional, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("fitness values must be finite")
        if ids is None:
            ids = list(range(1, len(vals) + 1))
        ids = list(ids)
        if len(ids) != len(vals):
            raise ValidationError(f"{len(ids)} ids for {len(vals)} fitness values")
        if len(set(ids)) != len(ids):
            raise ValidationError("species ids must be unique")
        # stable on the original index so ties keep input order
        order = np.argsort(-vals, kind="stable")
        return cls(
            ids=tuple(ids[i] for i in order),
            values=_frozen(vals[order]),
            original_index=_frozen(order).astype(int),
            meta=meta,
        )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def rank_of(self) -> dict:
        """Map species id to its 0-based rank."""
        return {sid: r for r, sid in enumerate(self.ids)}

    def to_rank_order(self, arr: Sequence[float]) -> np.ndarray:
        """Reorder an array given in original input order into rank order."""
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (len(self),):
            raise ValidationError(f"expected {len(self)} entries, got shape {arr.shape}")
        return arr[self.original_index]

    def to_original_order(self, arr: Sequence[float]) -> np.ndarray:
        arr = np.asarray(arr, dtype=float)
        out = np.empty_like(arr)
        out[self.original_index] = arr
        return out

    def subset(self, ids: Iterable) -> "FitnessVector":
        rank = self.rank_of
        idx = sorted(rank[i] for i in ids)
        return FitnessVector.from_values(self.values[idx], [self.ids[i] for i in idx])

    def with_species(self, sid, value: float) -> "FitnessVector":
        """Return a new vector with one extra species appended."""
        if sid in self.ids:
            raise ValidationError(f"species id {sid!r} already present")
        return FitnessVector.from_values(
            np.append(self.values, float(value)), list(self.ids) + [sid]
        )

    def next_id(self):
        """A fresh id that does not clash with existing ones."""
        if all(isinstance(i, (int, np.integer)) for i in self.ids):
            return (max(self.ids) + 1) if self.ids else 1
        n = len(self.ids) + 1
        while f"s{n}" in self.ids:
            n += 1
        return f"s{n}"


def as_fitness_vector(lambdas) -> FitnessVector:
    if isinstance(lambdas, FitnessVector):
        return lambdas
    return FitnessVector.from_values(lambdas)


def paired_state(z, lambdas) -> tuple["FitnessVector", np.ndarray]:
    """FitnessVector plus ``z`` in its rank order.

    A raw trait array is taken to share ``z``'s ordering; with a
    FitnessVector, ``z`` is assumed to be in rank order already.
    """
    zz = state_array(z)
    if isinstance(lambdas, FitnessVector):
        if zz.shape != (len(lambdas),):
            raise ValidationError("state and trait dimensions differ")
        return lambdas, zz
    fv = FitnessVector.from_values(lambdas)
    return fv, fv.to_rank_order(zz)


def trait_array(lambdas) -> np.ndarray:
    """Traits as a float array; FitnessVector yields its rank-ordered values."""
    if isinstance(lambdas, FitnessVector):
        return np.asarray(lambdas.values, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1:
        raise ValidationError(f"traits must be one-dimensional, got shape {lam.shape}")
    if not np.all(np.isfinite(lam)):
        raise ValidationError("traits must be finite")
    return lam


@dataclass(frozen=True)
class InvasionMatrix:
    """Pairwise invasion fitness matrix with zero diagonal.

    ``values[i, j]`` is the growth rate of species ``i`` when rare in a
    resident population of species ``j``.
    """

    values: np.ndarray
    structure_tag: str = "general"
    ids: tuple | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError(f"invasion matrix must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("invasion matrix entries must be finite")
        if np.any(np.diag(v) != 0.0):
            raise ValidationError("invasion matrix diagonal must be exactly zero")
        if self.structure_tag not in ("general", "invader_driven"):
            raise ValidationError(f"unknown structure tag {self.structure_tag!r}")
        if self.structure_tag == "invader_driven" and not is_invader_driven(v):
            raise ValidationError("rows are not constant off the diagonal")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def row_traits(self) -> np.ndarray:
        """Off-diagonal row value for each species (invader-driven matrices)."""
        n = self.dim
        if n == 1:
            return np.zeros(1)
        return self.values.sum(axis=1) / (n - 1)


def is_invader_driven(values: np.ndarray, atol: float = 0.0) -> bool:
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n <= 1:
        return bool(np.all(v == 0))
    if np.any(np.abs(np.diag(v)) > atol):
        return False
    off = v[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    return bool(np.all(off.max(axis=1) - off.min(axis=1) <= atol))


def build_invader_driven(lambdas) -> InvasionMatrix:
    """Invader-driven matrix ``values[i, j] = lambda_i`` for ``j != i``.

    A FitnessVector yields the matrix in rank order; a raw array keeps its order.
    """
    ids = lambdas.ids if isinstance(lambdas, FitnessVector) else None
    lam = trait_array(lambdas)
    if lam.size < 1:
        raise ValidationError("need at least one species")
    m = np.repeat(lam[:, None], lam.size, axis=1)
    np.fill_diagonal(m, 0.0)
    return InvasionMatrix(m, "invader_driven", ids)


@dataclass(frozen=True)
class SimplexState:
    """Species frequencies on the unit simplex at dimensionless time ``tau``."""

    z: np.ndarray
    tau: float = 0.0
    ids: tuple | None = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return len(self.z)


def state_array(z) -> np.ndarray:
    if isinstance(z, SimplexState):
        return np.asarray(z.z, dtype=float)
    return np.asarray(z, dtype=float)


def validate_simplex(z, tol: float = SIMPLEX_TOL, tau: float = 0.0, ids=None) -> SimplexState:
    """Check that ``z`` lies on the simplex, repairing rounding noise.

    Entries in ``[-tol, 0)`` are clamped to zero and the vector is rescaled
    to unit sum when the sum is within ``tol`` of one. Anything further off
    raises :class:`ValidationError`.
    """
    arr = np.array(z, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError("empty frequency vector")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("frequencies must be finite")
    if np.any(arr < -tol):
        raise ValidationError(f"negative frequency {arr.min():.3g} below -{tol:g}")
    arr = np.where(arr < 0.0, 0.0, arr)
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise ValidationError(f"frequencies sum to {total!r}, not 1 within {tol:g}")
    if total != 1.0:
        arr = arr / total
    return SimplexState(arr, tau, tuple(ids) if ids is not None else None)


def mean_fitness(z, lambdas) -> float:
    """Mean invasion fitness ``Q(z) = sum_i lambda_i (1 - z_i) z_i``."""
    zz = state_array(z)
    lam = trait_array(lambdas)
    if zz.shape != lam.shape:
        raise ValidationError(f"state has {zz.size} entries but there are {lam.size} traits")
    return float(np.sum(lam * (1.0 - zz) * zz))


def quadratic_mean_fitness(z, matrix: InvasionMatrix | np.ndarray) -> float:
    """Double-sum form ``sum_{k<j} (L[j,k] + L[k,j]) z_j z_k`` for any matrix."""
    zz = state_array(z)
    m = matrix.values if isinstance(matrix, InvasionMatrix) else np.asarray(matrix, dtype=float)
    if m.shape != (zz.size, zz.size):
        raise ValidationError("matrix and state dimensions differ")
    return float(zz @ m @ zz)


def uniform_state(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass(frozen=True)
class EquilibriumResult:
    """An equilibrium of the invader-driven replicator.

    ``z_star`` covers every species in ``ids`` (zeros off the support);
    ``support`` lists the coexisting species ids in rank order.
    """

    ids: tuple
    lambdas: np.ndarray
    support: tuple
    z_star: np.ndarray
    q_star: float
    stability: str
    k: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "lambdas", _frozen(self.lambdas))
        object.__setattr__(self, "z_star", _frozen(self.z_star))
        object.__setattr__(self, "k", len(self.support))

    @property
    def support_index(self) -> np.ndarray:
        pos = {sid: i for i, sid in enumerate(self.ids)}
        return np.array([pos[s] for s in self.support], dtype=int)

    def z_by_id(self) -> dict:
        return {sid: float(v) for sid, v in zip(self.ids, self.z_star)}

    def fitness_vector(self) -> FitnessVector:
        return FitnessVector.from_values(self.lambdas, self.ids)

    def to_dict(self) -> dict:
        return {
            "ids": [_jsonable_id(i) for i in self.ids],
            "lambdas": [float(v) for v in self.lambdas],
            "support": [_jsonable_id(i) for i in self.support],
            "k": self.k,
            "z_star": [float(v) for v in self.z_star],
            "q_star": float(self.q_star),
            "stability": self.stability,
        }


def _jsonable_id(sid):
    if isinstance(sid, (np.integer,)):
        return int(sid)
    if isinstance(sid, (int, str)):
        return sid
    return str(sid)


def equilibrium_from_support(fv: FitnessVector, support_ranks: Sequence[int], stability: str) -> EquilibriumResult:
    """Build the equilibrium whose support is the given set of ranks."""
    lam = np.asarray(fv.values)
    idx = np.array(sorted(support_ranks), dtype=int)
    if idx.size == 0:
        raise PreconditionError("support must be nonempty")
    if idx.size == 1:
        q = 0.0
    else:
        if np.any(lam[idx] == 0.0):
            raise PreconditionError("zero trait inside a multi-species support")
        q = (idx.size - 1) / np.sum(1.0 / lam[idx])
    z = np.zeros(len(fv))
    if idx.size == 1:
        z[idx] = 1.0
    else:
        z[idx] = 1.0 - q / lam[idx]
    return EquilibriumResult(
        ids=fv.ids,
        lambdas=lam,
        support=tuple(fv.ids[i] for i in idx),
        z_star=z,
        q_star=float(q),
        stability=stability,
    )
