"""Transforms to a Lotka-Volterra system and to SIS co-colonization traits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import (
    FitnessVector,
    InvasionMatrix,
    as_fitness_vector,
    is_invader_driven,
    paired_state,
    state_array,
    validate_simplex,
)
from .dynamics import integrate
from .equilibrium import select_support
from .errors import PreconditionError, ValidationError

log = logging.getLogger(__name__)

SIS_CASES = {
    "i": "cocolonization_susceptibility",
    "ii": "cocolonization_interaction",
    "iii": "coinfection_clearance",
}


@dataclass(frozen=True)
class LVSystem:
    """``dy_i/dt = y_i (r_i + sum_j A_ij y_j)`` for the non-reference species.

    ``y_i = z_i / z_ref``. ``rank_one_decomposition`` holds the column
    ``c_i = lambda_i - lambda_ref``, the all-ones row and the scalar shift
    ``-lambda_ref`` of the nominal decomposition.
    """

    r: np.ndarray
    A: np.ndarray
    reference: object
    species: tuple
    lambda_ref: float
    rank_one_decomposition: tuple = field(repr=False, default=())

    @property
    def dim(self) -> int:
        return self.r.size

    def rhs(self, t, y):
        return y * (self.r + self.A @ y)

    def to_dict(self) -> dict:
        from .core import _jsonable_id

        c, ones, shift = self.rank_one_decomposition
        return {
            "system": "lotka_volterra",
            "dim": self.dim,
            "reference": _jsonable_id(self.reference),
            "species": [_jsonable_id(s) for s in self.species],
            "r": self.r.tolist(),
            "A": self.A.tolist(),
            "rank_one_decomposition": {"column": c.tolist(), "row": ones.tolist(), "shift": shift},
        }


def to_lotka_volterra(lambdas, reference=None) -> LVSystem:
    """Lotka-Volterra form with ``r_i = lambda_i``, ``A_ii = -lambda_ref``, ``A_ij = lambda_i - lambda_ref``.

    The reference species defaults to the one with the largest trait.
    """
    fv = as_fitness_vector(lambdas)
    if len(fv) < 2:
        raise PreconditionError("need at least two species")
    ref = fv.ids[0] if reference is None else reference
    rank = fv.rank_of
    if ref not in rank:
        raise ValidationError(f"unknown reference species {ref!r}")
    lam = np.asarray(fv.values)
    lref = float(lam[rank[ref]])
    keep = [i for i in range(len(fv)) if fv.ids[i] != ref]
    li = lam[keep]
    c = li - lref
    A = np.repeat(c[:, None], li.size, axis=1)
    np.fill_diagonal(A, -lref)
    return LVSystem(li.copy(), A, ref, tuple(fv.ids[i] for i in keep), lref,
                    (c, np.ones(li.size), -lref))


def singular_value_ratio(M: np.ndarray) -> float:
    """``sigma_2 / sigma_1`` (0 for a 1x1 or zero matrix)."""
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size < 2 or s[0] == 0.0:
        return 0.0
    return float(s[1] / s[0])


def rank_report(lv: LVSystem) -> dict:
    """Singular value ratios of ``A + lambda_ref I`` and of ``A + diag(r)``.

    The second matrix equals ``c 1'`` exactly and always has rank one.
    """
    n = lv.dim
    shifted = lv.A + lv.lambda_ref * np.eye(n)
    exact = lv.A + np.diag(lv.r)
    return {"shift_identity_ratio": singular_value_ratio(shifted),
            "shift_diag_r_ratio": singular_value_ratio(exact)}


def z_to_y(z, ref_index: int) -> np.ndarray:
    zz = state_array(z)
    if zz[ref_index] <= 0:
        raise ValidationError("reference species must have positive frequency")
    return np.delete(zz, ref_index) / zz[ref_index]


def y_to_z(y, ref_index: int) -> np.ndarray:
    """Inverse of :func:`z_to_y`: ``z_i = y_i / (1 + sum y)``, ``z_ref = 1 / (1 + sum y)``."""
    yy = np.asarray(y, dtype=float)
    tot = 1.0 + yy.sum(axis=-1, keepdims=True)
    z = np.insert(yy / tot, ref_index, 1.0 / tot[..., 0], axis=-1)
    return z


def lv_fixed_point(lv: LVSystem, support) -> np.ndarray:
    """Solve ``r_S + A_SS y_S = 0`` on the species in ``support``; zeros elsewhere."""
    pos = {s: i for i, s in enumerate(lv.species)}
    idx = [pos[s] for s in support if s != lv.reference]
    y = np.zeros(lv.dim)
    if idx:
        y[idx] = np.linalg.solve(lv.A[np.ix_(idx, idx)], -lv.r[idx])
    return y


def fixed_point_correspondence(lambdas, reference=None) -> dict:
    """Map the LV fixed point on the stable support to the simplex and compare with z*."""
    fv = as_fitness_vector(lambdas)
    eq = select_support(fv)
    lv = to_lotka_volterra(fv, reference)
    if lv.reference not in eq.support:
        raise PreconditionError("reference species is excluded at equilibrium; no finite LV image")
    y = lv_fixed_point(lv, eq.support)
    ref_index = fv.rank_of[lv.reference]
    z = y_to_z(y, ref_index)
    err = float(np.max(np.abs(z - eq.z_star)))
    return {"y_star": y, "z_mapped": z, "z_star": np.asarray(eq.z_star), "max_error": err}


def _point_polyline_distance(P: np.ndarray, L: np.ndarray, block: int = 512) -> np.ndarray:
    """Distance from each row of ``P`` to the polyline through the rows of ``L``."""
    if L.shape[0] == 1:
        return np.linalg.norm(P - L[0], axis=1)
    a = L[:-1]
    d = L[1:] - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd == 0.0, 1.0, dd)
    out = np.empty(P.shape[0])
    for s in range(0, P.shape[0], block):
        p = P[s:s + block, None, :]
        t = np.clip(np.einsum("psk,sk->ps", p - a[None], d) / dd[None], 0.0, 1.0)
        proj = a[None] + t[..., None] * d[None]
        out[s:s + block] = np.sqrt(np.min(np.sum((p - proj) ** 2, axis=2), axis=1))
    return out


def _thin(X: np.ndarray, max_points: int) -> np.ndarray:
    if X.shape[0] <= max_points:
        return X
    idx = np.unique(np.linspace(0, X.shape[0] - 1, max_points).astype(int))
    return X[idx]


def lv_replicator_conjugacy_check(lambdas, z0, t_max: float = 200.0, reference=None,
                                  h: float = 0.01, max_points: int = 4000,
                                  blowup: float = 1e12) -> dict:
    """Compare replicator and LV orbits geometrically on the simplex.

    The replicator is integrated with the package RK4 scheme and the LV
    system independently with ``solve_ivp`` (DOP853). LV states are mapped
    to the simplex and the symmetric maximal point-to-polyline distance is
    reported, which is insensitive to the time change between the systems.
    The LV run covers more of the orbit per unit time, so it is truncated at
    the first point where it reaches the replicator end state's neighborhood.
    """
    fv, z = paired_state(validate_simplex(state_array(z0)).z, lambdas)
    if np.any(z <= 0):
        raise PreconditionError("conjugacy check needs an interior start")
    lv = to_lotka_volterra(fv, reference)
    ref_index = fv.rank_of[lv.reference]
    tr = integrate(z, fv, t_max=t_max, h=h, conv_tol=0.0)
    Zr = tr.states

    def too_big(t, y):
        return np.sum(y) - blowup
    too_big.terminal = True

    y0 = z_to_y(z, ref_index)
    sol = solve_ivp(lv.rhs, (0.0, t_max), y0, method="DOP853", rtol=1e-11, atol=1e-13,
                    events=too_big, dense_output=False, max_step=max(h, 0.05))
    blew_up = sol.status == 1
    Zl = y_to_z(sol.y.T, ref_index)
    # compare the common stretch of orbit: cut each path once it is as close
    # to its end as the other path ever gets
    end_r, end_l = Zr[-1], Zl[-1]
    gap_r = np.linalg.norm(Zr - end_l, axis=1)
    gap_l = np.linalg.norm(Zl - end_r, axis=1)
    Zr_c = Zr[: int(np.argmin(gap_r)) + 1]
    Zl_c = Zl[: int(np.argmin(gap_l)) + 1]
    Zr_c, Zl_c = _thin(Zr_c, max_points), _thin(Zl_c, max_points)
    d1 = _point_polyline_distance(Zl_c, Zr_c)
    d2 = _point_polyline_distance(Zr_c, Zl_c)
    return {
        "max_discrepancy": float(max(d1.max(), d2.max())),
        "lv_blew_up": bool(blew_up),
        "lv_message": sol.message,
        "replicator_final": Zr[-1],
        "lv_final_mapped": Zl[-1],
        "reference": lv.reference,
    }


@dataclass(frozen=True)
class SISTraits:
    """Trait matrix for one SIS co-colonization scenario.

    ``case_tag`` is one of ``cocolonization_susceptibility`` (alpha
    perturbations of co-colonization susceptibility), ``cocolonization_interaction``
    (alpha matrix with single-to-coinfection ratio ``mu``) or
    ``coinfection_clearance`` (the ``u`` matrix).
    """

    case_tag: str
    trait_matrix: np.ndarray
    mu: float | None = None
    c: float = 0.0
    ids: tuple | None = None

    def __post_init__(self):
        if self.case_tag not in SIS_CASES.values():
            raise ValidationError(f"unknown SIS case {self.case_tag!r}")
        m = np.array(self.trait_matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("trait matrix must be square")
        if not np.all(np.isfinite(m)):
            raise ValidationError("trait matrix must be finite")
        if self.case_tag != "coinfection_clearance" and not (self.mu is not None and self.mu > 0):
            raise ValidationError("mu must be positive for the alpha-matrix cases")
        m.setflags(write=False)
        object.__setattr__(self, "trait_matrix", m)

    def to_dict(self) -> dict:
        return {"system": "sis", "case_tag": self.case_tag, "trait_matrix": self.trait_matrix.tolist(),
                "mu": self.mu, "c": self.c}


def _case(tag: str) -> str:
    return SIS_CASES.get(tag, tag)


def sis_traits_from_lambdas(lambdas, case_tag: str, mu: float | None = None, c: float = 0.0,
                            free_upper: np.ndarray | None = None) -> SISTraits:
    """Trait matrix whose invasion fitness is invader-driven with rows ``lambdas``.

    For the clearance case a matrix ``free_upper`` may supply arbitrary
    entries ``u_ij`` (i < j); the lower triangle is then set to
    ``u_ji = 2 u_jj - lambda_i - u_ij`` giving a non-symmetric solution.
    Only the verification direction exists for the susceptibility case.
    """
    fv = as_fitness_vector(lambdas)
    lam = np.asarray(fv.values)
    tag = _case(case_tag)
    n = lam.size
    c = float(c)
    if tag == "cocolonization_interaction":
        if mu is None or not mu > 0:
            raise ValidationError("mu must be positive")
        base = (c - lam) / mu
        M = np.repeat(base[:, None], n, axis=1)
        np.fill_diagonal(M, (mu + 1.0) * base - c)
        return SISTraits(tag, M, float(mu), c, fv.ids)
    if tag == "coinfection_clearance":
        diag = c + 0.5 * (lam[0] - lam)
        U = c + 0.5 * (lam[0] - lam[:, None] - lam[None, :])
        if free_upper is not None:
            F = np.asarray(free_upper, dtype=float)
            if F.shape != (n, n):
                raise ValidationError("free_upper must be N x N")
            for i in range(n):
                for j in range(i + 1, n):
                    U[i, j] = F[i, j]
                    U[j, i] = 2.0 * diag[j] - lam[i] - F[i, j]
        np.fill_diagonal(U, diag)
        return SISTraits(tag, U, None, c, fv.ids)
    if tag == "cocolonization_susceptibility":
        raise PreconditionError("no constructor for the susceptibility case; build the alpha matrix and verify it")
    raise ValidationError(f"unknown SIS case {case_tag!r}")


def susceptibility_symmetric(alpha, atol: float = 1e-12) -> bool:
    """``alpha_ij = alpha_ii + alpha_jj`` for all i != j."""
    a = np.asarray(alpha, dtype=float)
    d = np.diag(a)
    target = d[:, None] + d[None, :]
    off = ~np.eye(a.shape[0], dtype=bool)
    return bool(np.all(np.abs(a - target)[off] <= atol))


def lambdas_from_sis_traits(traits: SISTraits, theta: float = 1.0, atol: float = 0.0) -> InvasionMatrix:
    """Invasion fitness matrix from the active trait term.

    The alpha cases use ``theta * (mu (a_ji - a_ij) + a_ji - a_jj)`` and the
    clearance case ``theta * (-u_ij - u_ji + 2 u_jj)``.
    """
    M = np.asarray(traits.trait_matrix)
    if traits.case_tag == "coinfection_clearance":
        L = theta * (-M - M.T + 2.0 * np.diag(M)[None, :])
    else:
        mu = traits.mu
        L = theta * (mu * (M.T - M) + M.T - np.diag(M)[None, :])
    np.fill_diagonal(L, 0.0)
    # exact row constancy only; rounding noise leaves the tag at "general"
    tag = "invader_driven" if is_invader_driven(L, atol) else "general"
    return InvasionMatrix(L, tag, traits.ids)


def sis_roundtrip_error(lambdas, case_tag: str, mu: float | None = None, c: float = 0.0) -> float:
    """Max entry error of the reconstructed matrix against the invader-driven target."""
    fv = as_fitness_vector(lambdas)
    L = lambdas_from_sis_traits(sis_traits_from_lambdas(fv, case_tag, mu, c)).values
    target = np.repeat(np.asarray(fv.values)[:, None], len(fv), axis=1)
    np.fill_diagonal(target, 0.0)
    return float(np.max(np.abs(L - target)))

