"""Multi-site equilibrium frequency tests for invader-driven structure.

At an invader-driven equilibrium ``1/(1 - z_i) = lambda_i / Q`` for every
coexisting species, so two sites sharing traits but not ``Q`` give a line
through the origin with slope ``Q_b / Q_a`` when ``1/(1 - z^a)`` is regressed
on ``1/(1 - z^b)``. Three sites must also have consistent slopes:
``s_bc = s_ac / s_ab``.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import odr, stats

from .core import FitnessVector, _jsonable_id
from .errors import NumericalError, PreconditionError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SiteFrequencyTable:
    site_id: str
    ids: tuple
    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        if z.ndim != 1 or z.size != len(self.ids):
            raise ValidationError(f"site {self.site_id}: ids and frequencies differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError(f"site {self.site_id}: species ids must be unique")
        if not np.all(np.isfinite(z)) or np.any(z <= 0.0) or np.any(z >= 1.0):
            raise ValidationError(f"site {self.site_id}: frequencies must lie strictly in (0, 1)")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "ids", tuple(self.ids))

    @classmethod
    def from_rows(cls, site_id: str, rows) -> "SiteFrequencyTable":
        rows = list(rows)
        try:
            z = np.array([float(r[1]) for r in rows])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"site {site_id}: non-numeric frequency") from exc
        return cls(str(site_id), tuple(r[0] for r in rows), z)

    def as_dict(self) -> dict:
        return dict(zip(self.ids, self.z))

    def renormalized(self) -> "SiteFrequencyTable":
        total = float(self.z.sum())
        if total != 1.0:
            log.info("site %s: renormalizing frequencies (sum was %.6g)", self.site_id, total)
        return SiteFrequencyTable(self.site_id, self.ids, self.z / total)


@dataclass(frozen=True)
class PairTestResult:
    site_a: str
    site_b: str
    shared: tuple
    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    intercept_p: float
    slope_p: float
    pearson_r: float
    r2: float
    method: str = "ols"

    @property
    def n(self) -> int:
        return len(self.shared)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shared"] = [_jsonable_id(s) for s in self.shared]
        return {k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in d.items()}


def _finite_or_none(v: float):
    return float(v) if math.isfinite(v) else None


def _t_pvalue(est: float, se: float, df: int, scale: float = 1.0) -> float:
    if se == 0.0 or not math.isfinite(se):
        # perfect fit: only an estimate distinguishable from rounding is significant
        return 0.0 if abs(est) > 1e-10 * max(1.0, scale) else 1.0
    return float(2.0 * stats.t.sf(abs(est / se), df))


def pair_linearity_test(a: SiteFrequencyTable, b: SiteFrequencyTable, method: str = "ols") -> PairTestResult:
    """Regress ``1/(1 - z^a)`` on ``1/(1 - z^b)`` over the shared species.

    Parameters
    ----------
    method : {"ols", "odr"}
        Ordinary least squares, or orthogonal distance regression for
        noise on both axes. p-values are two-sided t-tests with ``n - 2``
        degrees of freedom.
    """
    da, db = a.as_dict(), b.as_dict()
    shared = tuple(s for s in a.ids if s in db)
    n = len(shared)
    if n < 3:
        raise PreconditionError(f"sites {a.site_id} and {b.site_id} share {n} species; need at least 3")
    y = 1.0 / (1.0 - np.array([da[s] for s in shared]))
    x = 1.0 / (1.0 - np.array([db[s] for s in shared]))
    if np.ptp(x) == 0.0:
        raise NumericalError("regressor is constant across shared species")
    df = n - 2
    r = float(np.corrcoef(x, y)[0, 1]) if np.ptp(y) > 0 else float("nan")
    if method == "ols":
        fit = stats.linregress(x, y)
        slope, intercept = float(fit.slope), float(fit.intercept)
        s_se, i_se = float(fit.stderr), float(fit.intercept_stderr)
    elif method == "odr":
        guess = np.polyfit(x, y, 1)
        out = odr.ODR(odr.RealData(x, y), odr.unilinear, beta0=guess).run()
        slope, intercept = float(out.beta[0]), float(out.beta[1])
        s_se, i_se = float(out.sd_beta[0]), float(out.sd_beta[1])
    else:
        raise ValidationError(f"unknown regression method {method!r}")
    return PairTestResult(
        a.site_id, b.site_id, shared, slope, s_se, intercept, i_se,
        _t_pvalue(intercept, i_se, df, float(np.abs(y).max())), _t_pvalue(slope, s_se, df), r, r * r, method,
    )


def _slope(s):
    if isinstance(s, PairTestResult):
        return s.slope, s.slope_se
    if isinstance(s, (tuple, list)):
        return float(s[0]), float(s[1])
    if s is None:
        return float("nan"), float("nan")
    return float(s), float("nan")


def triangle_consistency(ab, ac, bc, z_crit: float = 2.0, exact_tol: float = 1e-10) -> dict:
    """Test ``s_bc = s_ac / s_ab``.

    Each argument is a :class:`PairTestResult`, a ``(slope, se)`` pair or a
    bare slope. With standard errors for all three slopes the difference is
    scored with a delta-method standard error and passes when
    ``|z| <= z_crit``. Without them (or with a zero standard error) the
    identity must hold to ``exact_tol`` relative to ``|s_bc|``.
    """
    (s_ab, se_ab), (s_ac, se_ac), (s_bc, se_bc) = _slope(ab), _slope(ac), _slope(bc)
    if not all(math.isfinite(v) for v in (s_ab, s_ac, s_bc)):
        raise PreconditionError("all three regressions must be defined")
    if abs(s_ab) < 1e-12:
        raise NumericalError("denominator slope s_ab is zero")
    ratio = s_ac / s_ab
    diff = s_bc - ratio
    ses = (se_ab, se_ac, se_bc)
    if all(math.isfinite(v) for v in ses):
        se = math.sqrt(se_bc ** 2 + (se_ac / s_ab) ** 2 + (s_ac * se_ab / s_ab ** 2) ** 2)
    else:
        se = float("nan")
    if math.isfinite(se) and se > 0:
        zscore = diff / se
        # an identity that holds to rounding passes regardless of tiny SEs
        consistent = abs(zscore) <= z_crit or abs(diff) <= exact_tol * max(1.0, abs(s_bc))
        mode = "delta_method"
    else:
        zscore = float("nan")
        consistent = abs(diff) <= exact_tol * max(1.0, abs(s_bc))
        mode = "exact"
    return {"s_ab": s_ab, "s_ac": s_ac, "s_bc": s_bc, "ratio": ratio, "difference": diff,
            "se": se, "z": zscore, "z_crit": z_crit, "mode": mode, "consistent": bool(consistent)}


def fit_lambdas_single_site(site: SiteFrequencyTable, q_bar: float) -> FitnessVector:
    """Traits ``lambda_i = q_bar / (1 - z_i)`` reproducing the site at equilibrium.

    The family is one-parameter; ``q_bar`` is kept in the returned vector's
    ``meta``.
    """
    q = float(q_bar)
    if not (q > 0 and math.isfinite(q)):
        raise ValidationError("q_bar must be positive")
    lam = q / (1.0 - site.z)
    return FitnessVector.from_values(lam, site.ids, meta={"q_bar": q, "site_id": site.site_id})


def synthetic_site(lambdas, q_bar: float, site_id: str = "synthetic", ids=None,
                   noise: float = 0.0, rng: np.random.Generator | None = None) -> SiteFrequencyTable:
    """Equilibrium-style frequencies ``z = 1 - q_bar / lambda`` with optional noise on ``1/(1-z)``."""
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam <= q_bar):
        raise PreconditionError("every trait must exceed q_bar")
    w = lam / q_bar
    if noise:
        if rng is None:
            raise ValidationError("noise needs an rng")
        w = w + rng.normal(0.0, noise, w.size)
        if np.any(w <= 1.0):
            raise NumericalError("noise pushed a frequency outside (0, 1)")
    ids = tuple(range(1, lam.size + 1)) if ids is None else tuple(ids)
    return SiteFrequencyTable(site_id, ids, 1.0 - 1.0 / w)


def read_site_csv(path) -> SiteFrequencyTable:
    path = Path(path)
    with path.open(newline="") as fh:
        rdr = csv.DictReader(fh)
        if rdr.fieldnames is None or not {"id", "z"} <= set(rdr.fieldnames):
            raise ValidationError(f"{path}: expected columns id,z")
        rows = [(r["id"], r["z"]) for r in rdr]
    return SiteFrequencyTable.from_rows(path.stem, rows)


def load_sites(directory) -> list[SiteFrequencyTable]:
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise ValidationError(f"no site CSV files in {directory}")
    return [read_site_csv(f) for f in files]


def hypothesis_test(sites, reference: str | None = None, alpha: float = 0.05, z_crit: float = 2.0,
                    renormalize: bool = True, method: str = "ols") -> dict:
    """All pairwise linearity tests and triangle checks for a set of sites.

    Triangles are formed as ``(a, b, c)`` with ``a`` the reference site when
    given, otherwise every ordered triple ``a < b < c`` in input order.
    """
    sites = list(sites)
    if len({s.site_id for s in sites}) != len(sites):
        raise ValidationError("site ids must be unique")
    if renormalize:
        sites = [s.renormalized() for s in sites]
    by_id = {s.site_id: s for s in sites}
    if reference is not None and reference not in by_id:
        raise ValidationError(f"unknown reference site {reference!r}")
    pairs = {}
    skipped = []
    for a, b in itertools.permutations(by_id, 2):
        try:
            pairs[(a, b)] = pair_linearity_test(by_id[a], by_id[b], method)
        except (PreconditionError, NumericalError) as exc:
            skipped.append({"site_a": a, "site_b": b, "reason": str(exc)})
    order = list(by_id)
    triples = list(itertools.combinations(order, 3))
    if reference is not None:
        others = [s for s in order if s != reference]
        triples = [(reference, b, c) for b, c in itertools.combinations(others, 2)]
    triangles = []
    for a, b, c in triples:
        need = [(a, b), (a, c), (b, c)]
        if not all(p in pairs for p in need):
            continue
        rep = triangle_consistency(pairs[(a, b)], pairs[(a, c)], pairs[(b, c)], z_crit)
        rep.update({"a": a, "b": b, "c": c})
        triangles.append(rep)
    listed = [p for (a, b), p in pairs.items() if order.index(a) < order.index(b)]
    return {
        "alpha": alpha,
        "method": method,
        "renormalized": renormalize,
        "pairs": [p.to_dict() for p in listed],
        "skipped_pairs": [s for s in skipped if order.index(s["site_a"]) < order.index(s["site_b"])],
        "triangles": [{k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in t.items()} for t in triangles],
        "summary": {
            "pairs_tested": len(listed),
            "significant_linearity": sum(p.slope_p < alpha for p in listed),
            "intercept_rejections": sum(p.intercept_p < alpha for p in listed),
            "triangles_tested": len(triangles),
            "triangles_inconsistent": sum(not t["consistent"] for t in triangles),
        },
    }
