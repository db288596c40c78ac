"""Command-line entry point: ``replicator <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as rio
from .core import NUMERIC_TOL, SIMPLEX_TOL, STABILITY_TOL, FitnessVector, _jsonable_id
from .errors import (
    DegenerateThresholdError,
    IntegrationError,
    NumericalError,
    ReplicatorError,
    ValidationError,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("invader_replicator")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    jobs: int | str
    fmt: str
    simplex_tol: float = SIMPLEX_TOL
    numeric_tol: float = NUMERIC_TOL
    stability_tol: float = STABILITY_TOL

    @classmethod
    def from_args(cls, a) -> "RunConfig":
        seed = a.seed
        if seed is None:
            env = os.environ.get("REPLICATOR_SEED")
            try:
                seed = int(env) if env not in (None, "") else 0
            except ValueError:
                raise ValidationError(f"REPLICATOR_SEED is not an integer: {env!r}") from None
        if not 0 <= seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        jobs = a.jobs
        if jobs != "auto":
            try:
                jobs = int(jobs)
            except ValueError:
                raise ValidationError(f"--jobs must be an integer or 'auto', got {jobs!r}") from None
            if jobs < 1:
                raise ValidationError("--jobs must be >= 1")
        return cls(int(seed), jobs, a.format, a.simplex_tol, a.numeric_tol, a.stability_tol)


# ----------------------------------------------------------------- output ---

def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_json(doc, out) -> None:
    _emit(rio.dumps(doc) + "\n", out)


def _fmt_for(a, cfg: RunConfig) -> str:
    if a.format_explicit:
        return cfg.fmt
    out = getattr(a, "out", None)
    if out and out != "-":
        return "json" if out.endswith(".json") else "csv"
    return a.default_format


# ------------------------------------------------------------- subcommands ---

def _load_lambdas(path) -> FitnessVector:
    if path is None:
        raise ValidationError("--lambdas is required")
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such file: {path}")
    return rio.read_fitness_vector(p)


def cmd_simulate(a, cfg: RunConfig) -> int:
    from ._rng import make_rng
    from .dynamics import StepControl, integrate

    fv = _load_lambdas(a.lambdas)
    n = len(fv)
    if a.z0 == "uniform":
        z0 = np.full(n, 1.0 / n)
    elif a.z0 == "random":
        z0 = make_rng(cfg.seed).dirichlet(np.ones(n))
    else:
        z0 = rio.align_state(rio.read_simplex_state(a.z0, cfg.simplex_tol), fv)
    ctl = StepControl(h=a.h, t_max=a.t_max, conv_tol=a.conv_tol, conv_window=a.conv_window,
                      record_every=a.record_every, theta=a.theta, simplex_tol=cfg.simplex_tol,
                      boundary_allowed=a.boundary_allowed)
    tr = integrate(z0, fv, ctl)
    if _fmt_for(a, cfg) == "json":
        _emit_json({
            "ids": [_jsonable_id(i) for i in fv.ids],
            "lambdas": fv.values,
            "terminated_by": tr.terminated_by,
            "tau_final": float(tr.times[-1]),
            "z_final": tr.final,
            "q_final": float(tr.q_series[-1]),
            "survivors": [_jsonable_id(fv.ids[i]) for i in tr.survivors()],
            "times": tr.times,
            "states": tr.states,
            "q_series": tr.q_series,
        }, a.out)
    else:
        _emit(rio.trajectory_csv(tr, fv.ids, long=a.long), a.out)
    return EXIT_OK


def cmd_equilibrium(a, cfg: RunConfig) -> int:
    from .dynamics import classify_stability
    from .equilibrium import coexistence_equilibrium, enumerate_candidates

    fv = _load_lambdas(a.lambdas)
    eq = coexistence_equilibrium(fv, cfg.numeric_tol)
    rep = classify_stability(eq, tol=cfg.stability_tol)
    doc = eq.to_dict()
    doc["stability_report"] = {"verdict": rep.verdict,
                               "eigenvalue_real_parts": rep.eigenvalue_real_parts}
    if a.candidates:
        cands = enumerate_candidates(fv, fast=not a.all_subsets, max_species=a.max_species,
                                     stability_tol=cfg.stability_tol, jobs=cfg.jobs)
        rows = [(";".join(str(s) for s in c.subset), c.k, c.q_value, c.feasible, c.stable) for c in cands]
        Path(a.candidates).write_text(rio.rows_csv(["subset", "k", "q", "feasible", "stable"], rows))
    _emit_json(doc, a.out)
    return EXIT_OK


def cmd_prob(a, cfg: RunConfig) -> int:
    from . import coexistence as co

    if (a.k is None) == (not a.all_k):
        raise UsageError("give exactly one of --k or --all-k")
    ks = list(range(2, a.N + 1)) if a.all_k else [a.k]
    ests = []
    mean = None
    if a.method == "integral":
        kw = {"proposal": a.proposal, "beta_params": tuple(a.beta), "qmc_points": not a.pseudo}
        for k in ks:
            ests.append(co.prob_k_integral(a.N, k, a.samples, cfg.seed, jobs=cfg.jobs, **kw))
    elif a.method == "oracle":
        for k in ks:
            ests.append(co.prob_k_ordered_oracle(a.N, k, a.samples, cfg.seed, jobs=cfg.jobs))
    elif a.method == "closed":
        for k in ks:
            v, src = co.closed_form_prob(a.N, k, with_source=True)
            if v is None:
                raise ValidationError(f"no closed form for N={a.N}, k={k}")
            ests.append(co.ProbabilityEstimate(k, a.N, v, 0.0, 0.0, "closed_form", 0, None))
    else:
        dist = co.prob_k_ode_ensemble(a.N, a.runs, cfg.seed, jobs=cfg.jobs)
        ests = [dist.pmf[k] if k in dist.pmf else
                co.ProbabilityEstimate(k, a.N, 0.0, 0.0, 0.0, "ode_ensemble", a.runs, cfg.seed) for k in ks]
        mean = dist.mean_n
    if a.all_k and mean is None:
        mean = sum(e.k * e.value for e in ests)
    rows = [e.to_row() for e in ests]
    if _fmt_for(a, cfg) == "json":
        _emit_json({"N": a.N, "method": a.method, "seed": cfg.seed, "pmf": rows,
                    "mean_n": mean, "total": sum(r["p"] for r in rows)}, a.out)
    else:
        _emit(rio.rows_csv(["k", "p", "stderr", "ci95", "method"],
                           [(r["k"], r["p"], r["stderr"], r["ci95"], r["method"]) for r in rows]), a.out)
    return EXIT_OK


def cmd_invade(a, cfg: RunConfig) -> int:
    from .assembly import classify_invader
    from .equilibrium import select_support

    fv = _load_lambdas(a.residents)
    eq = select_support(fv, cfg.numeric_tol) if len(fv) > 1 else _single(fv)
    out = classify_invader(eq, a.invader, invader_id=a.invader_id, tol=cfg.numeric_tol,
                           cross_check=a.cross_check)
    _emit_json(out.to_dict(), a.out)
    return EXIT_OK


def _single(fv):
    from .core import equilibrium_from_support

    if fv.values[0] <= 0:
        raise ValidationError("resident trait must be positive")
    return equilibrium_from_support(fv, [0], "stable")


def _parse_invaders(spec: str):
    from .assembly import random_invaders

    if spec.startswith("random:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError("--invaders random form is random:<count>:<seed>")
        try:
            return random_invaders(int(parts[1]), int(parts[2]))
        except ValueError:
            raise UsageError("count and seed in random:<count>:<seed> must be integers") from None
    p = Path(spec)
    if not p.exists():
        raise ValidationError(f"no such file: {spec}")
    if p.suffix.lower() == ".json":
        import json
        return np.asarray(json.loads(p.read_text()), dtype=float)
    vals = []
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.lower() in ("lambda", "trait"):
            continue
        vals.append(float(line.split(",")[-1]))
    return np.array(vals)


def cmd_assemble(a, cfg: RunConfig) -> int:
    from .assembly import assemble_sequence

    initial = None if a.initial in (None, "empty") else _load_lambdas(a.initial)
    invaders = _parse_invaders(a.invaders)
    alog = assemble_sequence(initial, invaders, record=True, cross_check=a.cross_check,
                             tol=cfg.numeric_tol)
    rows = [s.to_row() for s in alog.steps]
    if _fmt_for(a, cfg) == "json":
        _emit_json({"steps": [{**r, "invader_id": _jsonable_id(s.invader_id),
                               "removed": [_jsonable_id(x) for x in s.removed]}
                              for r, s in zip(rows, alog.steps)],
                    "counts": alog.counts,
                    "final": alog.final.to_dict() if alog.final else None}, a.out)
    else:
        _emit(rio.rows_csv(["step", "trait", "outcome", "removed", "k", "Q*"],
                           [(r["step"], r["trait"], r["outcome"], r["removed"], r["k"], r["Q*"]) for r in rows]),
              a.out)
    return EXIT_OK


def cmd_basin(a, cfg: RunConfig) -> int:
    from .negative import basin_grid, n2_basin_threshold

    fv = _load_lambdas(a.lambdas)
    rows = basin_grid(fv, a.grid)
    n = len(fv)
    header = [f"z_{sid}" for sid in fv.ids] + ["winner", "predicted", "certificate"]
    if _fmt_for(a, cfg) == "json":
        doc = {"ids": [_jsonable_id(i) for i in fv.ids], "lambdas": fv.values,
               "threshold": n2_basin_threshold(*fv.values) if n == 2 and fv.values[0] != fv.values[1] else None,
               "rows": [{"z0": list(r[:n]), "winner": _jsonable_id(r[n]) if r[n] is not None else None,
                         "predicted": _jsonable_id(r[n + 1]) if r[n + 1] is not None else None,
                         "certificate": r[n + 2]} for r in rows]}
        _emit_json(doc, a.out)
    else:
        _emit(rio.rows_csv(header, rows), a.out)
    return EXIT_OK


def _read_matrix(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such file: {path}")
    try:
        m = np.loadtxt(p, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: not a numeric matrix ({exc})") from None
    return m


def cmd_transform(a, cfg: RunConfig) -> int:
    from . import bridges as br

    if a.to == "lv":
        fv = _load_lambdas(a.lambdas)
        ref = _coerce_id(a.reference, fv) if a.reference is not None else None
        lv = br.to_lotka_volterra(fv, ref)
        doc = lv.to_dict()
        doc["rank_report"] = br.rank_report(lv)
    elif a.to == "sis-case-i":
        if a.alpha is None:
            raise UsageError("sis-case-i needs --alpha <matrix.csv>")
        alpha = _read_matrix(a.alpha)
        traits = br.SISTraits("cocolonization_susceptibility", alpha, a.mu, a.c)
        L = br.lambdas_from_sis_traits(traits, a.theta)
        doc = traits.to_dict()
        doc.update({"symmetric": br.susceptibility_symmetric(alpha),
                    "invasion_matrix": L.values, "structure_tag": L.structure_tag,
                    "row_traits": L.row_traits()})
    else:
        fv = _load_lambdas(a.lambdas)
        case = a.to.split("-")[-1]
        traits = br.sis_traits_from_lambdas(fv, case, a.mu, a.c)
        L = br.lambdas_from_sis_traits(traits, a.theta)
        doc = traits.to_dict()
        doc.update({"ids": [_jsonable_id(i) for i in fv.ids], "lambdas": fv.values,
                    "invasion_matrix": L.values, "structure_tag": L.structure_tag,
                    "roundtrip_max_error": br.sis_roundtrip_error(fv, case, a.mu, a.c)})
    _emit_json(doc, a.out)
    return EXIT_OK


def _coerce_id(raw, fv: FitnessVector):
    for sid in fv.ids:
        if str(sid) == str(raw):
            return sid
    raise ValidationError(f"unknown species id {raw!r}")


def cmd_hypothesis_test(a, cfg: RunConfig) -> int:
    from .empirics import hypothesis_test, load_sites

    sites = load_sites(a.sites)
    rep = hypothesis_test(sites, a.reference, a.alpha, a.z_crit, renormalize=not a.no_renormalize,
                          method=a.method)
    _emit_json(rep, a.out)
    return EXIT_OK


def cmd_ensemble(a, cfg: RunConfig) -> int:
    from .coexistence import expected_n_curve, prob_k_ode_ensemble

    if a.ode is not None:
        dist = prob_k_ode_ensemble(a.ode, a.runs, cfg.seed, jobs=cfg.jobs)
        doc = {"N": a.ode, "runs": a.runs, "seed": cfg.seed, "mean_n": dist.mean_n,
               "agreement": dist.agreement, "disagreements": dist.disagreements,
               "pmf": [p.to_row() for p in dist.pmf.values()]}
        if _fmt_for(a, cfg) == "json":
            _emit_json(doc, a.out)
        else:
            _emit(rio.rows_csv(["k", "p", "stderr", "ci95", "method"],
                               [(r["k"], r["p"], r["stderr"], r["ci95"], r["method"]) for r in doc["pmf"]]), a.out)
        return EXIT_OK
    curve = expected_n_curve(a.N_list, a.runs, cfg.seed, cfg.numeric_tol)
    if _fmt_for(a, cfg) == "json":
        _emit_json({"runs": a.runs, "seed": cfg.seed,
                    "curve": [{"N": n, "mean_n": m, "sqrt_2N": math.sqrt(2 * n)} for n, m in curve]}, a.out)
    else:
        _emit(rio.rows_csv(["N", "mean_n", "sqrt_2N"], [(n, m, math.sqrt(2 * n)) for n, m in curve]), a.out)
    return EXIT_OK


# ------------------------------------------------------------------ parser ---

def _common(default_format: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="TOML file whose keys set option defaults")
    g.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $REPLICATOR_SEED, then 0)")
    g.add_argument("--jobs", default=1, help="worker processes, or 'auto'")
    g.add_argument("--format", choices=("csv", "json"), default=None, help="output format")
    g.add_argument("--out", default=None, help="output file (stdout if omitted)")
    g.add_argument("--simplex-tol", type=float, default=SIMPLEX_TOL)
    g.add_argument("--numeric-tol", type=float, default=NUMERIC_TOL)
    g.add_argument("--stability-tol", type=float, default=STABILITY_TOL)
    g.add_argument("--log-level", default="WARNING")
    p.set_defaults(default_format=default_format)
    return p


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="replicator", description="Invader-driven replicator toolkit.")
    sub = top.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)

    def add(name, fn, help, fmt="json"):
        sp = sub.add_parser(name, help=help, description=help, parents=[_common(fmt)])
        sp.set_defaults(func=fn)
        return sp

    sp = add("simulate", cmd_simulate, "Integrate the replicator ODE.", "csv")
    sp.add_argument("--lambdas", required=True)
    sp.add_argument("--z0", default="uniform", help="uniform, random, or a state file (id,z)")
    sp.add_argument("--t-max", type=float, default=1e4)
    sp.add_argument("--h", type=float, default=0.01)
    sp.add_argument("--conv-tol", type=float, default=1e-10)
    sp.add_argument("--conv-window", type=int, default=10)
    sp.add_argument("--record-every", type=int, default=1)
    sp.add_argument("--theta", type=float, default=1.0)
    sp.add_argument("--boundary-allowed", action="store_true")
    sp.add_argument("--long", action="store_true", help="long format: tau,species,z,Q")

    sp = add("equilibrium", cmd_equilibrium, "Stable equilibrium by the threshold rule.")
    sp.add_argument("--lambdas", required=True)
    sp.add_argument("--candidates", help="write the candidate table CSV here")
    sp.add_argument("--all-subsets", action="store_true", help="enumerate every subset, not only prefixes")
    sp.add_argument("--max-species", type=int, default=20)

    sp = add("prob", cmd_prob, "Probability of exact-k coexistence.", "csv")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--all-k", action="store_true")
    sp.add_argument("--method", choices=("integral", "oracle", "ode", "closed"), default="integral")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--runs", type=int, default=1000, help="ODE runs for --method ode")
    sp.add_argument("--proposal", choices=("simplex", "beta", "uniform"), default="simplex")
    sp.add_argument("--beta", type=float, nargs=2, default=(1.0, 0.5), metavar=("A", "B"))
    sp.add_argument("--pseudo", action="store_true", help="pseudorandom points instead of Sobol")

    sp = add("invade", cmd_invade, "Classify one invader against a resident community.")
    sp.add_argument("--residents", required=True)
    sp.add_argument("--invader", type=float, required=True)
    sp.add_argument("--invader-id", default=None)
    sp.add_argument("--cross-check", action="store_true")

    sp = add("assemble", cmd_assemble, "Sequential community assembly.", "csv")
    sp.add_argument("--initial", default="empty", help="trait file or 'empty'")
    sp.add_argument("--invaders", required=True, help="trait file or random:<count>:<seed>")
    sp.add_argument("--cross-check", action="store_true")

    sp = add("basin", cmd_basin, "Basin map for all-negative pools (N = 2 or 3).", "csv")
    sp.add_argument("--lambdas", required=True)
    sp.add_argument("--grid", type=int, default=20)

    sp = add("transform", cmd_transform, "Lotka-Volterra or SIS trait transforms.")
    sp.add_argument("--to", required=True, choices=("lv", "sis-case-i", "sis-case-ii", "sis-case-iii"))
    sp.add_argument("--lambdas")
    sp.add_argument("--reference", default=None)
    sp.add_argument("--mu", type=float, default=0.1)
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--theta", type=float, default=1.0)
    sp.add_argument("--alpha", help="alpha matrix CSV (no header) for sis-case-i")

    sp = add("hypothesis-test", cmd_hypothesis_test, "Multi-site linearity and triangle tests.")
    sp.add_argument("--sites", required=True, help="directory of id,z CSV files")
    sp.add_argument("--reference", default=None)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--z-crit", type=float, default=2.0)
    sp.add_argument("--method", choices=("ols", "odr"), default="ols")
    sp.add_argument("--no-renormalize", action="store_true")

    sp = add("ensemble", cmd_ensemble, "Mean community size versus N, or an ODE ensemble.", "csv")
    sp.add_argument("--N-list", type=int, nargs="+", default=[50, 100, 200])
    sp.add_argument("--runs", type=int, default=1000)
    sp.add_argument("--ode", type=int, default=None, metavar="N",
                    help="run the ODE ensemble at this N and report agreement with the threshold rule")
    return top


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage() + "replicator: error: a subcommand is required")
    if args.config:
        p = Path(args.config)
        if not p.exists():
            raise ValidationError(f"no such config file: {args.config}")
        try:
            cfg = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{args.config}: {exc}") from None
        flat = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
        flat.update({k.replace("-", "_"): v for k, v in cfg.get(args.command, {}).items()})
        known = vars(args)
        unknown = sorted(set(flat) - set(known))
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**flat)
        args = parser.parse_args(argv)
    args.format_explicit = args.format is not None
    if args.format is None:
        args.format = args.default_format
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = RunConfig.from_args(args)
        return args.func(args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (ValidationError, DegenerateThresholdError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (IntegrationError, NumericalError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except ReplicatorError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
