"""CSV/JSON readers and writers with exact float round-trips.

Floats are written with 17 significant digits, which is enough to recover
every IEEE double exactly.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .core import FitnessVector, SimplexState, _jsonable_id, validate_simplex
from .errors import ValidationError


def fmt(v) -> str:
    return format(float(v), ".17g")


def _parse_ids(raw: list[str]) -> list:
    try:
        return [int(r) for r in raw]
    except ValueError:
        return [r.strip() for r in raw]


def _read_columns(path, value_col: str) -> tuple[list, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        rdr = csv.DictReader(fh)
        cols = set(rdr.fieldnames or ())
        if value_col not in cols:
            raise ValidationError(f"{path}: missing column {value_col!r}")
        rows = list(rdr)
    if not rows:
        raise ValidationError(f"{path}: no rows")
    if "id" in cols:
        ids = _parse_ids([r["id"] for r in rows])
    else:
        ids = list(range(1, len(rows) + 1))
    try:
        vals = np.array([float(r[value_col]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: non-numeric {value_col} value") from exc
    return ids, vals


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def _is_json(path) -> bool:
    return Path(path).suffix.lower() == ".json"


def read_fitness_vector(path) -> FitnessVector:
    """``id,lambda`` CSV, or JSON ``{"ids": [...], "lambdas": [...]}`` / a bare list."""
    if _is_json(path):
        doc = _read_json(path)
        if isinstance(doc, list):
            return FitnessVector.from_values(doc)
        if "lambdas" not in doc:
            raise ValidationError(f"{path}: missing 'lambdas'")
        return FitnessVector.from_values(doc["lambdas"], doc.get("ids"))
    ids, vals = _read_columns(path, "lambda")
    return FitnessVector.from_values(vals, ids)


def fitness_vector_csv(fv: FitnessVector) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "lambda"])
    for sid, v in zip(fv.ids, fv.values):
        w.writerow([sid, fmt(v)])
    return buf.getvalue()


def write_fitness_vector(fv: FitnessVector, path) -> None:
    if _is_json(path):
        doc = {"ids": [_jsonable_id(i) for i in fv.ids], "lambdas": [float(v) for v in fv.values]}
        Path(path).write_text(dumps(doc) + "\n")
    else:
        Path(path).write_text(fitness_vector_csv(fv))


def read_simplex_state(path, tol: float = 1e-9) -> SimplexState:
    """``id,z`` CSV or JSON ``{"ids": [...], "z": [...], "tau": t}``."""
    if _is_json(path):
        doc = _read_json(path)
        if isinstance(doc, list):
            return validate_simplex(doc, tol)
        return validate_simplex(doc["z"], tol, float(doc.get("tau", 0.0)), doc.get("ids"))
    ids, vals = _read_columns(path, "z")
    return validate_simplex(vals, tol, 0.0, ids)


def write_simplex_state(state: SimplexState, path) -> None:
    ids = state.ids if state.ids is not None else tuple(range(1, len(state) + 1))
    if _is_json(path):
        doc = {"ids": [_jsonable_id(i) for i in ids], "z": [float(v) for v in state.z], "tau": float(state.tau)}
        Path(path).write_text(dumps(doc) + "\n")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "z"])
    for sid, v in zip(ids, state.z):
        w.writerow([sid, fmt(v)])
    Path(path).write_text(buf.getvalue())


def align_state(state: SimplexState, fv: FitnessVector) -> np.ndarray:
    """Frequencies in ``fv``'s rank order, matched by id when the state carries ids."""
    z = np.asarray(state.z)
    if z.size != len(fv):
        raise ValidationError(f"state has {z.size} entries, pool has {len(fv)}")
    if state.ids is None:
        return fv.to_rank_order(z)
    pos = {sid: i for i, sid in enumerate(state.ids)}
    try:
        return np.array([z[pos[sid]] for sid in fv.ids])
    except KeyError as exc:
        raise ValidationError(f"state lacks species {exc.args[0]!r}") from None


def _floatify(obj):
    if isinstance(obj, dict):
        return {str(k): _floatify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_floatify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _floatify(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON; non-finite floats become null."""
    return json.dumps(_floatify(obj), indent=2, sort_keys=False, allow_nan=False)


def trajectory_csv(tr, ids, long: bool = False) -> str:
    """Trajectory as ``tau, z_<id>..., Q`` rows, or long ``tau, species, z, Q``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if long:
        w.writerow(["tau", "species", "z", "Q"])
        for t, z, q in zip(tr.times, tr.states, tr.q_series):
            for sid, v in zip(ids, z):
                w.writerow([fmt(t), sid, fmt(v), fmt(q)])
    else:
        w.writerow(["tau", *[f"z_{sid}" for sid in ids], "Q"])
        for t, z, q in zip(tr.times, tr.states, tr.q_series):
            w.writerow([fmt(t), *[fmt(v) for v in z], fmt(q)])
    return buf.getvalue()


def rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (fmt(v) if isinstance(v, (float, np.floating)) else v) for v in r])
    return buf.getvalue()
