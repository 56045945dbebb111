"""Scenario files, result CSV/JSON persistence and run manifests.

A scenario is a JSON object with the sections ``kind``, ``model``, ``boundary``,
``target``, ``constraints``, ``solver``, ``tracking`` and (for races) ``race``.
Overrides are dotted ``section.key=value`` strings applied after the file is
parsed; a bare ``key=value`` is accepted when exactly one section owns ``key``.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from dmcc import __version__
from dmcc.errors import ValidationError
from dmcc.model import CONFIGS, ModelParams, end_effector_position
from dmcc.nlp import SolverOptions
from dmcc.planner import HandoverSpec, PlanResult
from dmcc.targets import preset

SCHEMA_VERSION = 1
OUTPUT_ENV = "DMCC_OUTPUT_DIR"

PLAN_COLUMNS = (
    ("t", "s"), ("x", "m"), ("y", "m"), ("z", "m"), ("phi", "rad"), ("theta", "rad"), ("psi", "rad"),
    ("alpha", "rad"), ("f1", "N"), ("f2", "N"), ("f3", "N"), ("f4", "N"), ("tau_servo", "N*m"),
    ("eps", "1"), ("kappa", "1"), ("nu", "m"), ("ee_x", "m"), ("ee_y", "m"), ("ee_z", "m"),
)
TRACK_COLUMNS = (
    ("t", "s"), ("x", "m"), ("y", "m"), ("z", "m"), ("qw", "1"), ("qx", "1"), ("qy", "1"), ("qz", "1"),
    ("vx", "m/s"), ("vy", "m/s"), ("vz", "m/s"), ("wx", "rad/s"), ("wy", "rad/s"), ("wz", "rad/s"),
    ("thrust", "m/s^2"), ("x_ref", "m"), ("y_ref", "m"), ("z_ref", "m"), ("alpha", "rad"),
    ("error", "m"), ("degraded", "1"),
)
SWEEP_COLUMNS = (("n_waypoints", "1"), ("mode", "-"), ("t_N", "s"), ("wall_time", "s"), ("optimal", "1"))
SECTIONS = ("model", "boundary", "target", "constraints", "solver", "tracking", "race")


def header(columns) -> list[str]:
    return [f"{name} [{unit}]" for name, unit in columns]


def fmt(v) -> str:
    """Shortest round-tripping float text; empty for missing values."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# -- scenarios ---------------------------------------------------------------

def default_tracking() -> dict:
    from dmcc.tracking import NmpcConfig
    return {"nmpc": NmpcConfig().to_dict(), "disturbance_body": [0.0, 0.0, 0.0], "gpr": False,
            "duration": 20.0}


def scenario_from_preset(name: str) -> dict:
    spec = preset(name)
    scen = {"schema_version": SCHEMA_VERSION, "name": name, "model": {"config": "table1"},
            "solver": SolverOptions(backend="ipopt").to_dict(), "tracking": default_tracking()}
    if isinstance(spec, HandoverSpec):
        scen["kind"] = "handover"
        scen.update(spec.to_dict())
    else:
        scen["kind"] = "race"
        scen["race"] = spec.to_dict()
    return scen


def model_from_section(sec: dict) -> ModelParams:
    sec = dict(sec or {})
    name = sec.pop("config", "table1")
    if name not in CONFIGS:
        raise ValidationError({"model.config": f"must be one of {sorted(CONFIGS)}"})
    base = CONFIGS[name]().to_dict()
    unknown = set(sec) - set(base)
    if unknown:
        raise ValidationError({f"model.{k}": "unknown field" for k in sorted(unknown)})
    base.update(sec)
    # derived input bounds follow the masses unless given explicitly
    if "u_min" not in sec:
        base["u_min"] = None
    if "u_max" not in sec:
        base["u_max"] = None
    try:
        return ModelParams.from_dict(base).validate()
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError({"model": str(exc)}) from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(scenario: dict, overrides) -> dict:
    scen = copy.deepcopy(scenario)
    for item in overrides or ():
        if "=" not in item:
            raise ValidationError({item: "override must look like key=value"})
        key, text = item.split("=", 1)
        path = key.strip().split(".")
        if len(path) == 1:
            owners = [s for s in SECTIONS if isinstance(scen.get(s), dict) and path[0] in scen[s]]
            if len(owners) != 1:
                where = "no section" if not owners else f"sections {owners}"
                raise ValidationError({key: f"bare key is ambiguous or unknown ({where}); use section.key"})
            path = [owners[0], path[0]]
        node = scen
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError({key: f"'{part}' is not a section"})
        node[path[-1]] = _parse_value(text)
    return scen


def load_scenario(source=None, preset_name: str | None = None, overrides=()) -> dict:
    """Read a scenario file (or a preset), apply overrides and validate."""
    if preset_name is not None:
        try:
            scen = scenario_from_preset(preset_name)
        except KeyError:
            raise ValidationError({"preset": f"unknown preset {preset_name!r}"}) from None
    else:
        try:
            scen = json.loads(Path(source).read_text())
        except FileNotFoundError:
            raise ValidationError({"scenario": f"file not found: {source}"}) from None
        except json.JSONDecodeError as exc:
            raise ValidationError({"scenario": f"invalid JSON at line {exc.lineno}: {exc.msg}"}) from None
        if not isinstance(scen, dict):
            raise ValidationError({"scenario": "top level must be an object"})
    scen = apply_overrides(scen, overrides)
    build(scen)
    return scen


def build(scen: dict):
    """Turn a scenario dict into (kind, spec, params, solver options, tracking dict)."""
    from dmcc.racing import RaceSpec

    errors = {}
    unknown = set(scen) - set(SECTIONS) - {"kind", "name", "schema_version"}
    for k in sorted(unknown):
        errors[k] = "unknown section"
    if scen.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errors["schema_version"] = f"expected {SCHEMA_VERSION}"
    kind = scen.get("kind", "handover")
    if kind not in ("handover", "race"):
        errors["kind"] = "must be 'handover' or 'race'"
    if errors:
        raise ValidationError(errors)
    params = model_from_section(scen.get("model"))
    try:
        opts = SolverOptions.from_dict(scen.get("solver", {}))
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError({"solver": str(exc)}) from None
    if kind == "handover":
        spec = HandoverSpec.from_dict(scen).validate(params)
    else:
        if "race" not in scen:
            raise ValidationError({"race": "missing section"})
        spec = RaceSpec.from_dict(scen["race"]).validate()
    tracking = dict(default_tracking())
    tracking.update(scen.get("tracking", {}))
    return kind, spec, params, opts, tracking


def config_hash(scen: dict) -> str:
    canon = json.dumps(scen, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def output_dir(cli_value: str | None = None) -> Path:
    d = Path(cli_value or os.environ.get(OUTPUT_ENV, "dmcc_out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- atomic writes ----------------------------------------------------------

def atomic_write_text(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_text(columns, rows) -> str:
    lines = [",".join(header(columns))]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path: Path, columns, rows):
    atomic_write_text(path, _csv_text(columns, rows))


def read_csv(path: Path, columns, text_columns=()):
    """Parse a file written by :func:`write_csv`; blanks become NaN.

    Returns a float array, or a list of row lists when ``text_columns`` names
    columns to keep as strings.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError({str(path): str(exc)}) from None
    if not rows or rows[0] != header(columns):
        raise ValidationError({str(path): "header does not match the expected column schema"})
    keep = {i for i, (name, _) in enumerate(columns) if name in text_columns}
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns):
            raise ValidationError({f"{path}:{i}": f"expected {len(columns)} fields, got {len(row)}"})
        try:
            out.append([v if j in keep else (float(v) if v != "" else np.nan) for j, v in enumerate(row)])
        except ValueError:
            raise ValidationError({f"{path}:{i}": "non-numeric field"}) from None
    if not out:
        raise ValidationError({str(path): "no data rows"})
    return out if keep else np.array(out)


# -- plan results ---------------------------------------------------------

def plan_rows(result: PlanResult):
    t = result.grid.times
    q, u = result.path.q_knots, result.path.u_knots
    ee = np.array([end_effector_position(qk, result.params) for qk in q])
    N = len(t) - 1
    for k in range(N + 1):
        eps = result.epsilon[k] if k < N else None
        nu = result.nu[k] if k < N else None
        yield [t[k], *q[k], *u[k], eps, result.kappa[k], nu, *ee[k]]


def write_plan(result: PlanResult, out: Path, stem: str = "plan", scenario: dict | None = None) -> list[Path]:
    out = Path(out)
    csv_path = out / f"{stem}.csv"
    meta_path = out / f"{stem}.json"
    write_csv(csv_path, PLAN_COLUMNS, plan_rows(result))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "t_N": result.t_N,
        "N": result.grid.N,
        "report": result.report.to_dict(),
        "invariants": _jsonable(result.check_invariants()),
        "scenario": scenario,
    }
    write_json(meta_path, meta)
    return [csv_path, meta_path]


def read_plan(csv_path: Path, meta_path: Path | None = None):
    """Return (table, metadata) for a plan written by :func:`write_plan`."""
    csv_path = Path(csv_path)
    table = read_csv(csv_path, PLAN_COLUMNS)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError({str(meta_path): str(exc)}) from None
    if np.any(~np.isfinite(table[:, :13])) or np.any(np.diff(table[:, 0]) <= 0):
        raise ValidationError({str(csv_path): "times or configurations are corrupted"})
    return table, meta


def plan_from_files(csv_path: Path, meta_path: Path | None = None) -> PlanResult:
    """Rebuild a PlanResult (without solver multipliers) from its files."""
    from dmcc.discrete import DiscretePath, KnotGrid
    from dmcc.nlp import SolveReport, Status

    table, meta = read_plan(csv_path, meta_path)
    scen = meta.get("scenario")
    if not scen:
        raise ValidationError({"metadata.scenario": "missing; cannot rebuild the model"})
    _, spec, params, _, _ = build(scen)
    N = len(table) - 1
    if N != spec.N:
        raise ValidationError({str(csv_path): f"{N + 1} rows but scenario has N={spec.N}"})
    rep = meta.get("report", {})
    report = SolveReport(status=Status(rep.get("status", "Optimal")), iterations=rep.get("iterations", 0),
                         objective=rep.get("objective", float("nan")),
                         max_violation=rep.get("max_violation", float("nan")),
                         kkt_residual=rep.get("kkt_residual", float("nan")),
                         wall_time=rep.get("wall_time", 0.0), backend=rep.get("backend", ""),
                         message=rep.get("message", ""))
    return PlanResult(
        grid=KnotGrid(N, float(table[-1, 0])),
        path=DiscretePath(table[:, 1:8], table[:, 8:13]),
        epsilon=table[:-1, 13], kappa=table[:, 14], nu=table[:-1, 15],
        report=report, spec=spec, params=params,
    )


def race_columns(n_waypoints: int):
    cols = [("t", "s"), ("x", "m"), ("y", "m"), ("z", "m"), ("phi", "rad"), ("theta", "rad"), ("psi", "rad"),
            ("f1", "N"), ("f2", "N"), ("f3", "N"), ("f4", "N")]
    cols += [(f"eps_{j}", "1") for j in range(n_waypoints)]
    return tuple(cols)


def race_rows(result):
    N = result.spec.N
    t = np.linspace(0.0, result.t_N, N + 1)
    for k in range(N + 1):
        eps = [result.epsilon[j, k] if k < N else None for j in range(result.spec.n_waypoints)]
        yield [t[k], *result.states[k, :6], *result.u[k], *eps]


def tracking_rows(log):
    err = log.position_error
    for k in range(len(log.t)):
        yield [log.t[k], *log.x[k, :3], *log.x[k, 3:7], *log.x[k, 7:10], *log.u[k], *log.x_ref[k, :3],
               log.alpha[k], err[k], float(log.degraded[k])]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# -- manifest ---------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config_hash: str
    parameters: dict
    solver_report: dict | None
    outputs: list
    wall_time: float
    tool_version: str = __version__
    created_unix: float = field(default_factory=time.time)

    def write(self, out: Path, name: str = "manifest.json") -> Path:
        path = Path(out) / name
        d = asdict(self)
        d["outputs"] = [str(Path(p).name) for p in self.outputs]
        write_json(path, _jsonable(d))
        return path
