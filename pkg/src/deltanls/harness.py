"""Config-driven experiments: classify, evolve, gather evidence, compare."""

from __future__ import annotations

import copy
import csv
import enum
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .classifier import DynamicsVerdict, Label, classify_evolving
from .detectors import (BlowupCaps, BlowupMonitor, ScatterThresholds, cs_inequality_check,
                        scatter_evidence, virial_residuals)
from .evolution import BoundaryMonitor, evolve
from .exceptions import InvalidArgumentError, PropagationError, StepFailure
from .functionals import ground_state_ref, snapshot
from .grid import (PhysParams, Scheme, WaveField, make_grid, sample_gaussian, sample_ground_state,
                   sample_phase_modulated)
from .volterra import boundary_trace_volterra

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

_DATA_VARIANTS = {
    "ground_state": {},
    "scaled_ground_state": {"c": _POS},
    "phase_ground_state": {"gamma": _NUM},
    "gaussian": {"width": _POS, "amplitude": _NUM},
    "file": {"path": {"type": "string", "minLength": 1}},
}


def _variant(kind: str, props: dict, required=None) -> dict:
    return {
        "type": "object",
        "properties": {"kind": {"const": kind}, **props},
        "required": ["kind", *(required if required is not None else props)],
        "additionalProperties": False,
    }


_BASE_DATA = {"oneOf": [_variant(k, v, [] if k == "gaussian" else None) for k, v in _DATA_VARIANTS.items()]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["initial_data"],
    "properties": {
        "p": {"type": "number", "exclusiveMinimum": 3},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"L": _POS, "n": {"type": "integer", "minimum": 3}},
        },
        "dt": _POS,
        "scheme": {"enum": [s.value for s in Scheme]},
        "T": {"type": "number", "minimum": 0},
        "record_stride": {"type": "integer", "minimum": 1},
        "initial_data": {
            "oneOf": _BASE_DATA["oneOf"] + [
                _variant("phase_general", {"mu": _NUM, "base": _BASE_DATA}),
            ],
        },
        "caps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"k_factor": _POS, "amplitude_factor": _POS, "mass_drift": _POS},
        },
        "classifier": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": _POS,
                "t_probe": {"oneOf": [_POS, {"type": "null"}]},
                "max_doublings": {"type": "integer", "minimum": 0},
            },
        },
        "volterra": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"enabled": {"type": "boolean"}, "dt": {"oneOf": [_POS, {"type": "null"}]}},
        },
        "boundary_tol": _POS,
        "stationary_tol": _POS,
        "scatter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "saturation": _POS,
                "exponent_band": _POS,
                "cauchy": _POS,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": ["string", "null"]}},
        },
    },
}

DEFAULTS = {
    "p": 5.0,
    "grid": {"L": 20.0, "n": 4097},
    "dt": 1e-3,
    "scheme": "cn",
    "T": 5.0,
    "record_stride": 10,
    "caps": {"k_factor": 100.0, "amplitude_factor": 10.0, "mass_drift": 0.01},
    "classifier": {"tol": 1e-6, "t_probe": None, "max_doublings": 3},
    "volterra": {"enabled": True, "dt": None},
    "boundary_tol": 1e-4,
    "stationary_tol": 1e-3,
    "scatter": {"window": 0.5, "saturation": 0.05, "exponent_band": 0.15, "cauchy": 0.05},
    "output": {"dir": None},
}


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "initial_data":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


class Outcome(str, enum.Enum):
    SCATTER_EVIDENCE = "ScatterEvidence"
    BLOWUP_EVENT = "BlowupEvent"
    STATIONARY = "Stationary"
    INCONCLUSIVE = "Inconclusive"


EXPECTED_OUTCOMES = {
    Label.SCATTER_FORWARD: {Outcome.SCATTER_EVIDENCE},
    Label.BLOWUP_FORWARD: {Outcome.BLOWUP_EVENT},
    Label.GROUND_STATE_ORBIT: {Outcome.STATIONARY},
}


@dataclass
class ExperimentConfig:
    """Validated experiment description with every default filled in."""

    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise InvalidArgumentError("config must be a JSON object")
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
            raise InvalidArgumentError(f"invalid config at {where}: {exc.message}") from exc
        data = _merge(DEFAULTS, raw)
        n = data["grid"]["n"]
        if n % 2 == 0:
            raise InvalidArgumentError(f"grid.n must be odd, got {n}")
        return cls(data=data, base_dir=Path(base_dir) if base_dir else Path.cwd())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidArgumentError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def params(self) -> PhysParams:
        d = self.data
        return PhysParams(p=d["p"], dt=d["dt"], scheme=Scheme(d["scheme"]))

    def grid(self):
        return make_grid(self.data["grid"]["L"], self.data["grid"]["n"])

    def initial_field(self) -> WaveField:
        return build_initial_data(self.data["initial_data"], self.grid(), self.data["p"], self.base_dir)

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        raw = copy.deepcopy(self.data)
        set_dotted(raw, dotted, value)
        return ExperimentConfig.from_dict(raw, self.base_dir)


def get_dotted(d: dict, dotted: str):
    cur = d
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise InvalidArgumentError(f"config has no field {dotted!r}")
        cur = cur[part]
    return cur


def set_dotted(d: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    cur = d
    for part in parts[:-1]:
        if not isinstance(cur, dict) or part not in cur:
            raise InvalidArgumentError(f"config has no field {dotted!r}")
        cur = cur[part]
    cur[parts[-1]] = value


def _load_samples(path: Path, grid) -> np.ndarray:
    if path.suffix == ".npy":
        vals = np.load(path)
    elif path.suffix == ".csv":
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
        vals = arr[:, 0] + 1j * arr[:, 1] if arr.shape[1] >= 2 else arr[:, 0]
    else:
        raise InvalidArgumentError(f"unsupported initial-data file type {path.suffix!r}")
    vals = np.asarray(vals).reshape(-1)
    if vals.size != grid.n:
        raise InvalidArgumentError(f"{path}: expected {grid.n} samples, found {vals.size}")
    return vals


def build_initial_data(desc: dict, grid, p: float, base_dir=Path(".")) -> WaveField:
    kind = desc["kind"]
    if kind == "ground_state":
        return sample_ground_state(grid, p)
    if kind == "scaled_ground_state":
        return desc["c"] * sample_ground_state(grid, p)
    if kind == "phase_ground_state":
        return sample_phase_modulated(grid, sample_ground_state(grid, p), desc["gamma"])
    if kind == "phase_general":
        base = build_initial_data(desc["base"], grid, p, base_dir)
        return sample_phase_modulated(grid, base, desc["mu"])
    if kind == "gaussian":
        return sample_gaussian(grid, desc.get("width", 1.0), desc.get("amplitude", 1.0))
    if kind == "file":
        path = Path(desc["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        return WaveField(grid, _load_samples(path, grid))
    raise InvalidArgumentError(f"unknown initial-data kind {kind!r}")


@dataclass
class RunReport:
    verdict: DynamicsVerdict
    outcome: Outcome
    agreement: bool | None
    detectors: dict
    constants: dict
    config: dict
    timings: dict
    halt_reason: str
    halt_time: float
    artifacts: dict = field(default_factory=dict)
    series: object = field(default=None, repr=False)
    trace: object = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "config_echo": self.config,
            "constants": self.constants,
            "verdict": self.verdict.to_report(),
            "outcome": self.outcome.value,
            "agreement": self.agreement,
            "detectors": self.detectors,
            "timings": self.timings,
        }


def constants_table(p: float) -> dict:
    ref = ground_state_ref(p)
    out = {
        "p": ref.p, "gamma_c": ref.gamma_c, "sigma_c": ref.sigma_c,
        "a": ref.a_index, "b": ref.b_index,
        "M_Q": ref.M_Q, "K_Q": ref.K_Q, "N_Q": ref.N_Q, "E_Q": ref.E_Q,
    }
    out["residuals"] = ref.closure_residuals()
    return out


def report_constants(p: float) -> str:
    """Render the ground-state constants and identity residuals as a text table."""
    tab = constants_table(p)
    lines = [f"{'quantity':<28}{'value':>24}"]
    for key in ("p", "gamma_c", "sigma_c", "a", "b", "M_Q", "K_Q", "N_Q", "E_Q"):
        lines.append(f"{key:<28}{tab[key]:>24.16g}")
    lines.append(f"{'identity residual':<28}{'':>24}")
    for key, val in tab["residuals"].items():
        lines.append(f"{key:<28}{val:>24.3e}")
    return "\n".join(lines)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def _observe_outcome(event, evidence, trace, u0: WaveField, tol: float) -> Outcome:
    if event is not None:
        return Outcome.BLOWUP_EVENT
    if evidence is not None and evidence.verdict:
        return Outcome.SCATTER_EVIDENCE
    if trace is not None and trace.times.size > 1:
        a0 = abs(u0.center_value)
        if a0 > 0 and np.max(np.abs(np.abs(trace.w) - a0)) <= tol * a0:
            return Outcome.STATIONARY
    return Outcome.INCONCLUSIVE


def _agreement(verdict: DynamicsVerdict, outcome: Outcome):
    if verdict.label is Label.UNDETERMINED:
        return None
    if verdict.label is Label.THRESHOLD_TRICHOTOMY:
        allowed = {Outcome.STATIONARY}
        allowed.add(Outcome.SCATTER_EVIDENCE if verdict.branch.startswith("(i)") else Outcome.BLOWUP_EVENT)
        return outcome in allowed
    return outcome in EXPECTED_OUTCOMES[verdict.label]


def run(config, out_dir=None) -> RunReport:
    """Run one experiment; writes ``series.csv`` and ``report.json`` if an output dir is set."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    d = config.data
    out_dir = out_dir if out_dir is not None else d["output"]["dir"]
    timings = {}
    t_all = time.perf_counter()
    params = config.params
    p = params.p
    u0 = config.initial_field()

    t0 = time.perf_counter()
    clf = d["classifier"]
    verdict = classify_evolving(u0, params, clf["t_probe"], clf["tol"], clf["max_doublings"])
    timings["classify"] = time.perf_counter() - t0

    caps = BlowupCaps(**d["caps"])
    blow = BlowupMonitor(u0, p, caps)
    bound = BoundaryMonitor(u0, d["boundary_tol"])
    t0 = time.perf_counter()
    series = evolve(u0, params, d["T"], observers=[blow, bound], record_stride=d["record_stride"])
    timings["evolve"] = time.perf_counter() - t0
    event = blow.event
    halt_time = float(series.final_state.t)

    trace = None
    evidence = None
    trace_note = None
    t0 = time.perf_counter()
    vol = d["volterra"]
    if event is None and vol["enabled"] and d["T"] > 0:
        try:
            trace = boundary_trace_volterra(u0, p, d["T"], vol["dt"] or params.dt,
                                            amplitude_cap=blow.caps.amplitude_cap)
            trace_note = trace.halted
        except StepFailure as exc:
            trace_note = f"boundary solver failed: {exc}"
    timings["volterra"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sc = d["scatter"]
    thresholds = ScatterThresholds(saturation=sc["saturation"], exponent_band=sc["exponent_band"],
                                   cauchy=sc["cauchy"])
    if trace is not None and trace.halted is None:
        try:
            evidence = scatter_evidence(trace, None, p, window=sc["window"], thresholds=thresholds)
        except InvalidArgumentError as exc:
            trace_note = f"scatter evidence unavailable: {exc}"
    try:
        virial = virial_residuals(series)
    except InvalidArgumentError:
        virial = None
    try:
        cs = cs_inequality_check(u0, p)
    except InvalidArgumentError:
        cs = None
    timings["detectors"] = time.perf_counter() - t0

    outcome = _observe_outcome(event, evidence, trace, u0, d["stationary_tol"])
    agreement = _agreement(verdict, outcome)
    detectors = {
        "blowup": None if event is None else event.to_dict(),
        "scatter": None if evidence is None else evidence.to_dict(),
        "virial_residual": virial,
        "cs_slack": cs,
        "halt_reason": series.halt_reason,
        "halt_time": halt_time,
        "boundary_trip_time": bound.tripped_at,
        "boundary_trace_note": trace_note,
    }
    if trace is not None:
        detectors["trace_final_abs"] = float(abs(trace.w[-1]))
    timings["total"] = time.perf_counter() - t_all
    report = RunReport(
        verdict=verdict, outcome=outcome, agreement=agreement,
        detectors=_json_safe(detectors), constants=_json_safe(constants_table(p)),
        config=_json_safe(d), timings=timings, halt_reason=series.halt_reason,
        halt_time=halt_time, series=series, trace=trace,
    )
    if out_dir is not None:
        write_artifacts(report, out_dir)
    return report


def write_artifacts(report: RunReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "series.csv"
    json_path = out / "report.json"
    report.series.to_csv(csv_path)
    with open(json_path, "w") as fh:
        json.dump(_json_safe(report.to_json()), fh, indent=2, sort_keys=False)
        fh.write("\n")
    report.artifacts = {"series": str(csv_path), "report": str(json_path)}
    return report.artifacts


# -- sweeps -----------------------------------------------------------------

SWEEP_COLUMNS = ("value", "predicted", "observed", "agreement", "em", "km", "nm", "halt_time", "error")


def _sweep_row(args) -> dict:
    data, base_dir, axis, value, out_dir = args
    row = {"value": value}
    try:
        cfg = ExperimentConfig.from_dict(data, base_dir).with_value(axis, value)
        rep = run(cfg, out_dir)
        q = rep.verdict.quantities
        row.update(predicted=rep.verdict.label.value, observed=rep.outcome.value,
                   agreement=rep.agreement, em=q.em, km=q.km, nm=q.nm,
                   halt_time=rep.halt_time, error=None)
    except Exception as exc:  # per-row failures are recorded, the sweep continues
        row.update(predicted=None, observed=None, agreement=None, em=None, km=None, nm=None,
                   halt_time=None, error=f"{type(exc).__name__}: {exc}")
    return row


def sweep(config, axis: str, values, jobs: int = 1, out_dir=None) -> list[dict]:
    """Run one experiment per axis value; rows come back sorted by value."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    values = [float(v) for v in values]
    if not values:
        return []
    current = get_dotted(config.data, axis)
    if isinstance(current, bool) or not isinstance(current, (int, float)):
        raise InvalidArgumentError(f"sweep axis {axis!r} is not a numeric field")
    if jobs < 1:
        raise InvalidArgumentError("jobs must be >= 1")
    root = out_dir if out_dir is not None else config.data["output"]["dir"]
    tasks = []
    for v in values:
        row_dir = None if root is None else os.path.join(root, f"{axis}={v:g}")
        tasks.append((config.data, str(config.base_dir), axis, v, row_dir))
    if jobs == 1:
        rows = [_sweep_row(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    rows.sort(key=lambda r: r["value"])
    if root is not None:
        write_sweep_table(rows, Path(root) / "sweep.csv")
    return rows


def write_sweep_table(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)
