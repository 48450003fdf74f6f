"""Scenario configs and the classify -> bounds -> run -> trace -> audit pipeline.

A scenario is a JSON file::

    {
      "name": "thm1_global",
      "closure": {"family": "Affine", "params": [1, 1]},
      "rho0": {"family": "Sine", "params": [0.1, 1, 0.2]},
      "u0": {"family": "Constant", "params": [0]},
      "grid": {"x_lo": -3.14159, "x_hi": 3.14159, "n_cells": 400, "boundary": "Periodic"},
      "cfl": 0.5, "t_end": 20, "output_times": [5, 10, 20],
      "mode": "Primitive", "guards": {"guard": 1e4, "resolution": 0.1},
      "branch": "auto", "seed": 0
    }

Only ``name``, ``closure``, ``rho0`` and ``u0`` are required.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .characteristics import XPATH, GridFieldProvider, estimate_blowup_rate, integrate_e_ode, riemann_R_array, trace_path
from .closures import ClosureSpec
from .errors import InsufficientSamples, ParseError, ThresholdLabError, ValidationError
from .grid_solver import AUGMENTED, BOUNDARIES, PERIODIC, PRIMITIVE, AugGridState, RunConfig, blowup_threshold, run
from .profiles import ProfileSpec
from .thresholds import BLOWUP, BRANCHES, audit, classify, compute_bounds

N_PATHS = 16
DEFAULT_GRID = {"x_lo": -math.pi, "x_hi": math.pi, "n_cells": 400, "boundary": PERIODIC}
KNOWN_KEYS = {"name", "closure", "rho0", "u0", "grid", "cfl", "t_end", "output_times", "mode", "guards",
              "branch", "seed", "audit_C", "expected", "description"}


@dataclass
class ScenarioConfig:
    name: str
    closure: ClosureSpec
    rho0: ProfileSpec
    u0: ProfileSpec
    x_lo: float = DEFAULT_GRID["x_lo"]
    x_hi: float = DEFAULT_GRID["x_hi"]
    n_cells: int = DEFAULT_GRID["n_cells"]
    boundary: str = PERIODIC
    cfl: float = 0.5
    t_end: float = 1.0
    output_times: tuple = ()
    mode: str = PRIMITIVE
    guard: float = 1e4
    resolution_guard: Optional[float] = 0.1
    branch: str = "auto"
    seed: int = 0
    audit_C: float = 5.0
    expected: Optional[dict] = None
    description: str = ""

    def __post_init__(self):
        validate(self)

    def to_json(self):
        return {
            "name": self.name,
            "closure": self.closure.to_json(),
            "rho0": self.rho0.to_json(),
            "u0": self.u0.to_json(),
            "grid": {"x_lo": self.x_lo, "x_hi": self.x_hi, "n_cells": self.n_cells, "boundary": self.boundary},
            "cfl": self.cfl,
            "t_end": self.t_end,
            "output_times": list(self.output_times),
            "mode": self.mode,
            "guards": {"guard": self.guard, "resolution": self.resolution_guard},
            "branch": self.branch,
            "seed": self.seed,
        }

    def with_overrides(self, cfl=None, cells=None, t_end=None):
        changes = {}
        if cfl is not None:
            changes["cfl"] = float(cfl)
        if cells is not None:
            changes["n_cells"] = int(cells)
        if t_end is not None:
            changes["t_end"] = float(t_end)
            changes["output_times"] = tuple(t for t in self.output_times if t <= float(t_end))
        return replace(self, **changes)


def validate(cfg: ScenarioConfig):
    if cfg.n_cells < 16:
        raise ValidationError("n_cells ≥ 16")
    if not cfg.t_end > 0:
        raise ValidationError("t_end > 0")
    if not cfg.x_hi > cfg.x_lo:
        raise ValidationError("x_hi > x_lo")
    if not 0.0 < cfg.cfl <= 1.0:
        raise ValidationError("0 < cfl ≤ 1")
    times = list(cfg.output_times)
    if times != sorted(times) or any(t < 0 or t > cfg.t_end for t in times):
        raise ValidationError("output_times ⊂ [0, t_end] sorted")
    if cfg.boundary not in BOUNDARIES:
        raise ValidationError(f"boundary in {BOUNDARIES}")
    if cfg.mode not in (PRIMITIVE, AUGMENTED):
        raise ValidationError(f"mode in {(PRIMITIVE, AUGMENTED)}")
    if cfg.branch != "auto" and cfg.branch not in BRANCHES:
        raise ValidationError(f"branch in {('auto',) + BRANCHES}")
    if not cfg.guard > 0:
        raise ValidationError("guard > 0")


def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _spec(cls, obj, key, text):
    if not isinstance(obj, dict) or "family" not in obj:
        raise ParseError("expected an object with 'family' and 'params'", key, _line_of(text, key))
    try:
        return cls.from_json(obj)
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), key, _line_of(text, key)) from None


def parse_config(text: str, source="<string>") -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {source}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ParseError(f"{source}: top level must be an object", line=1)
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ParseError(f"unknown key {unknown[0]!r}", unknown[0], _line_of(text, unknown[0]))
    for key in ("name", "closure", "rho0", "u0"):
        if key not in raw:
            raise ParseError("missing required field", key)
    kw = {
        "name": str(raw["name"]),
        "closure": _spec(ClosureSpec, raw["closure"], "closure", text),
        "rho0": _spec(ProfileSpec, raw["rho0"], "rho0", text),
        "u0": _spec(ProfileSpec, raw["u0"], "u0", text),
    }
    grid = dict(DEFAULT_GRID)
    grid.update(raw.get("grid", {}))
    guards = raw.get("guards", {})
    try:
        kw.update(
            x_lo=float(grid["x_lo"]),
            x_hi=float(grid["x_hi"]),
            n_cells=int(grid["n_cells"]),
            boundary=str(grid["boundary"]),
            cfl=float(raw.get("cfl", 0.5)),
            t_end=float(raw.get("t_end", 1.0)),
            output_times=tuple(float(t) for t in raw.get("output_times", ())),
            mode=str(raw.get("mode", PRIMITIVE)),
            guard=float(guards.get("guard", 1e4)),
            resolution_guard=None if guards.get("resolution", 0.1) is None else float(guards.get("resolution", 0.1)),
            branch=str(raw.get("branch", "auto")),
            seed=int(raw.get("seed", 0)),
            audit_C=float(raw.get("audit_C", 5.0)),
            expected=raw.get("expected"),
            description=str(raw.get("description", "")),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"bad value: {exc}") from None
    return ScenarioConfig(**kw)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def preset_paths():
    """Shipped preset scenario files, sorted by name."""
    root = resources.files("threshold_lab") / "presets"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def load_presets():
    return [load_config(p) for p in preset_paths()]


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class ScenarioOutcome:
    name: str
    status: int
    verdict: object = None
    bounds: object = None
    run: object = None
    paths: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    blowup_records: list = field(default_factory=list)
    error: Optional[str] = None
    out_dir: Optional[Path] = None

    @property
    def tc_numeric(self):
        if self.run is not None and self.run.termination.kind == "BlowupGuard":
            return self.run.termination.t
        return None

    @property
    def audit_pass_count(self):
        return sum(1 for c in self.audit if c.passed is True)


def run_config(cfg: ScenarioConfig) -> RunConfig:
    return RunConfig(
        spec=cfg.closure, rho0=cfg.rho0, u0=cfg.u0, x_lo=cfg.x_lo, x_hi=cfg.x_hi, n_cells=cfg.n_cells,
        t_end=cfg.t_end, boundary=cfg.boundary, cfl=cfg.cfl, output_times=cfg.output_times, mode=cfg.mode,
        guard=cfg.guard, resolution_guard=cfg.resolution_guard, trace_dt=cfg.t_end / 200.0,
    )


def seed_points(cfg: ScenarioConfig, n=N_PATHS):
    h = (cfg.x_hi - cfg.x_lo) / n
    return cfg.x_lo + h * (np.arange(n) + 0.5)


def trace_paths(cfg, result, n=N_PATHS):
    snaps = result.trace_snapshots
    if len(snaps) < 2:
        return []
    provider = GridFieldProvider(snaps)
    t_stop = provider.t_max
    dt_max = cfg.t_end / 200.0
    return [trace_path(provider, cfg.closure, x0, XPATH, t_stop, dt_max, u_ref=result.u_ref)
            for x0 in seed_points(cfg, n)]


def blowup_records(cfg, verdict, result):
    """e-ODE along the witness particle, fed with the grid density it sees."""
    if verdict.outcome != BLOWUP:
        return []
    rec = {"witness_x": verdict.witness_x, "tc_upper": verdict.tc_upper, "e0": verdict.min_e0}
    term = result.termination
    rec["grid"] = term.to_json()
    rec["guard_level"] = blowup_threshold(run_config(cfg), (cfg.x_hi - cfg.x_lo) / cfg.n_cells)
    try:
        fit = estimate_blowup_rate(result.monitors["t"], result.monitors["e_min"])
        rec["grid_rate"] = fit._asdict()
    except InsufficientSamples as exc:
        rec["grid_rate"] = {"error": str(exc)}
    x0 = verdict.witness_x
    if x0 is not None and cfg.x_lo <= x0 <= cfg.x_hi and len(result.trace_snapshots) >= 2:
        path = trace_path(GridFieldProvider(result.trace_snapshots), cfg.closure, x0, XPATH,
                          result.trace_snapshots[-1].t, cfg.t_end / 200.0)
        rho_path = (path.t, np.maximum(path.rho, 0.0))
    else:
        rho_path = 0.0
    ode = integrate_e_ode(rho_path, verdict.min_e0, 1.5 * verdict.tc_upper)
    rec["ode"] = ode.blowup
    if ode.blowup is not None:
        try:
            rec["ode_rate"] = estimate_blowup_rate(ode.t, ode.e)._asdict()
        except InsufficientSamples as exc:
            rec["ode_rate"] = {"error": str(exc)}
    return [rec]


def execute(cfg: ScenarioConfig) -> ScenarioOutcome:
    """Run the pipeline in memory; nothing is written."""
    out = ScenarioOutcome(cfg.name, 0)
    try:
        out.verdict = classify(cfg.closure, cfg.rho0, cfg.u0, cfg.branch)
        out.bounds = compute_bounds(cfg.closure, cfg.rho0, cfg.u0)
        out.run = run(run_config(cfg))
    except (ThresholdLabError, ValueError) as exc:
        out.status, out.error = 2, f"{type(exc).__name__}: {exc}"
        return out
    if out.run.termination.kind == "CflCollapse":
        out.status, out.error = 2, f"CflCollapse at t = {out.run.termination.t}"
    out.paths = trace_paths(cfg, out.run)
    out.blowup_records = blowup_records(cfg, out.verdict, out.run)
    out.audit = audit(out.run, out.bounds, out.verdict, cfg.audit_C, out.paths, cfg.closure, cfg.rho0, cfg.u0)
    return out


def run_scenario(cfg: ScenarioConfig, out_dir) -> ScenarioOutcome:
    """Execute and write ``fields.csv``, ``paths.csv`` and ``diagnostics.json``.

    Status 0 means the pipeline completed (whatever the audit says), 2 a
    solver failure, 1 an I/O failure.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        return ScenarioOutcome(cfg.name, 1, error=f"cannot write to {out_dir}: {exc.strerror or exc}")
    outcome = execute(cfg)
    outcome.out_dir = out_dir
    try:
        if outcome.run is not None:
            write_fields(out_dir / "fields.csv", cfg, outcome.run)
            write_paths(out_dir / "paths.csv", outcome.paths)
        write_diagnostics(out_dir / "diagnostics.json", cfg, outcome)
    except OSError as exc:
        outcome.status, outcome.error = 1, f"writing {exc.filename}: {exc.strerror or exc}"
    return outcome


# ---------------------------------------------------------------------------
# Writers


def _g(v):
    return "%.17g" % v


def write_fields(path, cfg, result):
    aug = cfg.mode == AUGMENTED
    header = ["t", "x", "rho", "u", "e", "R"] + (["n", "v", "q", "q_defect"] if aug else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in result.snapshots:
            R = riemann_R_array(cfg.closure, s.rho, s.u, result.u_ref)
            cols = [np.full(s.n_cells, s.t), s.x, s.rho, s.u, s.e, R]
            if isinstance(s, AugGridState):
                cols += [s.n, s.v, s.q, s.q_defect]
            for row in zip(*cols):
                w.writerow([_g(v) for v in row])


def write_paths(path, paths):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "kind", "t", "x", "rho", "u", "e", "R"])
        for k, p in enumerate(paths):
            for row in zip(p.t, p.x, p.rho, p.u, p.e, p.R):
                w.writerow([k, p.kind] + [_g(v) for v in row])


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def diagnostics(cfg, outcome):
    r = outcome.run
    doc = {
        "name": cfg.name,
        "status": outcome.status,
        "error": outcome.error,
        "verdict": outcome.verdict.to_json() if outcome.verdict else None,
        "hypothesis_log": [h.to_json() for h in outcome.verdict.hypothesis_log] if outcome.verdict else [],
        "bounds": outcome.bounds.to_json() if outcome.bounds else None,
        "audit": [c.to_json() for c in outcome.audit],
        "blowup_records": outcome.blowup_records,
        "paths": [{"path_id": k, "origin": p.origin, "terminated": p.terminated.to_json()}
                  for k, p in enumerate(outcome.paths)],
        "run_metadata": {
            "scheme": "local Lax-Friedrichs (rho) + upwind (u), forward Euler",
            "N": cfg.n_cells,
            "cfl": cfg.cfl,
            "boundary": cfg.boundary,
            "boundary_note": "the analysed problem is posed on the whole line; this boundary is a modelling choice",
            "mode": cfg.mode,
            "x_range": [cfg.x_lo, cfg.x_hi],
            "t_end": cfg.t_end,
            "guard": cfg.guard,
            "resolution_guard": cfg.resolution_guard,
            "seed": cfg.seed,
        },
        "config": cfg.to_json(),
    }
    if r is not None:
        doc["run_metadata"].update(
            termination=r.termination.to_json(),
            n_steps=r.n_steps,
            clip_events=r.clip_events,
            u_ref=r.u_ref,
        )
    return _clean(doc)


def write_diagnostics(path, cfg, outcome):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(diagnostics(cfg, outcome), fh, indent=2, allow_nan=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Sweeps

SWEEP_COLUMNS = ["name", "branch", "outcome", "tc_upper", "tc_numeric", "audit_pass_count"]


def _sweep_one(args):
    cfg, out_dir = args
    o = run_scenario(cfg, out_dir)
    v = o.verdict
    return {
        "name": cfg.name,
        "branch": v.branch if v else "",
        "outcome": v.outcome if v else "Error",
        "tc_upper": _g(v.tc_upper) if v and v.tc_upper is not None else "",
        "tc_numeric": _g(o.tc_numeric) if o.tc_numeric is not None else "",
        "audit_pass_count": o.audit_pass_count,
        "status": o.status,
    }


def sweep(configs, out_dir, parallel=False, max_workers=None):
    """Run every config into ``out_dir/<name>/`` and write ``out_dir/sweep.csv``.

    Rows follow the order of ``configs`` whether or not the runs are
    concurrent. Returns the list of row dicts (with an extra ``status``).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ValidationError("scenario names in a sweep must be unique")
    jobs = [(c, out_dir / c.name) for c in configs]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers or min(len(jobs), os.cpu_count() or 1)) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows
