"""First-order finite-volume solver for the relaxation system

    rho_t + (rho f(rho, u))_x = 0,      u_t + u u_x = rho (f(rho, u) - u),

and for its diagonal (n, v, q) form, where ``q = n + v_x`` rides along as a
third transported unknown.

Density uses a local Lax-Friedrichs flux, so total mass is conserved exactly
under periodic boundaries. Velocity is advanced by upwinded non-conservative
transport plus an explicit relaxation source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .characteristics import Termination, _sigma_in, riemann_R_array
from .closures import ClosureSpec, eval_closure
from .errors import CflCollapse, DegenerateSigma, NonFiniteState

PERIODIC = "Periodic"
OUTFLOW = "OutflowExtrapolate"
BOUNDARIES = (PERIODIC, OUTFLOW)
PRIMITIVE = "Primitive"
AUGMENTED = "Augmented"

TOL_NEG = 1e-12
EPS_SPEED = 1e-12
DT_FLOOR = 1e-14


def _pad(a, boundary):
    if boundary == PERIODIC:
        return np.concatenate(([a[-1]], a, [a[0]]))
    return np.concatenate(([a[0]], a, [a[-1]]))


def ddx(a, dx, boundary):
    """Central difference; one-sided first-order at outflow edges."""
    if boundary == PERIODIC:
        return (np.roll(a, -1) - np.roll(a, 1)) / (2.0 * dx)
    return np.gradient(a, dx)


@dataclass(frozen=True)
class GridState:
    t: float
    x_lo: float
    x_hi: float
    rho: np.ndarray
    u: np.ndarray
    boundary: str = PERIODIC
    clip_events: int = 0

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.rho.shape != self.u.shape or self.rho.ndim != 1:
            raise ValueError("rho and u must be 1-d arrays of equal length")

    @property
    def n_cells(self):
        return self.rho.size

    @property
    def dx(self):
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def x(self):
        return self.x_lo + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def ux(self):
        return ddx(self.u, self.dx, self.boundary)

    @property
    def rhox(self):
        return ddx(self.rho, self.dx, self.boundary)

    @property
    def e(self):
        return self.ux + self.rho

    @property
    def mass(self):
        return float(np.sum(self.rho) * self.dx)


@dataclass(frozen=True)
class AugGridState:
    t: float
    x_lo: float
    x_hi: float
    n: np.ndarray
    v: np.ndarray
    q: np.ndarray
    boundary: str = PERIODIC
    clip_events: int = 0

    n_cells = GridState.n_cells
    dx = GridState.dx
    x = GridState.x

    # views shared with GridState so monitors and path tracing treat both alike
    @property
    def rho(self):
        return self.n

    @property
    def u(self):
        return self.v

    ux = GridState.ux
    rhox = GridState.rhox
    e = GridState.e
    mass = GridState.mass

    @property
    def q_defect(self):
        return self.q - self.n - ddx(self.v, self.dx, self.boundary)


def cfl_dt(state, spec: ClosureSpec, cfl=0.5):
    """``cfl * dx / max(|lam1|, |lam2|, |f|, 1e-12)`` over all cells."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError("cfl must lie in (0, 1]")
    rho, u = state.rho, state.u
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
        raise NonFiniteState("state contains non-finite values")
    ev = eval_closure(spec, np.maximum(rho, 0.0), u)
    speed = max(float(np.max(np.abs(ev.lam1))), float(np.max(np.abs(u))), float(np.max(np.abs(ev.f))), EPS_SPEED)
    dt = cfl * state.dx / speed
    if dt < DT_FLOOR:
        raise CflCollapse(f"dt = {dt:.3e} below {DT_FLOOR:g} at t = {state.t:.6g}")
    return dt


def _clip(rho, counter):
    bad = int(np.count_nonzero(rho < -TOL_NEG))
    return np.maximum(rho, 0.0), counter + bad


def _upwind(a_pad, speed, dx):
    back = (a_pad[1:-1] - a_pad[:-2]) / dx
    fwd = (a_pad[2:] - a_pad[1:-1]) / dx
    return np.where(speed > 0, back, fwd)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteState("non-finite value after update")


def step_primitive(state: GridState, spec: ClosureSpec, dt) -> GridState:
    """One forward-Euler step of the (rho, u) scheme."""
    dx, bc = state.dx, state.boundary
    rp, up = _pad(state.rho, bc), _pad(state.u, bc)
    ev = eval_closure(spec, rp, up)
    flux = rp * ev.f
    speed = np.maximum.reduce([np.abs(ev.lam1), np.abs(up), np.abs(ev.f)])
    a = np.maximum(speed[:-1], speed[1:])
    fhat = 0.5 * (flux[:-1] + flux[1:]) - 0.5 * a * (rp[1:] - rp[:-1])
    rho = state.rho - dt / dx * (fhat[1:] - fhat[:-1])

    u = state.u
    source = state.rho * (ev.f[1:-1] - u)
    u_new = u - dt * u * _upwind(up, u, dx) + dt * source

    rho, clips = _clip(rho, state.clip_events)
    _check_finite(rho, u_new)
    return GridState(state.t + dt, state.x_lo, state.x_hi, rho, u_new, bc, clips)


def aug_cfl_dt(state: AugGridState, spec: ClosureSpec, cfl=0.5):
    return cfl_dt(state, spec, cfl)


def step_augmented(state: AugGridState, spec: ClosureSpec, dt) -> AugGridState:
    """One step of the diagonal system ``U_t + diag(n f_n + f, v, v) U_x = F(U)``.

    ``F = (f_v n (n - q), n (f - v), q (n - q))``; each component is upwinded
    on the sign of its own speed.
    """
    dx, bc = state.dx, state.boundary
    n, v, q = state.n, state.v, state.q
    ev = eval_closure(spec, np.maximum(n, 0.0), v)
    lam = ev.lam1
    n_new = n + dt * (-lam * _upwind(_pad(n, bc), lam, dx) + ev.f_u * n * (n - q))
    v_new = v + dt * (-v * _upwind(_pad(v, bc), v, dx) + n * (ev.f - v))
    q_new = q + dt * (-v * _upwind(_pad(q, bc), v, dx) + q * (n - q))
    n_new, clips = _clip(n_new, state.clip_events)
    _check_finite(n_new, v_new, q_new)
    return AugGridState(state.t + dt, state.x_lo, state.x_hi, n_new, v_new, q_new, bc, clips)


def q_consistency(state: AugGridState) -> float:
    """``sup |q - n - D_x v|`` over interior cells (central differences)."""
    if state.n_cells < 3:
        raise ValueError("need at least 3 cells")
    v, dx = state.v, state.dx
    dv = (v[2:] - v[:-2]) / (2.0 * dx)
    return float(np.max(np.abs(state.q[1:-1] - state.n[1:-1] - dv)))


# ---------------------------------------------------------------------------
# Orchestration


@dataclass
class RunConfig:
    spec: ClosureSpec
    rho0: Callable
    u0: Callable
    x_lo: float
    x_hi: float
    n_cells: int
    t_end: float
    boundary: str = PERIODIC
    cfl: float = 0.5
    output_times: Sequence[float] = ()
    mode: str = PRIMITIVE
    guard: float = 1e4
    resolution_guard: Optional[float] = 0.1
    dt_max: float = math.inf
    u_ref: Optional[float] = None
    trace_dt: Optional[float] = None  # spacing of extra snapshots kept for path tracing


@dataclass
class RunResult:
    snapshots: list
    monitors: dict
    termination: Termination
    config: RunConfig
    trace_snapshots: list = field(default_factory=list)
    n_steps: int = 0
    u_ref: Optional[float] = None

    @property
    def clip_events(self):
        return self.snapshots[-1].clip_events if self.snapshots else 0

    @property
    def dx(self):
        return (self.config.x_hi - self.config.x_lo) / self.config.n_cells


MONITOR_KEYS = (
    "t", "e_min", "e_max", "rho_min", "rho_max", "u_min", "u_max", "ux_absmax",
    "rhox_sup", "xi_min", "xi_max", "eta_min", "eta_max", "R_min", "R_absmax",
    "gap_signed_min", "mass", "q_defect",
)


def initial_state(config: RunConfig):
    dx = (config.x_hi - config.x_lo) / config.n_cells
    x = config.x_lo + (np.arange(config.n_cells) + 0.5) * dx
    rho = np.asarray(config.rho0(x), dtype=float) * np.ones_like(x)
    u = np.asarray(config.u0(x), dtype=float) * np.ones_like(x)
    if np.any(rho < 0):
        raise ValueError("initial density must be nonnegative")
    _check_finite(rho, u)
    if config.mode == AUGMENTED:
        q = rho + ddx(u, dx, config.boundary)
        return AugGridState(0.0, config.x_lo, config.x_hi, rho, u, q, config.boundary)
    return GridState(0.0, config.x_lo, config.x_hi, rho, u, config.boundary)


class _Monitor:
    def __init__(self, spec, state0, u_ref):
        self.spec = spec
        self.u_ref = u_ref
        self.series = {k: [] for k in MONITOR_KEYS}
        self.roots = None
        self.sign0 = 0.0
        if spec.rho_independent:
            gap0 = spec.gap(state0.u)
            if np.all(gap0 > 0):
                self.sign0 = 1.0
            elif np.all(gap0 < 0):
                self.sign0 = -1.0
            u_all = np.concatenate([state0.u, [u_ref]])
            span = float(u_all.max() - u_all.min()) + 1.0
            try:
                self.roots = _sigma_in(spec, float(u_all.min()) - 4 * span, float(u_all.max()) + 4 * span)
            except DegenerateSigma:
                self.roots = None

    def record(self, s):
        spec, out = self.spec, self.series
        rho, u = s.rho, s.u
        e, ux, rhox = s.e, s.ux, s.rhox
        eta = ddx(e, s.dx, s.boundary)
        out["t"].append(s.t)
        out["e_min"].append(float(e.min()))
        out["e_max"].append(float(e.max()))
        out["rho_min"].append(float(rho.min()))
        out["rho_max"].append(float(rho.max()))
        out["u_min"].append(float(u.min()))
        out["u_max"].append(float(u.max()))
        out["ux_absmax"].append(float(np.max(np.abs(ux))))
        out["rhox_sup"].append(float(np.max(np.abs(rhox))))
        out["xi_min"].append(float(rhox.min()))
        out["xi_max"].append(float(rhox.max()))
        out["eta_min"].append(float(eta.min()))
        out["eta_max"].append(float(eta.max()))
        if self.roots is not None:
            R = riemann_R_array(spec, rho, u, self.u_ref, self.roots)
            ok = np.isfinite(R)
            out["R_min"].append(float(R[ok].min()) if ok.all() else math.nan)
            out["R_absmax"].append(float(np.abs(R[ok]).max()) if ok.all() else math.nan)
        else:
            out["R_min"].append(math.nan)
            out["R_absmax"].append(math.nan)
        if self.sign0:
            out["gap_signed_min"].append(float(np.min(self.sign0 * spec.gap(u))))
        else:
            out["gap_signed_min"].append(math.nan)
        out["mass"].append(s.mass)
        out["q_defect"].append(float(np.max(np.abs(s.q_defect))) if isinstance(s, AugGridState) else math.nan)

    def arrays(self):
        return {k: np.array(v, dtype=float) for k, v in self.series.items()}


def blowup_threshold(config: RunConfig, dx):
    """Level below which ``min e`` stops the run.

    ``guard`` is the nominal level; ``resolution_guard`` (``kappa``) lowers it
    to ``kappa / dx`` once a cell-to-cell jump in ``u`` can no longer be
    resolved by the grid.
    """
    if config.resolution_guard is None:
        return config.guard
    return min(config.guard, config.resolution_guard / dx)


def run(config: RunConfig) -> RunResult:
    """Advance from the initial profiles to ``t_end`` with CFL-limited steps.

    Snapshots are kept at ``t = 0``, at each requested output time and, when
    ``trace_dt`` is set, on that regular spacing for path tracing. Monitors
    are recorded at ``t = 0`` and after every accepted step.
    """
    if config.t_end <= 0:
        raise ValueError("t_end must be positive")
    if config.mode not in (PRIMITIVE, AUGMENTED):
        raise ValueError(f"mode must be {PRIMITIVE} or {AUGMENTED}")
    state = initial_state(config)
    step = step_augmented if config.mode == AUGMENTED else step_primitive
    u_ref = config.u_ref
    if u_ref is None:
        u_ref = 0.5 * (float(state.u.min()) + float(state.u.max()))

    outputs = sorted({float(t) for t in config.output_times if 0.0 < t <= config.t_end} | {config.t_end})
    traces = []
    if config.trace_dt:
        k = int(math.floor(config.t_end / config.trace_dt + 1e-9))
        traces = [config.trace_dt * i for i in range(1, k + 1)]
    marks = sorted(set(outputs) | set(traces))
    out_set, trace_set = set(outputs), set(traces) | set(outputs)

    monitor = _Monitor(config.spec, state, u_ref)
    monitor.record(state)
    snapshots, trace_snaps = [state], [state]
    level = blowup_threshold(config, state.dx)
    termination = Termination("ReachedT", config.t_end)
    n_steps = 0
    mark = 0
    while mark < len(marks):
        target = marks[mark]
        try:
            dt = cfl_dt(state, config.spec, config.cfl)
        except CflCollapse:
            termination = Termination("CflCollapse", state.t)
            break
        dt = min(dt, config.dt_max)
        hit = target - state.t <= dt * (1 + 1e-12)
        if hit:
            dt = target - state.t
        new = step(state, config.spec, dt)
        if hit:
            new = replace(new, t=target)
        state = new
        n_steps += 1
        monitor.record(state)
        e = state.e
        if float(e.min()) < -level or float(np.max(np.abs(state.ux))) > config.guard:
            k = int(np.argmin(e))
            termination = Termination("BlowupGuard", state.t, float(state.x[k]))
            snapshots.append(state)
            trace_snaps.append(state)
            break
        if hit:
            if target in out_set:
                snapshots.append(state)
            if target in trace_set:
                trace_snaps.append(state)
            mark += 1
    return RunResult(snapshots, monitor.arrays(), termination, config, trace_snaps, n_steps, u_ref)
