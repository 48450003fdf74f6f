"""Lagrangian tools: characteristic paths, the scalar e-ODE, the Riemann
invariant, and the exact solution of the pressureless system.

Path integration never solves a second PDE. Cross terms (``rho`` seen by an
``X``-path, ``e`` seen by a ``Y``-path) come from a :class:`FieldProvider`,
either a stored grid run or the closed-form pressureless solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import RK23, quad, solve_ivp
from scipy.optimize import minimize_scalar
from scipy.optimize.elementwise import find_root

from .closures import ClosureSpec, eval_closure, find_sigma
from .errors import DegenerateSigma, EmptySigma, InsufficientSamples, OutOfCoverage, SignChange

XPATH = "XPath"
YPATH = "YPath"


class Termination(NamedTuple):
    """Why a path or a run stopped: ``ReachedT``, ``BlowupDetected``,
    ``LeftDomain``, ``BlowupGuard`` or ``CflCollapse``."""

    kind: str
    t: Optional[float] = None
    x: Optional[float] = None

    def to_json(self):
        out = {"kind": self.kind}
        if self.t is not None:
            out["t"] = self.t
        if self.x is not None:
            out["x"] = self.x
        return out


# ---------------------------------------------------------------------------
# Riemann integrating factor


def _scan_gap(spec, a, b, n_scan=512):
    lo, hi = min(a, b), max(a, b)
    g = spec.gap(np.linspace(lo, hi, n_scan))
    if np.any(g == 0.0) or (np.any(g > 0) and np.any(g < 0)):
        raise SignChange(f"f(u) - u vanishes between {a} and {b}")


def quadrature_phi_factor(spec: ClosureSpec, u_ref, u, tol=1e-10):
    """``exp(int_{u_ref}^{u} dxi / (f(xi) - xi))`` by adaptive Gauss-Kronrod quadrature.

    Raises SignChange when ``f(xi) - xi`` has a zero on the closed interval,
    which is where the factor, and the Riemann invariant built on it, stop
    being defined.
    """
    if not spec.rho_independent:
        raise ValueError("the integrating factor needs a closure that does not depend on rho")
    u_ref, u = float(u_ref), float(u)
    _scan_gap(spec, u_ref, u)
    if u == u_ref:
        return 1.0
    val, _ = quad(lambda xi: 1.0 / spec.gap(float(xi)), u_ref, u, epsabs=tol, epsrel=0.0, limit=200)
    return math.exp(val)


def riemann_R(spec: ClosureSpec, rho, u, u_ref, tol=1e-10):
    """``R = rho * phi_factor(u) * (f(u) - u)``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return float(rho) * quadrature_phi_factor(spec, u_ref, u, tol) * float(spec.gap(u))


def _sigma_in(spec, lo, hi):
    try:
        return np.array([r.u for r in find_sigma(spec, (lo, hi))])
    except EmptySigma:
        return np.empty(0)


def phi_factor_array(spec: ClosureSpec, u_ref, u, roots=None):
    """Vectorised integrating factor; NaN wherever a root of ``f(u) - u`` lies
    between ``u_ref`` and ``u`` (inclusive of ``u``) or the closure is
    rho-dependent.

    ``roots`` may pass a precomputed root set covering the range of ``u``.
    """
    u = np.asarray(u, dtype=float)
    if not spec.rho_independent:
        return np.full_like(u, np.nan)
    if roots is None:
        lo = min(float(u.min()), u_ref) - 1e-9
        hi = max(float(u.max()), u_ref) + 1e-9
        try:
            roots = _sigma_in(spec, lo, hi)
        except DegenerateSigma:
            return np.full_like(u, np.nan)
    if spec.gap(u_ref) == 0.0:
        return np.full_like(u, np.nan)
    a = np.minimum(u, u_ref)
    b = np.maximum(u, u_ref)
    bad = np.zeros(u.shape, dtype=bool)
    for r in roots:
        bad |= (a <= r) & (r <= b)
    bad |= spec.gap(u) == 0.0
    closed = spec.phi_log_closed_form(u_ref, u)
    with np.errstate(invalid="ignore", divide="ignore"):
        if closed is not None:
            out = np.exp(closed)
        else:
            out = np.empty_like(u)
            flat, res = u.ravel(), out.ravel()
            for k, uk in enumerate(flat):
                if bad.flat[k]:
                    res[k] = np.nan
                else:
                    v, _ = quad(lambda xi: 1.0 / spec.gap(float(xi)), u_ref, float(uk), epsabs=1e-10, epsrel=0.0)
                    res[k] = math.exp(v)
    return np.where(bad, np.nan, out)


def riemann_R_array(spec: ClosureSpec, rho, u, u_ref, roots=None):
    """``R`` on arrays, NaN where it is undefined."""
    u = np.asarray(u, dtype=float)
    return np.asarray(rho, dtype=float) * phi_factor_array(spec, u_ref, u, roots) * spec.gap(u)


# ---------------------------------------------------------------------------
# Field providers


class FieldProvider:
    """Samples ``(rho, u, e)`` at a space-time point. Read-only after construction."""

    t_max: float = math.inf

    def sample(self, t, x):  # pragma: no cover - interface
        raise NotImplementedError


class GridFieldProvider(FieldProvider):
    """Bilinear interpolation over stored grid snapshots (cell-centred values).

    Snapshots must share one grid and be ordered in time. Periodic runs wrap
    ``x``; outflow runs clamp to the edge cells within the domain and raise
    OutOfCoverage outside it.
    """

    def __init__(self, snapshots):
        snapshots = list(snapshots)
        if not snapshots:
            raise ValueError("need at least one snapshot")
        s0 = snapshots[0]
        self.x_lo, self.x_hi, self.boundary = s0.x_lo, s0.x_hi, s0.boundary
        self.xc = s0.x
        self.times = np.array([s.t for s in snapshots])
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must increase")
        self.fields = np.stack([np.stack([s.rho, s.u, s.e]) for s in snapshots])  # (T, 3, N)
        self.t_max = float(self.times[-1])

    def _space(self, k, x):
        xc, n = self.xc, self.xc.size
        if self.boundary == "Periodic":
            length = self.x_hi - self.x_lo
            dx = length / n
            xw = self.x_lo + (x - self.x_lo) % length
            s = (xw - xc[0]) / dx
            i0 = math.floor(s)
            w = s - i0
            a, b = self.fields[k][:, i0 % n], self.fields[k][:, (i0 + 1) % n]
            return (1 - w) * a + w * b
        if not self.x_lo <= x <= self.x_hi:
            raise OutOfCoverage(f"x = {x} outside [{self.x_lo}, {self.x_hi}]")
        return np.array([np.interp(x, xc, row) for row in self.fields[k]])

    def sample(self, t, x):
        if not (self.times[0] <= t <= self.t_max + 1e-12):
            raise OutOfCoverage(f"t = {t} outside stored snapshots")
        if not math.isfinite(x):
            raise OutOfCoverage("non-finite position")
        times = self.times
        if times.size == 1 or t >= times[-1]:
            return tuple(self._space(times.size - 1, x))
        k = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[k]) / (times[k + 1] - times[k])
        v = (1 - w) * self._space(k, x) + w * self._space(k + 1, x)
        return tuple(v)


class PressurelessPoint(NamedTuple):
    x: float
    rho: float
    u_x: float


class BlowupAt(NamedTuple):
    t_c: float


def pressureless_exact(rho0, u0, alpha, t):
    """State carried by the particle launched at ``alpha`` for ``f(rho, u) = u``.

    ``x = alpha + u0(alpha) t``, ``rho = rho0(alpha) / (1 + u0'(alpha) t)`` and
    ``u_x = u0'(alpha) / (1 + u0'(alpha) t)``. Once ``1 + u0'(alpha) t <= 0``
    the particle has collided and :class:`BlowupAt` is returned.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    d = float(u0.derivative(alpha, 1))
    jac = 1.0 + d * t
    if jac <= 0.0:
        return BlowupAt(-1.0 / d)
    return PressurelessPoint(float(alpha + u0(alpha) * t), float(rho0(alpha)) / jac, d / jac)


def pressureless_blowup_time(u0):
    """Earliest collision time ``-1 / inf u0'``, or inf when ``u0' >= 0``."""
    lo, _ = u0.bounds(1)
    return math.inf if lo >= 0 else -1.0 / lo


def _invert_lagrangian(u0, x, t):
    """Solve ``alpha + u0(alpha) t = x`` for arrays ``x`` (valid before collision)."""
    x = np.asarray(x, dtype=float)
    span = u0.sup_norm(0) * t + 1.0
    res = find_root(lambda a, target: a + u0(a) * t - target, (x - span, x + span), args=(x,),
                    tolerances={"xatol": 1e-15, "xrtol": 4 * np.finfo(float).eps, "fatol": 0.0, "frtol": 0.0})
    return res.x


def pressureless_profile(rho0, u0, x, t):
    """Eulerian ``(rho, u, u_x)`` of the pressureless solution at time ``t``."""
    if t >= pressureless_blowup_time(u0):
        raise OutOfCoverage(f"t = {t} is past the collision time")
    alpha = _invert_lagrangian(u0, x, t)
    d = u0.derivative(alpha, 1)
    jac = 1.0 + d * t
    return rho0(alpha) / jac, u0(alpha), d / jac


class ExactPressurelessProvider(FieldProvider):
    def __init__(self, rho0, u0):
        self.rho0, self.u0 = rho0, u0
        self.t_max = pressureless_blowup_time(u0)

    def sample(self, t, x):
        if not 0.0 <= t < self.t_max:
            raise OutOfCoverage(f"t = {t} outside [0, {self.t_max})")
        rho, u, ux = pressureless_profile(self.rho0, self.u0, np.array([x]), t)
        return float(rho[0]), float(u[0]), float(ux[0] + rho[0])


# ---------------------------------------------------------------------------
# Path tracing


@dataclass
class PathTrace:
    kind: str
    origin: float
    t: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    e: np.ndarray
    R: np.ndarray  # NaN where the invariant is undefined
    terminated: Termination = field(default_factory=lambda: Termination("ReachedT"))


def trace_path(fields: FieldProvider, spec: ClosureSpec, x0, kind=XPATH, t_end=1.0, dt_max=0.05,
               u_ref=None, rtol=1e-8, atol=1e-8, blowup_level=1e8) -> PathTrace:
    """Integrate ``dX/dt = u`` (``XPath``) or ``dY/dt = rho f_rho + f`` (``YPath``).

    Uses the embedded Runge-Kutta (2,3) pair with steps capped at ``dt_max``.
    Samples are the accepted step endpoints. ``R`` is attached relative to
    ``u_ref`` (default: ``u`` at the origin) when it is defined.
    """
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")
    if kind not in (XPATH, YPATH):
        raise ValueError(f"unknown path kind {kind!r}")

    def speed(t, y):
        rho, u, _ = fields.sample(t, float(y[0]))
        if kind == XPATH:
            return np.array([u])
        return np.array([float(eval_closure(spec, max(rho, 0.0), u).lam1)])

    samples = []

    def record(t, x):
        rho, u, e = fields.sample(t, x)
        samples.append((t, x, rho, u, e))
        return e

    termination = Termination("ReachedT")
    try:
        record(0.0, float(x0))
        solver = RK23(speed, 0.0, np.array([float(x0)]), t_end, max_step=dt_max, rtol=rtol, atol=atol)
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise OutOfCoverage(msg or "integrator failed")
            e = record(solver.t, float(solver.y[0]))
            if e < -blowup_level:
                termination = Termination("BlowupDetected", solver.t, float(solver.y[0]))
                break
    except OutOfCoverage:
        termination = Termination("LeftDomain", samples[-1][0] if samples else 0.0)

    arr = np.array(samples, dtype=float).reshape(-1, 5)
    t, x, rho, u, e = arr.T
    if spec.rho_independent and u.size:
        ref = u[0] if u_ref is None else u_ref
        R = riemann_R_array(spec, np.maximum(rho, 0.0), u, ref)
    else:
        R = np.full_like(t, np.nan)
    return PathTrace(kind, float(x0), t, x, rho, u, e, R, termination)


# ---------------------------------------------------------------------------
# e along a path


@dataclass
class EOdeResult:
    t: np.ndarray
    e: np.ndarray
    blowup: Optional[dict]  # {"t_c_numeric", "t_c_riccati_bound", "bracket"}
    sol: object = None  # dense interpolant over the integrated range


def _rho_callable(rho_on_path):
    if callable(rho_on_path):
        return rho_on_path
    if np.isscalar(rho_on_path):
        c = float(rho_on_path)
        return lambda t: c
    ts, rs = (np.asarray(a, dtype=float) for a in rho_on_path)
    return lambda t: float(np.interp(t, ts, rs))


def integrate_e_ode(rho_on_path, e0, t_end, tol=1e-8, delta=1e-8) -> EOdeResult:
    """Solve ``de/dt = -e (e - rho(t))`` from ``e(0) = e0``.

    ``rho_on_path`` is a constant, a callable of ``t`` or a ``(t, rho)`` pair of
    samples. Blow-up is declared once ``e < -1/delta``; the pole is then
    placed by extrapolating ``1/e`` linearly to zero, and the bracket between
    the detection time and the extrapolated pole is reported.
    """
    rho = _rho_callable(rho_on_path)
    level = -1.0 / delta

    def rhs(t, y):
        return [-y[0] * (y[0] - rho(t))]

    def hit(t, y):
        return y[0] - level

    hit.terminal = True
    hit.direction = -1
    sol = solve_ivp(rhs, (0.0, t_end), [float(e0)], method="DOP853", rtol=tol, atol=tol,
                    events=hit, dense_output=True)
    t, e = sol.t, sol.y[0]
    blowup = None
    if sol.status == 1:
        # near the pole e ~ -1/(t_c - t), so 1/e is locally linear in t
        t1, t2 = t[-2], t[-1]
        w1, w2 = 1.0 / e[-2], 1.0 / e[-1]
        tc = t2 - w2 * (t2 - t1) / (w2 - w1)
        blowup = {
            "t_c_numeric": float(tc),
            "t_c_riccati_bound": -1.0 / e0 if e0 < 0 else math.inf,
            "bracket": (float(t2), float(max(tc, t2) + abs(tc - t2))),
        }
    return EOdeResult(t, e, blowup, sol.sol)


# ---------------------------------------------------------------------------
# Blow-up rate


class RateFit(NamedTuple):
    t_c_fit: float
    exponent: float
    residual: float
    n_samples: int


def _trailing_window(t, e, threshold):
    below = e < threshold
    k = below.size
    while k > 0 and below[k - 1]:
        k -= 1
    return t[k:], e[k:]


def estimate_blowup_rate(t, e, threshold=-10.0, min_samples=8) -> RateFit:
    """Fit ``|e| ~ C (t_c - t)^(-p)`` on the trailing samples with ``e < threshold``.

    For each trial ``t_c`` the model is linear in ``(log C, p)``; ``t_c`` itself
    is chosen by a log-spaced scan of the gap past the last sample followed by
    a bounded refinement.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    tw, ew = _trailing_window(t, e, threshold)
    if tw.size < min_samples:
        raise InsufficientSamples(f"{tw.size} samples below {threshold}, need {min_samples}")
    y = np.log(np.abs(ew))
    t_last = tw[-1]
    span = max(tw[-1] - tw[0], 1e-300)

    def fit(log_gap):
        tc = t_last + math.exp(log_gap)
        A = np.column_stack([np.ones_like(tw), -np.log(tc - tw)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = y - A @ coef
        return float(r @ r), coef

    lo, hi = math.log(span * 1e-12), math.log(span * 1e3)
    grid = np.linspace(lo, hi, 400)
    sse = np.array([fit(g)[0] for g in grid])
    k = int(np.argmin(sse))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda g: fit(g)[0], bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    best = res.x if res.fun <= sse[k] else grid[k]
    r2, coef = fit(best)
    return RateFit(float(t_last + math.exp(best)), float(coef[1]), r2, int(tw.size))
