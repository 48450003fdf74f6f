"""Threshold classification, a-priori bounds, and post-run audits.

The sharp quantity is ``e0 = u0' + rho0``: nonnegative everywhere gives a
global solution under the structural hypotheses on ``f``; negative anywhere
gives finite-time blow-up no later than ``-1 / min e0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .characteristics import phi_factor_array, quadrature_phi_factor
from .closures import ClosureSpec, check_structure, equilibrium_phi, find_sigma
from .errors import DegenerateSigma, EmptySigma, HypothesisFailed, InvalidData, NoContraction, ThresholdLabError
from .profiles import ProfileSpec, extrema_of_sum

THM1 = "Thm1Strict"
THM2 = "Thm2Weak"
THM3 = "Thm3General"
BRANCHES = (THM1, THM2, THM3)

GLOBAL = "Global"
BLOWUP = "Blowup"
INDETERMINATE = "Indeterminate"

E0_ZERO_TOL = 1e-12


# ---------------------------------------------------------------------------
# Initial-data functionals


def e0_extrema(rho0: ProfileSpec, u0: ProfileSpec):
    """``(inf e0, x_inf, sup e0, x_sup)`` for ``e0 = u0' + rho0``."""
    return extrema_of_sum([(u0, 1), (rho0, 0)])


def compute_M(rho0: ProfileSpec, u0: ProfileSpec) -> float:
    """``M = max(sup rho0, sup (u0' + rho0))``."""
    _, _, sup_e0, _ = e0_extrema(rho0, u0)
    return max(rho0.bounds(0)[1], sup_e0)


def _u0_range(u0):
    lo, hi = u0.bounds(0)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidData("u0 must be bounded")
    return lo, hi


def _root_span(lo, hi):
    pad = 10.0 * (1.0 + abs(lo) + abs(hi))
    return lo - pad, hi + pad


def inf_gap(spec: ClosureSpec, u0: ProfileSpec, n_scan=4097) -> float:
    """``inf |f(u0) - u0|`` over the closed range of ``u0``."""
    lo, hi = _u0_range(u0)
    if hi == lo:
        return abs(float(spec.gap(lo)))
    try:
        find_sigma(spec, (lo, hi))
        return 0.0
    except DegenerateSigma:
        return 0.0
    except EmptySigma:
        pass
    us = np.linspace(lo, hi, n_scan)
    return float(np.min(np.abs(spec.gap(us))))


def _witness_where_negative(rho0, u0, x_hint):
    if x_hint is not None:
        return x_hint
    for x in (10.0 ** k for k in range(1, 7)):
        for s in (x, -x):
            if float(u0(s, 1)) + float(rho0(s)) < 0:
                return s
    return None


# ---------------------------------------------------------------------------
# Bounds


def _u_bounds_rho_independent(spec, lo, hi, n_scan=1025):
    try:
        roots = np.array([r.u for r in find_sigma(spec, _root_span(lo, hi))])
    except DegenerateSigma:
        return lo, hi  # every state is an equilibrium: u is frozen along paths
    except EmptySigma:
        roots = np.empty(0)
    us = np.linspace(lo, hi, n_scan)
    g = spec.gap(us)
    u_lo, u_hi = lo, hi
    rising = us[g > 0]
    if rising.size:
        above = roots[roots > rising.max()]
        if not above.size:
            raise EmptySigma("f(u) > u with no equilibrium above: u is not bounded")
        u_hi = max(u_hi, float(above.min()))
    falling = us[g < 0]
    if falling.size:
        below = roots[roots < falling.min()]
        if not below.size:
            raise EmptySigma("f(u) < u with no equilibrium below: u is not bounded")
        u_lo = min(u_lo, float(below.max()))
    return u_lo, u_hi


def u_bounds(spec: ClosureSpec, rho0: ProfileSpec, u0: ProfileSpec, M=None, n_widen=6):
    """Invariant interval for ``u``.

    For ``f = f(u)``: along each particle ``du/dt = rho (f(u) - u)`` drives
    ``u`` monotonically to the nearest equilibrium in the direction of
    ``f(u) - u``, so the interval is the range of ``u0`` extended to those
    equilibria. For ``f = f(rho, u)``: the range of ``u0`` together with the
    range of the equilibrium curve ``phi`` on ``[0, M]``.
    """
    lo, hi = _u0_range(u0)
    if spec.rho_independent:
        return _u_bounds_rho_independent(spec, lo, hi)
    if M is None:
        M = compute_M(rho0, u0)
    box = (lo - 1.0, hi + 1.0)
    for _ in range(n_widen):
        try:
            curve = equilibrium_phi(spec, M, u_box=box)
        except NoContraction as exc:
            if "left" not in str(exc):
                raise
            width = box[1] - box[0]
            box = (box[0] - width, box[1] + width)
            continue
        p_lo, p_hi = curve.range
        return min(lo, p_lo), max(hi, p_hi)
    raise NoContraction("equilibrium curve not found inside any search box")


def envelope_rate(M, c2_norm):
    """``12 (c2 + 1) max(M^3, 1)``."""
    return 12.0 * (c2_norm + 1.0) * max(M ** 3, 1.0)


def linear_envelope(p0_norm, q0_norm, coeff_norms):
    """``(beta, gamma)`` for a linear 2x2 system ``p' = a p + b q + c``, ``q' = ...``:
    ``beta = 1 + |p0| + |q0|`` and ``gamma`` the sum of the six coefficient norms."""
    coeff_norms = list(coeff_norms)
    if len(coeff_norms) != 6:
        raise ValueError("need six coefficient norms")
    return 1.0 + p0_norm + q0_norm, float(sum(abs(c) for c in coeff_norms))


def rhox_envelope(spec: ClosureSpec, rho0: ProfileSpec, u0: ProfileSpec, c2_norm=None):
    """``(beta, gamma)`` with ``|rho_x(t)| <= beta exp(gamma t)``.

    Valid only for rho-independent ``f`` with ``f_u <= 0`` on the invariant
    box and ``e0 >= 0``; otherwise HypothesisFailed lists what broke.
    """
    failed = []
    if not spec.rho_independent:
        failed.append("f_rho_independent")
    inf_e0 = e0_extrema(rho0, u0)[0]
    if inf_e0 < -E0_ZERO_TOL:
        failed.append("e0_nonneg")
    M = compute_M(rho0, u0)
    report = None
    try:
        u_lo, u_hi = u_bounds(spec, rho0, u0, M)
        report = check_structure(spec, (M, u_lo, u_hi))
        if not report.fu_nonpositive:
            failed.append("f_u_nonpositive")
    except ThresholdLabError:
        failed.append("u_bounded")
    if failed:
        raise HypothesisFailed(f"envelope premises failed: {', '.join(failed)}", failed)
    if c2_norm is None:
        c2_norm = report.c2_norm
    beta = 1.0 + rho0.sup_norm(1) + u0.sup_norm(2) + rho0.sup_norm(0)
    return beta, envelope_rate(M, c2_norm)


def rho_pointwise_bound(spec: ClosureSpec, rho0: ProfileSpec, u0: ProfileSpec, u_now, x, tol=1e-10):
    """``sup rho0 |f(u0(x)) - u0(x)| / (phi_factor(u0(x) -> u_now) |f(u_now) - u_now|)``."""
    if not spec.rho_independent:
        raise HypothesisFailed("the pointwise density bound needs f = f(u)", ["f_rho_independent"])
    if inf_gap(spec, u0) <= 0.0:
        raise HypothesisFailed("the pointwise density bound needs inf |f(u0) - u0| > 0", ["strict_hyperbolic"])
    return _rho_bound(spec, rho0, u0, u_now, x, tol)


def _rho_bound(spec, rho0, u0, u_now, x, tol=1e-10):
    ua = float(u0(x))
    factor = quadrature_phi_factor(spec, ua, u_now, tol)
    return rho0.bounds(0)[1] * (abs(float(spec.gap(ua))) / (factor * abs(float(spec.gap(u_now)))))


def rho_bound_along(spec, rho0, u0, u_now, x):
    """Vectorised :func:`rho_pointwise_bound` over velocities ``u_now`` seen
    from the particle launched at ``x`` (NaN past an equilibrium)."""
    ua = float(u0(x))
    u_now = np.asarray(u_now, dtype=float)
    factor = phi_factor_array(spec, ua, u_now)
    return rho0.bounds(0)[1] * (abs(float(spec.gap(ua))) / (factor * np.abs(spec.gap(u_now))))


@dataclass
class BoundsReport:
    M: float
    u_lo: float
    u_hi: float
    beta: Optional[float]
    gamma: Optional[float]
    c2_norm: Optional[float]
    strict_hyperbolic: bool
    inf_gap: Optional[float]
    inf_e0: float
    notes: list = field(default_factory=list)
    structure: object = None

    def to_json(self):
        out = {k: v for k, v in asdict(self).items() if k != "structure"}
        out["structure"] = self.structure.to_json() if self.structure is not None else None
        return out


def compute_bounds(spec: ClosureSpec, rho0: ProfileSpec, u0: ProfileSpec) -> BoundsReport:
    """Every a-priori bound available for the data; unavailable ones are None/NaN
    with the reason recorded in ``notes``."""
    M = compute_M(rho0, u0)
    inf_e0 = e0_extrema(rho0, u0)[0]
    notes = []
    try:
        u_lo, u_hi = u_bounds(spec, rho0, u0, M)
    except ThresholdLabError as exc:
        u_lo = u_hi = math.nan
        notes.append(f"u_bounds: {exc}")
    structure = None
    c2 = None
    if math.isfinite(u_lo):
        structure = check_structure(spec, (M, u_lo, u_hi))
        c2 = structure.c2_norm
    beta = gamma = None
    try:
        beta, gamma = rhox_envelope(spec, rho0, u0, c2)
    except HypothesisFailed as exc:
        notes.append(f"rhox_envelope: {exc}")
    g = inf_gap(spec, u0) if spec.rho_independent else None
    return BoundsReport(M, u_lo, u_hi, beta, gamma, c2, bool(g is not None and g > 0), g, inf_e0, notes, structure)


# ---------------------------------------------------------------------------
# Classification


@dataclass
class Hypothesis:
    name: str
    satisfied: bool
    witness: object = None

    def to_json(self):
        return {"name": self.name, "satisfied": self.satisfied, "witness": self.witness}


@dataclass
class ThresholdVerdict:
    branch: str
    outcome: str
    hypothesis_log: list
    tc_upper: Optional[float] = None
    witness_x: Optional[float] = None
    failed_hypotheses: list = field(default_factory=list)
    min_e0: float = math.nan
    M: float = math.nan

    def to_json(self):
        out = {"branch": self.branch, "outcome": self.outcome, "min_e0": self.min_e0, "M": self.M}
        if self.outcome == BLOWUP:
            out["tc_upper"] = self.tc_upper
            out["witness_x"] = self.witness_x
        if self.outcome == INDETERMINATE:
            out["failed_hypotheses"] = list(self.failed_hypotheses)
        return out


def auto_branch(spec: ClosureSpec, u0: ProfileSpec) -> str:
    if not spec.rho_independent:
        return THM3
    return THM1 if inf_gap(spec, u0) > 0.0 else THM2


def classify(spec: ClosureSpec, rho0: ProfileSpec, u0: ProfileSpec, branch="auto") -> ThresholdVerdict:
    """Place the data under one of the three branches and read off the outcome.

    Blow-up only needs ``rho0 >= 0`` and a point with ``e0 < 0``: along that
    particle ``de/dt <= -e^2`` whatever ``f`` is. A global verdict needs every
    structural hypothesis of the branch, with ``f_u <= 0`` certified on the
    invariant box ``[0, M] x [u_lo, u_hi]``.
    """
    rho_inf = rho0.bounds(0)[0]
    if rho_inf < 0:
        raise InvalidData(f"rho0 takes negative values (inf = {rho_inf:g})")
    if branch == "auto":
        branch = auto_branch(spec, u0)
    if branch not in BRANCHES:
        raise ValueError(f"branch must be 'auto' or one of {BRANCHES}")

    log = [Hypothesis("rho0_nonneg", True, {"inf_rho0": rho_inf})]
    if branch in (THM1, THM2):
        log.append(Hypothesis("f_rho_independent", spec.rho_independent))
    if branch == THM1:
        g = inf_gap(spec, u0) if spec.rho_independent else 0.0
        log.append(Hypothesis("strict_hyperbolic", g > 0.0, {"inf_gap": g}))
    else:
        # all profile families are smooth, so u0 in C_b^2 holds whenever u0 is bounded
        log.append(Hypothesis("u0_C2_bounded", all(math.isfinite(b) for k in range(3) for b in u0.bounds(k))))

    M = compute_M(rho0, u0)
    fu_ok = False
    report = None
    try:
        u_lo, u_hi = u_bounds(spec, rho0, u0, M)
        report = check_structure(spec, (M, u_lo, u_hi))
        fu_ok = report.fu_nonpositive
        log.append(Hypothesis("u_bounded", True, {"u_lo": u_lo, "u_hi": u_hi}))
        log.append(Hypothesis("f_u_nonpositive", fu_ok, {"fu_max": report.fu_max, "box": list(report.box)}))
    except ThresholdLabError as exc:
        log.append(Hypothesis("u_bounded", False, str(exc)))
        log.append(Hypothesis("f_u_nonpositive", False, "no invariant box"))

    inf_e0, x_inf, _, _ = e0_extrema(rho0, u0)
    min_e0 = 0.0 if abs(inf_e0) <= E0_ZERO_TOL else inf_e0
    log.append(Hypothesis("e0_nonneg", min_e0 >= 0.0, {"min_e0": inf_e0, "x": x_inf}))

    if branch == THM3:
        ok_inc = ok_dec = False
        if report is not None:
            xi_lo, _, xi_hi, _ = extrema_of_sum([(rho0, 1)])
            eta_lo, _, eta_hi, _ = extrema_of_sum([(u0, 2), (rho0, 1)])
            ok_inc = (report.rho_f_rhorho_sign.nonneg and report.f_uu_sign.nonpos
                      and xi_lo >= -E0_ZERO_TOL and eta_lo >= -E0_ZERO_TOL)
            ok_dec = (report.rho_f_rhorho_sign.nonpos and report.f_uu_sign.nonneg
                      and xi_hi <= E0_ZERO_TOL and eta_hi <= E0_ZERO_TOL)
            w = {"rho_f_rhorho": report.rho_f_rhorho_sign.value, "f_uu": report.f_uu_sign.value,
                 "rho0x": [xi_lo, xi_hi], "u0xx_plus_rho0x": [eta_lo, eta_hi]}
        else:
            w = "no invariant box"
        log.append(Hypothesis("increasing_convex_bullet", ok_inc, w))
        log.append(Hypothesis("decreasing_concave_bullet", ok_dec, w))

    verdict = ThresholdVerdict(branch, INDETERMINATE, log, min_e0=inf_e0, M=M)
    if min_e0 < 0.0:
        witness = _witness_where_negative(rho0, u0, x_inf)
        verdict.outcome = BLOWUP
        verdict.tc_upper = -1.0 / inf_e0
        verdict.witness_x = witness
        return verdict

    structural = [h for h in log if h.name not in ("increasing_convex_bullet", "decreasing_concave_bullet")]
    failed = [h.name for h in structural if not h.satisfied]
    if branch == THM3:
        bullets = [h for h in log if h.name.endswith("_bullet")]
        if not any(h.satisfied for h in bullets):
            failed.append("convexity_bullets")
    if failed:
        verdict.failed_hypotheses = failed
    else:
        verdict.outcome = GLOBAL
    return verdict


# ---------------------------------------------------------------------------
# Audit


@dataclass
class AuditCheck:
    name: str
    passed: Optional[bool]  # None when the run cannot decide
    margin: float  # worst (bound - value); negative means violated
    t_first_fail: Optional[float] = None

    def to_json(self):
        return {"name": self.name, "pass": self.passed, "margin": _finite_or_none(self.margin),
                "t_first_fail": self.t_first_fail}


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def _series_check(name, t, slack, tol):
    """``slack`` is bound minus value per monitored time; pass when ``slack >= -tol``."""
    slack = np.asarray(slack, dtype=float)
    ok = np.isfinite(slack)
    if not ok.any():
        return AuditCheck(name, None, math.nan)
    bad = ok & (slack < -tol)
    first = float(t[np.argmax(bad)]) if bad.any() else None
    return AuditCheck(name, not bad.any(), float(np.min(slack[ok])), first)


def audit(run, bounds: BoundsReport, verdict: ThresholdVerdict, C=5.0, paths=(), spec=None,
          rho0=None, u0=None, blowup_factor=1.2):
    """Check a finished run against the bounds that apply to its data.

    Tolerance is ``C * dx``. Only checks whose premises hold for the data are
    reported; a Blowup verdict always gets a ``blowup_time`` check.
    """
    m = run.monitors
    t = m["t"]
    dx = run.dx
    tol = C * dx
    checks = [
        _series_check("positivity", t, m["rho_min"], tol),
    ]
    checks[0].passed = checks[0].passed and run.clip_events == 0
    e0_ok = bounds.inf_e0 >= -E0_ZERO_TOL
    struct_ok = bounds.structure is not None and bounds.structure.fu_nonpositive
    if e0_ok and struct_ok:
        checks.append(_series_check("box_rho", t, bounds.M - m["rho_max"], tol))
        checks.append(_series_check("box_e", t, np.minimum(m["e_min"], bounds.M - m["e_max"]), tol))
    if math.isfinite(bounds.u_lo):
        checks.append(_series_check("u_bounds", t, np.minimum(m["u_min"] - bounds.u_lo, bounds.u_hi - m["u_max"]), tol))
    if bounds.strict_hyperbolic and struct_ok and np.isfinite(m["R_min"][0]):
        inf_R0 = m["R_min"][0]
        checks.append(_series_check("riemann_floor", t, m["R_min"] - inf_R0, C * dx * (1 + abs(inf_R0))))
        sup_R0 = m["R_absmax"][0]
        checks.append(_series_check("riemann_modulus", t, sup_R0 - m["R_absmax"], C * dx * (1 + sup_R0)))
    if bounds.strict_hyperbolic and np.isfinite(m["gap_signed_min"][0]):
        checks.append(_series_check("sign_invariance", t, m["gap_signed_min"], 0.0))
    if bounds.beta is not None and verdict.branch == THM2 and verdict.outcome == GLOBAL:
        env = np.log(bounds.beta) + bounds.gamma * t
        with np.errstate(divide="ignore"):
            checks.append(_series_check("rhox_envelope", t, env - np.log(m["rhox_sup"]), 0.0))
    if verdict.branch == THM3 and verdict.outcome == GLOBAL:
        inc = next(h for h in verdict.hypothesis_log if h.name == "increasing_convex_bullet").satisfied
        if inc:
            checks.append(_series_check("xi_sign", t, m["xi_min"], tol))
            checks.append(_series_check("eta_sign", t, m["eta_min"], tol))
        else:
            checks.append(_series_check("xi_sign", t, -m["xi_max"], tol))
            checks.append(_series_check("eta_sign", t, -m["eta_max"], tol))
    if verdict.outcome == BLOWUP:
        limit = blowup_factor * verdict.tc_upper
        term = run.termination
        if term.kind == "BlowupGuard":
            checks.append(AuditCheck("blowup_time", term.t <= limit, limit - term.t, None if term.t <= limit else term.t))
        elif run.config.t_end >= limit:
            checks.append(AuditCheck("blowup_time", False, limit - run.config.t_end, limit))
        else:
            checks.append(AuditCheck("blowup_time", None, math.nan))
    if paths and spec is not None and bounds.strict_hyperbolic:
        checks.extend(_path_checks(paths, spec, rho0 if struct_ok else None, u0, tol))
    return checks


def _path_checks(paths, spec, rho0, u0, tol):
    sign_slack = []
    rho_slack = []
    t_sign = t_rho = None
    for p in paths:
        s0 = np.sign(spec.gap(p.u[0]))
        g = s0 * spec.gap(p.u)
        sign_slack.append(float(g.min()))
        if t_sign is None and g.min() <= 0:
            t_sign = float(p.t[np.argmax(g <= 0)])
        if rho0 is not None:
            bound = rho_bound_along(spec, rho0, u0, p.u, p.origin)
            sl = bound - p.rho
            rho_slack.append(float(np.nanmin(sl)))
            if t_rho is None and np.nanmin(sl) < -tol:
                t_rho = float(p.t[np.argmax(sl < -tol)])
    out = [AuditCheck("path_sign_invariance", min(sign_slack) > 0, min(sign_slack), t_sign)]
    if rho_slack:
        out.append(AuditCheck("rho_pointwise", min(rho_slack) >= -tol, min(rho_slack), t_rho))
    return out
