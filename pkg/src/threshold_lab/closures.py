"""Relaxation closures ``v = f(rho, u)`` and the structure checks built on them.

A closure is described by a :class:`ClosureSpec` (family name plus a flat
parameter list) so it round-trips through JSON. Every family supplies exact
partial derivatives up to second order; nothing here is differentiated
numerically.

Families
--------
``Affine(a, b)``            f = a - b*u
``SinShift()``              f = u + sin(u)
``PressurelessIdentity()``  f = u
``RhoCoupled(c)``           f = c*rho - u
``Custom(c_0, ..., c_14)``  bivariate polynomial of total degree <= 4; the
                            k-th coefficient multiplies ``CUSTOM_MONOMIALS[k]``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateSigma, EmptySigma, MaxIterExceeded, NoContraction, NonFiniteEval

# (i, j) -> rho**i * u**j, ordered by total degree, then by falling power of rho
CUSTOM_MONOMIALS = [(i, d - i) for d in range(5) for i in range(d, -1, -1)]

_N_PARAMS = {
    "Affine": (2, 2),
    "SinShift": (0, 0),
    "PressurelessIdentity": (0, 0),
    "RhoCoupled": (1, 1),
    "Custom": (1, len(CUSTOM_MONOMIALS)),
}
FAMILIES = tuple(_N_PARAMS)


@dataclass(frozen=True)
class ClosureSpec:
    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in _N_PARAMS:
            raise ValueError(f"unknown closure family {self.family!r}; expected one of {FAMILIES}")
        params = tuple(float(p) for p in self.params)
        lo, hi = _N_PARAMS[self.family]
        if not lo <= len(params) <= hi:
            raise ValueError(f"{self.family} takes {lo}..{hi} parameters, got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ValueError("closure parameters must be finite")
        object.__setattr__(self, "params", params)

    @classmethod
    def affine(cls, a, b):
        return cls("Affine", (a, b))

    @classmethod
    def sin_shift(cls):
        return cls("SinShift")

    @classmethod
    def pressureless(cls):
        return cls("PressurelessIdentity")

    @classmethod
    def rho_coupled(cls, c):
        return cls("RhoCoupled", (c,))

    @classmethod
    def custom(cls, coeffs):
        """Polynomial closure from ``{(i, j): coefficient}`` or a flat list."""
        if isinstance(coeffs, dict):
            flat = [0.0] * len(CUSTOM_MONOMIALS)
            for (i, j), c in coeffs.items():
                if (i, j) not in CUSTOM_MONOMIALS:
                    raise ValueError(f"monomial rho^{i} u^{j} exceeds total degree 4")
                flat[CUSTOM_MONOMIALS.index((i, j))] = c
            coeffs = flat
        return cls("Custom", tuple(coeffs))

    @property
    def rho_independent(self) -> bool:
        if self.family == "RhoCoupled":
            return self.params[0] == 0.0
        if self.family == "Custom":
            return all(c == 0.0 for c, (i, _) in zip(self.params, CUSTOM_MONOMIALS) if i > 0)
        return True

    def to_json(self) -> dict:
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_json(cls, obj) -> "ClosureSpec":
        return cls(obj["family"], tuple(obj.get("params", ())))

    def f(self, rho, u):
        return _derivs(self, rho, u)[0]

    def gap(self, u):
        """``f(u) - u`` for a rho-independent closure."""
        if isinstance(u, float):
            return self._gap_scalar(u)
        return _derivs(self, 0.0, u)[0] - u

    def _gap_scalar(self, u):
        fam, p = self.family, self.params
        if fam == "Affine":
            return p[0] - p[1] * u - u
        if fam == "SinShift":
            return math.sin(u)
        if fam == "PressurelessIdentity":
            return 0.0
        if fam == "RhoCoupled":
            return -2.0 * u
        return sum(c * u**j for c, (i, j) in zip(p, CUSTOM_MONOMIALS) if i == 0) - u

    def phi_log_closed_form(self, u_ref, u):
        """Closed-form ``int_{u_ref}^{u} dxi / (f(xi) - xi)`` when one is known, else None.

        Only valid when f(xi) - xi keeps one sign between the endpoints.
        """
        if self.family == "Affine":
            a, b = self.params
            g = lambda x: a - (1.0 + b) * x  # noqa: E731
            with np.errstate(divide="ignore", invalid="ignore"):
                return -np.log(g(np.asarray(u, float)) / g(u_ref)) / (1.0 + b)
        if self.family == "SinShift":
            t = lambda x: np.abs(np.tan(0.5 * np.asarray(x, float)))  # noqa: E731
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(t(u) / t(u_ref))
        return None


class ClosureEval(NamedTuple):
    f: np.ndarray
    f_rho: np.ndarray
    f_u: np.ndarray
    f_rhorho: np.ndarray
    f_uu: np.ndarray
    f_rhou: np.ndarray
    rho_f_rhorho: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray


def _derivs(spec, rho, u):
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    rho, u = np.broadcast_arrays(rho, u)
    zero = np.zeros_like(u)
    fam, p = spec.family, spec.params
    if fam == "Affine":
        a, b = p
        return a - b * u, zero, zero - b, zero, zero, zero
    if fam == "SinShift":
        s = np.sin(u)
        return u + s, zero, 1.0 + np.cos(u), zero, -s, zero
    if fam == "PressurelessIdentity":
        return u + 0.0, zero, zero + 1.0, zero, zero, zero
    if fam == "RhoCoupled":
        (c,) = p
        return c * rho - u, zero + c, zero - 1.0, zero, zero, zero
    # Custom polynomial
    out = [np.zeros_like(u) for _ in range(6)]
    for c, (i, j) in zip(p, CUSTOM_MONOMIALS):
        if c == 0.0:
            continue
        out[0] += c * rho**i * u**j
        if i >= 1:
            out[1] += c * i * rho ** (i - 1) * u**j
        if j >= 1:
            out[2] += c * j * rho**i * u ** (j - 1)
        if i >= 2:
            out[3] += c * i * (i - 1) * rho ** (i - 2) * u**j
        if j >= 2:
            out[4] += c * j * (j - 1) * rho**i * u ** (j - 2)
        if i >= 1 and j >= 1:
            out[5] += c * i * j * rho ** (i - 1) * u ** (j - 1)
    return tuple(out)


def eval_closure(spec: ClosureSpec, rho, u) -> ClosureEval:
    """Evaluate f and its derivative stack at ``(rho, u)`` (scalars or arrays).

    Also returns ``(rho f)_rhorho = 2 f_rho + rho f_rhorho`` and the two
    characteristic speeds ``lam1 = rho f_rho + f`` and ``lam2 = u``.
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 0):
        raise ValueError("closure evaluated at negative density")
    with np.errstate(over="ignore", invalid="ignore"):
        f, fr, fu, frr, fuu, fru = _derivs(spec, rho_arr, u)
    rho_b, u_b = np.broadcast_arrays(rho_arr, np.asarray(u, dtype=float))
    stack = ClosureEval(
        f, fr, fu, frr, fuu, fru,
        2.0 * fr + rho_b * frr,
        rho_b * fr + f,
        u_b + 0.0,
    )
    for name, val in zip(ClosureEval._fields, stack):
        if not np.all(np.isfinite(val)):
            raise NonFiniteEval(f"{name} is not finite for closure {spec.family}{spec.params}")
    return stack


# ---------------------------------------------------------------------------
# The fixed-point set Sigma = {u : f(u) = u}


class SigmaRoot(NamedTuple):
    u: float
    f_u: float
    stable: bool  # f_u(u*) < 1


def find_sigma(spec: ClosureSpec, interval, tol=1e-12, n_scan=1024) -> list[SigmaRoot]:
    """Roots of ``f(u) - u`` in ``interval``, ordered increasingly.

    Sign changes are bracketed on an ``n_scan``-point scan and refined by
    Brent's method. Tangential roots without a sign change are not detected.
    """
    if not spec.rho_independent:
        raise ValueError("find_sigma needs a closure that does not depend on rho")
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = float(interval[0]), float(interval[1])
    us = np.linspace(lo, hi, n_scan)
    gs = spec.gap(us)
    if np.all(np.abs(gs) <= tol):
        raise DegenerateSigma(f"f(u) - u vanishes identically on [{lo}, {hi}]")
    g = lambda x: float(spec.gap(x))  # noqa: E731
    roots = []
    for k in range(n_scan):
        if gs[k] == 0.0:
            roots.append(us[k])
        elif k + 1 < n_scan and gs[k + 1] != 0.0 and (gs[k] < 0) != (gs[k + 1] < 0):
            roots.append(brentq(g, us[k], us[k + 1], xtol=tol, rtol=4 * np.finfo(float).eps))
    if not roots:
        raise EmptySigma(f"no root of f(u) - u in [{lo}, {hi}]")
    fu = eval_closure(spec, 0.0, np.array(roots)).f_u
    return [SigmaRoot(float(r), float(d), bool(d < 1.0)) for r, d in zip(roots, fu)]


# ---------------------------------------------------------------------------
# Structural hypotheses


class SignClass(Enum):
    ZERO = "Zero"
    NONNEG = "NonNeg"
    NONPOS = "NonPos"
    MIXED = "Mixed"

    @property
    def nonneg(self):
        return self in (SignClass.ZERO, SignClass.NONNEG)

    @property
    def nonpos(self):
        return self in (SignClass.ZERO, SignClass.NONPOS)


def _classify_sign(values, rr, uu, atol=1e-12):
    """Sign class plus witnesses ``{"pos": (rho, u), "neg": (rho, u)}``."""
    scale = atol * max(1.0, float(np.max(np.abs(values))))
    pos = values > scale
    neg = values < -scale
    witnesses = {}
    if pos.any():
        k = int(np.argmax(values))
        witnesses["pos"] = (float(rr.flat[k]), float(uu.flat[k]))
    if neg.any():
        k = int(np.argmin(values))
        witnesses["neg"] = (float(rr.flat[k]), float(uu.flat[k]))
    if pos.any() and neg.any():
        return SignClass.MIXED, witnesses
    if pos.any():
        return SignClass.NONNEG, witnesses
    if neg.any():
        return SignClass.NONPOS, witnesses
    return SignClass.ZERO, witnesses


@dataclass
class StructureReport:
    box: tuple  # (rho_max, u_min, u_max); rho ranges over [0, rho_max]
    n_grid: int
    fu_min: float
    fu_max: float
    fu_nonpositive: bool
    fu_below_one: bool
    rho_f_rhorho_sign: SignClass
    f_uu_sign: SignClass
    c2_norm: float
    witnesses: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "box": {"rho": [0.0, self.box[0]], "u": [self.box[1], self.box[2]]},
            "n_grid": self.n_grid,
            "fu_min": self.fu_min,
            "fu_max": self.fu_max,
            "fu_nonpositive": self.fu_nonpositive,
            "fu_below_one": self.fu_below_one,
            "rho_f_rhorho_sign": self.rho_f_rhorho_sign.value,
            "f_uu_sign": self.f_uu_sign.value,
            "c2_norm": self.c2_norm,
            "witnesses": {k: {s: list(p) for s, p in v.items()} for k, v in self.witnesses.items()},
        }


def check_structure(spec: ClosureSpec, box, n_grid=64) -> StructureReport:
    """Certify sign conditions of f's derivatives on ``[0, rho_max] x [u_min, u_max]``.

    ``box`` is ``(rho_max, u_min, u_max)``. The certificate is a tensor grid
    of ``n_grid`` points per axis, which includes the four corners.
    """
    rho_max, u_min, u_max = (float(b) for b in box)
    if rho_max < 0:
        raise ValueError("density range must lie in [0, inf)")
    rr, uu = np.meshgrid(np.linspace(0.0, rho_max, n_grid), np.linspace(u_min, u_max, n_grid), indexing="ij")
    ev = eval_closure(spec, rr, uu)
    rff_sign, rff_w = _classify_sign(ev.rho_f_rhorho, rr, uu)
    fuu_sign, fuu_w = _classify_sign(ev.f_uu, rr, uu)
    fu_sign, fu_w = _classify_sign(ev.f_u, rr, uu)
    c2 = max(float(np.max(np.abs(a))) for a in (ev.f, ev.f_rho, ev.f_u, ev.f_rhorho, ev.f_uu, ev.f_rhou))
    fu_min, fu_max = float(ev.f_u.min()), float(ev.f_u.max())
    return StructureReport(
        box=(rho_max, u_min, u_max),
        n_grid=n_grid,
        fu_min=fu_min,
        fu_max=fu_max,
        fu_nonpositive=fu_max <= 0.0,
        fu_below_one=fu_max < 1.0,
        rho_f_rhorho_sign=rff_sign,
        f_uu_sign=fuu_sign,
        c2_norm=c2,
        witnesses={"rho_f_rhorho": rff_w, "f_uu": fuu_w, "f_u": fu_w},
    )


# ---------------------------------------------------------------------------
# Equilibrium curve u = phi(rho) by contraction


@dataclass
class EquilibriumCurve:
    rho: np.ndarray
    phi: np.ndarray
    residual: np.ndarray  # |f(rho, phi) - phi| per sample
    mu: float
    eps: float
    a: float
    factor_bound: float  # (a - eps) / (1 - eps)
    factor_observed: float
    iterations: int
    steps: list  # sup-norm of successive updates
    errors: list  # sup-norm distance of each iterate to the returned curve

    @property
    def range(self):
        return float(self.phi.min()), float(self.phi.max())


def equilibrium_phi(spec: ClosureSpec, rho_max, eps=None, tol=1e-12, max_iter=500,
                    u_box=(-1.0, 1.0), n_samples=257, start=None) -> EquilibriumCurve:
    """Solve ``f(rho, phi(rho)) = phi(rho)`` on ``[0, rho_max]`` by the map
    ``psi -> psi + mu * (f(rho, psi) - psi)`` with ``mu = 1 / (1 - eps)``.

    ``eps`` defaults to the certified grid minimum of f_u on the box, less a
    1e-3 safety margin. The iterates must stay inside ``u_box``.
    """
    u_lo, u_hi = float(u_box[0]), float(u_box[1])
    report = check_structure(spec, (rho_max, u_lo, u_hi))
    a = report.fu_max
    if not a < 1.0:
        raise NoContraction(f"sup f_u = {a:.6g} >= 1 on the search box")
    if eps is None:
        eps = report.fu_min - 1e-3
    elif eps > report.fu_min + 1e-12:
        raise NoContraction(f"eps = {eps} exceeds the certified min f_u = {report.fu_min:.6g}")
    if not np.isfinite(eps):
        raise NoContraction("no finite lower bound for f_u on the search box")
    eps = min(eps, a)
    mu = 1.0 / (1.0 - eps)
    bound = (a - eps) / (1.0 - eps)

    rho = np.linspace(0.0, float(rho_max), n_samples)
    psi = np.full_like(rho, 0.5 * (u_lo + u_hi) if start is None else start)
    iterates = [psi]
    steps = []
    for it in range(1, max_iter + 1):
        new = psi + mu * (spec.f(rho, psi) - psi)
        if not np.all(np.isfinite(new)):
            raise NoContraction("iteration diverged")
        if new.min() < u_lo or new.max() > u_hi:
            raise NoContraction("iterate left the certified search box")
        steps.append(float(np.max(np.abs(new - psi))))
        psi = new
        iterates.append(psi)
        residual = np.abs(spec.f(rho, psi) - psi)
        if residual.max() <= tol:
            break
    else:
        raise MaxIterExceeded(f"residual {residual.max():.3e} above tol {tol:.1e} after {max_iter} iterations")

    # contraction ratios, ignoring updates already at round-off level
    floor = 1e-13 * (1.0 + float(np.max(np.abs(psi))))
    ratios = [s1 / s0 for s0, s1 in zip(steps, steps[1:]) if s0 > floor]
    return EquilibriumCurve(
        rho=rho,
        phi=psi,
        residual=residual,
        mu=mu,
        eps=eps,
        a=a,
        factor_bound=bound,
        factor_observed=max(ratios) if ratios else 0.0,
        iterations=it,
        steps=steps,
        errors=[float(np.max(np.abs(p - psi))) for p in iterates],
    )
