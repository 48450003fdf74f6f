"""Initial-data profiles with closed-form derivatives and extrema.

Families and parameters (``x`` is the space variable, ``s = (x - center) / width``)::

    Constant(c)                              c
    Affine(a, b)                             a + b*x
    Gaussian(amp, center, width[, offset])   offset + amp*exp(-s**2)
    Tanh(amp, center, width[, offset])       offset + amp*tanh(s)
    Sine(amp, wavenumber, offset)            offset + amp*sin(wavenumber*x)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

_N_PARAMS = {
    "Constant": (1, 1),
    "Affine": (2, 2),
    "Gaussian": (3, 4),
    "Tanh": (3, 4),
    "Sine": (3, 3),
}
FAMILIES = tuple(_N_PARAMS)

# extremal values of the normalised shapes
_GAUSS_D1 = math.sqrt(2.0) * math.exp(-0.5)  # max |d/ds exp(-s^2)|
_GAUSS_D2_MAX = 4.0 * math.exp(-1.5)  # max d2/ds2 exp(-s^2), at s^2 = 3/2
_TANH_D2 = 4.0 / (3.0 * math.sqrt(3.0))  # max |d2/ds2 tanh s|


@dataclass(frozen=True)
class ProfileSpec:
    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in _N_PARAMS:
            raise ValueError(f"unknown profile family {self.family!r}; expected one of {FAMILIES}")
        params = tuple(float(p) for p in self.params)
        lo, hi = _N_PARAMS[self.family]
        if not lo <= len(params) <= hi:
            raise ValueError(f"{self.family} takes {lo}..{hi} parameters, got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ValueError("profile parameters must be finite")
        if self.family in ("Gaussian", "Tanh") and params[2] <= 0:
            raise ValueError("width must be positive")
        if self.family == "Sine" and params[1] == 0:
            raise ValueError("wavenumber must be nonzero")
        if self.family in ("Gaussian", "Tanh") and len(params) == 3:
            params = params + (0.0,)
        object.__setattr__(self, "params", params)

    def to_json(self) -> dict:
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_json(cls, obj) -> "ProfileSpec":
        return cls(obj["family"], tuple(obj.get("params", ())))

    # -- evaluation -------------------------------------------------------

    def __call__(self, x, order=0):
        return self.derivative(x, order)

    def derivative(self, x, order=0):
        x = np.asarray(x, dtype=float)
        fam, p = self.family, self.params
        if fam == "Constant":
            return np.full_like(x, p[0] if order == 0 else 0.0)
        if fam == "Affine":
            a, b = p
            return (a + b * x, np.full_like(x, b), np.zeros_like(x))[order] if order < 3 else np.zeros_like(x)
        if fam == "Gaussian":
            amp, c, w, off = p
            s = (x - c) / w
            g = np.exp(-s * s)
            if order == 0:
                return off + amp * g
            if order == 1:
                return amp * (-2.0 * s) * g / w
            if order == 2:
                return amp * (4.0 * s * s - 2.0) * g / w**2
        if fam == "Tanh":
            amp, c, w, off = p
            th = np.tanh((x - c) / w)
            sech2 = 1.0 - th * th
            if order == 0:
                return off + amp * th
            if order == 1:
                return amp * sech2 / w
            if order == 2:
                return -2.0 * amp * sech2 * th / w**2
        if fam == "Sine":
            amp, k, off = p
            if order == 0:
                return off + amp * np.sin(k * x)
            if order == 1:
                return amp * k * np.cos(k * x)
            if order == 2:
                return -amp * k * k * np.sin(k * x)
        raise ValueError(f"derivative order {order} not supported")

    # -- exact extrema over the real line ---------------------------------

    def bounds(self, order=0):
        """Exact ``(inf, sup)`` over R of the ``order``-th derivative (attained or approached)."""
        fam, p = self.family, self.params
        if fam == "Constant":
            return (p[0], p[0]) if order == 0 else (0.0, 0.0)
        if fam == "Affine":
            a, b = p
            if order == 0:
                return (a, a) if b == 0 else (-math.inf, math.inf)
            return (b, b) if order == 1 else (0.0, 0.0)
        if fam == "Gaussian":
            amp, _, w, off = p
            if order == 0:
                lo, hi = 0.0, amp
                return (off + min(lo, hi), off + max(lo, hi))
            if order == 1:
                m = abs(amp) * _GAUSS_D1 / w
                return (-m, m)
            lo, hi = -2.0 * amp / w**2, _GAUSS_D2_MAX * amp / w**2
            return (min(lo, hi), max(lo, hi))
        if fam == "Tanh":
            amp, _, w, off = p
            if order == 0:
                return (off - abs(amp), off + abs(amp))
            if order == 1:
                return (min(0.0, amp / w), max(0.0, amp / w))
            m = abs(amp) * _TANH_D2 / w**2
            return (-m, m)
        amp, k, off = p  # Sine
        m = abs(amp) * abs(k) ** order
        return (off - m, off + m) if order == 0 else (-m, m)

    def sup_norm(self, order=0):
        lo, hi = self.bounds(order)
        return max(abs(lo), abs(hi))

    @property
    def is_constant(self):
        lo, hi = self.bounds(0)
        return lo == hi

    def limits(self, order=0):
        """Values at ``(-inf, +inf)``, or None when the profile oscillates."""
        fam, p = self.family, self.params
        if fam == "Sine":
            return None
        if fam == "Constant":
            return (p[0], p[0]) if order == 0 else (0.0, 0.0)
        if fam == "Affine":
            a, b = p
            if order == 0:
                return (a, a) if b == 0 else (-math.copysign(math.inf, b), math.copysign(math.inf, b))
            return (b, b) if order == 1 else (0.0, 0.0)
        if order > 0:
            return (0.0, 0.0)
        amp, _, _, off = p
        return (off, off) if fam == "Gaussian" else (off - amp, off + amp)

    def window(self):
        """An x-interval containing every feature of the profile."""
        fam, p = self.family, self.params
        if fam in ("Gaussian", "Tanh"):
            return (p[1] - 12.0 * p[2], p[1] + 12.0 * p[2])
        if fam == "Sine":
            period = 2.0 * math.pi / abs(p[1])
            return (-period, period)
        return None


def extrema_of_sum(terms, n_scan=4096):
    """Infimum and supremum over R of ``sum(profile.derivative(x, order))``.

    ``terms`` is a sequence of ``(profile, order)`` pairs. Exact when at most
    one term varies; otherwise a ``n_scan``-point scan over the union of the
    feature windows with every local extremum polished by a bounded search,
    then compared with the values approached at infinity.

    Returns ``(inf, x_inf, sup, x_sup)``; an ``x`` is None when the extremum
    is only approached at infinity.
    """
    terms = list(terms)
    const = 0.0
    varying = []
    for prof, order in terms:
        lo, hi = prof.bounds(order)
        if lo == hi:
            const += lo
        else:
            varying.append((prof, order))
    if not varying:
        return const, 0.0, const, 0.0
    if len(varying) == 1:
        prof, order = varying[0]
        lo, hi = prof.bounds(order)
        x_lo, x_hi = _argextrema(prof, order)
        return const + lo, x_lo, const + hi, x_hi
    for prof, order in varying:
        lo, hi = prof.bounds(order)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            return -math.inf, None, math.inf, None

    def total(x):
        return const + sum(prof.derivative(x, order) for prof, order in varying)

    windows = [prof.window() for prof, _ in varying if prof.window() is not None]
    a = min(w[0] for w in windows)
    b = max(w[1] for w in windows)
    periods = [2.0 * math.pi / abs(prof.params[1]) for prof, _ in varying if prof.family == "Sine"]
    if periods:
        a -= max(periods)
        b += max(periods)
    xs = np.linspace(a, b, n_scan)
    vals = total(xs)
    h = xs[1] - xs[0]

    def polish(sign):
        # every discrete local extremum is refined: near-ties across periods are
        # common and the scan spacing alone cannot rank them
        v = sign * vals
        inner = (v[1:-1] <= v[:-2]) & (v[1:-1] <= v[2:])
        cands = np.concatenate(([0], np.flatnonzero(inner) + 1, [len(v) - 1]))
        best, x_best = float(v[cands[0]]), float(xs[cands[0]])
        for k in cands:
            if v[k] < best:
                best, x_best = float(v[k]), float(xs[k])
            res = minimize_scalar(lambda x: sign * float(total(x)), bounds=(xs[k] - h, xs[k] + h),
                                  method="bounded", options={"xatol": 1e-12})
            if res.fun < best:
                best, x_best = float(res.fun), float(res.x)
        return sign * best, x_best

    inf, x_inf = polish(1.0)
    sup, x_sup = polish(-1.0)

    # values approached in the tails
    oscillating = [(p, o) for p, o in varying if p.limits(o) is None]
    settled = [(p, o) for p, o in varying if p.limits(o) is not None]
    for side in (0, 1):
        tail = const + sum(p.limits(o)[side] for p, o in settled)
        osc_lo = sum(p.bounds(o)[0] for p, o in oscillating)
        osc_hi = sum(p.bounds(o)[1] for p, o in oscillating)
        if tail + osc_lo < inf:
            inf, x_inf = tail + osc_lo, None
        if tail + osc_hi > sup:
            sup, x_sup = tail + osc_hi, None
    return inf, x_inf, sup, x_sup


def _argextrema(prof, order):
    """Locations of the exact extrema of a single profile (None if only approached)."""
    fam, p = prof.family, prof.params
    if fam == "Gaussian":
        amp, c, w, _ = p
        if order == 0:
            return (None, c) if amp > 0 else (c, None)
        if order == 1:
            xm = c + w / math.sqrt(2.0)
            return (xm, c - w / math.sqrt(2.0)) if amp > 0 else (c - w / math.sqrt(2.0), xm)
        xo = c + w * math.sqrt(1.5)
        return (c, xo) if amp > 0 else (xo, c)
    if fam == "Tanh":
        amp, c, w, _ = p
        if order == 0:
            return (None, None)
        if order == 1:
            return (None, c) if amp > 0 else (c, None)
        # extremes of -sech^2 tanh at tanh = +-1/sqrt(3)
        s = math.atanh(1.0 / math.sqrt(3.0))
        return (c + w * s, c - w * s) if amp > 0 else (c - w * s, c + w * s)
    if fam == "Sine":
        amp, k, _ = p
        # argmin/argmax of amp * k^order * sin(k x + order*pi/2)
        phase = order * math.pi / 2.0
        scale = amp * k**order
        x_max = (math.pi / 2.0 - phase) / k
        x_min = (-math.pi / 2.0 - phase) / k
        return (x_min, x_max) if scale > 0 else (x_max, x_min)
    return (None, None)
