import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from threshold_lab.characteristics import quadrature_phi_factor
from threshold_lab.closures import ClosureSpec
from threshold_lab.errors import HypothesisFailed, InvalidData, SignChange
from threshold_lab.grid_solver import OUTFLOW, RunConfig, run
from threshold_lab.profiles import ProfileSpec
from threshold_lab.thresholds import (
    BLOWUP,
    GLOBAL,
    INDETERMINATE,
    THM1,
    THM2,
    THM3,
    audit,
    classify,
    compute_bounds,
    compute_M,
    envelope_rate,
    inf_gap,
    linear_envelope,
    rho_bound_along,
    rho_pointwise_bound,
    rhox_envelope,
    u_bounds,
)

AFFINE = ClosureSpec.affine(1, 1)
COUPLED = ClosureSpec.rho_coupled(1)


def const(c):
    return ProfileSpec("Constant", (c,))


RHO_SINE = ProfileSpec("Sine", (0.1, 1.0, 0.2))
U_DOWN = ProfileSpec("Tanh", (-0.5, 0.0, 1.0))


class TestComputeM:
    def test_constant_density(self):
        assert compute_M(const(0.5), const(0.3)) == 0.5

    def test_tanh_peak(self):
        assert compute_M(const(0.2), ProfileSpec("Tanh", (0.5, 0, 1))) == pytest.approx(0.7)

    @pytest.mark.parametrize("u0,want", [(ProfileSpec("Tanh", (0.5, 0, 1)), 0.5), (U_DOWN, 0.0)])
    def test_vacuum(self, u0, want):
        assert compute_M(const(0.0), u0) == pytest.approx(want)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.floats(-1, 1), st.floats(0.3, 3))
    def test_dominates_samples(self, c, amp, width):
        rho0, u0 = const(c), ProfileSpec("Gaussian", (amp, 0.0, width))
        xs = np.linspace(-20, 20, 4001)
        M = compute_M(rho0, u0)
        assert M >= max(c, float(np.max(u0(xs, 1) + c))) - 1e-12


class TestUBounds:
    def test_affine_from_rest(self):
        assert u_bounds(AFFINE, const(0.3), const(0.0)) == pytest.approx((0.0, 0.5))

    def test_pinned_at_equilibrium(self):
        assert u_bounds(AFFINE, const(0.3), const(0.5)) == pytest.approx((0.5, 0.5))

    def test_rho_coupled(self):
        assert u_bounds(COUPLED, const(0.5), ProfileSpec("Tanh", (1.0, 0, 1))) == pytest.approx((-1.0, 1.0))


class TestEnvelope:
    def test_rate_arithmetic(self):
        assert envelope_rate(1.0, 1.0) == 24.0
        assert envelope_rate(2.0, 0.0) == 96.0

    def test_vacuum_constant_velocity(self):
        beta, _ = rhox_envelope(AFFINE, const(0.0), const(0.1))
        assert beta == 1.0

    def test_linear_envelope(self):
        assert linear_envelope(0.5, 0.25, [1, -2, 0, 0, 1, 0.5]) == (1.75, 4.5)

    def test_premises(self):
        with pytest.raises(HypothesisFailed) as info:
            rhox_envelope(AFFINE, const(0.2), U_DOWN)
        assert "e0_nonneg" in info.value.failed
        with pytest.raises(HypothesisFailed) as info:
            rhox_envelope(COUPLED, const(0.2), const(0.0))
        assert "f_rho_independent" in info.value.failed


class TestRhoPointwise:
    def test_example(self):
        got = rho_pointwise_bound(AFFINE, const(1.0), const(0.0), 0.25, 0.0)
        # independent check: factor by quadrature times the gap
        factor = quadrature_phi_factor(AFFINE, 0.0, 0.25)
        assert got == pytest.approx(1.0 / (factor * 0.5), rel=1e-10)
        assert got == pytest.approx(math.sqrt(2), rel=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 2), st.floats(-2, 0.45), st.floats(-3, 3))
    def test_exact_at_start(self, sup, u_start, x):
        u0 = ProfileSpec("Constant", (u_start,))
        assert rho_pointwise_bound(AFFINE, const(sup), u0, u_start, x) == pytest.approx(sup, rel=1e-12)

    def test_asymptote(self):
        vals = [rho_pointwise_bound(AFFINE, const(1.0), const(0.0), 0.5 - h, 0.0) for h in (1e-1, 1e-3, 1e-5)]
        assert vals[0] < vals[1] < vals[2]
        assert vals[2] > 100

    def test_crossing(self):
        with pytest.raises(SignChange):
            rho_pointwise_bound(AFFINE, const(1.0), const(0.0), 0.6, 0.0)

    def test_needs_strict_hyperbolicity(self):
        with pytest.raises(HypothesisFailed):
            rho_pointwise_bound(AFFINE, const(1.0), ProfileSpec("Sine", (1, 1, 0)), 0.1, 0.0)

    def test_vectorised_agrees(self):
        u = np.array([-0.2, 0.1, 0.3, 0.45])
        many = rho_bound_along(AFFINE, const(0.7), RHO_SINE, u, 0.4)
        x = 0.4
        one = [rho_pointwise_bound(AFFINE, const(0.7), RHO_SINE, v, x) for v in u]
        assert many == pytest.approx(one, rel=1e-8)


class TestClassify:
    def test_strict_global(self):
        v = classify(AFFINE, RHO_SINE, const(0.0))
        assert (v.branch, v.outcome) == (THM1, GLOBAL)
        assert v.min_e0 == pytest.approx(0.1)
        assert inf_gap(AFFINE, const(0.0)) == 1.0

    def test_blowup(self):
        v = classify(AFFINE, const(0.2), U_DOWN)
        # u0 approaches the equilibrium 0.5 at -infinity, so the gap infimum is 0
        assert (v.branch, v.outcome) == (THM2, BLOWUP)
        assert v.tc_upper == pytest.approx(10 / 3)
        assert v.witness_x == pytest.approx(0.0)

    def test_general_global(self):
        v = classify(COUPLED, ProfileSpec("Tanh", (0.1, 0, 1, 0.1)), const(0.0))
        assert (v.branch, v.outcome) == (THM3, GLOBAL)
        names = {h.name: h.satisfied for h in v.hypothesis_log}
        assert names["increasing_convex_bullet"]

    def test_general_indeterminate(self):
        v = classify(COUPLED, RHO_SINE, const(0.0))
        assert (v.branch, v.outcome) == (THM3, INDETERMINATE)
        assert v.failed_hypotheses

    def test_weak_when_data_touches_equilibrium(self):
        v = classify(AFFINE, RHO_SINE, ProfileSpec("Tanh", (0.2, 0, 1, 0.5)))
        assert v.branch == THM2

    def test_forced_branch_keeps_outcome_logic(self):
        v = classify(AFFINE, ProfileSpec("Gaussian", (0.3, 0, 1)), const(0.0), branch=THM2)
        assert (v.branch, v.outcome) == (THM2, GLOBAL)

    def test_negative_density_rejected(self):
        with pytest.raises(InvalidData):
            classify(AFFINE, ProfileSpec("Sine", (0.3, 1, 0.1)), const(0.0))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.floats(-1, 1), st.floats(0.3, 3))
    def test_outcome_follows_sign_of_e0(self, c, amp, width):
        rho0, u0 = const(c), ProfileSpec("Tanh", (amp, 0.0, width))
        v = classify(AFFINE, rho0, u0)
        min_e0 = c + min(0.0, amp / width)
        if min_e0 < -1e-9:
            assert v.outcome == BLOWUP
            assert v.tc_upper == pytest.approx(-1 / min_e0, rel=1e-9)
        elif min_e0 > 1e-9:
            assert v.outcome != BLOWUP


def _run(spec, rho0, u0, lo, hi, n, t_end, boundary="Periodic"):
    return run(RunConfig(spec, rho0, u0, lo, hi, n, t_end, boundary))


class TestAudit:
    def test_global_run_passes(self):
        res = _run(AFFINE, RHO_SINE, const(0.0), -math.pi, math.pi, 200, 5.0)
        b = compute_bounds(AFFINE, RHO_SINE, const(0.0))
        checks = {c.name: c for c in audit(res, b, classify(AFFINE, RHO_SINE, const(0.0)))}
        for name in ("positivity", "box_rho", "box_e", "u_bounds", "sign_invariance", "riemann_modulus"):
            assert checks[name].passed, name
            assert math.isfinite(checks[name].margin)

    def test_blowup_time_checked(self):
        rho0 = const(0.2)
        res = _run(AFFINE, rho0, U_DOWN, -10, 10, 200, 5.0, OUTFLOW)
        v = classify(AFFINE, rho0, U_DOWN)
        checks = {c.name: c for c in audit(res, compute_bounds(AFFINE, rho0, U_DOWN), v)}
        assert checks["blowup_time"].passed
        assert "box_rho" not in checks

    def test_monotone_general_run(self):
        rho0 = ProfileSpec("Tanh", (0.1, 0, 1, 0.1))
        res = _run(COUPLED, rho0, const(0.0), -10, 10, 200, 5.0, OUTFLOW)
        v = classify(COUPLED, rho0, const(0.0))
        checks = {c.name: c for c in audit(res, compute_bounds(COUPLED, rho0, const(0.0)), v)}
        assert checks["xi_sign"].passed and checks["eta_sign"].passed

    def test_missing_blowup_is_failure(self):
        rho0 = const(0.2)
        res = _run(AFFINE, rho0, U_DOWN, -10, 10, 64, 1.0, OUTFLOW)
        v = classify(AFFINE, rho0, U_DOWN)
        v.tc_upper = 0.1  # pretend the bound was much earlier than the run length
        checks = {c.name: c for c in audit(res, compute_bounds(AFFINE, rho0, U_DOWN), v)}
        assert checks["blowup_time"].passed is False
