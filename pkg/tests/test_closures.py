import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from threshold_lab.closures import (
    CUSTOM_MONOMIALS,
    ClosureSpec,
    SignClass,
    check_structure,
    equilibrium_phi,
    eval_closure,
    find_sigma,
)
from threshold_lab.errors import (
    DegenerateSigma,
    EmptySigma,
    MaxIterExceeded,
    NoContraction,
    NonFiniteEval,
)

CUSTOM = ClosureSpec.custom({(0, 0): 0.2, (1, 0): 0.5, (0, 2): -0.25})
FAMILIES = [
    ClosureSpec.affine(1, 1),
    ClosureSpec.affine(0.3, -0.7),
    ClosureSpec.sin_shift(),
    ClosureSpec.pressureless(),
    ClosureSpec.rho_coupled(1),
    ClosureSpec.rho_coupled(-2.5),
    CUSTOM,
    ClosureSpec.custom([0.1, -0.3, 0.2, 0.05, -0.1, 0.02, 0.01, 0.0, -0.02, 0.03, 0.01, 0.0, 0.0, -0.01, 0.02]),
]


def central(fun, x, h=1e-5):
    return (fun(x + h) - fun(x - h)) / (2 * h)


class TestEvalClosure:
    def test_affine_substitution(self):
        ev = eval_closure(ClosureSpec.affine(1, 1), 2.0, 0.0)
        assert ev.f == 1.0
        assert ev.f_u == -1.0
        assert ev.lam1 == 1.0
        assert ev.lam2 == 0.0

    @pytest.mark.parametrize("rho,u", [(0.0, -1.3), (0.7, 0.2), (5.0, 3.0)])
    def test_pressureless_speeds_coincide(self, rho, u):
        ev = eval_closure(ClosureSpec.pressureless(), rho, u)
        assert ev.lam1 == ev.lam2 == u

    def test_rho_coupled_second_derivatives(self):
        ev = eval_closure(ClosureSpec.rho_coupled(1), 1.0, 0.0)
        assert ev.rho_f_rhorho == 2.0
        assert ev.f_uu == 0.0

    def test_negative_density_rejected(self):
        with pytest.raises(ValueError):
            eval_closure(ClosureSpec.affine(1, 1), -0.1, 0.0)

    def test_overflowing_custom_is_non_finite(self):
        spec = ClosureSpec.custom({(0, 4): 1e300})
        with pytest.raises(NonFiniteEval):
            eval_closure(spec, 1.0, 1e10)

    def test_vectorised_shapes(self):
        rho = np.linspace(0, 1, 7)
        ev = eval_closure(CUSTOM, rho, 0.3)
        assert all(np.shape(a) == (7,) for a in ev)

    @pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: s.family)
    def test_partials_match_central_differences(self, spec):
        rng = np.random.default_rng(7)
        rho = rng.uniform(0.1, 2.0, 100)
        u = rng.uniform(-1.5, 1.5, 100)
        ev = eval_closure(spec, rho, u)
        checks = [
            (ev.f_rho, central(lambda r: spec.f(r, u), rho)),
            (ev.f_u, central(lambda v: spec.f(rho, v), u)),
            (ev.f_rhorho, central(lambda r: eval_closure(spec, r, u).f_rho, rho)),
            (ev.f_uu, central(lambda v: eval_closure(spec, rho, v).f_u, u)),
            (ev.f_rhou, central(lambda v: eval_closure(spec, rho, v).f_rho, u)),
            (ev.rho_f_rhorho, central(lambda r: central(lambda s: s * spec.f(s, u), r, 1e-4), rho, 1e-4)),
        ]
        for exact, fd in checks:
            scale = np.maximum(np.abs(exact), 1.0)
            assert np.max(np.abs(exact - fd) / scale) <= 1e-6

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, 3), st.floats(-3, 3))
    def test_lambda_definitions(self, rho, u):
        for spec in FAMILIES:
            ev = eval_closure(spec, rho, u)
            assert ev.lam1 == pytest.approx(rho * ev.f_rho + ev.f, abs=1e-14)
            assert ev.lam2 == u

    def test_json_round_trip(self):
        for spec in FAMILIES:
            assert ClosureSpec.from_json(spec.to_json()) == spec

    def test_custom_monomial_table(self):
        assert len(CUSTOM_MONOMIALS) == 15
        assert CUSTOM_MONOMIALS[:3] == [(0, 0), (1, 0), (0, 1)]
        assert all(i + j <= 4 for i, j in CUSTOM_MONOMIALS)
        with pytest.raises(ValueError):
            ClosureSpec.custom({(3, 2): 1.0})

    @pytest.mark.parametrize("family,params", [("Affine", (1,)), ("Nope", ()), ("RhoCoupled", (math.nan,))])
    def test_bad_specs(self, family, params):
        with pytest.raises(ValueError):
            ClosureSpec(family, params)


class TestSigma:
    def test_sin_shift_roots(self):
        roots = find_sigma(ClosureSpec.sin_shift(), (-4, 4))
        assert [r.u for r in roots] == pytest.approx([-math.pi, 0.0, math.pi], abs=1e-11)
        # f_u = 1 + cos u: 0 at +-pi, 2 at 0
        assert [r.stable for r in roots] == [True, False, True]

    def test_affine_single_stable_root(self):
        (root,) = find_sigma(ClosureSpec.affine(1, 1), (-1, 2))
        assert root.u == pytest.approx(0.5, abs=1e-12)
        assert root.f_u == -1.0 and root.stable

    def test_odd_closure_root_at_origin(self):
        (root,) = find_sigma(ClosureSpec.affine(0, 1), (-1, 1))
        assert abs(root.u) <= 1e-12

    def test_empty(self):
        with pytest.raises(EmptySigma):
            find_sigma(ClosureSpec.affine(1, 1), (1, 2))

    def test_degenerate(self):
        with pytest.raises(DegenerateSigma):
            find_sigma(ClosureSpec.pressureless(), (-1, 1))

    def test_needs_rho_independence(self):
        with pytest.raises(ValueError):
            find_sigma(ClosureSpec.rho_coupled(1), (-1, 1))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-2, 2), st.floats(-0.9, 3.0))
    def test_residual_within_tol(self, a, b):
        spec = ClosureSpec.affine(a, b)
        try:
            roots = find_sigma(spec, (-5, 5), tol=1e-12)
        except EmptySigma:
            assert abs(a / (1 + b)) > 5 - 1e-9
            return
        assert all(abs(spec.gap(r.u)) <= 1e-12 * max(1.0, 1 + b) for r in roots)
        assert [r.u for r in roots] == sorted(r.u for r in roots)


class TestStructure:
    def test_affine_box(self):
        rep = check_structure(ClosureSpec.affine(1, 1), (1, -1, 2))
        assert rep.fu_nonpositive
        assert rep.f_uu_sign is SignClass.ZERO
        assert rep.f_uu_sign.nonneg and rep.f_uu_sign.nonpos

    def test_sin_shift_not_monotone_decreasing(self):
        rep = check_structure(ClosureSpec.sin_shift(), (1, 0.1, 3))
        assert not rep.fu_nonpositive
        assert not rep.fu_below_one

    def test_rho_coupled_convex(self):
        rep = check_structure(ClosureSpec.rho_coupled(1), (2, -1, 1))
        assert rep.rho_f_rhorho_sign is SignClass.NONNEG
        assert rep.c2_norm == pytest.approx(3.0)  # |f| = |rho - u| peaks at rho=2, u=-1

    def test_mixed_sign_has_two_witnesses(self):
        rep = check_structure(ClosureSpec.sin_shift(), (1, -3, 3))
        assert rep.f_uu_sign is SignClass.MIXED
        w = rep.witnesses["f_uu"]
        pos, neg = w["pos"], w["neg"]
        assert -math.sin(pos[1]) > 0 > -math.sin(neg[1])

    def test_json(self):
        doc = check_structure(CUSTOM, (1, -1, 1)).to_json()
        assert doc["box"] == {"rho": [0.0, 1.0], "u": [-1.0, 1.0]}
        assert doc["n_grid"] == 64


class TestEquilibrium:
    def test_rho_coupled_one_step(self):
        curve = equilibrium_phi(ClosureSpec.rho_coupled(1), 2.0, eps=-1.0, start=0.7)
        assert curve.mu == 0.5
        assert curve.factor_bound == 0.0
        assert np.max(np.abs(curve.phi - curve.rho / 2)) <= 1e-15
        assert curve.iterations == 1

    def test_affine_constant_curve(self):
        curve = equilibrium_phi(ClosureSpec.affine(1, 1), 1.0)
        assert np.allclose(curve.phi, 0.5, atol=1e-12)

    def test_custom_factor_within_bound(self):
        curve = equilibrium_phi(CUSTOM, 0.5)
        assert curve.residual.max() <= 1e-12
        assert curve.factor_observed <= curve.factor_bound + 0.05

    def test_errors_monotone_after_first_step(self):
        curve = equilibrium_phi(CUSTOM, 0.5)
        errs = np.array(curve.errors[1:])
        assert np.all(np.diff(errs) <= 1e-15)

    def test_no_contraction_when_fu_reaches_one(self):
        with pytest.raises(NoContraction):
            equilibrium_phi(ClosureSpec.sin_shift(), 1.0, u_box=(-1, 1))

    def test_eps_above_certified_minimum_is_refused(self):
        with pytest.raises(NoContraction):
            equilibrium_phi(ClosureSpec.rho_coupled(1), 1.0, eps=-0.5)

    def test_stall(self):
        with pytest.raises(MaxIterExceeded):
            equilibrium_phi(CUSTOM, 0.5, max_iter=2, tol=1e-15)
