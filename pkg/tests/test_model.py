"""Reaction terms, Jacobians and steady-state branches."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cloudturing.model import (
    Branch,
    CloudParams,
    DegenerateCubic,
    DomainError,
    NoAdmissibleEquilibrium,
    NotApplicable,
    State,
    TrivialCase,
    candidate_equilibria,
    conserved_quantity,
    cubic_discriminant,
    equilibrium_beta_class,
    equilibrium_cubic_B,
    equilibrium_general_case,
    find_equilibrium,
    jacobian,
    reaction_rhs,
    real_cubic_roots,
    residual_norm,
    rpow,
    solve_equilibrium_cubic,
    trivial_equilibrium,
    trivial_stability_case,
)

REF = CloudParams()  # c=5, a1=a2=1, gamma=1, beta=2, zeta=1, d=0.1, B=0


def fd_jacobian(p, qc, qr, rel=1e-6):
    hc, hr = rel * max(qc, 1.0), rel * max(qr, 1.0)
    fcp, frp = reaction_rhs(p, (qc + hc, qr))
    fcm, frm = reaction_rhs(p, (qc - hc, qr))
    gcp, grp = reaction_rhs(p, (qc, qr + hr))
    gcm, grm = reaction_rhs(p, (qc, qr - hr))
    return np.array([[(fcp - fcm) / (2 * hc), (gcp - gcm) / (2 * hr)],
                     [(frp - frm) / (2 * hc), (grp - grm) / (2 * hr)]])


params_strategy = st.builds(
    CloudParams,
    c=st.floats(0.2, 10),
    a1=st.floats(0.1, 5),
    a2=st.floats(0.1, 5),
    gamma=st.one_of(st.just(1.0), st.floats(1.0, 3.0)),
    beta_c=st.one_of(st.just(1.0), st.just(2.0), st.floats(1.0, 3.0)),
    beta_r=st.floats(0.3, 3.0),
    zeta=st.floats(0.3, 3.0),
    d=st.floats(0.01, 2.0),
    B=st.floats(0.0, 2.0),
)

# c above a1 by at least 5%, so a non-trivial state exists
supercritical = params_strategy.flatmap(lambda p: st.floats(1.05, 10).map(lambda f: replace(p, c=p.a1 * f)))


class TestParams:
    def test_defaults_are_reference_set(self):
        assert (REF.c, REF.a1, REF.a2, REF.gamma, REF.beta_c, REF.beta_r, REF.zeta, REF.d, REF.B) == (
            5, 1, 1, 1, 2, 2, 1, 0.1, 0)

    @pytest.mark.parametrize("kw", [{"c": 0}, {"a1": -1}, {"d": 0}, {"B": -0.1}, {"gamma": 0.5},
                                    {"beta_c": 0.9}, {"beta_r": 0}, {"zeta": -1}, {"c": math.nan}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            CloudParams(**kw)

    def test_state_rejects_negative(self):
        with pytest.raises(ValueError):
            State(-1e-3, 1.0)

    def test_rpow_guards_negative_fractional(self):
        with pytest.raises(DomainError):
            rpow(-1.0, 0.5)
        assert rpow(-2.0, 2.0) == 4.0
        with pytest.raises(DomainError):
            rpow(0.0, -1.0)


class TestReactionRhs:
    def test_origin_is_fixed(self):
        assert reaction_rhs(REF, (0.0, 0.0)) == (0.0, 0.0)

    def test_vanishes_at_beta_two_equilibrium(self):
        e = equilibrium_beta_class(REF)
        assert residual_norm(REF, e) < 1e-12

    def test_trivial_state_with_rain_influx(self):
        p = CloudParams(B=0.5)
        assert reaction_rhs(p, (0.0, 5.0)) == pytest.approx((0.0, 0.0), abs=1e-15)

    @given(params_strategy, st.floats(0, 10), st.floats(0, 10))
    def test_collision_terms_cancel(self, p, qc, qr):
        f1, f2 = reaction_rhs(p, (qc, qr))
        expected = p.c * qc + p.B - p.d * qr**p.zeta
        assert f1 + f2 == pytest.approx(expected, rel=1e-12, abs=1e-12 * (1 + abs(f1) + abs(f2)))


class TestJacobian:
    def test_reference_equilibrium_entries(self):
        j = jacobian(REF, equilibrium_beta_class(REF))
        assert (j.a11, j.a12, j.a21, j.a22) == pytest.approx((-4.0, -0.16, 9.0, 0.06), abs=1e-9)

    def test_closed_forms_for_beta_two(self):
        c, a1, d, beta = REF.c, REF.a1, REF.d, 2.0
        j = jacobian(REF, equilibrium_beta_class(REF))
        assert j.a11 == pytest.approx((1 - beta) * (c - a1), abs=1e-12)
        assert j.a12 == pytest.approx(-beta * (d / c) * (c - a1), abs=1e-12)
        assert j.a21 == pytest.approx(a1 + beta * (c - a1), abs=1e-12)
        assert j.a22 == pytest.approx(d * (beta * (c - a1) / c - 1), abs=1e-12)

    def test_trivial_state_superlinear_exponents(self):
        p = CloudParams(gamma=1.5, beta_c=2.0, zeta=2.0, B=0.4)
        e = trivial_equilibrium(p)
        j = jacobian(p, e)
        assert j.a12 == 0.0 and j.a21 == 0.0
        assert j.a22 == pytest.approx(-p.d * p.zeta * (p.B / p.d) ** ((p.zeta - 1) / p.zeta))

    @given(params_strategy, st.floats(0.01, 10), st.floats(0.01, 10))
    def test_matches_finite_differences(self, p, qc, qr):
        j = jacobian(p, (qc, qr)).as_array()
        fd = fd_jacobian(p, qc, qr)
        scale = np.abs(j).max() + 1.0
        assert np.allclose(j, fd, rtol=1e-6, atol=1e-6 * scale)


class TestTrivialBranch:
    def test_values(self):
        assert trivial_equilibrium(REF).as_tuple() == (0.0, 0.0)
        assert trivial_equilibrium(CloudParams(B=0.5)).as_tuple() == (0.0, 5.0)
        e = trivial_equilibrium(CloudParams(B=0.8, zeta=2.0))
        assert e.qr == pytest.approx(math.sqrt(8.0), rel=1e-15)
        assert e.branch is Branch.TRIVIAL and e.admissible

    def test_case_split(self):
        p = CloudParams(beta_c=1, beta_r=1.5, B=0.2)
        a11, _, case = trivial_stability_case(p)
        assert case is TrivialCase.LINEAR_LINEAR
        assert a11 == pytest.approx(p.c - p.a1 - p.a2 * (p.B / p.d) ** (p.beta_r / p.zeta))
        a11, a21, case = trivial_stability_case(CloudParams(gamma=1.2, beta_c=1.5))
        assert case is TrivialCase.UNSTABLE_ALWAYS and a11 == 5.0 and a21 == 0.0
        a11, _, case = trivial_stability_case(CloudParams(c=0.5, a1=1))
        assert case is TrivialCase.LINEAR_SUPER and a11 == pytest.approx(-0.5)

    def test_sublinear_sedimentation_at_empty_state_is_singular(self):
        with pytest.raises(DomainError):
            jacobian(CloudParams(zeta=0.5), trivial_equilibrium(CloudParams(zeta=0.5)))

    # sublinear sedimentation is singular at qr = 0, including when qr underflows
    @given(params_strategy.filter(lambda p: p.zeta >= 1 or (p.B / p.d) ** (1 / p.zeta) > 1e-200))
    def test_case_split_matches_general_jacobian(self, p):
        a11, a21, _ = trivial_stability_case(p)
        j = jacobian(p, trivial_equilibrium(p))
        assert a11 == pytest.approx(j.a11, rel=1e-12, abs=1e-12)
        assert a21 == pytest.approx(j.a21, rel=1e-12, abs=1e-12)


class TestGeneralCaseBranch:
    def test_reference_values(self):
        p = CloudParams(beta_c=1)
        e = equilibrium_general_case(p)
        assert e.qr == pytest.approx(2.0) and e.qc == pytest.approx(0.04)
        assert e.admissible and residual_norm(p, e) < 1e-12

    def test_inadmissible_cases(self):
        assert not equilibrium_general_case(CloudParams(beta_c=1, c=1, a1=1)).admissible
        e = equilibrium_general_case(CloudParams(beta_c=1, B=0.3))
        assert e.qc == pytest.approx((0.2 - 0.3) / 5) and not e.admissible

    def test_not_applicable(self):
        with pytest.raises(NotApplicable):
            equilibrium_general_case(REF)


class TestBetaClassBranch:
    def test_reference_values(self):
        e = equilibrium_beta_class(REF)
        oracle_qc = ((0.1 / 5) ** 2 * 4.0) ** (1 / 3)
        assert e.qc == pytest.approx(oracle_qc, rel=1e-14)
        assert (e.qc, e.qr) == pytest.approx((0.116961, 5.848035), abs=1e-6)
        assert e.qr == pytest.approx(5 / 0.1 * e.qc, rel=1e-15)

    def test_degenerates_when_c_equals_a1(self):
        e = equilibrium_beta_class(CloudParams(c=1, a1=1))
        assert e.qc == 0.0

    def test_fractional_beta(self):
        p = CloudParams(beta_c=1.15, beta_r=1.15)
        e = equilibrium_beta_class(p)
        assert e.admissible and residual_norm(p, e) < 1e-12

    def test_guard(self):
        with pytest.raises(NotApplicable):
            equilibrium_beta_class(CloudParams(B=0.1))


class TestCubicBranch:
    def test_b_zero_matches_beta_class(self):
        (e,) = [e for e in equilibrium_cubic_B(REF) if e.admissible]
        ref = equilibrium_beta_class(REF)
        assert e.qr == pytest.approx(200 ** (1 / 3), rel=1e-14)
        assert e.qc == pytest.approx(ref.qc, rel=1e-12) and e.qr == pytest.approx(ref.qr, rel=1e-12)

    def test_rain_influx_root(self):
        p = REF.with_B(0.137)
        (e,) = [e for e in equilibrium_cubic_B(p) if e.admissible]
        assert 0.1 * e.qr**3 - 0.137 * e.qr**2 - 20 == pytest.approx(0.0, abs=1e-10)
        assert e.qr == pytest.approx(6.342, abs=1e-3)
        assert e.qc == pytest.approx((0.1 * e.qr - 0.137) / 5, rel=1e-14)
        assert e.qc == pytest.approx(0.0994, abs=1e-4)

    def test_c_equals_a1(self):
        p = CloudParams(c=1, a1=1, B=0.3)
        roots = solve_equilibrium_cubic(p.d, p.B, 0.0)
        assert any(r == pytest.approx(3.0) for r in roots)
        (e,) = [e for e in equilibrium_cubic_B(p) if e.admissible and e.qr > 0]
        assert e.qc == pytest.approx(0.0, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateCubic):
            solve_equilibrium_cubic(0.0, 0.1, 20.0)

    def test_single_real_root_for_positive_constant(self):
        # discriminant is positive throughout B >= 0 when c > a1
        for B in (0.0, 0.5, 1.105, 1.2, 5.0):
            assert cubic_discriminant(REF.with_B(B)) > 0
            assert len(equilibrium_cubic_B(REF.with_B(B))) == 1

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    def test_real_cubic_roots_are_roots(self, a, b, c0):
        for r in real_cubic_roots(a, b, c0):
            scale = 1 + abs(r) ** 3 + abs(a) * r * r + abs(b * r) + abs(c0)
            assert abs(r**3 + a * r * r + b * r + c0) <= 1e-10 * scale

    def test_three_real_roots(self):
        # (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        assert real_cubic_roots(0.0, -7.0, 6.0) == pytest.approx([-3.0, 1.0, 2.0])


class TestConservedQuantity:
    def test_reference(self):
        assert conserved_quantity(REF, equilibrium_beta_class(REF)) == pytest.approx(4.0, rel=1e-12)

    def test_linear_class(self):
        p = CloudParams(beta_c=1, beta_r=1.7)
        assert conserved_quantity(p, equilibrium_general_case(p)) == pytest.approx(p.conserved, rel=1e-12)

    def test_unaffected_by_rain_influx(self):
        p = REF.with_B(0.137)
        (e,) = [e for e in equilibrium_cubic_B(p) if e.admissible]
        assert conserved_quantity(p, e) == pytest.approx(4.0, abs=1e-8)

    def test_errors(self):
        with pytest.raises(NotApplicable):
            conserved_quantity(CloudParams(gamma=2), equilibrium_beta_class(REF))
        with pytest.raises(DomainError):
            conserved_quantity(REF, trivial_equilibrium(REF))

    @given(supercritical.map(lambda p: replace(p, gamma=1.0)))
    def test_holds_at_every_admissible_equilibrium(self, p):
        for e in candidate_equilibria(p):
            if e.admissible and e.qc > 0:
                assert conserved_quantity(p, e) == pytest.approx(p.conserved, rel=1e-8)


class TestResidualsAndSelection:
    @given(supercritical)
    def test_admissible_equilibria_have_small_residual(self, p):
        for e in candidate_equilibria(p):
            if e.admissible:
                assert residual_norm(p, e) < 1e-10 * max(1.0, abs(e.qc), abs(e.qr))

    @given(st.floats(0.1, 3.0), st.floats(0.3, 3.0), st.floats(0.0, 2.0))
    def test_sign_lemma_linear_class(self, beta_r, extra, B):
        # beta_r <= zeta makes a22 negative at the linear-class steady state
        p = CloudParams(beta_c=1, beta_r=beta_r, zeta=beta_r + extra, B=B)
        e = equilibrium_general_case(p)
        if e.admissible:
            assert jacobian(p, e).a22 < 0

    def test_find_equilibrium_reference(self):
        assert find_equilibrium(REF).as_tuple() == pytest.approx((0.11696070952851464, 5.848035476425732), rel=1e-9)

    def test_find_equilibrium_newton_fallback(self):
        p = CloudParams(gamma=1.3, beta_c=1.6, beta_r=1.2, zeta=1.1, B=0.05)
        assert candidate_equilibria(p) == []
        e = find_equilibrium(p)
        assert e.branch is Branch.NUMERIC and e.admissible
        assert residual_norm(p, e) < 1e-10

    def test_no_admissible_equilibrium(self):
        with pytest.raises(NoAdmissibleEquilibrium, match="c > a1"):
            find_equilibrium(CloudParams(c=0.5, a1=1.0))
