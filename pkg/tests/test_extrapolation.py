import random
from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from onesided_lab.errors import (
    ExponentCollapse,
    InvalidParams,
    NoAdmissibleTheta,
    OrderViolation,
    ThetaOutOfRange,
)
from onesided_lab.extrapolation import (
    PlanSkeleton,
    counterexample_probe,
    counterexample_sweep,
    counterexample_weight,
    endpoint_exponent,
    exact,
    render,
    select_theta,
    solve_diagonal,
    solve_offdiagonal,
    verify_plan,
)
from onesided_lab.numerics import SearchSpec
from onesided_lab.weights import Weight, class_constant

ONE, EX, EX3 = Weight.const(1), Weight.exp(1), Weight.exp_poly(0, 0, 0, 1)


def conj(p):
    return p / (p - 1)


def random_diagonal_tuple(rng):
    """Valid ``(lam, p, p1, theta)`` with exact rationals."""
    while True:
        lam = F(rng.choice([1, 1, 3, 2, 5]), rng.choice([1, 2]))
        if lam < 1:
            continue
        p = lam + F(rng.randint(1, 40), rng.randint(1, 9))
        p1 = lam + F(rng.randint(1, 40), rng.randint(1, 9))
        tmax = min(F(1), p1 / p, (1 - lam / p) / (1 - lam / p1))
        theta = tmax * F(rng.randint(1, 99), 100)
        return lam, p, p1, theta


# ---------------------------------------------------------------------------
# closed forms


def test_endpoint_exponent_and_collapse():
    assert endpoint_exponent(F(2), F(4), F(1, 3)) == F(8, 5)
    with pytest.raises(ExponentCollapse):
        endpoint_exponent(F(4), F(2), F(1, 2))


def test_render():
    assert render(F(8, 5)) == {"exact": "8/5", "float": 1.6}
    assert render(0.25) == {"exact": None, "float": 0.25}
    assert exact(3) == F(3) and exact("7/3") == F(7, 3)


def test_reference_diagonal_plan():
    plan = solve_diagonal(1, 2, 4, ONE, EX, F(1, 3))
    assert (plan.p0, plan.eps, plan.delta) == (F(8, 5), F(1, 2), F(1, 6))
    assert (plan.r_theta, plan.s_theta, plan.t_theta, plan.u_theta) == (F(9, 5), F(9, 5), F(7, 3), F(7, 3))
    assert plan.theta_max == F(2, 3)
    assert plan.w0.same_as(Weight.exp(F(-1, 5)))


def test_reference_offdiagonal_plan():
    plan = solve_offdiagonal(2, 4, 3, 6, ONE, EX, F(1, 4))
    assert (plan.p0, plan.q0) == (F(9, 5), F(18, 5))
    assert plan.w0.same_as(Weight.exp(F(-1, 3)))


def test_theta_zero_is_degenerate():
    plan = solve_diagonal(1, 2, 4, EX, ONE, 0)
    assert plan.p0 == 2 and plan.w0.same_as(EX)
    assert plan.r_theta == plan.t_theta == 1


@pytest.mark.parametrize("theta", [F(-1, 10), F(2, 3), F(9, 10)])
def test_theta_out_of_range(theta):
    with pytest.raises((ThetaOutOfRange, ExponentCollapse)):
        solve_diagonal(1, 2, 4, ONE, EX, theta)


def test_offdiagonal_order_violation():
    # p0 > q0 for these exponents at theta = 1/2
    with pytest.raises(OrderViolation):
        solve_offdiagonal(2, 2, F(6, 5), 8, ONE, EX, F(1, 2))


def test_skeleton_validation():
    with pytest.raises(InvalidParams):
        PlanSkeleton("diagonal", 2, 4, lam=3)
    with pytest.raises(InvalidParams):
        PlanSkeleton("offdiagonal", 2, 3)


# ---------------------------------------------------------------------------
# exactness over random tuples


@pytest.mark.parametrize("seed", range(5))
def test_random_diagonal_plans_are_exact(seed):
    rng = random.Random(seed)
    for _ in range(10):
        lam, p, p1, theta = random_diagonal_tuple(rng)
        plan = solve_diagonal(lam, p, p1, EX3, EX, theta)
        # independent oracle: convexity at the Lebesgue level
        assert 1 / p == (1 - theta) / plan.p0 + theta / p1
        assert plan.r_theta == plan.s_theta and plan.t_theta == plan.u_theta
        v = verify_plan(plan, with_class=False)
        assert v["reconstruction_exact"]
        for group in ("exponent_residuals", "collapse_residuals", "reconstruction_exponent_residuals"):
            assert all(r["exact"] == "0" for r in v[group].values())


@settings(max_examples=30, deadline=None)
@given(p=st.fractions(F(11, 10), 6, max_denominator=12), p1=st.fractions(F(11, 10), 6, max_denominator=12),
       frac=st.fractions(F(1, 50), F(49, 50), max_denominator=50))
def test_collapsed_exponents_match_general_split(p, p1, frac):
    sk = PlanSkeleton("diagonal", p, p1)
    theta = sk.theta_max() * frac
    assume(1 / p - theta / p1 > 0)
    c = sk.collapsed(theta)
    plan = solve_diagonal(1, p, p1, ONE, EX, theta)
    assert c["r"] == plan.r_theta == plan.s_theta
    assert c["t"] == plan.t_theta == plan.u_theta
    assert c["eps"] == theta * p / conj(p1) and c["delta"] == theta * conj(p) / p1


@settings(max_examples=20, deadline=None)
@given(p=st.fractions(F(9, 8), 4, max_denominator=8), p1=st.fractions(F(9, 8), 4, max_denominator=8),
       frac=st.fractions(F(1, 20), F(19, 20), max_denominator=20))
def test_offdiagonal_reduces_to_diagonal_at_equal_exponents(p, p1, frac):
    theta = PlanSkeleton("diagonal", p, p1).theta_max() * frac
    assume(1 / p - theta / p1 > 0)
    d = solve_diagonal(1, p, p1, ONE, EX, theta)
    o = solve_offdiagonal(p, p, p1, p1, ONE ** (1 / p), EX ** (1 / p1), theta)
    assert (o.p0, o.r_theta, o.t_theta) == (d.p0, d.r_theta, d.t_theta)
    assert (o.w0 ** o.p0).same_as(d.w0)


# ---------------------------------------------------------------------------
# theta selection


@pytest.mark.parametrize("gamma", [1.1, 1.5, 3.0])
def test_select_theta_respects_cap(gamma):
    sk = PlanSkeleton("diagonal", 2, 4)
    sel = select_theta(sk, gamma, gamma + 1)
    assert 1 < max(sel.r, sel.t) <= gamma
    assert 0 < sel.theta < sk.theta_max()
    if sel.limited_by == "reverse-hoelder-cap":
        assert max(sel.r, sel.t) == pytest.approx(gamma, abs=1e-9)


def test_select_theta_rejects_trivial_cap():
    with pytest.raises(NoAdmissibleTheta):
        select_theta(PlanSkeleton("diagonal", 2, 4), 1.0, 2.0)


# ---------------------------------------------------------------------------
# class constants of plans and the counterexample


def test_constant_plan_class_constant():
    plan = solve_diagonal(1, 2, 4, ONE, ONE, F(1, 3))
    v = verify_plan(plan, SearchSpec(scale_ladder=(1.0, 2.0, 4.0)))
    oracle = 0.6 ** 0.6 / 1.6 ** 1.6
    assert v["w0_class_report"]["estimate"]["value"] == pytest.approx(oracle, rel=1e-4)


def test_convexity_plan_weight_is_forward_member():
    # convexity gives w0 = e^{2x^3 - x}, which the forward search finds bounded
    plan = solve_diagonal(1, 2, 2, EX3, EX, F(1, 2))
    assert plan.w0.same_as(Weight.exp_poly(0, -1, 0, 2))
    v = verify_plan(plan)
    assert v["w0_class_report"]["member_verdict"] == "member-at-scale"


def test_counterexample_weight_tree():
    assert counterexample_weight(2, 2, F(1, 2)).canonical().same_as(Weight.exp_poly(0, 1, 0, -2))


def test_counterexample_probe():
    out = counterexample_probe(2, 2, F(1, 2), sanity=False)
    assert out["tail_verdict"] == "convergent"
    assert out["tail_beyond"]["integral"] < 1e-10
    assert out["conclusion"] == "violates A_p^+ necessary condition"
    assert out["convexity_w0_tail_verdict"] == "divergent"
    assert class_constant(counterexample_weight(2, 2, F(1, 2)), "Ap+", (2,)).member_verdict == "divergent"


def test_counterexample_sweep_all_convergent():
    sweep = counterexample_sweep(2, 2, [F(k, 8) for k in range(1, 8)])
    assert all(s["tail_verdict"] == "convergent" for s in sweep)
