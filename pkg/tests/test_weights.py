import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate

from onesided_lab.errors import InvalidParams, NoValidExponent
from onesided_lab.numerics import SearchSpec
from onesided_lab.weights import (
    Weight,
    apq_transfer_check,
    class_constant,
    conjugate,
    dual_weight,
    gap_condition_check,
    log_power_integrals,
    rhi_exponent,
    sample_intervals,
    tail_integral_probe,
)

FAST = SearchSpec(scale_ladder=(1.0, 2.0, 4.0))


def const_oracle(p):
    return (p - 1) ** (p - 1) / p ** p


def exp_oracle(p, s_min=1e-3, L=8.0, n=2001):
    # e^x is translation invariant up to the constant: objective depends on (s, t) only
    s = np.geomspace(s_min, L, n)[:, None]
    t = np.geomspace(s_min, L, n)[None, :]
    first = np.expm1(s) * np.exp(-s) / (s + t)
    second = (-np.expm1(-t / (p - 1)) * (p - 1) / (s + t)) ** (p - 1)
    return float(np.max(first * second))


# ---------------------------------------------------------------------------
# expression trees


@pytest.mark.parametrize("p, expected", [(2, Fraction(2)), (3, Fraction(3, 2)), (Fraction(4, 3), Fraction(4)),
                                         (1.5, 3.0)])
def test_conjugate(p, expected):
    assert conjugate(p) == expected


@pytest.mark.parametrize("w", [
    Weight.const(3), Weight.exp(Fraction(1, 4)), Weight.exp_poly(0, 1, 0, -2), Weight.power(0, -0.5),
    Weight.piecewise([1], [Weight.const(1), Weight.power(0, Fraction(1, 2))]),
    (Weight.exp(1) ** Fraction(6, 5)) * (Weight.power(1, 2) ** -0.2),
    Weight.exp(2).shifted(0.5).reflected(),
])
def test_json_round_trip(w):
    d = w.to_json()
    back = Weight.from_json(json.loads(json.dumps(d)))
    assert back.to_json() == d
    x = np.linspace(-3, 3, 13) + 0.123
    np.testing.assert_allclose(back(x), w(x), rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(a=st.fractions(-3, 3, max_denominator=7), b=st.fractions(-3, 3, max_denominator=7),
       r=st.fractions(Fraction(1, 5), 4, max_denominator=9))
def test_exact_power_algebra(a, b, r):
    w = Weight.exp_poly(0, a, b)
    assert ((w ** r) ** (1 / r)).same_as(w)
    assert (w ** r * w ** (1 - r)).same_as(w)


def test_dual_weight_of_exponential():
    assert dual_weight(Weight.exp(1), 3).same_as(Weight.exp(Fraction(-1, 2)))


def test_reflection_and_shift_evaluate_correctly():
    w = Weight.exp_poly(0, 1, 0, 1)
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(w.reflected()(x), np.exp(-x - x ** 3), rtol=1e-14)
    np.testing.assert_allclose(w.shifted(1.0)(x), np.exp((x - 1) + (x - 1) ** 3), rtol=1e-14)


def test_log_eval_avoids_overflow():
    w = Weight.exp_poly(0, 0, 0, 1)
    assert w.log_eval(np.array([20.0]))[0] == pytest.approx(8000.0)


@pytest.mark.parametrize("w, r", [(Weight.power(0, -0.5), 1.0), (Weight.exp(1), 2.0),
                                  (Weight.piecewise([0], [Weight.const(2), Weight.exp(-1)]), 1.5)])
def test_log_power_integrals_against_quad(w, r):
    lo, hi = np.array([-1.0, 0.0]), np.array([0.5, 2.0])
    got = np.exp(log_power_integrals(w, r, lo, hi))
    for k in range(2):
        pts = [0.0] if lo[k] < 0 < hi[k] else None
        ref, _ = sp_integrate.quad(lambda y: float(w(np.array([y]))[0]) ** r, lo[k], hi[k], points=pts,
                                   epsabs=1e-13, limit=200)
        assert got[k] == pytest.approx(ref, rel=1e-8)


# ---------------------------------------------------------------------------
# class constants


@pytest.mark.parametrize("p", [Fraction(3, 2), 2, 3])
def test_constant_weight_closed_form(p):
    rep = class_constant(Weight.const(1), "Ap+", (p,), FAST)
    assert rep.member_verdict == "member-at-scale"
    assert rep.value == pytest.approx(const_oracle(float(p)), rel=1e-4)


@pytest.mark.parametrize("p", [2, 3])
def test_exponential_forward_matches_oracle(p):
    rep = class_constant(Weight.exp(1), "Ap+", (p,))
    assert rep.value == pytest.approx(exp_oracle(p), rel=1e-4)


def test_exponential_backward_diverges():
    assert class_constant(Weight.exp(1), "Ap-", (2,)).member_verdict == "divergent"


def test_witness_is_ordered_triple():
    wit = class_constant(Weight.exp(1), "Ap+", (2,), FAST).witness
    assert wit.a < wit.b < wit.c


@pytest.mark.parametrize("w", [Weight.const(1), Weight.exp(1), Weight.exp(Fraction(1, 2))])
def test_reflection_duality(w):
    plus = class_constant(w, "Ap+", (2,), FAST).value
    minus = class_constant(w.reflected(), "Ap-", (2,), FAST).value
    assert minus == pytest.approx(plus, rel=1e-6)


@pytest.mark.parametrize("c", [1e-3, 7.0])
def test_scaling_invariance(c):
    base = class_constant(Weight.exp(1), "Ap+", (2,), FAST).value
    assert class_constant(Weight.exp(1) * c, "Ap+", (2,), FAST).value == pytest.approx(base, rel=1e-10)


def test_apq_constant_weight():
    assert class_constant(Weight.const(1), "Apq+", (2, 2), FAST).value == pytest.approx(0.5, rel=1e-4)


@pytest.mark.parametrize("tag, exps", [("Ap+", (1,)), ("Ap+", (0.5,)), ("Apq+", (3, 2)), ("Bp+", (2,))])
def test_class_constant_rejects_bad_input(tag, exps):
    with pytest.raises(InvalidParams):
        class_constant(Weight.const(1), tag, exps)


@pytest.mark.parametrize("w", [Weight.const(1), Weight.exp(Fraction(1, 4))])
def test_transfer_residuals_small(w):
    out = apq_transfer_check(w, 2, 4, FAST)
    assert all(leg["residual"] < 1e-2 for leg in out["legs"].values())


# ---------------------------------------------------------------------------
# reverse Hoelder


def test_rhi_constant_weight_has_unit_constants():
    res = rhi_exponent(Weight.const(1), "plus", sample_intervals(4, 2, 20), [1.5, 2, 8])
    assert res.r == 8
    assert all(c == pytest.approx(1.0, rel=1e-10) for _, c in res.table)


def test_rhi_correct_side_for_exponential():
    res = rhi_exponent(Weight.exp(1), "plus", sample_intervals(8, 4, 40), [1.5, 2, 4])
    assert res.r == 4 and res.constant < 1.01


def test_rhi_wrong_side_reports_interval():
    iv = sample_intervals(8, 16, 40, min_len=4)
    with pytest.raises(NoValidExponent) as exc:
        rhi_exponent(Weight.exp(1), "minus", iv, [2, 4, 8], cap=2.0)
    lo, hi = exc.value.violating_interval
    assert hi - lo >= 4


def test_sample_intervals_deterministic_and_inside_window():
    a = sample_intervals(8, 4, 50, seed=3)
    b = sample_intervals(8, 4, 50, seed=3)
    np.testing.assert_array_equal(a, b)
    assert np.all(a[:, 0] >= -8) and np.all(a[:, 1] <= 8) and np.all(a[:, 1] > a[:, 0])


# ---------------------------------------------------------------------------
# gap condition


def test_gap_constant_pair():
    out = gap_condition_check(Weight.const(1), Weight.const(1), 2, 2, 4, None, FAST)
    assert out["gapped_max"] == pytest.approx(1.0, rel=1e-6)
    assert out["ungapped_max"] == pytest.approx(0.5, rel=1e-6)
    assert out["lemma_satisfied"] and out["flag"] == "checked"


def test_gap_hypothesis_not_met_flag():
    out = gap_condition_check(Weight.const(1), Weight.const(1), 2, 2, 4, 0.5, FAST)
    assert out["flag"] == "hypothesis-not-met"


def test_gap_requires_t_above_two():
    with pytest.raises(InvalidParams):
        gap_condition_check(Weight.const(1), Weight.const(1), 2, 2, 2, None)


# ---------------------------------------------------------------------------
# tail probe


@pytest.mark.parametrize("w, a, verdict", [
    (Weight.exp_poly(0, 1, 0, -2), 0.0, "convergent"),
    (Weight.power(0, -2), 1.0, "convergent"),
    (Weight.exp(-1), 0.0, "convergent"),
    (Weight.power(0, -1), 1.0, "divergent"),
    (Weight.const(1), 0.0, "divergent"),
    (Weight.exp(1), 0.0, "divergent"),
    (Weight.exp_poly(0, 0, 0, 1), 0.0, "divergent"),
])
def test_tail_probe_verdicts(w, a, verdict):
    assert tail_integral_probe(w, a)["verdict"] == verdict


def test_tail_probe_partial_integrals_match_closed_form():
    out = tail_integral_probe(Weight.exp(-1), 0.0)
    cutoff, value = out["tail_values"][0]
    assert cutoff == 0.5
    assert value == pytest.approx(1 - math.exp(-0.5), rel=1e-10)
    assert out["log_partial_integrals"][0][1] == pytest.approx(math.log(value), rel=1e-12)
