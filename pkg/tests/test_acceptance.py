"""Acceptance gate: one test per criterion, each within its wall-clock limit."""

import random
from fractions import Fraction as F

import numpy as np
import pytest

from onesided_lab.cli import canonical_json, execute, load_config
from onesided_lab.compactness import (
    LineOperator,
    TestFamily,
    commutator_compactness_report,
    lp_norm,
    rk_moduli,
    tail_fit,
    translation_fit,
    truncation_error_experiment,
    unit_ball_sampler,
)
from onesided_lab.extrapolation import counterexample_probe, counterexample_sweep, solve_diagonal, verify_plan
from onesided_lab.numerics import SearchSpec
from onesided_lab.operators import (
    HormanderSample,
    SampledFunction,
    frac_int_plus,
    hormander_check,
    make_kernel,
    truncate_kernel,
)
from onesided_lab.weights import (
    Weight,
    apq_transfer_check,
    class_constant,
    conjugate,
    dual_weight,
    gap_condition_check,
)

B = SampledFunction.smoothstep_bump(-1.0, 1.0, 0.5)
CZ = make_kernel("cz_hilbert")
CHI = SampledFunction.indicator(0.0, 1.0)
CLAMPED_EXP = Weight.piecewise([-8, 8], [Weight.exp_poly(-8), Weight.exp(1), Weight.exp_poly(8)])


def exp_forward_oracle(p, s_min=1e-3, L=8.0, n=2001):
    # for e^x the forward objective depends only on the step lengths (s, t)
    s = np.geomspace(s_min, L, n)[:, None]
    t = np.geomspace(s_min, L, n)[None, :]
    first = np.expm1(s) * np.exp(-s) / (s + t)
    second = (-np.expm1(-t / (p - 1)) * (p - 1) / (s + t)) ** (p - 1)
    return float(np.max(first * second))


# ---------------------------------------------------------------------------
# weights


@pytest.mark.parametrize("p", [F(3, 2), F(2), F(3)])
def test_c01_constant_weight_forward_constant(gate, p):
    g = gate(1, f"constant weight A_p^+ closed form, p={p}", 10)
    oracle = float((p - 1) ** (p - 1)) / float(p ** p)
    rep = class_constant(Weight.const(1), "Ap+", (p,))
    assert rep.value == pytest.approx(oracle, rel=1e-4)
    assert g.elapsed() < 10


def test_c02_exponential_is_forward_not_backward(gate):
    g = gate(2, "e^x in A_2^+ but not A_2^-", 60)
    oracle = exp_forward_oracle(2)
    assert 0.245 <= oracle <= 0.2501
    spec = SearchSpec()
    assert spec.refine_rounds >= 4
    fwd = class_constant(Weight.exp(1), "Ap+", (2,), spec)
    assert 0.245 <= fwd.value <= 0.2501
    assert fwd.value == pytest.approx(oracle, rel=1e-4)
    assert class_constant(Weight.exp(1), "Ap-", (2,)).member_verdict == "divergent"
    assert g.elapsed() < 60


def test_c03_duality_identity(gate):
    g = gate(3, "dual weight identity for 1, e^x, clamped e^x at p = 2, 3", 120)
    for w in (Weight.const(1), Weight.exp(1), CLAMPED_EXP):
        for p in (F(2), F(3)):
            forward = class_constant(w, "Ap+", (p,)).value
            backward = class_constant(dual_weight(w, p), "Ap-", (conjugate(p),)).value
            assert backward == pytest.approx(forward ** float(conjugate(p) - 1), rel=1e-2)
    assert g.elapsed() < 120


def test_c04_transfer_identity(gate):
    g = gate(4, "A_{p,q}^+ transfer to A_{1+q/p'}^+", 120)
    for w in (Weight.const(1), Weight.exp(F(1, 4))):
        for p, q in ((2, 2), (2, 4)):
            out = apq_transfer_check(w, p, q)
            leg = out["legs"]["Apq+: w^q in A_(1+q/p')^+"]
            assert leg["transfer_exponent"] == pytest.approx(1 + q / conjugate(p))
            assert leg["transferred_constant"] == pytest.approx(leg["apq_constant"] ** q, rel=1e-2)
    assert g.elapsed() < 120


def gap_pool():
    pool = [Weight.const(1), Weight.const(3)]
    pool += [Weight.exp(a) for a in (F(-1, 2), F(-1, 4), F(1, 4), F(1, 2), F(1))]
    pool += [Weight.piecewise([1], [Weight.const(1), Weight.power(0, g)]) for g in (F(-1, 4), F(1, 4), F(1, 2))]
    return pool


def test_c05_gap_dominance(gate):
    g = gate(5, "ungapped sup dominated by gapped sup on 20 seeded pairs", 300)
    rng = random.Random(0)
    pool = gap_pool()
    for _ in range(20):
        u, v = rng.choice(pool), rng.choice(pool)
        p, q = rng.choice([(2, 2), (2, 3), (F(3, 2), 2)])
        out = gap_condition_check(u, v, p, q, 4, None)
        assert out["ungapped_max"] <= out["gapped_max"] * (1 + 1e-3)
    assert g.elapsed() < 300


# ---------------------------------------------------------------------------
# extrapolation


def random_diagonal_tuple(rng):
    while True:
        lam = F(rng.choice([1, 1, 3, 2, 5]), rng.choice([1, 2]))
        if lam < 1:
            continue
        p = lam + F(rng.randint(1, 40), rng.randint(1, 9))
        p1 = lam + F(rng.randint(1, 40), rng.randint(1, 9))
        tmax = min(F(1), p1 / p, (1 - lam / p) / (1 - lam / p1))
        return lam, p, p1, tmax * F(rng.randint(1, 99), 100)


def test_c06_interpolation_algebra_exact(gate):
    g = gate(6, "50 rational plans with exactly zero residuals", 10)
    rng = random.Random(2024)
    for _ in range(50):
        lam, p, p1, theta = random_diagonal_tuple(rng)
        plan = solve_diagonal(lam, p, p1, Weight.exp_poly(0, 0, 0, 1), Weight.exp(1), theta)
        # independent oracle: Lebesgue-level convexity in exact arithmetic
        assert 1 / p == (1 - theta) / plan.p0 + theta / p1
        assert plan.r_theta == plan.s_theta and plan.t_theta == plan.u_theta
        v = verify_plan(plan, with_class=False)
        assert v["reconstruction_exact"]
        for group in ("exponent_residuals", "collapse_residuals", "reconstruction_exponent_residuals"):
            assert all(r["exact"] == "0" for r in v[group].values())
    assert g.elapsed() < 10


def test_c07_counterexample(gate):
    g = gate(7, "interpolated weight has convergent forward tail", 30)
    out = counterexample_probe(2, 2, F(1, 2))
    assert Weight.from_json(out["w0"]).same_as(Weight.exp_poly(0, 1, 0, -2))
    assert out["tail_verdict"] == "convergent"
    assert out["tail_beyond"]["x"] == 6.0 and out["tail_beyond"]["integral"] < 1e-10
    assert out["conclusion"] == "violates A_p^+ necessary condition"
    sweep = counterexample_sweep(2, 2, [F(k, 8) for k in range(1, 8)])
    assert all(s["tail_verdict"] == "convergent" for s in sweep)
    assert g.elapsed() < 30


# ---------------------------------------------------------------------------
# operators


def test_c08_fractional_closed_forms(gate):
    g = gate(8, "fractional integral of an indicator", 5)
    for x in (-1.0, 0.0, 0.75):
        oracle = ((1 - x) ** 0.5 - max(-x, 0.0) ** 0.5) * 2
        assert frac_int_plus(CHI, 0.5, x) == pytest.approx(oracle, abs=1e-6)
    assert g.elapsed() < 5


def test_c09_fractional_smoothness_bound(gate):
    g = gate(9, "fractional kernel pointwise smoothness bound", 30)
    out = hormander_check(make_kernel("fractional", alpha=0.5), sample=HormanderSample(pointwise_pairs=10_000))
    assert out["mode"] == "pointwise" and out["samples"] == 10_000
    assert out["max_ratio"] <= 1 + 1e-9
    # independent oracle: closed-form kernel on 10^4 admissible pairs, any order of x, x'
    rng = np.random.default_rng(7)
    x = rng.uniform(-4, 4, 10_000)
    d = rng.uniform(1e-3, 4, 10_000)
    t = rng.uniform(0, 0.5, 10_000) * d * rng.choice([-1, 1], 10_000)
    y, xp = x + d, x + t
    k = lambda a, b: np.where(b > a, np.abs(b - a) ** -0.5, 0.0)
    ratio = np.abs(k(x, y) - k(xp, y)) / (2 ** 0.5 * np.abs(t) ** 0.5 / d + 1e-300)
    assert np.all(2 * np.abs(t) < d) and ratio.max() <= 1 + 1e-9
    assert g.elapsed() < 30


# ---------------------------------------------------------------------------
# compactness


def dyadic_ladder(center, levels, p=2.0):
    members = []
    for j in range(levels):
        f = SampledFunction.poly_bump(center, 2.0 ** -j)
        members.append(f.scaled(1 / lp_norm(f, p)))
    return TestFamily(members, p, None, {"source": "dyadic dilation ladder", "center": center})


def test_c10_truncation_error_linear(gate):
    g = gate(10, "truncation error linear in delta", 180)
    # bumps centred where |b'| peaks; the dilation ladder mirrors the halving delta grid
    fam = dyadic_ladder(-0.75, 8)
    rep = truncation_error_experiment(B, CZ, fam, [0.1, 0.05, 0.025])
    assert rep.fitted_exponent == pytest.approx(1.0, abs=0.15)
    quotients = rep.extra["quotients"]
    assert max(quotients) / min(quotients) <= 2.0
    assert rep.passed
    assert g.elapsed() < 180


def test_c11_translation_continuity(gate):
    g = gate(11, "translation modulus exponent on h in [1e-3, delta/8]", 300)
    K = truncate_kernel(CZ, 0.1)
    assert K.hormander == (2.0, 1.0)
    fam = unit_ball_sampler(2.0, None, 32, seed=0)
    rep = translation_fit(B, K, fam, np.geomspace(1e-3, 0.1 / 8, 5))
    assert rep.fitted_exponent >= 0.4
    assert rep.extra["strictly_decreasing_as_h_shrinks"]
    assert g.elapsed() < 300


def test_c12_tail_decay(gate):
    g = gate(12, "commutator tail slope for p = 2", 180)
    fam = unit_ball_sampler(2.0, None, 8, seed=0)
    rep = tail_fit(B, truncate_kernel(CZ, 0.1), fam, [4.0, 8.0, 16.0, 32.0, 64.0])
    assert rep.fitted_exponent <= -0.4
    assert g.elapsed() < 180


def test_c13_rk_moduli_contract(gate):
    g = gate(13, "moduli monotone on reports; translates and dilates do not compact", 120)
    for w in (None, Weight.exp(1)):
        rep = commutator_compactness_report(B, {"kind": "cz", "p": 2, "delta": 0.1}, w, {"count": 6})
        assert rep.checks["tau_non_increasing"]
        assert rep.checks["omega_decreasing_as_h_shrinks"]
        assert rep.moduli.bound_B < np.inf
    identity = LineOperator.identity()
    translates = unit_ball_sampler(2.0, None, 10, modes=("translates",))
    tau = [v for _, v in rk_moduli(identity, translates, [0.1], [2.0, 4.0, 7.5]).tau]
    assert min(tau) == pytest.approx(1.0, abs=1e-9)
    # omega(0.1) stays bounded below as the dilation family grows
    omega = [rk_moduli(identity, unit_ball_sampler(2.0, None, n, modes=("dilates",)), [0.1], []).omega[0][1]
             for n in (4, 8, 16)]
    assert min(omega) > 0.5 and omega == sorted(omega)
    assert g.elapsed() < 120


def test_c14_end_to_end_determinism(gate):
    g = gate(14, "byte-identical canonical reports on rerun", 60)
    bump = {"kind": "smoothstep_bump", "lo": -1, "hi": 1, "ramp": 0.5, "amplitude": 1}
    configs = [
        {"experiment": "class-constant", "inputs": {"weight": {"kind": "exp_poly", "coeffs": [0, 1]},
                                                    "class": "Ap+", "p": 2}},
        {"experiment": "gap-check", "seed": 1,
         "inputs": {"u": {"kind": "const", "value": 1}, "v": {"kind": "const", "value": 1}, "p": 2, "q": 2, "t": 4}},
        {"experiment": "interpolate", "inputs": {"mode": "diagonal", "p": 2, "p1": 4, "theta": "1/3",
                                                 "w": {"kind": "const", "value": 1},
                                                 "w1": {"kind": "exp_poly", "coeffs": [0, 1]}}},
        {"experiment": "counterexample", "inputs": {"q": 2, "q1": 2, "theta": "1/2"}},
        {"experiment": "commutator-report", "seed": 5,
         "inputs": {"symbol": bump, "operator": {"kind": "cz", "p": 2, "delta": 0.1}, "count": 3}},
    ]
    for cfg in configs:
        first = canonical_json(execute(load_config(cfg)))
        second = canonical_json(execute(load_config(cfg)))
        assert first == second
    assert g.elapsed() < 60
