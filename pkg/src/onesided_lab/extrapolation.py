"""Interpolation-parameter algebra behind one-sided compactness extrapolation.

Given the target pair ``(p, w)`` and an endpoint pair ``(p1, w1)``, a plan
fixes ``theta``, the other endpoint ``(p0, w0)`` and the Hoelder split
parameters used to push a reverse Hoelder inequality through ``w0``.  All
exponent arithmetic is exact when the inputs are rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ExponentCollapse,
    InvalidParams,
    NoAdmissibleTheta,
    OrderViolation,
    ThetaOutOfRange,
)
from .numerics import SearchSpec, integrate
from .weights import Weight, class_constant, conjugate, tail_integral_probe

Number = Union[int, float, Fraction]


def exact(x) -> Number:
    """Integers, fraction strings and Fractions become Fractions; floats stay floats."""
    if isinstance(x, bool):
        raise InvalidParams("booleans are not exponents")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return float(x)


def render(x: Number) -> dict:
    """JSON rendering carrying the exact value (when there is one) and a float."""
    if isinstance(x, Fraction):
        return {"exact": f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator),
                "float": float(x)}
    return {"exact": None, "float": float(x)}


# ---------------------------------------------------------------------------
# exponent formulas


def endpoint_exponent(p: Number, p1: Number, theta: Number) -> Number:
    """``p0`` solving ``1/p = (1-theta)/p0 + theta/p1``."""
    denom = 1 / p - theta / p1
    if denom <= 0:
        raise ExponentCollapse(f"1/p - theta/p1 = {denom} is not positive")
    return (1 - theta) / denom


def split_exponents(P: Number, P1: Number, P0: Number, theta: Number, eps: Number, delta: Number,
                    Q: Optional[Number] = None, Q1: Optional[Number] = None, Q0: Optional[Number] = None):
    """General ``(r, s, t, u)`` for arbitrary Hoelder splits ``eps, delta``.

    Diagonal plans pass class exponents ``P, P1, P0``.  Off-diagonal plans
    also pass ``Q, Q1, Q0`` and then ``(P, P1, P0)`` are the Lebesgue
    exponents paired with ``w^{-p'}`` and ``w1^{-p1'}``.
    """
    P1c, Pc, P0c = conjugate(P1), conjugate(P), conjugate(P0)
    if Q is None:
        r = P0 * (1 + eps) / (P * (1 - theta))
        s = P0 * theta * (1 + eps) / (P1c * eps * (1 - theta))
        t = P0c * (1 + delta) / (Pc * (1 - theta))
        u = P0c * theta * (1 + delta) / (P1 * delta * (1 - theta))
    else:
        r = Q0 * (1 + eps) / (Q * (1 - theta))
        s = theta * Q0 * (1 + eps) / (P1c * eps * (1 - theta))
        t = P0c * (1 + delta) / (Pc * (1 - theta))
        u = theta * P0c * (1 + delta) / (Q1 * delta * (1 - theta))
    return r, s, t, u


@dataclass(frozen=True)
class PlanSkeleton:
    """Exponent data of a plan before ``theta`` is chosen."""

    mode: str
    p: Number
    p1: Number
    lam: Number = Fraction(1)
    q: Optional[Number] = None
    q1: Optional[Number] = None

    def __post_init__(self):
        if self.mode not in ("diagonal", "offdiagonal"):
            raise InvalidParams(f"unknown plan mode {self.mode!r}")
        for name in ("p", "p1", "lam", "q", "q1"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, exact(v))
        if self.mode == "diagonal":
            if not self.lam >= 1:
                raise InvalidParams(f"lambda must be >= 1, got {self.lam}")
            if not (self.p > self.lam and self.p1 > self.lam):
                raise InvalidParams(f"need p, p1 > lambda, got p={self.p}, p1={self.p1}, lambda={self.lam}")
        else:
            if self.q is None or self.q1 is None:
                raise InvalidParams("off-diagonal plans need q and q1")
            if not (1 < self.p <= self.q and 1 < self.p1 <= self.q1):
                raise InvalidParams("need 1 < p <= q and 1 < p1 <= q1")

    def theta_max(self) -> Number:
        """Supremum of admissible ``theta`` from the exponent constraints alone."""
        if self.mode == "diagonal":
            lam = self.lam
            bounds = [Fraction(1) if not isinstance(lam, float) else 1.0, self.p1 / self.p,
                      (1 - lam / self.p) / (1 - lam / self.p1)]
        else:
            bounds = [Fraction(1) if not isinstance(self.p, float) else 1.0, self.p1 / self.p, self.q1 / self.q,
                      conjugate(self.p1) / conjugate(self.p)]
        return min(bounds)

    def collapsed(self, theta: Number) -> dict:
        """Exponents at ``theta`` with the collapsing Hoelder splits."""
        theta = exact(theta)
        if self.mode == "diagonal":
            P, P1 = self.p / self.lam, self.p1 / self.lam
            P0 = endpoint_exponent(P, P1, theta)
            eps = theta * P / conjugate(P1)
            delta = theta * conjugate(P) / P1
            r = P0 * (conjugate(P1) + theta * P) / (P * conjugate(P1) * (1 - theta))
            t = conjugate(P0) * (P1 + theta * conjugate(P)) / (conjugate(P) * P1 * (1 - theta))
            return {"p0": P0 * self.lam, "class_p0": P0, "eps": eps, "delta": delta, "r": r, "t": t}
        p0 = endpoint_exponent(self.p, self.p1, theta)
        q0 = endpoint_exponent(self.q, self.q1, theta)
        p1c, pc, q = conjugate(self.p1), conjugate(self.p), self.q
        eps = q * theta / p1c
        delta = theta * pc / self.q1
        r = q0 * (p1c + theta * q) / (q * p1c * (1 - theta))
        t = conjugate(p0) * (self.q1 + theta * pc) / (self.q1 * pc * (1 - theta))
        return {"p0": p0, "q0": q0, "eps": eps, "delta": delta, "r": r, "t": t}

    def rt(self, theta: Number) -> tuple:
        c = self.collapsed(theta)
        return c["r"], c["t"]


# ---------------------------------------------------------------------------
# plans


@dataclass
class InterpolationPlan:
    mode: str
    lam: Number
    theta: Number
    theta_max: Number
    p: Number
    p0: Number
    p1: Number
    eps: Number
    delta: Number
    r_theta: Number
    s_theta: Number
    t_theta: Number
    u_theta: Number
    w: Weight
    w0: Weight
    w1: Weight
    q: Optional[Number] = None
    q0: Optional[Number] = None
    q1: Optional[Number] = None

    NUMERIC = ("lam", "theta", "theta_max", "p", "p0", "p1", "q", "q0", "q1", "eps", "delta",
               "r_theta", "s_theta", "t_theta", "u_theta")

    def class_exponents(self) -> tuple:
        """Class and exponents that ``w0`` must belong to."""
        if self.mode == "diagonal":
            return "Ap+", (self.p0 / self.lam,)
        return "Apq+", (self.p0, self.q0)

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        for name in self.NUMERIC:
            v = getattr(self, name)
            out[name] = None if v is None else render(v)
        for name in ("w", "w0", "w1"):
            out[name] = getattr(self, name).to_json()
        return out


def _check_theta(theta, theta_max):
    if not 0 <= theta < 1:
        raise ThetaOutOfRange(f"theta must lie in [0, 1), got {theta}")
    if theta >= theta_max:
        raise ThetaOutOfRange(f"theta = {theta} is not below theta_max = {theta_max}")


def solve_diagonal(lam: Number, p: Number, p1: Number, w: Weight, w1: Weight, theta: Number) -> InterpolationPlan:
    """Diagonal plan: ``w^{1/p} = w0^{(1-theta)/p0} w1^{theta/p1}``.

    ``theta = 0`` is accepted as the degenerate plan ``p0 = p, w0 = w``.
    """
    lam, p, p1, theta = exact(lam), exact(p), exact(p1), exact(theta)
    if 1 / p - theta / p1 <= 0:
        raise ExponentCollapse(f"1/p - theta/p1 = {1 / p - theta / p1} is not positive")
    sk = PlanSkeleton("diagonal", p, p1, lam)
    tmax = sk.theta_max()
    _check_theta(theta, tmax)
    P, P1 = p / lam, p1 / lam
    p0 = endpoint_exponent(p, p1, theta)
    P0 = p0 / lam
    w0 = (w ** (p0 / (p * (1 - theta))) * w1 ** (-theta * p0 / (p1 * (1 - theta)))).canonical()
    if theta == 0:
        eps = delta = theta
        r = s = t = u = Fraction(1) if isinstance(theta, Fraction) else 1.0
    else:
        eps = theta * P / conjugate(P1)
        delta = theta * conjugate(P) / P1
        r, s, t, u = split_exponents(P, P1, P0, theta, eps, delta)
    return InterpolationPlan("diagonal", lam, theta, tmax, p, p0, p1, eps, delta, r, s, t, u, w, w0, w1)


def solve_offdiagonal(p: Number, q: Number, p1: Number, q1: Number, w: Weight, w1: Weight,
                      theta: Number) -> InterpolationPlan:
    """Off-diagonal plan: ``w = w0^{1-theta} w1^theta`` with two convexity relations."""
    p, q, p1, q1, theta = (exact(v) for v in (p, q, p1, q1, theta))
    sk = PlanSkeleton("offdiagonal", p, p1, q=q, q1=q1)
    for a, a1 in ((p, p1), (q, q1)):
        if 1 / a - theta / a1 <= 0:
            raise ExponentCollapse(f"1/{a} - theta/{a1} is not positive")
    tmax = sk.theta_max()
    _check_theta(theta, tmax)
    p0 = endpoint_exponent(p, p1, theta)
    q0 = endpoint_exponent(q, q1, theta)
    if p0 > q0:
        raise OrderViolation(f"p0 = {p0} exceeds q0 = {q0}")
    w0 = (w ** (1 / (1 - theta)) * w1 ** (-theta / (1 - theta))).canonical()
    if theta == 0:
        eps = delta = theta
        r = s = t = u = Fraction(1) if isinstance(theta, Fraction) else 1.0
    else:
        eps = q * theta / conjugate(p1)
        delta = theta * conjugate(p) / q1
        r, s, t, u = split_exponents(p, p1, p0, theta, eps, delta, q, q1, q0)
    return InterpolationPlan("offdiagonal", Fraction(1), theta, tmax, p, p0, p1, eps, delta, r, s, t, u,
                             w, w0, w1, q, q0, q1)


# ---------------------------------------------------------------------------
# theta selection


@dataclass
class ThetaSelection:
    theta: Fraction
    r: float
    t: float
    cap: float
    theta_max: float
    limited_by: str
    bisection_residual: float

    def to_dict(self) -> dict:
        return {"theta": render(self.theta), "r": self.r, "t": self.t, "cap": self.cap,
                "theta_max": self.theta_max, "limited_by": self.limited_by,
                "bisection_residual": self.bisection_residual}


def select_theta(skeleton: PlanSkeleton, gamma1: float, gamma2: float, grid: int = 512,
                 xtol: float = 1e-12) -> ThetaSelection:
    """Largest ``theta`` on the first admissible branch with ``1 < max(r, t) <= min(gamma1, gamma2)``.

    ``r`` and ``t`` equal 1 at ``theta = 0``.  A grid scan locates the first
    crossing of the cap and bisection pins it down.
    """
    cap = min(float(gamma1), float(gamma2))
    if not cap > 1:
        raise NoAdmissibleTheta(f"reverse Hoelder exponents must exceed 1, got min = {cap}")
    tmax = float(skeleton.theta_max())

    def excess(th):
        try:
            r, t = skeleton.rt(th)
        except ExponentCollapse:
            return math.inf
        m = max(float(r), float(t))
        return m - cap if math.isfinite(m) else math.inf

    # stay strictly inside the open range where the exponents are finite
    upper = tmax * (1 - 1e-9)
    grid_pts = np.linspace(0.0, upper, grid + 1)[1:]
    lo, hi, limited = 0.0, None, "theta_max"
    for th in grid_pts:
        if excess(th) > 0:
            hi = th
            break
        lo = th
    if hi is None:
        theta = lo
        resid = 0.0
    else:
        limited = "reverse-hoelder-cap"
        while hi - lo > xtol:
            mid = 0.5 * (lo + hi)
            if excess(mid) > 0:
                hi = mid
            else:
                lo = mid
        theta = lo
        resid = abs(excess(theta))
    theta_q = Fraction(theta)
    if theta_q == 0:
        raise NoAdmissibleTheta("no positive theta keeps the derived exponents below the cap")
    r, t = skeleton.rt(theta_q)
    m = max(float(r), float(t))
    if not (1 < m <= cap):
        raise NoAdmissibleTheta(f"max(r, t) = {m} at theta = {theta} is outside (1, {cap}]")
    return ThetaSelection(theta_q, float(r), float(t), cap, tmax, limited, resid)


# ---------------------------------------------------------------------------
# verification


def verify_plan(plan: InterpolationPlan, spec: SearchSpec = SearchSpec(), *, samples: int = 257,
                with_class: bool = True, w1_minus_constant: Optional[float] = None,
                w_plus_constant: Optional[float] = None) -> dict:
    """Check the algebraic identities of a plan and estimate the class constant of ``w0``."""
    th = plan.theta
    if plan.mode == "diagonal":
        lhs = plan.w ** (1 / plan.p)
        rhs = plan.w0 ** ((1 - th) / plan.p0) * plan.w1 ** (th / plan.p1)
        convexity = {"p": 1 / plan.p - (1 - th) / plan.p0 - th / plan.p1}
        exps = {"w": plan.p0 / (plan.p * (1 - th)) * (1 - th) / plan.p0 - 1 / plan.p,
                "w1": -th * plan.p0 / (plan.p1 * (1 - th)) * (1 - th) / plan.p0 + th / plan.p1}
    else:
        lhs = plan.w
        rhs = plan.w0 ** (1 - th) * plan.w1 ** th
        convexity = {"p": 1 / plan.p - (1 - th) / plan.p0 - th / plan.p1,
                     "q": 1 / plan.q - (1 - th) / plan.q0 - th / plan.q1}
        exps = {"w": 1 / (1 - th) * (1 - th) - 1, "w1": -th / (1 - th) * (1 - th) + th}
    x = np.linspace(-spec.window, spec.window, samples)
    with np.errstate(invalid="ignore"):
        diff = np.abs(lhs.log_eval(x) - rhs.log_eval(x))
    finite = np.isfinite(lhs.log_eval(x))
    resid = float(np.max(diff[finite])) if finite.any() else 0.0
    # collapse identities recomputed with the collapsing splits alone
    if plan.mode == "diagonal":
        sk = PlanSkeleton("diagonal", plan.p, plan.p1, plan.lam)
    else:
        sk = PlanSkeleton("offdiagonal", plan.p, plan.p1, q=plan.q, q1=plan.q1)
    collapsed = sk.collapsed(th) if th != 0 else {"r": plan.r_theta, "t": plan.t_theta}
    report = {
        "mode": plan.mode,
        "reconstruction_exact": lhs.same_as(rhs),
        "reconstruction_residual": resid,
        "reconstruction_exponent_residuals": {k: render(v) for k, v in exps.items()},
        "exponent_residuals": {k: render(v) for k, v in convexity.items()},
        "collapse_residuals": {"r-s": render(plan.r_theta - plan.s_theta),
                               "t-u": render(plan.t_theta - plan.u_theta),
                               "r-closed_form": render(plan.r_theta - collapsed["r"]),
                               "t-closed_form": render(plan.t_theta - collapsed["t"])},
    }
    if with_class:
        tag, exps_c = plan.class_exponents()
        rep = class_constant(plan.w0, tag, exps_c, spec)
        report["w0_class_report"] = rep.to_dict()
    if plan.mode == "diagonal" and w_plus_constant is not None and w1_minus_constant is not None:
        P, P1 = plan.p / plan.lam, plan.p1 / plan.lam
        e1 = float(P1 / (P1 - th * P))
        e2 = float(th * P / (P1 - th * P))
        report["comparison_cap"] = {
            "value": float(w_plus_constant) ** e1 * float(w1_minus_constant) ** e2,
            "exponents": [e1, e2],
            "note": "informational; not asserted as a bound",
        }
    return report


# ---------------------------------------------------------------------------
# the forward-forward counterexample


def counterexample_weight(q: Number, q1: Number, theta: Number) -> Weight:
    """``exp((q0/(1-theta)) (theta x/q1 - x^3/q))``."""
    q, q1, theta = exact(q), exact(q1), exact(theta)
    if not (q > 1 and q1 > 1):
        raise InvalidParams("need q, q1 > 1")
    if not 0 < theta < 1:
        raise ThetaOutOfRange(f"theta must lie in (0, 1), got {theta}")
    q0 = endpoint_exponent(q, q1, theta)
    k = q0 / (1 - theta)
    return Weight.exp_poly(0, k * theta / q1, 0, -k / q)


def counterexample_probe(q: Number, q1: Number, theta: Number, *, spec: SearchSpec = SearchSpec(),
                         sanity: bool = True, beyond: float = 6.0) -> dict:
    """Build ``w0`` for ``w = e^{x^3}``, ``w1 = e^x`` and test the forward tail condition.

    A convergent tail on ``[0, infty)`` is incompatible with forward class
    membership.  The report also carries the weight obtained from the
    convexity relation itself, whose cubic term has the opposite sign.
    """
    w0 = counterexample_weight(q, q1, theta)
    probe = tail_integral_probe(w0, 0.0)
    far = integrate(lambda y: w0(y), (beyond, math.inf), tol=1e-14)
    conclusion = "violates A_p^+ necessary condition" if probe["verdict"] == "convergent" else "no violation detected"
    q_, q1_, th = exact(q), exact(q1), exact(theta)
    convex = solve_diagonal(1, q_, q1_, Weight.exp_poly(0, 0, 0, 1), Weight.exp(1), th).w0
    out = {
        "q": render(q_), "q1": render(q1_), "theta": render(th),
        "q0": render(endpoint_exponent(q_, q1_, th)),
        "w0": w0.canonical().to_json(),
        "tail_verdict": probe["verdict"],
        "tail": probe,
        "tail_beyond": {"x": beyond, "integral": far.value, "error_bound": far.error_bound},
        "conclusion": conclusion,
        "convexity_w0": convex.to_json(),
        "convexity_w0_tail_verdict": tail_integral_probe(convex, 0.0)["verdict"],
    }
    if sanity:
        out["sanity"] = {
            "e^x_Ap+_2": class_constant(Weight.exp(1), "Ap+", (2,), spec).value,
            "e^{x^3}_tail_verdict": tail_integral_probe(Weight.exp_poly(0, 0, 0, 1), 0.0)["verdict"],
        }
    return out


def counterexample_sweep(q: Number, q1: Number, thetas: Sequence[Number]) -> list:
    """Tail verdict of the counterexample weight for every ``theta`` in ``thetas``."""
    out = []
    for th in thetas:
        w0 = counterexample_weight(q, q1, th)
        out.append({"theta": render(exact(th)), "tail_verdict": tail_integral_probe(w0, 0.0)["verdict"]})
    return out
