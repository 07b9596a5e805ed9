"""Riesz–Kolmogorov diagnostics for one-sided operators over finite test families.

A family of unit vectors in ``L^p(w)`` is pushed through an operator and the
three precompactness quantities are measured with whole-line norms:
the bound ``B``, the translation modulus ``omega(h)`` and the tail mass
``tau(M)``.  The fits below measure the scaling laws that drive the
compactness proofs: linear truncation error in ``delta``, the translation
modulus exponent, and the decay of commutator tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ExponentRelationViolated,
    InvalidParams,
    NormalizationFailure,
    PreconditionViolation,
)
from .numerics import integrate
from .operators import (
    OneSidedKernel,
    SampledFunction,
    apply_kernel,
    commutator,
    make_kernel,
    maximal,
    truncate_kernel,
    truncation_difference,
)
from .weights import Weight

SAMPLER_MODES = ("translates", "dilates", "random_bumps", "indicators")
NORM_RTOL = 1e-8
NORM_ATOL = 1e-13


# ---------------------------------------------------------------------------
# operators as functions on the line


@dataclass(frozen=True)
class LineOperator:
    """``identity``, a kernel operator ``T`` or a commutator ``[b, T]``."""

    kind: str
    kernel: Optional[OneSidedKernel] = None
    symbol: Optional[SampledFunction] = None

    def __post_init__(self):
        if self.kind not in ("identity", "kernel", "commutator"):
            raise InvalidParams(f"unknown operator kind {self.kind!r}")
        if self.kind != "identity" and self.kernel is None:
            raise InvalidParams("kernel and commutator operators need a kernel")
        if self.kind == "commutator" and self.symbol is None:
            raise InvalidParams("commutators need a symbol b")

    @classmethod
    def identity(cls):
        return cls("identity")

    def __call__(self, f: SampledFunction, x) -> np.ndarray:
        x = np.asarray(x, float)
        flat = x.ravel()
        if self.kind == "identity":
            out = f(flat)
        elif self.kind == "kernel":
            out = apply_kernel(self.kernel, f, flat)
        else:
            out = commutator(self.symbol, self.kernel, f, flat)
        return np.asarray(out, float).reshape(x.shape)

    def is_zero_for(self, f: SampledFunction) -> bool:
        if f.is_zero():
            return True
        return self.kind == "commutator" and self.symbol.is_zero()

    def support(self, f: SampledFunction) -> tuple:
        lo, hi = f.support
        if self.kind == "identity":
            return (lo, hi)
        shift = self.kernel.delta or 0.0
        return (-math.inf, hi - shift)

    def cuts(self, f: SampledFunction) -> list:
        bps = set(f.breakpoints())
        if self.kind == "identity":
            return sorted(bps)
        if self.kind == "commutator":
            bps |= set(self.symbol.breakpoints())
        offs = [0.0] + [-o for o in self.kernel.cut_offsets()]
        return sorted({c + o for c in bps for o in offs})

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.kernel is not None:
            d["kernel"] = self.kernel.to_json()
        if self.symbol is not None:
            d["symbol"] = self.symbol.to_json()
        return d


def _norm_p(F, p: float, lo: float, hi: float, cuts: Sequence[float]) -> float:
    """``(int_lo^hi |F|^p)^{1/p}``; ``lo`` may be ``-inf``."""
    if not lo < hi:
        return 0.0
    pts = [c for c in cuts if lo < c < hi]
    est = integrate(lambda x: np.abs(F(x)) ** p, (lo, hi), tol=NORM_ATOL, rtol=NORM_RTOL, points=pts)
    return max(est.value, 0.0) ** (1.0 / p)


# ---------------------------------------------------------------------------
# families


@dataclass
class TestFamily:
    members: list
    p: float
    weight: Optional[Weight]
    provenance: dict

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not self.members:
            raise InvalidParams("a test family needs at least one member")

    def density(self, q: Optional[float] = None):
        """``x -> w(x)^{1/q}`` for the density transfer (``None`` for unweighted)."""
        if self.weight is None:
            return None
        q = self.p if q is None else q
        w = self.weight
        return lambda x: np.exp(w.log_eval(x) / q)

    def densified(self, i: int):
        """``g = f w^{1/p}`` for member ``i``."""
        f = self.members[i]
        dens = self.density()
        return f if dens is None else (lambda x: f(x) * dens(x))

    def weight_cuts(self) -> list:
        if self.weight is None:
            return []
        return sorted({c for c, _ in self.weight.singularities()} | set(self.weight.breakpoints()))

    def to_dict(self) -> dict:
        return {"p": self.p, "weight": None if self.weight is None else self.weight.to_json(),
                "provenance": self.provenance, "members": [m.to_json() for m in self.members]}


def lp_norm(f: SampledFunction, p: float, w: Optional[Weight] = None) -> float:
    """``||f||_{L^p(w)}`` by quadrature over the support."""
    lo, hi = f.support
    cuts = list(f.breakpoints())
    if w is not None:
        cuts += [c for c, _ in w.singularities()] + w.breakpoints()
        F = lambda x: np.abs(f(x)) * np.exp(w.log_eval(x) / p)  # noqa: E731
    else:
        F = f
    return _norm_p(F, p, lo, hi, cuts)


def _base_bump(kind: str, center: float, radius: float) -> SampledFunction:
    if kind == "poly":
        return SampledFunction.poly_bump(center, radius)
    if kind == "cinf":
        return SampledFunction.cinf_bump(center, radius)
    ramp = 0.25 * 2 * radius
    return SampledFunction.smoothstep_bump(center - radius, center + radius, ramp)


def unit_ball_sampler(p: float, w: Optional[Weight], count: int, seed: int = 0,
                      modes: Sequence[str] = ("random_bumps",), *, base: Optional[SampledFunction] = None,
                      center_range: float = 2.0) -> TestFamily:
    """Deterministic family of ``count`` unit vectors of ``L^p(w)``.

    Members cycle through ``modes``: ``translates`` are ``base(. - j)``,
    ``dilates`` are ``2^{j/p} base(2^j .)``, ``random_bumps`` draw centre,
    radius and profile from the seeded generator, ``indicators`` draw random
    intervals.  Every member is rescaled to unit norm by quadrature.
    """
    if count < 1:
        raise InvalidParams("count must be >= 1")
    if not p >= 1:
        raise InvalidParams("p must be >= 1")
    modes = tuple(modes)
    for m in modes:
        if m not in SAMPLER_MODES:
            raise InvalidParams(f"unknown sampler mode {m!r}")
    base = SampledFunction.poly_bump(0.0, 1.0) if base is None else base
    rng = np.random.default_rng(seed)
    members = []
    counters = {m: 0 for m in modes}
    kinds = ("poly", "cinf", "smoothstep")
    for i in range(count):
        mode = modes[i % len(modes)]
        j = counters[mode]
        counters[mode] += 1
        if mode == "translates":
            f = base.translated(float(j))
        elif mode == "dilates":
            f = base.dilated(2.0 ** j).scaled(2.0 ** (j / p))
        elif mode == "random_bumps":
            c = rng.uniform(-center_range / 2, center_range / 2)
            r = rng.uniform(0.25, 1.0)
            f = _base_bump(kinds[int(rng.integers(3))], c, r)
        else:
            a = rng.uniform(-center_range / 2, center_range / 2)
            f = SampledFunction.indicator(a, a + rng.uniform(0.1, 1.0))
        n = lp_norm(f, p, w)
        if not (math.isfinite(n) and n > 0):
            raise NormalizationFailure(f"member {i} has norm {n} in L^{p}(w)")
        f = f.scaled(1.0 / n)
        check = lp_norm(f, p, w)
        if abs(check - 1.0) > 1e-9:
            # one more pass absorbs the quadrature error of the first estimate
            f = f.scaled(1.0 / check)
            check = lp_norm(f, p, w)
            if abs(check - 1.0) > 1e-9:
                raise NormalizationFailure(f"member {i} normalises to {check}")
        members.append(f)
    prov = {"seed": seed, "modes": list(modes), "count": count, "base": base.to_json()}
    return TestFamily(members, float(p), w, prov)


# ---------------------------------------------------------------------------
# moduli


@dataclass
class CompactnessModuli:
    bound_B: float
    omega: list  # [(h, value)]
    tau: list  # [(M, value)]
    norms: list = field(default_factory=list)

    def checks(self) -> dict:
        om = [v for _, v in self.omega]
        ta = [v for _, v in self.tau]
        tol = 1e-9 * max([self.bound_B, 1e-300])
        return {
            "tau_non_increasing": all(ta[i + 1] <= ta[i] + tol for i in range(len(ta) - 1)),
            "omega_non_decreasing": all(om[i + 1] >= om[i] - tol for i in range(len(om) - 1)),
            "entries_non_negative": all(v >= 0 for v in om + ta) and self.bound_B >= 0,
            "bound_finite": math.isfinite(self.bound_B),
        }

    def to_dict(self) -> dict:
        return {"B": self.bound_B, "omega": [[h, v] for h, v in self.omega],
                "tau": [[m, v] for m, v in self.tau]}


def _member_output(op: LineOperator, family: TestFamily, i: int, q: float):
    """``(G, lo, hi, cuts)`` for the transferred output of member ``i``."""
    f = family.members[i]
    lo, hi = op.support(f)
    dens = family.density(q)
    cuts = op.cuts(f) + family.weight_cuts()
    if dens is None:
        G = lambda x: op(f, x)  # noqa: E731
    else:
        G = lambda x: op(f, x) * dens(x)  # noqa: E731
    return G, lo, hi, cuts


def translation_modulus(G, lo, hi, cuts, h: float, p: float) -> float:
    """``||G(. + h) - G||_p`` for ``G`` supported in ``[lo, hi]``."""
    if h == 0:
        return 0.0
    pts = sorted(set(cuts) | {c - h for c in cuts})
    return _norm_p(lambda x: G(x + h) - G(x), p, lo - abs(h), hi + abs(h), pts)


def tail_mass(G, lo, hi, cuts, M: float, p: float) -> float:
    """``||G chi_{|x| > M}||_p``."""
    left = _norm_p(G, p, lo, min(-M, hi), cuts) if lo < -M else 0.0
    right = _norm_p(G, p, max(M, lo), hi, cuts) if hi > M else 0.0
    return (left ** p + right ** p) ** (1.0 / p)


def rk_moduli(op: LineOperator, family: TestFamily, h_grid: Sequence[float], M_grid: Sequence[float],
              q: Optional[float] = None) -> CompactnessModuli:
    """Sup over the family of ``||Tf||_q``, ``omega(h)`` and ``tau(M)``.

    Weighted families are transferred to unweighted norms through
    ``g = (Tf) w^{1/q}``; ``q`` defaults to the family exponent.
    """
    q = family.p if q is None else float(q)
    h_grid = [float(h) for h in h_grid]
    M_grid = [float(m) for m in M_grid]
    if any(h < 0 for h in h_grid) or any(m < 0 for m in M_grid):
        raise InvalidParams("h and M grids must be non-negative")
    norms = []
    om = np.zeros(len(h_grid))
    ta = np.zeros(len(M_grid))
    for i, f in enumerate(family.members):
        if op.is_zero_for(f):
            norms.append(0.0)
            continue
        G, lo, hi, cuts = _member_output(op, family, i, q)
        norms.append(_norm_p(G, q, lo, hi, cuts))
        for k, h in enumerate(h_grid):
            om[k] = max(om[k], translation_modulus(G, lo, hi, cuts, h, q))
        for k, M in enumerate(M_grid):
            ta[k] = max(ta[k], tail_mass(G, lo, hi, cuts, M, q))
    B = max(norms) if norms else 0.0
    return CompactnessModuli(B, list(zip(h_grid, om.tolist())), list(zip(M_grid, ta.tolist())), norms)


# ---------------------------------------------------------------------------
# fits


@dataclass
class FitReport:
    name: str
    grid: list
    values: list
    fitted_exponent: float
    fitted_constant: float
    residual: float
    passed: Optional[bool] = None
    threshold: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "grid": self.grid, "values": self.values, "exponent": self.fitted_exponent,
                "constant": self.fitted_constant, "residual": self.residual, "pass": self.passed,
                "threshold": self.threshold, **({"extra": self.extra} if self.extra else {})}


def loglog_fit(name: str, grid: Sequence[float], values: Sequence[float]) -> FitReport:
    """Least-squares line through ``(log grid, log values)``.

    All-zero data is reported as an exact-zero case with exponent ``nan``.
    """
    g = np.asarray(grid, float)
    v = np.asarray(values, float)
    if g.size < 2 or np.any(np.diff(g) <= 0):
        raise InvalidParams("fit grid must be strictly increasing with at least two points")
    if np.all(v == 0):
        return FitReport(name, g.tolist(), v.tolist(), math.nan, 0.0, 0.0, extra={"exact_zero": True})
    if np.any(v <= 0):
        raise InvalidParams(f"{name}: cannot fit non-positive values on a log scale")
    X, Y = np.log(g), np.log(v)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = float(np.sqrt(np.mean((Y - (slope * X + intercept)) ** 2)))
    return FitReport(name, g.tolist(), v.tolist(), float(slope), float(math.exp(intercept)), resid)


def default_x_grid(family: TestFamily, b: SampledFunction, n: int = 241, margin: float = 0.5) -> np.ndarray:
    lo = min([m.support[0] for m in family.members] + [b.support[0]]) - margin
    hi = max(m.support[1] for m in family.members) + 0.01
    return np.linspace(lo, hi, n)


def truncation_error_experiment(b: SampledFunction, K: OneSidedKernel, family: TestFamily,
                                delta_grid: Sequence[float], x_grid=None) -> FitReport:
    """Scaling in ``delta`` of ``|[b,T] f - [b,T^delta] f| / (||b'||_inf M f)``.

    ``M`` is the centred two-sided maximal function.  The reported values are
    maxima over the family and ``x_grid``; ``extra['quotients']`` holds the
    per-``delta`` ratio ``value / delta``.
    """
    deltas = sorted(float(d) for d in delta_grid)
    if any(not 0 < d < 1 for d in deltas):
        raise InvalidParams("delta grid must lie in (0, 1)")
    lip = b.shape.lipschitz()
    if not math.isfinite(lip):
        raise PreconditionViolation("the symbol must be continuously differentiable")
    x = default_x_grid(family, b) if x_grid is None else np.asarray(x_grid, float)
    vals = np.zeros(len(deltas))
    if lip == 0:
        return FitReport("truncation_error", deltas, vals.tolist(), math.nan, 0.0, 0.0, passed=True,
                         extra={"exact_zero": True, "quotients": [0.0] * len(deltas)})
    base = truncate_kernel(K, 0) if K.truncated else K
    for f in family.members:
        Mf = maximal(f, "two_sided", x)
        keep = Mf > 0
        for k, d in enumerate(deltas):
            diff = truncation_difference(b, base, f, x[keep], d)
            vals[k] = max(vals[k], float(np.max(np.abs(diff) / (lip * Mf[keep]))))
    rep = loglog_fit("truncation_error", deltas, vals.tolist())
    quot = (vals / np.asarray(deltas)).tolist()
    spread = max(quot) / min(quot) if min(quot) > 0 else math.inf
    rep.extra = {"quotients": quot, "quotient_spread": spread, "symbol_lipschitz": lip}
    rep.passed = abs(rep.fitted_exponent - 1.0) <= 0.15 and spread <= 2.0
    rep.threshold = "|exponent - 1| <= 0.15 and quotient spread <= 2"
    return rep


def translation_fit(b: SampledFunction, K_delta: OneSidedKernel, family: TestFamily, h_grid: Sequence[float],
                    p: Optional[float] = None) -> FitReport:
    """Decay exponent of ``sup_f ||[b,T^delta] f(. + h) - [b,T^delta] f||_p`` as ``h -> 0``."""
    if not K_delta.truncated:
        raise PreconditionViolation("translation fit needs a truncated kernel")
    hs = sorted(float(h) for h in h_grid)
    if any(not 0 < h < K_delta.delta / 4 for h in hs):
        raise PreconditionViolation(f"h grid must lie in (0, delta/4) = (0, {K_delta.delta / 4})")
    p = family.p if p is None else float(p)
    op = LineOperator("commutator", K_delta, b)
    mod = rk_moduli(op, family, hs, [], q=p)
    values = [v for _, v in mod.omega]
    if all(v == 0 for v in values):
        return FitReport("translation", hs, values, math.nan, 0.0, 0.0, passed=True, extra={"exact_zero": True})
    rep = loglog_fit("translation", hs, values)
    r, gamma = K_delta.hormander if K_delta.hormander is not None else (2.0, 1.0)
    target = min(gamma - (1 - 1 / r), 1.0)
    rep.passed = rep.fitted_exponent >= target - 0.1
    rep.threshold = f"exponent >= {target} - 0.1"
    rep.extra = {"bound_exponent": target, "strictly_decreasing_as_h_shrinks":
                 all(values[i] < values[i + 1] for i in range(len(values) - 1))}
    return rep


def tail_fit(b: SampledFunction, K_delta: OneSidedKernel, family: TestFamily, R_grid: Sequence[float],
             p: Optional[float] = None) -> FitReport:
    """Decay of ``sup_f ||chi_{|x|>R} [b,T^delta] f||_p`` in ``R``; theory gives slope ``-(1 - 1/p)``."""
    Rs = sorted(float(R) for R in R_grid)
    R0 = max(abs(b.support[0]), abs(b.support[1]))
    if Rs[0] <= R0:
        raise PreconditionViolation(f"tail radii must exceed the symbol's support radius {R0}")
    p = family.p if p is None else float(p)
    op = LineOperator("commutator", K_delta, b)
    if b.is_zero():
        return FitReport("tail", Rs, [0.0] * len(Rs), math.nan, 0.0, 0.0, passed=True, extra={"exact_zero": True})
    mod = rk_moduli(op, family, [], Rs, q=p)
    values = [v for _, v in mod.tau]
    rep = loglog_fit("tail", Rs, values)
    target = -(1 - 1 / p)
    rep.passed = rep.fitted_exponent <= target + 0.1
    rep.threshold = f"slope <= {target} + 0.1"
    rep.extra = {"theoretical_slope": target}
    return rep


# ---------------------------------------------------------------------------
# bundled report


@dataclass
class ExperimentReport:
    config: dict
    family_provenance: dict
    moduli: CompactnessModuli
    fits: list
    checks: dict
    caveats: list

    @property
    def passed(self) -> bool:
        return all(v for v in self.checks.values()) and all(f.passed is not False for f in self.fits)

    def to_dict(self) -> dict:
        return {"config": self.config, "family_provenance": self.family_provenance,
                "moduli": self.moduli.to_dict(), "fits": [f.to_dict() for f in self.fits],
                "checks": self.checks, "pass": self.passed, "caveats": self.caveats}

    def tables(self) -> dict:
        """CSV-ready rows keyed by table name."""
        out = {"omega": [("h", "omega")] + [(h, v) for h, v in self.moduli.omega],
               "tau": [("M", "tau")] + [(m, v) for m, v in self.moduli.tau]}
        for f in self.fits:
            out[f"fit_{f.name}"] = [("x", "value")] + list(zip(f.grid, f.values))
        return out


CAVEATS = [
    "finite families give necessary evidence only; uniformity over the unit ball is not certified",
    "smooth compactly supported symbols stand in for the CMO closure",
]

DEFAULT_CONFIG = {
    "count": 8,
    "seed": 0,
    "modes": ["random_bumps"],
    "h_grid": [0.2, 0.1, 0.05, 0.025, 0.0125],
    "M_grid": [2.0, 4.0, 8.0, 16.0, 20.0],
}


def commutator_compactness_report(b: SampledFunction, operator_spec: dict, w: Optional[Weight] = None,
                                  config: Optional[dict] = None) -> ExperimentReport:
    """Family, moduli and scaling fits for ``[b, I_alpha^+]`` or ``[b, T^delta]``.

    ``operator_spec`` is ``{"kind": "fractional", "alpha", "p", "q"}`` with
    ``1/q = 1/p - alpha``, or ``{"kind": "cz", "delta", "p"}``.  Weighted runs
    measure inputs in ``L^p(w)`` and outputs through the density ``w^{1/q}``.
    """
    cfg = dict(DEFAULT_CONFIG, **(config or {}))
    kind = operator_spec.get("kind")
    p = float(operator_spec["p"])
    if kind == "fractional":
        alpha = float(operator_spec["alpha"])
        q = float(operator_spec["q"])
        if not (1 < p < q):
            raise ExponentRelationViolated(f"need 1 < p < q, got p={p}, q={q}")
        if abs(1 / q - (1 / p - alpha)) > 1e-12:
            raise ExponentRelationViolated(f"1/q = {1 / q} differs from 1/p - alpha = {1 / p - alpha}")
        K = make_kernel("fractional", alpha=alpha)
    elif kind == "cz":
        q = p
        K = truncate_kernel(make_kernel("cz_hilbert"), float(operator_spec.get("delta", 0.1)))
    else:
        raise InvalidParams(f"unknown operator kind {kind!r}")
    family = unit_ball_sampler(p, w, int(cfg["count"]), int(cfg["seed"]), cfg["modes"])
    op = LineOperator("commutator", K, b)
    h_grid = sorted(float(h) for h in cfg["h_grid"])
    M_grid = sorted(float(m) for m in cfg["M_grid"])
    mod = rk_moduli(op, family, h_grid, M_grid, q=q)
    fits = []
    if not b.is_zero() and mod.bound_B > 0:
        fits.append(loglog_fit("omega", h_grid, [v for _, v in mod.omega]))
        tail_pts = [(m, v) for m, v in mod.tau if m > max(abs(s) for s in b.support) and v > 0]
        if len(tail_pts) >= 2:
            fits.append(loglog_fit("tau", [m for m, _ in tail_pts], [v for _, v in tail_pts]))
    checks = mod.checks()
    om = [v for _, v in mod.omega]
    checks["omega_decreasing_as_h_shrinks"] = all(om[i] < om[i + 1] for i in range(len(om) - 1)) or all(
        v == 0 for v in om)
    caveats = list(CAVEATS)
    if w is not None:
        caveats.append(f"weighted norms via density transfer g = (Tf) w^(1/{q:g})")
    conf = {"operator": {**operator_spec, "kernel": K.to_json()}, "symbol": b.to_json(),
            "weight": None if w is None else w.to_json(), **cfg}
    return ExperimentReport(conf, family.provenance, mod, fits, checks, caveats)
