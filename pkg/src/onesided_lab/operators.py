"""One-sided operators on the line: maximal functions, fractional integrals,
forward-looking singular kernels with smooth truncation, and commutators.

Every operator is evaluated pointwise by quadrature over ``y``, split at the
breakpoints of the input functions and of the truncation profile, and
vectorised over the evaluation points ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidGeometry, InvalidParams, NonConvergentPV
from .numerics import integrate_batch
from .weights import Weight

DEFAULT_STEP = 1.0 / 512
SMOOTHNESS_TAGS = ("indicator", "C1_bump", "Cinf_bump", "general")


# ---------------------------------------------------------------------------
# shapes: closed-form compactly supported profiles


class Shape:
    """A compactly supported function with known breakpoints."""

    tag = "general"

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    @property
    def support(self) -> tuple:
        raise NotImplementedError

    def breakpoints(self) -> list:
        return list(self.support)

    def lipschitz(self) -> float:
        """Sup norm of the derivative (``inf`` for discontinuous shapes)."""
        return math.inf

    def sup(self) -> float:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Indicator(Shape):
    lo: float
    hi: float
    amplitude: float = 1.0
    tag = "indicator"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidParams("indicator needs lo < hi")

    def __call__(self, x):
        x = np.asarray(x, float)
        return np.where((x >= self.lo) & (x <= self.hi), self.amplitude, 0.0)

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, float))

    @property
    def support(self):
        return (self.lo, self.hi)

    def sup(self):
        return abs(self.amplitude)

    def to_json(self):
        return {"kind": "indicator", "lo": self.lo, "hi": self.hi, "amplitude": self.amplitude}


def smoothstep(s):
    """``3 s^2 - 2 s^3`` clamped to ``[0, 1]``."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def smoothstep_prime(s):
    inside = (s > 0) & (s < 1)
    return np.where(inside, 6.0 * s * (1.0 - s), 0.0)


@dataclass(frozen=True)
class SmoothstepBump(Shape):
    """Plateau of height ``amplitude`` on ``[lo+ramp, hi-ramp]`` with smoothstep flanks (C^1)."""

    lo: float
    hi: float
    ramp: float
    amplitude: float = 1.0
    tag = "C1_bump"

    def __post_init__(self):
        if not (self.ramp > 0 and self.lo + 2 * self.ramp <= self.hi):
            raise InvalidParams("smoothstep bump needs ramp > 0 and lo + 2 ramp <= hi")

    def __call__(self, x):
        x = np.asarray(x, float)
        up = smoothstep((x - self.lo) / self.ramp)
        down = smoothstep((self.hi - x) / self.ramp)
        return self.amplitude * np.minimum(up, down)

    def derivative(self, x):
        x = np.asarray(x, float)
        up = smoothstep_prime((x - self.lo) / self.ramp) / self.ramp
        down = -smoothstep_prime((self.hi - x) / self.ramp) / self.ramp
        left = x < 0.5 * (self.lo + self.hi)
        return self.amplitude * np.where(left, up, down)

    @property
    def support(self):
        return (self.lo, self.hi)

    def breakpoints(self):
        return [self.lo, self.lo + self.ramp, self.hi - self.ramp, self.hi]

    def lipschitz(self):
        return 1.5 * abs(self.amplitude) / self.ramp

    def sup(self):
        return abs(self.amplitude)

    def to_json(self):
        return {"kind": "smoothstep_bump", "lo": self.lo, "hi": self.hi, "ramp": self.ramp,
                "amplitude": self.amplitude}


@dataclass(frozen=True)
class PolyBump(Shape):
    """``amplitude * (1 - ((x-c)/r)^2)^2`` on ``|x-c| < r`` (C^1)."""

    center: float
    radius: float
    amplitude: float = 1.0
    tag = "C1_bump"

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParams("bump radius must be positive")

    def __call__(self, x):
        u = (np.asarray(x, float) - self.center) / self.radius
        return self.amplitude * np.where(np.abs(u) < 1, (1 - u * u) ** 2, 0.0)

    def derivative(self, x):
        u = (np.asarray(x, float) - self.center) / self.radius
        return self.amplitude * np.where(np.abs(u) < 1, -4 * u * (1 - u * u) / self.radius, 0.0)

    @property
    def support(self):
        return (self.center - self.radius, self.center + self.radius)

    def lipschitz(self):
        # max of 4u(1-u^2) is at u = 1/sqrt(3)
        return abs(self.amplitude) * 8.0 / (3.0 * math.sqrt(3.0)) / self.radius

    def sup(self):
        return abs(self.amplitude)

    def to_json(self):
        return {"kind": "poly_bump", "center": self.center, "radius": self.radius, "amplitude": self.amplitude}


@dataclass(frozen=True)
class CinfBump(Shape):
    """``amplitude * exp(1 - 1/(1 - ((x-c)/r)^2))`` on ``|x-c| < r``."""

    center: float
    radius: float
    amplitude: float = 1.0
    tag = "Cinf_bump"

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParams("bump radius must be positive")

    def __call__(self, x):
        u = (np.asarray(x, float) - self.center) / self.radius
        inside = np.abs(u) < 1
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            v = np.exp(1.0 - 1.0 / (1.0 - u * u))
        return self.amplitude * np.where(inside, v, 0.0)

    def derivative(self, x):
        u = (np.asarray(x, float) - self.center) / self.radius
        inside = np.abs(u) < 1
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            one_m = 1.0 - u * u
            v = np.exp(1.0 - 1.0 / one_m) * (-2.0 * u / one_m ** 2) / self.radius
        return self.amplitude * np.where(inside, v, 0.0)

    @property
    def support(self):
        return (self.center - self.radius, self.center + self.radius)

    def lipschitz(self):
        u = np.linspace(-1, 1, 20001)[1:-1]
        return float(np.max(np.abs(self.derivative(self.center + self.radius * u))))

    def sup(self):
        return abs(self.amplitude)

    def to_json(self):
        return {"kind": "cinf_bump", "center": self.center, "radius": self.radius, "amplitude": self.amplitude}


@dataclass(frozen=True, eq=False)
class GridShape(Shape):
    """Linear interpolation of samples on a uniform grid, zero outside."""

    x0: float
    h: float
    samples: np.ndarray
    tag_: str = "general"

    @property
    def tag(self):
        return self.tag_

    def __post_init__(self):
        s = np.asarray(self.samples, float)
        if s.ndim != 1 or s.size < 2 or not np.all(np.isfinite(s)):
            raise InvalidParams("grid samples must be a finite 1-d array of length >= 2")
        if not self.h > 0:
            raise InvalidParams("grid step must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def nodes(self):
        return self.x0 + self.h * np.arange(self.samples.size)

    def __call__(self, x):
        return np.interp(np.asarray(x, float), self.nodes, self.samples, left=0.0, right=0.0)

    def derivative(self, x):
        slopes = np.diff(self.samples) / self.h
        x = np.asarray(x, float)
        k = np.clip(np.floor((x - self.x0) / self.h).astype(int), 0, slopes.size - 1)
        inside = (x >= self.x0) & (x <= self.nodes[-1])
        return np.where(inside, slopes[k], 0.0)

    @property
    def support(self):
        return (self.x0, self.x0 + self.h * (self.samples.size - 1))

    def lipschitz(self):
        return float(np.max(np.abs(np.diff(self.samples)))) / self.h

    def sup(self):
        return float(np.max(np.abs(self.samples)))

    def to_json(self):
        return {"kind": "grid", "x0": self.x0, "h": self.h, "values": self.samples.tolist(), "tag": self.tag_}


@dataclass(frozen=True)
class ProductShape(Shape):
    factors: tuple

    @property
    def tag(self):
        return "general"

    def __call__(self, x):
        out = np.ones_like(np.asarray(x, float))
        for f in self.factors:
            out = out * f(x)
        return out

    def derivative(self, x):
        vals = [f(x) for f in self.factors]
        ders = [f.derivative(x) for f in self.factors]
        out = np.zeros_like(np.asarray(x, float))
        for i in range(len(self.factors)):
            term = ders[i]
            for j in range(len(self.factors)):
                if j != i:
                    term = term * vals[j]
            out = out + term
        return out

    @property
    def support(self):
        lo = max(f.support[0] for f in self.factors)
        hi = min(f.support[1] for f in self.factors)
        return (lo, hi) if lo < hi else (lo, lo)

    def breakpoints(self):
        lo, hi = self.support
        return sorted({b for f in self.factors for b in f.breakpoints() if lo <= b <= hi} | {lo, hi})

    def sup(self):
        return float(np.prod([f.sup() for f in self.factors]))

    def lipschitz(self):
        return sum(f.lipschitz() * np.prod([g.sup() for g in self.factors if g is not f]) for f in self.factors)

    def to_json(self):
        return {"kind": "product", "factors": [f.to_json() for f in self.factors]}


def shape_from_json(d: dict) -> Shape:
    kind = d.get("kind")
    try:
        if kind == "indicator":
            return Indicator(float(d["lo"]), float(d["hi"]), float(d.get("amplitude", 1.0)))
        if kind == "smoothstep_bump":
            return SmoothstepBump(float(d["lo"]), float(d["hi"]), float(d["ramp"]), float(d.get("amplitude", 1.0)))
        if kind == "poly_bump":
            return PolyBump(float(d["center"]), float(d["radius"]), float(d.get("amplitude", 1.0)))
        if kind == "cinf_bump":
            return CinfBump(float(d["center"]), float(d["radius"]), float(d.get("amplitude", 1.0)))
        if kind == "grid":
            return GridShape(float(d["x0"]), float(d["h"]), np.asarray(d["values"], float), d.get("tag", "general"))
        if kind == "product":
            return ProductShape(tuple(shape_from_json(f) for f in d["factors"]))
    except KeyError as exc:
        raise InvalidParams(f"function descriptor of kind {kind!r} is missing {exc}") from None
    raise InvalidParams(f"unknown function kind {kind!r}")


def _scaled(shape: Shape, c: float) -> Shape:
    if isinstance(shape, GridShape):
        return GridShape(shape.x0, shape.h, shape.samples * c, shape.tag_)
    if isinstance(shape, ProductShape):
        return ProductShape((_scaled(shape.factors[0], c),) + shape.factors[1:])
    return _replace(shape, amplitude=shape.amplitude * c)


def _replace(shape, **kw):
    d = {k: getattr(shape, k) for k in shape.__dataclass_fields__}
    d.update(kw)
    return type(shape)(**d)


def _affine(shape: Shape, lam: float, shift: float) -> Shape:
    """Shape of ``x -> shape(lam * (x - shift))`` for ``lam > 0``."""
    t = lambda a: a / lam + shift  # noqa: E731
    if isinstance(shape, Indicator):
        return _replace(shape, lo=t(shape.lo), hi=t(shape.hi))
    if isinstance(shape, SmoothstepBump):
        return _replace(shape, lo=t(shape.lo), hi=t(shape.hi), ramp=shape.ramp / lam)
    if isinstance(shape, (PolyBump, CinfBump)):
        return _replace(shape, center=t(shape.center), radius=shape.radius / lam)
    if isinstance(shape, GridShape):
        return GridShape(t(shape.x0), shape.h / lam, shape.samples, shape.tag_)
    if isinstance(shape, ProductShape):
        return ProductShape(tuple(_affine(f, lam, shift) for f in shape.factors))
    raise InvalidParams(f"cannot transform {type(shape).__name__}")


# ---------------------------------------------------------------------------
# sampled functions


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """A compactly supported function with a uniform sample grid over its support.

    Closed-form shapes are evaluated exactly; the grid is the sampled view
    used for serialisation and plotting.
    """

    shape: Shape
    step: float = DEFAULT_STEP

    @classmethod
    def indicator(cls, lo: float, hi: float, amplitude: float = 1.0, step: float = DEFAULT_STEP):
        return cls(Indicator(lo, hi, amplitude), step)

    @classmethod
    def smoothstep_bump(cls, lo: float, hi: float, ramp: float, amplitude: float = 1.0,
                        step: float = DEFAULT_STEP):
        return cls(SmoothstepBump(lo, hi, ramp, amplitude), step)

    @classmethod
    def poly_bump(cls, center: float, radius: float, amplitude: float = 1.0, step: float = DEFAULT_STEP):
        return cls(PolyBump(center, radius, amplitude), step)

    @classmethod
    def cinf_bump(cls, center: float, radius: float, amplitude: float = 1.0, step: float = DEFAULT_STEP):
        return cls(CinfBump(center, radius, amplitude), step)

    @classmethod
    def from_samples(cls, x0: float, h: float, values, tag: str = "general"):
        if tag not in SMOOTHNESS_TAGS:
            raise InvalidParams(f"unknown smoothness tag {tag!r}")
        return cls(GridShape(x0, h, np.asarray(values, float), tag), h)

    # grid view
    @property
    def support(self) -> tuple:
        return self.shape.support

    @property
    def tag(self) -> str:
        return self.shape.tag

    @property
    def grid(self) -> tuple:
        lo, hi = self.support
        n = max(int(math.ceil((hi - lo) / self.step - 1e-9)), 1) + 1
        return lo, self.step, n

    @property
    def values(self) -> np.ndarray:
        x0, h, n = self.grid
        return self.shape(x0 + h * np.arange(n))

    def __call__(self, x):
        return self.shape(x)

    def derivative(self, x):
        return self.shape.derivative(x)

    def breakpoints(self) -> list:
        return sorted(set(self.shape.breakpoints()))

    def is_zero(self) -> bool:
        lo, hi = self.support
        return hi <= lo or self.shape.sup() == 0

    # transformations
    def scaled(self, c: float) -> "SampledFunction":
        return SampledFunction(_scaled(self.shape, float(c)), self.step)

    def translated(self, tau: float) -> "SampledFunction":
        return SampledFunction(_affine(self.shape, 1.0, float(tau)), self.step)

    def dilated(self, lam: float) -> "SampledFunction":
        """``x -> f(lam x)``."""
        if not lam > 0:
            raise InvalidParams("dilation factor must be positive")
        return SampledFunction(_affine(self.shape, float(lam), 0.0), self.step / lam)

    def times(self, other: "SampledFunction") -> "SampledFunction":
        return SampledFunction(ProductShape((self.shape, other.shape)), min(self.step, other.step))

    def to_json(self) -> dict:
        x0, h, n = self.grid
        return {"grid": {"x0": x0, "h": h, "n": n}, "support": list(self.support), "tag": self.tag,
                "form": self.shape.to_json()}

    def to_json_with_values(self) -> dict:
        d = self.to_json()
        d["values"] = self.values.tolist()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SampledFunction":
        if "form" in d:
            return cls(shape_from_json(d["form"]), float(d.get("grid", {}).get("h", DEFAULT_STEP)))
        if "values" in d and "grid" in d:
            g = d["grid"]
            return cls.from_samples(float(g["x0"]), float(g["h"]), d["values"], d.get("tag", "general"))
        return cls(shape_from_json(d))


# ---------------------------------------------------------------------------
# truncation profile and kernels


@dataclass(frozen=True)
class TruncationProfile:
    """C^1 ramp: 0 below ``delta``, 1 above ``2 delta``, smoothstep in between."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidParams("truncation delta must be positive")

    def __call__(self, u):
        return smoothstep((np.abs(np.asarray(u, float)) - self.delta) / self.delta)

    def derivative(self, u):
        return smoothstep_prime((np.abs(np.asarray(u, float)) - self.delta) / self.delta) / self.delta

    @property
    def derivative_constant(self) -> float:
        """``c`` in ``|phi'| <= c / delta``."""
        return 1.5

    @property
    def derivative_bound(self) -> float:
        return self.derivative_constant / self.delta


KERNEL_KINDS = ("fractional", "cz_hilbert", "custom")


@dataclass(frozen=True)
class OneSidedKernel:
    """Kernel ``K(x, y)`` supported on ``y > x``, a function of ``d = y - x``."""

    kind: str
    alpha: Optional[float] = None
    size_constant: float = 1.0
    hormander: Optional[tuple] = None
    delta: Optional[float] = None
    profile: Optional[Callable] = field(default=None, compare=False)
    singular_exponent_: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidParams(f"unknown kernel kind {self.kind!r}")
        if self.kind == "fractional" and not (self.alpha is not None and 0 < self.alpha < 1):
            raise InvalidParams("fractional kernels need alpha in (0, 1)")
        if self.kind == "custom" and self.profile is None:
            raise InvalidParams("custom kernels need a profile d -> K")
        if self.delta is not None and self.delta < 0:
            raise InvalidParams("truncation delta must be non-negative")
        if self.hormander is not None:
            r, g = self.hormander
            if not (r > 1 and g > 1 - 1 / r):
                raise InvalidParams("Hoermander parameters need r > 1 and gamma > 1/r'")

    @property
    def truncated(self) -> bool:
        return bool(self.delta)

    @property
    def singular_exponent(self) -> float:
        """``beta`` with ``|K| ~ d**beta`` as ``d -> 0``."""
        if self.kind == "fractional":
            return self.alpha - 1.0
        if self.kind == "cz_hilbert":
            return -1.0
        return -1.0 if self.singular_exponent_ is None else self.singular_exponent_

    def base(self, d):
        d = np.asarray(d, float)
        pos = d > 0
        safe = np.where(pos, d, 1.0)
        if self.kind == "fractional":
            v = safe ** (self.alpha - 1.0)
        elif self.kind == "cz_hilbert":
            v = 1.0 / safe
        else:
            v = self.profile(safe)
        return np.where(pos, v, 0.0)

    def of_offset(self, d):
        v = self.base(d)
        if self.truncated:
            v = v * TruncationProfile(self.delta)(d)
        return v

    def __call__(self, x, y):
        return self.of_offset(np.asarray(y, float) - np.asarray(x, float))

    def cut_offsets(self) -> list:
        return [self.delta, 2 * self.delta] if self.truncated else []

    def to_json(self) -> dict:
        params = {"size_constant": self.size_constant}
        if self.alpha is not None:
            params["alpha"] = self.alpha
        if self.hormander is not None:
            params["hormander"] = list(self.hormander)
        if self.kind == "custom":
            params["profile"] = getattr(self.profile, "__name__", "custom")
        return {"kind": self.kind, "params": params, "delta": self.delta}


def make_kernel(kind: str, **params) -> OneSidedKernel:
    """``make_kernel('fractional', alpha=0.5)``, ``make_kernel('cz_hilbert')``, or a custom profile."""
    if kind == "fractional":
        return OneSidedKernel("fractional", alpha=float(params.pop("alpha")), **params)
    if kind == "cz_hilbert":
        params.setdefault("hormander", (2.0, 1.0))
        return OneSidedKernel("cz_hilbert", **params)
    if kind == "custom":
        return OneSidedKernel("custom", profile=params.pop("profile"),
                              singular_exponent_=params.pop("singular_exponent", None), **params)
    raise InvalidParams(f"unknown kernel kind {kind!r}")


def kernel_from_json(d: dict) -> OneSidedKernel:
    params = dict(d.get("params", {}))
    if "hormander" in params:
        params["hormander"] = tuple(params["hormander"])
    k = make_kernel(d["kind"], **params)
    return truncate_kernel(k, d["delta"]) if d.get("delta") else k


def truncate_kernel(K: OneSidedKernel, delta: float) -> OneSidedKernel:
    """``K^delta(x, y) = phi^delta(|x - y|) K(x, y)``; ``delta = 0`` removes the truncation."""
    if delta == 0:
        return _kernel_replace(K, delta=None)
    if not 0 < delta < 1:
        raise InvalidParams(f"truncation delta must lie in (0, 1), got {delta}")
    return _kernel_replace(K, delta=float(delta))


def _kernel_replace(K, **kw):
    d = {f: getattr(K, f) for f in K.__dataclass_fields__}
    d.update(kw)
    return OneSidedKernel(**d)


# ---------------------------------------------------------------------------
# core quadrature: integrals of K(x, y) g(y) over y > x for many x


def _intervals(x, starts, hi, cuts):
    """Rows of consecutive cut points in ``[starts[j], hi]`` for each ``x[j]``."""
    n = x.size
    cuts = np.asarray(cuts, float).reshape(n, -1) if np.ndim(cuts) == 2 else np.broadcast_to(
        np.asarray(cuts, float), (n, len(cuts)))
    hi = np.broadcast_to(np.asarray(hi, float), (n,))[:, None]
    pts = np.concatenate([starts[:, None], np.clip(cuts, starts[:, None], hi), hi], axis=1)
    pts = np.maximum(pts, starts[:, None])
    pts.sort(axis=1)
    return pts[:, :-1], pts[:, 1:]


def kernel_integral(K: OneSidedKernel, x, g: Callable, support: tuple, cuts: Sequence[float], *,
                    eps: float = 0.0, bounded: bool = False, window: Optional[float] = None,
                    rtol: float = 1e-10, atol: float = 1e-14):
    """``int_{y > x + eps} K(x, y) g(y, j) dy`` for every ``x[j]``.

    ``g(y, j)`` receives the index of the evaluation point so that it can use
    ``x[j]`` (as in commutators).  ``support`` bounds the integration range and
    ``cuts`` are breakpoints of ``g``.  With ``bounded=True`` the caller
    guarantees the integrand stays bounded at ``y = x`` even when ``K`` does not.
    ``window`` restricts the range further to ``y < x + window``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    lo, hi = float(support[0]), float(support[1])
    n = x.size
    start = x + max(eps, K.delta or 0.0)
    starts = np.maximum(start, lo)
    ends = np.full(n, hi) if window is None else np.minimum(hi, x + window)
    active = starts < ends
    out = np.zeros(n)
    if not active.any():
        return out
    xa = x[active]
    kc = [xa + c for c in K.cut_offsets()]
    cut_mat = np.column_stack([np.broadcast_to(np.asarray(cuts, float), (xa.size, len(cuts)))] + [c[:, None] for c in kc]) \
        if (len(cuts) or kc) else np.zeros((xa.size, 0))
    a, b = _intervals(xa, starts[active], ends[active], cut_mat)
    owner = np.repeat(np.nonzero(active)[0], a.shape[1])
    a, b = a.ravel(), b.ravel()
    keep = b > a
    a, b, owner = a[keep], b[keep], owner[keep]
    if a.size == 0:
        return out
    singular = (not K.truncated) and eps == 0.0
    left_beta = None
    if singular:
        at_x = a == x[owner]
        beta = K.singular_exponent
        if beta <= -1 and not bounded and np.any(at_x):
            raise InvalidParams("kernel is not integrable at y = x; truncate it or use principal_value")
        if not bounded and beta > -1:
            left_beta = np.where(at_x, beta, np.nan)
        elif bounded and -1 < beta < 0:
            left_beta = np.where(at_x, beta, np.nan)

    xo = x[owner]

    def f(anchor, off, k):
        y = anchor + off
        # the offset is exact when the interval starts at x
        d = np.where(anchor == xo[k], off, (anchor - xo[k]) + off)
        return K.of_offset(d) * g(y, owner[k])

    res = integrate_batch(f, a, b, left_beta=left_beta, rtol=rtol, atol=atol, anchored=True)
    np.add.at(out, owner, res.values)
    return out


def _cuts(*fs) -> list:
    return sorted({c for f in fs for c in f.breakpoints()})


# ---------------------------------------------------------------------------
# operators


def frac_int_plus(f: SampledFunction, alpha: float, x, rtol: float = 1e-10):
    """``int_x^infty f(y) (y - x)^(alpha - 1) dy``."""
    if not 0 < alpha < 1:
        raise InvalidParams("alpha must lie in (0, 1)")
    K = make_kernel("fractional", alpha=alpha)
    scalar = np.ndim(x) == 0
    if f.is_zero():
        out = np.zeros(np.shape(np.atleast_1d(x)))
    else:
        out = kernel_integral(K, x, lambda y, j: f(y), f.support, _cuts(f), rtol=rtol)
    return float(out[0]) if scalar else out


def _pv_ladder(delta0: float, levels: int) -> np.ndarray:
    return delta0 * 2.0 ** -np.arange(levels)


def apply_kernel(K: OneSidedKernel, f: SampledFunction, x, mode: str = "truncated", *,
                 delta0: float = 1.0, levels: int = 40, tol: float = 1e-8, rtol: float = 1e-10):
    """Evaluate ``T f(x)`` for the kernel in one of three modes.

    ``truncated`` integrates ``K`` as given (a kernel without truncation must
    then be locally integrable); ``principal_value`` takes sharp cutoffs
    ``eps_k = delta0 2^-k`` until successive values agree to ``tol``;
    ``maximal_star`` returns the largest ``|T_eps f(x)|`` over that ladder.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, float))
    if f.is_zero():
        out = np.zeros(x.size)
        return float(out[0]) if scalar else out
    g = lambda y, j: f(y)  # noqa: E731
    if mode == "truncated":
        out = kernel_integral(K, x, g, f.support, _cuts(f), rtol=rtol)
    elif mode in ("principal_value", "maximal_star"):
        eps = _pv_ladder(delta0, levels)
        vals = np.array([kernel_integral(K, x, g, f.support, _cuts(f), eps=e, rtol=rtol) for e in eps])
        if mode == "maximal_star":
            out = np.max(np.abs(vals), axis=0)
        else:
            out = _pv_limit(vals, eps, tol)
    else:
        raise InvalidParams(f"unknown mode {mode!r}")
    return float(out[0]) if scalar else out


def _pv_limit(vals: np.ndarray, eps: np.ndarray, tol: float) -> np.ndarray:
    """Finest ladder value, provided the last three steps agree to ``tol``."""
    diffs = np.abs(np.diff(vals[-4:], axis=0))
    scale = np.maximum(1.0, np.abs(vals[-3:]))
    settled = np.all(diffs <= tol * scale, axis=0)
    if not settled.all():
        j = int(np.argmin(settled))
        raise NonConvergentPV(f"truncated values do not settle at point {j}: last step {diffs[-1, j]:.3g} "
                              f"at eps = {eps[-1]:.3g}")
    return vals[-1]


def commutator(b: SampledFunction, K: OneSidedKernel, f: SampledFunction, x, mode: str = "truncated", *,
               delta0: float = 1.0, levels: int = 40, tol: float = 1e-8, rtol: float = 1e-10):
    """``[b, T] f(x) = b(x) T f(x) - T(b f)(x)``.

    Evaluated as ``int (b(x) - b(y)) K(x, y) f(y) dy``, which keeps the
    integrand bounded at ``y = x`` for Lipschitz ``b``.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, float))
    if f.is_zero():
        out = np.zeros(x.size)
        return float(out[0]) if scalar else out
    bx = b(x)
    lipschitz = math.isfinite(b.shape.lipschitz())

    def g(y, j):
        return (bx[j] - b(y)) * f(y)

    cuts = _cuts(f, b)
    if mode == "truncated":
        if not K.truncated and K.singular_exponent <= -1 and not lipschitz:
            raise InvalidParams("untruncated singular kernel needs a Lipschitz symbol")
        out = kernel_integral(K, x, g, f.support, cuts, bounded=lipschitz, rtol=rtol)
    elif mode in ("principal_value", "maximal_star"):
        eps = _pv_ladder(delta0, levels)
        vals = np.array([kernel_integral(K, x, g, f.support, cuts, eps=e, rtol=rtol) for e in eps])
        out = np.max(np.abs(vals), axis=0) if mode == "maximal_star" else _pv_limit(vals, eps, tol)
    else:
        raise InvalidParams(f"unknown mode {mode!r}")
    return float(out[0]) if scalar else out


def truncation_difference(b: SampledFunction, K: OneSidedKernel, f: SampledFunction, x, delta: float,
                          rtol: float = 1e-10):
    """``[b, T] f(x) - [b, T^delta] f(x)`` computed directly on ``x < y < x + 2 delta``."""
    x = np.atleast_1d(np.asarray(x, float))
    prof = TruncationProfile(delta)
    bx = b(x)
    base = _kernel_replace(K, delta=None)

    def g(y, j):
        return (bx[j] - b(y)) * f(y) * (1.0 - prof(y - x[j]))

    return kernel_integral(base, x, g, f.support, _cuts(f, b), bounded=True, window=2 * delta, rtol=rtol)


# ---------------------------------------------------------------------------
# maximal functions


def default_h_ladder() -> np.ndarray:
    return 2.0 ** (np.arange(-48, 41) / 4.0)


def _antiderivative(f: SampledFunction, power: float = 1.0, density: Optional[Weight] = None):
    """``t -> int_{lo}^{t} |f|^power (density)`` for arrays ``t``."""
    lo, hi = f.support
    cuts = _cuts(f)

    def F(t):
        t = np.clip(np.asarray(t, float), lo, hi)
        flat = t.ravel()
        n = flat.size
        edges = np.array(cuts)
        a = np.concatenate([np.full((n, 1), lo), np.clip(np.broadcast_to(edges, (n, edges.size)), lo, flat[:, None])],
                           axis=1)
        b = np.concatenate([a[:, 1:], flat[:, None]], axis=1)
        owner = np.repeat(np.arange(n), a.shape[1])
        a, b = a.ravel(), b.ravel()
        keep = b > a
        out = np.zeros(n)
        if keep.any():
            if density is None:
                fn = lambda y, k: np.abs(f(y)) ** power  # noqa: E731
            else:
                fn = lambda y, k: np.abs(f(y)) ** power * density(y)  # noqa: E731
            res = integrate_batch(fn, a[keep], b[keep], rtol=1e-12, atol=1e-15)
            np.add.at(out, owner[keep], res.values)
        return out.reshape(t.shape)

    return F


def maximal(f: SampledFunction, variant: str, x, h_ladder=None, *, r_prime: float = 1.0,
            density: Optional[Weight] = None):
    """One-sided, two-sided power and measure-weighted maximal functions at ``x``.

    * ``plus``: ``sup_h (1/h) int_x^{x+h} |f|``;
    * ``minus``: the mirror image;
    * ``two_sided``: centred ``sup_h (1/2h) int_{x-h}^{x+h} |f|``;
    * ``r_power``: ``sup`` over intervals containing ``x`` of ``(avg |f|^{r'})^{1/r'}``;
    * ``measure_minus``: ``sup_{y<x} (1/mu(y,x)) int_y^x |f| dmu`` with ``mu`` given by ``density``.

    The ladder is augmented with the distances from ``x`` to every breakpoint of
    ``f``, where the one-sided averages of piecewise-smooth inputs peak, and
    with the ``h -> 0`` limit given by the one-sided limits of ``|f|`` at ``x``.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, float))
    if f.is_zero():
        out = np.zeros(x.size)
        return float(out[0]) if scalar else out
    ladder = default_h_ladder() if h_ladder is None else np.asarray(h_ladder, float)
    bps = np.array(f.breakpoints())

    def hs_for(sign):
        dist = sign * (bps[None, :] - x[:, None])
        dist = np.where(dist > 0, dist, np.nan)
        return np.concatenate([np.broadcast_to(ladder, (x.size, ladder.size)), dist], axis=1)

    if variant in ("plus", "minus"):
        sign = 1.0 if variant == "plus" else -1.0
        F = _antiderivative(f)
        H = hs_for(sign)
        Hs = np.where(np.isnan(H), 1.0, H)
        ends = x[:, None] + sign * Hs
        vals = sign * (F(ends) - F(np.broadcast_to(x[:, None], ends.shape))) / Hs
        vals = np.where(np.isnan(H), 0.0, vals)
        out = vals.max(axis=1)
    elif variant == "two_sided":
        F = _antiderivative(f)
        H = np.concatenate([hs_for(1.0), hs_for(-1.0)], axis=1)
        Hs = np.where(np.isnan(H), 1.0, H)
        vals = (F(x[:, None] + Hs) - F(x[:, None] - Hs)) / (2 * Hs)
        out = np.where(np.isnan(H), 0.0, vals).max(axis=1)
    elif variant == "r_power":
        if not r_prime >= 1:
            raise InvalidParams("r' must be >= 1")
        F = _antiderivative(f, r_prime)
        s = np.concatenate([[0.0], ladder])
        S, T = np.meshgrid(s, s, indexing="ij")
        S, T = S.ravel(), T.ravel()
        pos = (S + T) > 0
        S, T = S[pos], T[pos]
        vals = (F(x[:, None] + T) - F(x[:, None] - S)) / (S + T)
        out = np.max(vals, axis=1) ** (1.0 / r_prime)
    elif variant == "measure_minus":
        if density is None:
            raise InvalidParams("measure_minus needs a positive density")
        F = _antiderivative(f, 1.0, density)
        H = hs_for(-1.0)
        Hs = np.where(np.isnan(H), 1.0, H)
        starts = x[:, None] - Hs
        from .weights import log_power_integrals
        mu = np.exp(log_power_integrals(density, 1.0, starts.ravel(),
                                        np.broadcast_to(x[:, None], starts.shape).ravel())).reshape(starts.shape)
        vals = (F(np.broadcast_to(x[:, None], starts.shape)) - F(starts)) / mu
        out = np.where(np.isnan(H), 0.0, vals).max(axis=1)
    else:
        raise InvalidParams(f"unknown maximal variant {variant!r}")
    # the h -> 0 limit: one-sided limits of |f| at x
    right = np.abs(f(np.nextafter(x, np.inf)))
    left = np.abs(f(np.nextafter(x, -np.inf)))
    limit = {"plus": right, "minus": left, "two_sided": 0.5 * (left + right),
             "r_power": np.maximum(left, right), "measure_minus": left}[variant]
    out = np.maximum(np.maximum(out, limit), 0.0)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# kernel smoothness checks


@dataclass(frozen=True)
class HormanderSample:
    """Random balls ``B = (c - R, c + R)`` with points ``x, x'`` in ``B/2``."""

    balls: int = 64
    pairs_per_ball: int = 4
    rings: int = 6
    seed: int = 0
    center_range: float = 4.0
    radius_range: tuple = (0.01, 2.0)
    pointwise_pairs: int = 10_000


def _sample_geometry(spec: HormanderSample, n: int, rng):
    c = rng.uniform(-spec.center_range, spec.center_range, n)
    R = np.exp(rng.uniform(*np.log(spec.radius_range), n))
    x = c + R * rng.uniform(-0.5, 0.5, n)
    xp = c + R * rng.uniform(-0.5, 0.5, n)
    return c, R, x, xp


def pointwise_smoothness(K: OneSidedKernel, x, xp, y) -> np.ndarray:
    """``|K(x,y) - K(x',y)| / (rho(t) / |x - y|^{1-alpha})`` with ``t = |x - x'|/|x - y|``."""
    if K.kind != "fractional":
        raise InvalidParams("the pointwise modulus is defined for fractional kernels")
    a = K.alpha
    x, xp, y = (np.asarray(v, float) for v in (x, xp, y))
    dist = np.abs(x - y)
    if np.any(dist <= 2 * np.abs(x - xp)):
        raise InvalidGeometry("pointwise check needs |x - y| > 2 |x - x'|")
    t = np.abs(x - xp) / dist
    bound = 2.0 ** (1 - a) * t ** (1 - a) / dist ** (1 - a)
    num = np.abs(K(x, y) - K(xp, y))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(num == 0, 0.0, num / bound)


def ring_norms(K: OneSidedKernel, r: float, c, R, x, xp, m) -> np.ndarray:
    """``(int_{A_m(B)} |K(x,y) - K(x',y)|^r dy)^{1/r}`` for each sample."""
    c, R, x, xp, m = np.broadcast_arrays(*(np.asarray(v, float) for v in (c, R, x, xp, m)))
    c, R, x, xp, m = (v.ravel() for v in (c, R, x, xp, m))
    if np.any(np.abs(x - c) > R / 2 + 1e-15) or np.any(np.abs(xp - c) > R / 2 + 1e-15):
        raise InvalidGeometry("x and x' must lie in the half ball")
    outer, inner = 2.0 ** m * R, 2.0 ** (m - 1) * R
    # the ring is two intervals; the left one lies below x and x', where K vanishes
    lo, hi = c + inner, c + outer
    n = x.size
    offs = K.cut_offsets()
    cuts = np.column_stack([x, xp] + [x + o for o in offs] + [xp + o for o in offs])
    pts = np.sort(np.concatenate([lo[:, None], np.clip(cuts, lo[:, None], hi[:, None]), hi[:, None]], axis=1), axis=1)
    a, b = pts[:, :-1].ravel(), pts[:, 1:].ravel()
    owner = np.repeat(np.arange(n), pts.shape[1] - 1)
    keep = b > a
    a, b, owner = a[keep], b[keep], owner[keep]
    out = np.zeros(n)
    res = integrate_batch(lambda y, k: np.abs(K(x[owner[k]], y) - K(xp[owner[k]], y)) ** r,
                          a, b, rtol=1e-10, atol=1e-300)
    np.add.at(out, owner, res.values)
    return out ** (1.0 / r)


def hormander_bound(r, gamma, dx, length, m, delta: Optional[float] = None):
    """Right-hand side of the L^r-Hoermander condition in dimension one.

    With ``delta`` the truncated variant takes the larger of the two terms,
    the second carrying exponent ``1 + 1/r'``.
    """
    rp = r / (r - 1.0)
    first = dx ** (gamma - 1 / rp) / length ** gamma * 2.0 ** (-m * gamma)
    if delta is None:
        return first
    g2 = 1 + 1 / rp
    second = dx ** (g2 - 1 / rp) / length ** g2 * 2.0 ** (-g2 * m)
    return np.maximum(first, second)


def hormander_check(K: OneSidedKernel, r: Optional[float] = None, gamma: Optional[float] = None,
                    sample: HormanderSample = HormanderSample(), pairs=None) -> dict:
    """Largest ratio of the measured kernel smoothness to its claimed bound.

    Fractional kernels are checked pointwise against
    ``rho(t) / |x - y|^{1 - alpha}``; other kernels through ring integrals over
    ``A_m(B)``.  Explicit ``pairs`` are ``(c, R, x, x')`` rows and must place
    ``x, x'`` in ``B/2``.
    """
    rng = np.random.default_rng(sample.seed)
    if K.kind == "fractional" and r is None:
        n = sample.pointwise_pairs
        c, R, x, xp = _sample_geometry(sample, n, rng)
        d = np.abs(x - xp)
        # y beyond 2|x - x'| on either side, log-uniform distance
        dist = 2 * d * np.exp(rng.uniform(1e-9, np.log(1e4), n)) + 1e-300
        side = np.where(rng.uniform(size=n) < 0.8, 1.0, -1.0)
        y = x + side * dist
        ratio = pointwise_smoothness(K, x, xp, y)
        k = int(np.argmax(ratio))
        return {"mode": "pointwise", "samples": n, "max_ratio": float(ratio[k]),
                "worst_case": {"x": float(x[k]), "x_prime": float(xp[k]), "y": float(y[k])}}
    if r is None or gamma is None:
        if K.hormander is None:
            raise InvalidParams("ring check needs (r, gamma)")
        r, gamma = K.hormander
    if not (r > 1 and gamma > 1 - 1 / r):
        raise InvalidParams("need r > 1 and gamma > 1/r'")
    if pairs is not None:
        P = np.atleast_2d(np.asarray(pairs, float))
        c, R, x, xp = P[:, 0], P[:, 1], P[:, 2], P[:, 3]
    else:
        n = sample.balls * sample.pairs_per_ball
        c, R, x, xp = _sample_geometry(sample, n, rng)
    ms = np.arange(1, sample.rings + 1)
    C, RR, X, XP = (np.repeat(v, ms.size) for v in (c, R, x, xp))
    M = np.tile(ms, c.size)
    norms = ring_norms(K, r, C, RR, X, XP, M)
    bound = hormander_bound(r, gamma, np.abs(X - XP), 2 * RR, M, K.delta if K.truncated else None)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(norms == 0, 0.0, norms / bound)
    k = int(np.argmax(ratio))
    return {"mode": "ring", "r": r, "gamma": gamma, "samples": int(ratio.size), "max_ratio": float(ratio[k]),
            "worst_case": {"center": float(C[k]), "radius": float(RR[k]), "x": float(X[k]),
                           "x_prime": float(XP[k]), "ring": int(M[k])}}
