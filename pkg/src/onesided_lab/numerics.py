"""Adaptive Gauss-Legendre quadrature and multi-scale supremum search.

Everything here is vectorised over numpy arrays.  Integrands receive an
array of abscissas together with the index of the interval they belong to,
so one call can integrate thousands of intervals at once.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AllEvaluationsFailed, EmptyDomain, InvalidParams, NonIntegrable

log = logging.getLogger(__name__)

GL_ORDER = 16
_X, _W = np.polynomial.legendre.leggauss(GL_ORDER)
_X32, _ = np.polynomial.legendre.leggauss(32)
MAX_DEPTH = 46
MAX_PANELS = 1 << 21
ROUNDOFF = 50 * np.finfo(float).eps

# Default thread count for grid evaluation; the CLI overrides it.
DEFAULT_THREADS = 1


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    error_bound: float
    evaluations: int
    converged: bool


@dataclass(frozen=True)
class BatchResult:
    values: np.ndarray
    errors: np.ndarray
    converged: np.ndarray
    nonintegrable: np.ndarray
    evaluations: int


# ---------------------------------------------------------------------------
# adaptive engine


def _gl(g, lo, hi, owner):
    half = 0.5 * (hi - lo)
    u = (0.5 * (lo + hi))[:, None] + half[:, None] * _X
    with np.errstate(all="ignore"):
        vals = g(u, owner[:, None])
        vals = np.broadcast_to(vals, u.shape)
        return half * (vals @ _W)


def _adaptive(g, lo, hi, rtol, atol, max_depth=MAX_DEPTH, noise=None):
    """Integrate ``g(u, k)`` over ``[lo[k], hi[k]]`` for every ``k``.

    Each panel is compared against the sum over its two halves; panels whose
    difference exceeds their share of the target are bisected.  ``noise``
    is a per-integral relative round-off level of ``g`` below which panels
    are accepted regardless of the budget.
    """
    n = lo.size
    total = np.zeros(n)
    err = np.zeros(n)
    floor_total = np.zeros(n)
    converged = np.ones(n, dtype=bool)
    length = np.abs(hi - lo)
    length = np.where(length > 0, length, 1.0)
    atol = np.broadcast_to(np.asarray(atol, dtype=float), (n,))
    noise = np.full(n, ROUNDOFF) if noise is None else np.maximum(np.asarray(noise, float), ROUNDOFF)

    owner = np.arange(n)
    plo, phi = lo.astype(float), hi.astype(float)
    coarse = _gl(g, plo, phi, owner)
    evals = n * GL_ORDER
    for depth in range(max_depth):
        if owner.size == 0:
            break
        mid = 0.5 * (plo + phi)
        left = _gl(g, plo, mid, owner)
        right = _gl(g, mid, phi, owner)
        evals += 2 * owner.size * GL_ORDER
        fine = left + right
        finite = np.isfinite(fine)
        with np.errstate(invalid="ignore"):
            e = np.where(finite, np.abs(fine - coarse), np.inf)
        est = total + np.bincount(owner, weights=np.where(finite, fine, 0.0), minlength=n)
        target = np.maximum(atol, rtol * np.abs(est))
        budget = target[owner] * (phi - plo) / length[owner]
        # a panel at the round-off floor of its own value cannot improve by bisection
        floor = noise[owner] * np.abs(fine)
        ok = (e <= np.maximum(budget, floor)) | (phi == plo)
        if depth == max_depth - 1 or 2 * owner.size > MAX_PANELS:
            converged[np.unique(owner[~ok])] = False
            ok = np.ones_like(ok)
        total += np.bincount(owner[ok], weights=fine[ok], minlength=n)
        err += np.bincount(owner[ok], weights=e[ok], minlength=n)
        floor_total += np.bincount(owner[ok], weights=np.where(np.isfinite(floor[ok]), floor[ok], 0.0), minlength=n)
        keep = ~ok
        owner = np.concatenate([owner[keep], owner[keep]])
        plo, phi = np.concatenate([plo[keep], mid[keep]]), np.concatenate([mid[keep], phi[keep]])
        coarse = np.concatenate([left[keep], right[keep]])
    target = np.maximum(np.maximum(atol, rtol * np.abs(total)), floor_total)
    converged &= np.isfinite(total) & (err <= target * (1 + 1e-9))
    return total, err, converged, evals


def _pieces(lo, hi, left_beta, right_beta):
    """Split intervals into pieces with at most one singular (anchored) end.

    Returns (anchor, sign, beta, ulen, owner).  On a piece the abscissa is
    ``y = anchor + sign * u**(1/(beta+1))`` for ``u`` in ``[0, ulen]``.
    """
    n = lo.size
    lb = np.full(n, np.nan) if left_beta is None else np.broadcast_to(np.asarray(left_beta, float), (n,))
    rb = np.full(n, np.nan) if right_beta is None else np.broadcast_to(np.asarray(right_beta, float), (n,))
    has_l, has_r = np.isfinite(lb), np.isfinite(rb)
    both = has_l & has_r
    mid = np.where(both, 0.5 * (lo + hi), hi)

    # left-anchored pieces: every interval contributes one (regular ones use beta=0)
    a1 = lo
    b1 = np.where(has_l, lb, 0.0)
    end1 = np.where(both, mid, hi)
    only_r = has_r & ~has_l
    # intervals singular only on the right are anchored at hi instead
    a1 = np.where(only_r, hi, a1)
    s1 = np.where(only_r, -1.0, 1.0)
    b1 = np.where(only_r, rb, b1)
    w1 = np.where(only_r, hi - lo, end1 - lo)
    anchor, sign, beta, width, owner = [a1], [s1], [b1], [w1], [np.arange(n)]
    idx = np.nonzero(both)[0]
    anchor.append(hi[idx])
    sign.append(-np.ones(idx.size))
    beta.append(rb[idx])
    width.append(hi[idx] - mid[idx])
    owner.append(idx)
    anchor, sign, beta, width, owner = (np.concatenate(v) for v in (anchor, sign, beta, width, owner))
    with np.errstate(all="ignore"):
        ulen = np.where(beta > -1, np.maximum(width, 0.0) ** (beta + 1.0), np.inf)
    return anchor, sign, beta, ulen, owner.astype(int)


def _mapped(anchor, sign, beta):
    expo = 1.0 / np.where(beta > -1, beta + 1.0, 1.0)

    def ymap(u, k):
        e = expo[k]
        return anchor[k], sign[k] * u ** e, np.log(e) + (e - 1.0) * np.log(u)

    return ymap


def integrate_batch(f, lo, hi, *, left_beta=None, right_beta=None, rtol=1e-10, atol=0.0,
                    anchored=False) -> BatchResult:
    """Integrate ``f(y, idx)`` over many intervals ``[lo[k], hi[k]]``.

    ``idx`` has the same leading shape as ``y`` and holds the interval index,
    so ``f`` can look up per-interval parameters.  An algebraic endpoint
    singularity ``(y - end)**beta`` declared through ``left_beta`` or
    ``right_beta`` (NaN = none) is removed by ``u = |y - end|**(beta + 1)``.
    With ``anchored=True`` the integrand is called as ``f(anchor, offset, idx)``
    with ``y = anchor + offset``, so factors singular at the anchor can use
    the offset directly instead of a cancelling difference.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    lo, hi = np.broadcast_arrays(lo, hi)
    n = lo.size
    anchor, sign, beta, ulen, owner = _pieces(lo, hi, left_beta, right_beta)
    bad = ~np.isfinite(ulen)
    ymap = _mapped(anchor, sign, beta)

    def g(u, k):
        x0, d, logjac = ymap(u, k)
        vals = f(x0, d, owner[k]) if anchored else f(x0 + d, owner[k])
        return vals * np.exp(logjac)

    ulen_safe = np.where(bad, 0.0, ulen)
    piece_atol = np.asarray(atol, float) / np.maximum(np.bincount(owner, minlength=n)[owner], 1)
    vals, errs, conv, evals = _adaptive(g, np.zeros_like(ulen_safe), ulen_safe, rtol, piece_atol)
    values = np.bincount(owner, weights=vals, minlength=n)
    errors = np.bincount(owner, weights=errs, minlength=n)
    converged = np.bincount(owner, weights=(~conv).astype(float), minlength=n) == 0
    nonint = np.bincount(owner, weights=bad.astype(float), minlength=n) > 0
    values[nonint] = np.inf
    converged[nonint] = False
    return BatchResult(values, errors, converged, nonint, evals)


def log_integrate_batch(logf, lo, hi, *, left_beta=None, right_beta=None, rtol=1e-10,
                        anchored=False) -> BatchResult:
    """Like :func:`integrate_batch` for ``exp(logf)``, returning logarithms.

    Each piece is rescaled by the largest sampled value of its log-integrand,
    so integrands such as ``exp(x**3)`` over wide windows do not overflow.
    ``errors`` holds relative error bounds.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    lo, hi = np.broadcast_arrays(lo, hi)
    n = lo.size
    anchor, sign, beta, ulen, owner = _pieces(lo, hi, left_beta, right_beta)
    bad = ~np.isfinite(ulen)
    ulen = np.where(bad, 0.0, ulen)
    ymap = _mapped(anchor, sign, beta)

    def logg(u, k):
        x0, d, logjac = ymap(u, k)
        vals = logf(x0, d, owner[k]) if anchored else logf(x0 + d, owner[k])
        return vals + logjac

    pieces = np.arange(ulen.size)
    probe = 0.5 * ulen[:, None] * (1.0 + np.concatenate([_X32, [1.0]]))
    with np.errstate(all="ignore"):
        sampled = np.broadcast_to(logg(probe, pieces[:, None]), probe.shape)
    sampled = np.where(np.isfinite(sampled), sampled, -np.inf)
    shift = sampled.max(axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)

    def g(u, k):
        return np.exp(logg(u, k) - shift[k])

    # exp of a log-integrand of size |shift| carries relative error ~ |shift| * eps
    noise = ROUNDOFF * (1.0 + np.abs(shift))
    vals, errs, conv, evals = _adaptive(g, np.zeros_like(ulen), ulen, rtol, 0.0, noise=noise)
    with np.errstate(divide="ignore"):
        logs = np.where(vals > 0, np.log(np.where(vals > 0, vals, 1.0)) + shift, -np.inf)
        rel = np.where(vals > 0, errs / np.where(vals > 0, vals, 1.0), 0.0)
    out = np.full(n, -np.inf)
    np.logaddexp.at(out, owner, logs)
    rel_out = np.zeros(n)
    np.maximum.at(rel_out, owner, rel)
    converged = np.bincount(owner, weights=(~conv).astype(float), minlength=n) == 0
    nonint = np.bincount(owner, weights=bad.astype(float), minlength=n) > 0
    out[nonint] = np.inf
    converged[nonint] = False
    return BatchResult(out, rel_out, converged, nonint, evals)


# ---------------------------------------------------------------------------
# scalar front end


def _finite_integral(f, lo, hi, singular, points, tol, rtol):
    cuts = sorted({float(p) for p in points if lo < p < hi} | {float(x0) for x0, _ in singular if lo < x0 < hi})
    edges = np.array([lo, *cuts, hi], dtype=float)
    lb = np.full(edges.size - 1, np.nan)
    rb = np.full(edges.size - 1, np.nan)
    for x0, beta in singular:
        if beta <= -1:
            if lo <= x0 <= hi:
                raise NonIntegrable(f"singularity of order {beta} at {x0} is not integrable")
            continue
        lb[np.isclose(edges[:-1], x0, rtol=0, atol=0)] = beta
        rb[np.isclose(edges[1:], x0, rtol=0, atol=0)] = beta
    res = integrate_batch(lambda y, k: f(y), edges[:-1], edges[1:], left_beta=lb, right_beta=rb,
                          rtol=rtol, atol=tol)
    return float(res.values.sum()), float(res.errors.sum()), res.evaluations, bool(res.converged.all())


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    interval: tuple[float, float],
    singularity: Optional[tuple[float, float]] = None,
    tol: float = 1e-10,
    *,
    rtol: float = 0.0,
    points: Sequence[float] = (),
    max_doublings: int = 200,
) -> IntegralEstimate:
    """Integrate a vectorised ``f`` over ``interval``.

    ``singularity=(endpoint, beta)`` declares an algebraic factor
    ``|y - endpoint|**beta``.  Either limit may be infinite; the tail is
    integrated over doubling segments until an increment falls below a tenth
    of the tolerance.  ``points`` are known kinks or jumps of ``f``.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise InvalidParams(f"integration interval must satisfy lo < hi, got ({lo}, {hi})")
    singular = [] if singularity is None else [(float(singularity[0]), float(singularity[1]))]
    for x0, beta in singular:
        if beta <= -1:
            raise NonIntegrable(f"declared singularity exponent {beta} <= -1")

    if math.isinf(lo) and math.isinf(hi):
        pts = sorted(points)
        split = pts[len(pts) // 2] if pts else 0.0
        left = integrate(f, (-math.inf, split), singularity, tol / 2, rtol=rtol, points=points,
                         max_doublings=max_doublings)
        right = integrate(f, (split, math.inf), singularity, tol / 2, rtol=rtol, points=points,
                          max_doublings=max_doublings)
        return IntegralEstimate(left.value + right.value, left.error_bound + right.error_bound,
                                left.evaluations + right.evaluations, left.converged and right.converged)
    if math.isinf(lo):
        reflected = integrate(lambda y: f(-y), (-hi, math.inf),
                              None if singularity is None else (-singular[0][0], singular[0][1]),
                              tol, rtol=rtol, points=[-p for p in points], max_doublings=max_doublings)
        return reflected
    if not math.isinf(hi):
        v, e, n, ok = _finite_integral(f, lo, hi, singular, points, tol, rtol)
        return IntegralEstimate(v, e, n, ok and e <= max(tol, rtol * abs(v)) * (1 + 1e-9))

    x0 = max([lo + 1.0, *[p for p in points if p > lo], *[s for s, _ in singular if s > lo]])
    total, err, evals, ok = _finite_integral(f, lo, x0, singular, points, tol / 2, rtol)
    width = max(x0 - lo, 1.0)
    incs: list[float] = []
    small = 0
    for k in range(max_doublings):
        a, b = x0, x0 + width
        inc, e, n, seg_ok = _finite_integral(f, a, b, [], points, tol / 4, rtol)
        total += inc
        err += e
        evals += n
        ok &= seg_ok
        incs.append(abs(inc))
        target = max(tol, rtol * abs(total))
        if abs(inc) < target / 10:
            small += 1
            if small >= 2:
                ratio = incs[-1] / incs[-2] if len(incs) > 1 and incs[-2] > 0 else 0.5
                ratio = min(ratio, 0.9)
                err += abs(inc) * (1 + ratio / (1 - ratio))
                return IntegralEstimate(total, err, evals, ok and err <= target * (1 + 1e-9))
        else:
            small = 0
        if len(incs) >= 8 and all(incs[-i] >= incs[-i - 1] for i in range(1, 6)):
            raise NonIntegrable(f"tail increments not decaying beyond x = {b:g}")
        if not math.isfinite(total):
            raise NonIntegrable("integral diverged to a non-finite value")
        x0, width = b, 2 * width
    log.warning("tail of integral did not settle within %d doublings", max_doublings)
    return IntegralEstimate(total, err + incs[-1], evals, False)


# ---------------------------------------------------------------------------
# supremum search


@dataclass(frozen=True)
class SearchSpec:
    """Multi-scale grid specification for suprema over triples ``a < b < c``.

    At rung ``L`` of ``scale_ladder`` a triple is ``(a, s, t)`` with
    ``b = a + s``, ``c = b + t``; ``s, t`` run log-spaced over
    ``[s_min, L]`` and ``a`` over the positions keeping ``[a, c]`` inside
    ``[-L, L]``.
    """

    window: float = 8.0
    scale_ladder: tuple = (1.0, 2.0, 4.0, 8.0)
    coarse_grid: int = 16
    refine_rounds: int = 4
    tolerance: float = 1e-6
    s_min: float = 1e-3
    divergence_factor: float = 2.0
    top_k: int = 4

    def __post_init__(self):
        if not self.window > 0:
            raise InvalidParams("window half-width L must be positive")
        if self.coarse_grid < 8:
            raise InvalidParams("coarse_grid must be at least 8")
        if self.refine_rounds < 1:
            raise InvalidParams("refine_rounds must be at least 1")
        if not self.scale_ladder or any(x <= 0 for x in self.scale_ladder):
            raise InvalidParams("scale_ladder must be a non-empty list of positive half-widths")
        if list(self.scale_ladder) != sorted(self.scale_ladder):
            raise InvalidParams("scale_ladder must be increasing")
        if not 0 < self.s_min:
            raise InvalidParams("s_min must be positive")
        object.__setattr__(self, "scale_ladder", tuple(float(x) for x in self.scale_ladder))

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "scale_ladder": list(self.scale_ladder),
            "coarse_grid": self.coarse_grid,
            "refine_rounds": self.refine_rounds,
            "tolerance": self.tolerance,
            "s_min": self.s_min,
            "divergence_factor": self.divergence_factor,
            "top_k": self.top_k,
        }


@dataclass
class SupEstimate:
    value: float
    witness: tuple
    refinement_levels: int
    divergent: bool
    divergence_evidence: list = field(default_factory=list)
    evaluations: int = 0
    failures: int = 0

    def to_dict(self) -> dict:
        return {
            "value": _jsonable(self.value),
            "witness": [float(x) for x in self.witness],
            "refinement_levels": self.refinement_levels,
            "divergent": self.divergent,
            "divergence_evidence": [[float(s), _jsonable(v)] for s, v in self.divergence_evidence],
            "evaluations": self.evaluations,
            "failures": self.failures,
        }


def _jsonable(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _bounds(dims, L, s_min):
    top = L if dims == 3 else 2 * L
    if math.log(s_min) >= math.log(top):
        return None
    return np.array([[0.0, 1.0]] + [[math.log(s_min), math.log(top)]] * (dims - 1))


def _to_points(z, L):
    z = np.atleast_2d(z)
    scales = np.exp(z[:, 1:])
    span = scales.sum(axis=1)
    a = -L + z[:, 0] * np.maximum(2 * L - span, 0.0)
    return np.column_stack([a, scales])


def _evaluate(objective, pts, vectorized, threads):
    threads = threads or DEFAULT_THREADS

    def run(chunk):
        if vectorized:
            try:
                with np.errstate(all="ignore"):
                    return np.asarray(objective(chunk), dtype=float).reshape(len(chunk))
            except Exception:  # fall back to pointwise so one bad point cannot sink a chunk
                log.debug("vectorised objective failed on a chunk; retrying pointwise", exc_info=True)
        out = np.empty(len(chunk))
        for i, p in enumerate(chunk):
            try:
                with np.errstate(all="ignore"):
                    out[i] = float(objective(p[None, :])[0] if vectorized else objective(tuple(p)))
            except Exception:
                out[i] = np.nan
        return out

    if threads > 1 and len(pts) > 256:
        chunks = np.array_split(pts, threads)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = np.concatenate(list(ex.map(run, chunks)))
    else:
        vals = run(pts)
    failed = np.isnan(vals)
    return np.where(failed, -np.inf, vals), int(failed.sum())


def _lex_best(pts, vals):
    """Index of the maximum value; ties go to the lexicographically smallest point."""
    order = np.lexsort(tuple(pts[:, j] for j in reversed(range(pts.shape[1]))) + (-vals,))
    return int(order[0])


def sup_search(
    objective: Callable,
    spec: SearchSpec = SearchSpec(),
    *,
    dims: int = 3,
    vectorized: bool = True,
    threads: Optional[int] = None,
) -> SupEstimate:
    """Estimate ``sup objective`` over triples (``dims=3``) or intervals (``dims=2``).

    A vectorised objective takes an ``(n, dims)`` array of points
    ``(a, s, t)`` or ``(a, l)`` and returns ``n`` values; otherwise it is
    called with one tuple at a time.  NaNs and exceptions count as failed
    evaluations and are treated as ``-inf``.
    """
    if dims not in (2, 3):
        raise InvalidParams("dims must be 2 or 3")
    total_evals = 0
    failures = 0
    evidence = []
    best_val, best_pt = -np.inf, None
    n = spec.coarse_grid
    any_rung = False
    for L in spec.scale_ladder:
        bounds = _bounds(dims, L, spec.s_min)
        if bounds is None:
            continue
        any_rung = True
        axes = [np.linspace(lo, hi, n) for lo, hi in bounds]
        step = (bounds[:, 1] - bounds[:, 0]) / (n - 1)
        z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dims)
        pts = _to_points(z, L)
        vals, nf = _evaluate(objective, pts, vectorized, threads)
        total_evals += len(pts)
        failures += nf
        all_pts, all_vals = [pts], [vals]

        finite = vals > -np.inf
        if finite.any():
            order = np.lexsort(tuple(pts[:, j] for j in reversed(range(dims))) + (-vals,))
            seeds = [i for i in order if finite[i]][: spec.top_k]
            offsets = np.stack(np.meshgrid(*[np.arange(-2, 3)] * dims, indexing="ij"), axis=-1).reshape(-1, dims)
            for i in seeds:
                center = z[i].copy()
                h = step.copy()
                for _ in range(spec.refine_rounds):
                    h = h / 2
                    zz = np.clip(center + offsets * h, bounds[:, 0], bounds[:, 1])
                    pp = _to_points(zz, L)
                    vv, nf = _evaluate(objective, pp, vectorized, threads)
                    total_evals += len(pp)
                    failures += nf
                    all_pts.append(pp)
                    all_vals.append(vv)
                    center = zz[_lex_best(pp, vv)]

        rp, rv = np.concatenate(all_pts), np.concatenate(all_vals)
        k = _lex_best(rp, rv)
        cand_v, cand_p = rv[k], rp[k]
        if cand_v > best_val or (
            cand_v == best_val and best_pt is not None and tuple(cand_p) < tuple(best_pt)
        ):
            best_val, best_pt = cand_v, cand_p
        evidence.append((L, best_val))

    if not any_rung:
        raise EmptyDomain("no rung of the scale ladder exceeds s_min")
    if best_pt is None or best_val == -np.inf:
        raise AllEvaluationsFailed(f"all {total_evals} objective evaluations failed")
    if failures:
        log.info("sup_search: %d of %d evaluations failed", failures, total_evals)
    divergent = _diverges([v for _, v in evidence], spec.divergence_factor)
    return SupEstimate(
        value=float(best_val),
        witness=tuple(float(x) for x in best_pt),
        refinement_levels=spec.refine_rounds,
        divergent=divergent,
        divergence_evidence=evidence,
        evaluations=total_evals,
        failures=failures,
    )


def _diverges(values, factor):
    if any(math.isinf(v) and v > 0 for v in values):
        return True
    for i in range(len(values) - 3):
        w = values[i: i + 4]
        if all(w[j] < w[j + 1] for j in range(3)) and w[0] > 0 and w[3] / w[0] > factor:
            return True
    return False
