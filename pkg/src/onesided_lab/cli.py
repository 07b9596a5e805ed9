"""Config-driven experiment runner: ``onesided-lab run|describe|validate``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import jsonschema

from . import __version__, numerics
from . import compactness as cp
from . import extrapolation as ex
from . import operators as op
from . import weights as wt
from .errors import ConfigInvalid, LabError, UnknownExperiment
from .numerics import SearchSpec

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_COMPUTE = 0, 1, 2, 3

# ---------------------------------------------------------------------------
# schemas

NUMBER = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}]}
DESCRIPTOR = {"type": "object", "required": ["kind"]}
FUNCTION = {"type": "object"}
GRID = {"type": "array", "items": {"type": "number"}, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SEARCH_SCHEMA = _obj({
    "window": {"type": "number"}, "scale_ladder": GRID, "coarse_grid": {"type": "integer"},
    "refine_rounds": {"type": "integer"}, "tolerance": {"type": "number"}, "s_min": {"type": "number"},
    "divergence_factor": {"type": "number"}, "top_k": {"type": "integer"},
})

FAMILY_SCHEMA = _obj({
    "p": NUMBER, "count": {"type": "integer", "minimum": 1},
    "modes": {"type": "array", "items": {"enum": list(cp.SAMPLER_MODES)}, "minItems": 1},
    "weight": DESCRIPTOR, "base": FUNCTION,
}, ["p", "count"])

INPUT_SCHEMAS = {
    "class-constant": _obj({"weight": DESCRIPTOR, "class": {"enum": ["Ap+", "Ap-", "Apq+", "Apq-"]},
                            "p": NUMBER, "q": NUMBER}, ["weight", "class", "p"]),
    "rhi": _obj({"weight": DESCRIPTOR, "side": {"enum": ["plus", "minus"]}, "r_grid": GRID,
                 "intervals": _obj({"window": {"type": "number"}, "max_len": {"type": "number"},
                                    "n": {"type": "integer", "minimum": 1}, "min_len": {"type": "number"}},
                                   ["window", "max_len", "n"]),
                 "cap": {"type": "number"}}, ["weight", "side", "r_grid", "intervals"]),
    "gap-check": _obj({"u": DESCRIPTOR, "v": DESCRIPTOR, "p": NUMBER, "q": NUMBER, "t": {"type": "number"},
                       "K": {"type": ["number", "null"]}, "tolerance": {"type": "number"}},
                      ["u", "v", "p", "q", "t"]),
    "transfer-check": _obj({"weight": DESCRIPTOR, "p": NUMBER, "q": NUMBER, "max_residual": {"type": "number"}},
                           ["weight", "p", "q"]),
    "interpolate": _obj({"mode": {"enum": ["diagonal", "offdiagonal"]}, "lam": NUMBER, "p": NUMBER, "p1": NUMBER,
                         "q": NUMBER, "q1": NUMBER, "theta": NUMBER, "w": DESCRIPTOR, "w1": DESCRIPTOR,
                         "verify": {"type": "boolean"}, "with_class": {"type": "boolean"}},
                        ["mode", "p", "p1", "theta", "w", "w1"]),
    "counterexample": _obj({"q": NUMBER, "q1": NUMBER, "theta": NUMBER, "sweep": {"type": "array", "items": NUMBER},
                            "sanity": {"type": "boolean"}, "beyond": {"type": "number"}},
                           ["q", "q1", "theta"]),
    "hormander-check": _obj({"kernel": DESCRIPTOR, "r": {"type": "number"}, "gamma": {"type": "number"},
                             "sample": _obj({f.name: ({"type": "array"} if f.name == "radius_range" else
                                                      {"type": "number"}) for f in fields(op.HormanderSample)}),
                             "ratio_cap": {"type": "number"}}, ["kernel"]),
    "truncation-error": _obj({"symbol": FUNCTION, "kernel": DESCRIPTOR, "family": FAMILY_SCHEMA,
                              "delta_grid": GRID, "x_grid": GRID}, ["symbol", "kernel", "family", "delta_grid"]),
    "rk-moduli": _obj({"operator": _obj({"kind": {"enum": ["identity", "kernel", "commutator"]},
                                         "kernel": DESCRIPTOR, "symbol": FUNCTION}, ["kind"]),
                       "family": FAMILY_SCHEMA, "h_grid": GRID, "M_grid": GRID, "q": NUMBER},
                      ["operator", "family", "h_grid", "M_grid"]),
    "commutator-report": _obj({"symbol": FUNCTION,
                               "operator": _obj({"kind": {"enum": ["fractional", "cz"]}, "alpha": NUMBER,
                                                 "p": NUMBER, "q": NUMBER, "delta": {"type": "number"}},
                                                ["kind", "p"]),
                               "weight": DESCRIPTOR, "count": {"type": "integer", "minimum": 1},
                               "modes": {"type": "array", "items": {"enum": list(cp.SAMPLER_MODES)}},
                               "h_grid": GRID, "M_grid": GRID}, ["symbol", "operator"]),
}

EXPECT_SCHEMA = {"type": "array", "items": _obj({"path": {"type": "string"}, "equals": {},
                                                 "approx": {"type": "number"}, "rel_tol": {"type": "number"},
                                                 "abs_tol": {"type": "number"}}, ["path"])}


def config_schema(experiment: str) -> dict:
    return _obj({"experiment": {"const": experiment}, "inputs": INPUT_SCHEMAS[experiment], "search": SEARCH_SCHEMA,
                 "seed": {"type": "integer"}, "output_dir": {"type": "string"}, "expect": EXPECT_SCHEMA},
                ["experiment", "inputs"])


# ---------------------------------------------------------------------------
# parsing helpers


def _num(v):
    """Config numbers: ``"n/d"`` strings and integers stay exact."""
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


def _weight(d: dict) -> wt.Weight:
    return wt.Weight.from_json(d)


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigInvalid(msg)


def _search(cfg: dict) -> SearchSpec:
    s = dict(cfg.get("search", {}))
    if "scale_ladder" in s:
        s["scale_ladder"] = tuple(s["scale_ladder"])
    return SearchSpec(**s)


def _family(d: dict, seed: int) -> cp.TestFamily:
    w = _weight(d["weight"]) if "weight" in d else None
    base = op.SampledFunction.from_json(d["base"]) if "base" in d else None
    return cp.unit_ball_sampler(float(_num(d["p"])), w, d["count"], seed, d.get("modes", ["random_bumps"]), base=base)


def _semantic_checks(cfg: dict):
    name, inp = cfg["experiment"], cfg["inputs"]
    if name == "class-constant":
        _require(_num(inp["p"]) > 1, "p must satisfy p > 1")
        if inp["class"].startswith("Apq"):
            _require("q" in inp and _num(inp["q"]) > 1, "Apq classes need q > 1")
    elif name in ("gap-check", "transfer-check"):
        _require(_num(inp["p"]) > 1 and _num(inp["q"]) > 1, "p and q must satisfy p > 1 and q > 1")
        if name == "gap-check":
            _require(inp["t"] > 2, "gap parameter must satisfy t > 2")
    elif name == "interpolate":
        _require(_num(inp["p"]) > 1 and _num(inp["p1"]) > 1, "p and p1 must satisfy p > 1")
        if inp["mode"] == "offdiagonal":
            _require("q" in inp and "q1" in inp, "offdiagonal mode needs q and q1")
    elif name == "counterexample":
        _require(_num(inp["q"]) > 1 and _num(inp["q1"]) > 1, "q and q1 must satisfy q > 1")
    elif name in ("truncation-error", "rk-moduli"):
        _require(_num(inp["family"]["p"]) >= 1, "family exponent must satisfy p >= 1")
    elif name == "commutator-report":
        _require(_num(inp["operator"]["p"]) > 1, "p must satisfy p > 1")
    try:
        for key in ("weight", "u", "v", "w", "w1"):
            if key in inp:
                _weight(inp[key])
        for key in ("symbol",):
            if key in inp:
                op.SampledFunction.from_json(inp[key])
        if "kernel" in inp:
            op.kernel_from_json(inp["kernel"])
        _search(cfg)
    except (LabError, KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigInvalid):
            raise
        raise ConfigInvalid(f"invalid descriptor: {e}") from e


def load_config(source) -> dict:
    """Parse and validate a config from a path or a dict; raises ConfigInvalid."""
    if isinstance(source, dict):
        cfg = source
    else:
        try:
            cfg = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigInvalid(f"cannot read config: {e}") from e
    if not isinstance(cfg, dict) or cfg.get("experiment") not in INPUT_SCHEMAS:
        raise ConfigInvalid(f"'experiment' must be one of {sorted(INPUT_SCHEMAS)}")
    try:
        jsonschema.validate(cfg, config_schema(cfg["experiment"]))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {e.message}") from e
    _semantic_checks(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    canon = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(canon, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class Experiment:
    summary: str
    anchors: dict  # output field -> what it verifies
    columns: tuple
    runner: Callable  # cfg -> (result dict, checks dict, csv rows)


def _run_class_constant(cfg):
    inp = cfg["inputs"]
    exps = (_num(inp["p"]),) + ((_num(inp["q"]),) if "q" in inp else ())
    rep = wt.class_constant(_weight(inp["weight"]), inp["class"], exps, _search(cfg))
    d = rep.to_dict()
    rows = [list(r) for r in d["estimate"]["divergence_evidence"]]
    return d, {"verdict_conclusive": rep.member_verdict != "inconclusive"}, rows


def _run_rhi(cfg):
    inp = cfg["inputs"]
    iv = inp["intervals"]
    intervals = wt.sample_intervals(iv["window"], iv["max_len"], iv["n"], cfg.get("seed", 0), iv.get("min_len", 1e-2))
    res = wt.rhi_exponent(_weight(inp["weight"]), inp["side"], intervals, inp["r_grid"], inp.get("cap", 10.0))
    return res.to_dict(), {"exponent_found": True}, [list(r) for r in res.table]


def _run_gap(cfg):
    inp = cfg["inputs"]
    d = wt.gap_condition_check(_weight(inp["u"]), _weight(inp["v"]), _num(inp["p"]), _num(inp["q"]), inp["t"],
                               inp.get("K"), _search(cfg), inp.get("tolerance", 1e-3))
    rows = [["gapped_max", d["gapped_max"]], ["ungapped_max", d["ungapped_max"]]]
    return d, {"lemma_satisfied": bool(d["lemma_satisfied"])}, rows


def _run_transfer(cfg):
    inp = cfg["inputs"]
    d = wt.apq_transfer_check(_weight(inp["weight"]), _num(inp["p"]), _num(inp["q"]), _search(cfg))
    cap = inp.get("max_residual", 1e-2)
    rows = [[k, v["apq_constant_powered"], v["transferred_constant"], v["residual"]] for k, v in d["legs"].items()]
    return d, {"residuals_within_tolerance": all(v["residual"] <= cap for v in d["legs"].values())}, rows


def _run_interpolate(cfg):
    inp = cfg["inputs"]
    w, w1, th = _weight(inp["w"]), _weight(inp["w1"]), _num(inp["theta"])
    if inp["mode"] == "diagonal":
        plan = ex.solve_diagonal(_num(inp.get("lam", 1)), _num(inp["p"]), _num(inp["p1"]), w, w1, th)
    else:
        plan = ex.solve_offdiagonal(_num(inp["p"]), _num(inp["q"]), _num(inp["p1"]), _num(inp["q1"]), w, w1, th)
    result = {"plan": plan.to_dict()}
    checks = {}
    if inp.get("verify", True):
        v = ex.verify_plan(plan, _search(cfg), with_class=inp.get("with_class", False))
        result["verification"] = v
        residuals = {**v["exponent_residuals"], **v["collapse_residuals"], **v["reconstruction_exponent_residuals"]}
        checks["reconstruction_exact"] = bool(v["reconstruction_exact"])
        checks["residuals_exactly_zero"] = all(r["exact"] == "0" for r in residuals.values())
    rows = [[k, v["exact"], v["float"]] for k, v in result["plan"].items() if isinstance(v, dict) and "float" in v]
    return result, checks, rows


def _run_counterexample(cfg):
    inp = cfg["inputs"]
    d = ex.counterexample_probe(_num(inp["q"]), _num(inp["q1"]), _num(inp["theta"]), spec=_search(cfg),
                                sanity=inp.get("sanity", False), beyond=inp.get("beyond", 6.0))
    checks = {"violation_found": d["conclusion"] == "violates A_p^+ necessary condition"}
    if "sweep" in inp:
        d["sweep"] = ex.counterexample_sweep(_num(inp["q"]), _num(inp["q1"]), [_num(t) for t in inp["sweep"]])
        checks["sweep_all_convergent"] = all(s["tail_verdict"] == "convergent" for s in d["sweep"])
    rows = [list(r) for r in d["tail"]["log_partial_integrals"]]
    return d, checks, rows


def _run_hormander(cfg):
    inp = cfg["inputs"]
    s = dict(inp.get("sample", {}))
    s.setdefault("seed", cfg.get("seed", 0))
    if "radius_range" in s:
        s["radius_range"] = tuple(s["radius_range"])
    for k in ("balls", "pairs_per_ball", "rings", "seed", "pointwise_pairs"):
        if k in s:
            s[k] = int(s[k])
    K = op.kernel_from_json(inp["kernel"])
    d = op.hormander_check(K, inp.get("r"), inp.get("gamma"), op.HormanderSample(**s))
    cap = inp.get("ratio_cap", 1 + 1e-9 if d["mode"] == "pointwise" else math.inf)
    return d, {"ratio_within_cap": d["max_ratio"] <= cap}, [["max_ratio", d["max_ratio"]]]


def _run_truncation(cfg):
    inp = cfg["inputs"]
    fam = _family(inp["family"], cfg.get("seed", 0))
    rep = cp.truncation_error_experiment(op.SampledFunction.from_json(inp["symbol"]),
                                         op.kernel_from_json(inp["kernel"]), fam, inp["delta_grid"],
                                         inp.get("x_grid"))
    rows = [[g, v, q] for g, v, q in zip(rep.grid, rep.values, rep.extra["quotients"])]
    return {"fit": rep.to_dict(), "family_provenance": fam.provenance}, {"fit_pass": bool(rep.passed)}, rows


def _run_rk(cfg):
    inp = cfg["inputs"]
    o = inp["operator"]
    K = op.kernel_from_json(o["kernel"]) if "kernel" in o else None
    b = op.SampledFunction.from_json(o["symbol"]) if "symbol" in o else None
    try:
        handle = cp.LineOperator(o["kind"], K, b)
    except LabError as e:
        raise ConfigInvalid(str(e)) from e
    fam = _family(inp["family"], cfg.get("seed", 0))
    q = float(_num(inp["q"])) if "q" in inp else None
    mod = cp.rk_moduli(handle, fam, sorted(inp["h_grid"]), sorted(inp["M_grid"]), q=q)
    rows = [["omega", h, v] for h, v in mod.omega] + [["tau", m, v] for m, v in mod.tau]
    return {"moduli": mod.to_dict(), "family_provenance": fam.provenance}, mod.checks(), rows


def _run_commutator_report(cfg):
    inp = cfg["inputs"]
    o = {k: (float(_num(v)) if k != "kind" else v) for k, v in inp["operator"].items()}
    conf = {k: inp[k] for k in ("count", "modes", "h_grid", "M_grid") if k in inp}
    conf["seed"] = cfg.get("seed", 0)
    w = _weight(inp["weight"]) if "weight" in inp else None
    rep = cp.commutator_compactness_report(op.SampledFunction.from_json(inp["symbol"]), o, w, conf)
    d = rep.to_dict()
    checks = dict(rep.checks)
    for f in rep.fits:
        if f.passed is not None:
            checks[f"fit_{f.name}"] = bool(f.passed)
    rows = [["omega", h, v] for h, v in rep.moduli.omega] + [["tau", m, v] for m, v in rep.moduli.tau]
    return d, checks, rows


EXPERIMENTS = {
    "class-constant": Experiment(
        "Estimate a one-sided class constant on the scale ladder.",
        {"estimate.value": "supremum of the one-sided averaging functional over triples a < b < c",
         "member_verdict": "divergent / member-at-scale / inconclusive from the scale ladder"},
        ("scale", "value"), _run_class_constant),
    "rhi": Experiment(
        "Largest reverse Hoelder exponent on sampled intervals.",
        {"r": "largest grid exponent with constant below the cap", "table": "constant per exponent"},
        ("r", "constant"), _run_rhi),
    "gap-check": Experiment(
        "Gapped versus ungapped interval conditions for a pair (u, v); inputs u, v, p, q, t, K.",
        {"gapped_max": "sup over gapped configurations", "ungapped_max": "sup over triples",
         "lemma_satisfied": "ungapped_max <= gapped_max within tolerance"},
        ("quantity", "value"), _run_gap),
    "transfer-check": Experiment(
        "Transfer identities between A_{p,q} classes and the A_P classes of w^q and w^{-p'}.",
        {"legs.*.residual": "relative gap between powered A_{p,q} constant and transferred constant"},
        ("leg", "apq_constant_powered", "transferred_constant", "residual"), _run_transfer),
    "interpolate": Experiment(
        "Solve an interpolation plan: diagonal mode (lam, p, p1, theta) or offdiagonal mode (p, q, p1, q1, theta).",
        {"plan": "exact exponents, split parameters and endpoint weight w0",
         "verification": "exact convexity, reconstruction and collapse residuals"},
        ("quantity", "exact", "float"), _run_interpolate),
    "counterexample": Experiment(
        "Forward tail probe of the interpolated weight built from w = e^{x^3}, w1 = e^x.",
        {"w0": "endpoint weight as an expression tree", "tail_verdict": "convergent tails exclude forward classes",
         "conclusion": "violation of the forward necessary condition"},
        ("cutoff", "log_partial_integral"), _run_counterexample),
    "hormander-check": Experiment(
        "Kernel smoothness ratio: pointwise for fractional kernels, ring integrals otherwise.",
        {"max_ratio": "largest measured smoothness over its claimed bound"},
        ("quantity", "value"), _run_hormander),
    "truncation-error": Experiment(
        "Scaling of the commutator truncation error in delta.",
        {"fit.exponent": "log-log slope in delta (linear bound)", "fit.extra.quotients": "error over delta per grid point"},
        ("delta", "value", "quotient"), _run_truncation),
    "rk-moduli": Experiment(
        "Bound, translation modulus and tail mass of an operator over a test family.",
        {"moduli.B": "sup of output norms", "moduli.omega": "translation modulus per h",
         "moduli.tau": "tail mass per M"},
        ("table", "x", "value"), _run_rk),
    "commutator-report": Experiment(
        "Compactness diagnostics for [b, I_alpha^+] (fractional) or [b, T^delta] (cz).",
        {"moduli": "Riesz-Kolmogorov quantities", "fits": "log-log slopes of omega and tau",
         "caveats": "limits of finite-family evidence"},
        ("table", "x", "value"), _run_commutator_report),
}


# ---------------------------------------------------------------------------
# output


def _clean(x):
    """JSON-safe copy: Fractions as ``"n/d"``, non-finite floats as strings, tuples as lists."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, bool) or x is None or isinstance(x, (str, int)):
        return x
    if hasattr(x, "item"):
        x = x.item()
    if isinstance(x, float):
        return x if math.isfinite(x) else str(x)
    if hasattr(x, "to_dict"):
        return _clean(x.to_dict())
    if hasattr(x, "tolist"):
        return _clean(x.tolist())
    return str(x)


def _lookup(d, path: str):
    for part in path.split("."):
        if isinstance(d, list):
            d = d[int(part)]
        else:
            d = d[part]
    return d


def check_expectations(result: dict, expect: list) -> dict:
    out = {}
    for e in expect:
        key = f"expect:{e['path']}"
        try:
            val = _lookup(result, e["path"])
        except (KeyError, IndexError, ValueError, TypeError):
            out[key] = False
            continue
        ok = True
        if "equals" in e:
            ok = ok and val == e["equals"]
        if "approx" in e:
            tol = max(e.get("abs_tol", 0.0), e.get("rel_tol", 1e-9) * abs(e["approx"]))
            ok = ok and isinstance(val, (int, float)) and abs(val - e["approx"]) <= tol
        out[key] = bool(ok)
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def execute(cfg: dict) -> dict:
    """Run a validated config and return the canonical report (no timestamps)."""
    exp = EXPERIMENTS[cfg["experiment"]]
    result, checks, rows = exp.runner(cfg)
    result = _clean(result)
    checks = {**checks, **check_expectations(result, cfg.get("expect", []))}
    return {"experiment": cfg["experiment"], "config": cfg, "config_hash": config_hash(cfg), "version": __version__,
            "result": result, "checks": checks, "pass": all(checks.values()),
            "table": {"columns": list(exp.columns), "rows": _clean(rows)}}


def write_outputs(report: dict, out_dir: Path, started: str) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    name = report["experiment"]
    files = []
    rp = out_dir / "report.json"
    rp.write_text(canonical_json({k: v for k, v in report.items() if k != "table"}))
    files.append(rp.name)
    cp_ = out_dir / f"{name}.csv"
    with cp_.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(report["table"]["columns"])
        wr.writerows(report["table"]["rows"])
    files.append(cp_.name)
    manifest = {"config_hash": report["config_hash"], "version": __version__, "started": started,
                "finished": datetime.now(timezone.utc).isoformat(), "files": files,
                "summary": {name: report["pass"]}}
    (out_dir / "manifest.json").write_text(canonical_json(manifest))
    return manifest


def _set_threads(n: Optional[int]):
    if n is None:
        env = os.environ.get("ONESIDED_LAB_THREADS")
        n = int(env) if env and env.isdigit() else None
    if n:
        numerics.DEFAULT_THREADS = max(1, n)


def cmd_run(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    try:
        cfg = load_config(args.config)
    except ConfigInvalid as e:
        print(f"ConfigInvalid: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _set_threads(args.threads)
    out = Path(args.out or cfg.get("output_dir") or "out")
    try:
        report = execute(cfg)
    except ConfigInvalid as e:
        print(f"ConfigInvalid: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except LabError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    write_outputs(report, out, started)
    status = "PASS" if report["pass"] else "FAIL"
    print(f"{status} {cfg['experiment']} -> {out / 'report.json'}")
    return EXIT_OK if report["pass"] else EXIT_ASSERT


def describe(name: str) -> str:
    if name not in EXPERIMENTS:
        raise UnknownExperiment(f"unknown experiment {name!r}; known: {', '.join(sorted(EXPERIMENTS))}")
    exp = EXPERIMENTS[name]
    lines = [f"{name}: {exp.summary}", "", "input schema:",
             json.dumps(INPUT_SCHEMAS[name], indent=2, sort_keys=True), "", "outputs:"]
    lines += [f"  {k}: {v}" for k, v in exp.anchors.items()]
    lines += ["", "csv columns: " + ", ".join(exp.columns)]
    return "\n".join(lines)


def cmd_describe(args) -> int:
    try:
        print(describe(args.experiment))
    except UnknownExperiment as e:
        print(f"UnknownExperiment: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigInvalid as e:
        print(f"ConfigInvalid: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"valid {cfg['experiment']} config (hash {config_hash(cfg)[:12]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onesided-lab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--threads", type=int, help="worker threads (default: $ONESIDED_LAB_THREADS or 1)")
    r.set_defaults(func=cmd_run)
    d = sub.add_parser("describe", help="print the input schema of an experiment")
    d.add_argument("experiment")
    d.set_defaults(func=cmd_describe)
    v = sub.add_parser("validate", help="validate a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
