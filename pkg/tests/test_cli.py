import csv
import json

import pytest

from onesided_lab import numerics
from onesided_lab.cli import EXPERIMENTS, config_hash, describe, load_config, main
from onesided_lab.errors import ConfigInvalid, UnknownExperiment

CONST = {"kind": "const", "value": 1}
EXP = {"kind": "exp_poly", "coeffs": [0, 1]}
BUMP = {"kind": "smoothstep_bump", "lo": -1, "hi": 1, "ramp": 0.5, "amplitude": 1}
FAST = {"scale_ladder": [1.0, 2.0, 4.0]}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, cfg, out="out", *extra):
    return main(["run", write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])


def report(tmp_path, out="out"):
    return json.loads((tmp_path / out / "report.json").read_text())


def test_class_constant_run(tmp_path):
    cfg = {"experiment": "class-constant", "search": FAST,
           "inputs": {"weight": CONST, "class": "Ap+", "p": 2},
           "expect": [{"path": "estimate.value", "approx": 0.25, "rel_tol": 1e-4}]}
    assert run(tmp_path, cfg) == 0
    rep = report(tmp_path)
    assert rep["result"]["estimate"]["value"] == pytest.approx(0.25, rel=1e-4)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["summary"] == {"class-constant": True}
    for name in manifest["files"]:
        assert (tmp_path / "out" / name).exists()
    assert manifest["config_hash"] == config_hash(cfg)


def test_invalid_exponent_exits_two(tmp_path, capsys):
    cfg = {"experiment": "class-constant", "inputs": {"weight": CONST, "class": "Ap+", "p": 1}}
    assert run(tmp_path, cfg) == 2
    assert "p > 1" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("cfg", [
    {"experiment": "class-constant", "inputs": {"weight": CONST, "class": "Ap+", "p": 2}, "extra": 1},
    {"experiment": "class-constant", "inputs": {"weight": CONST, "class": "Ap+", "p": 2, "r": 3}},
    {"experiment": "nope", "inputs": {}},
    {"experiment": "gap-check", "inputs": {"u": CONST, "v": CONST, "p": 2, "q": 2, "t": 1.5}},
    {"experiment": "class-constant", "inputs": {"weight": {"kind": "mystery"}, "class": "Ap+", "p": 2}},
])
def test_config_rejections(cfg):
    with pytest.raises(ConfigInvalid):
        load_config(cfg)


def test_counterexample_run(tmp_path):
    cfg = {"experiment": "counterexample", "inputs": {"q": 2, "q1": 2, "theta": "1/2", "sweep": ["1/4", "3/4"]}}
    assert run(tmp_path, cfg) == 0
    rep = report(tmp_path)
    assert rep["result"]["conclusion"] == "violates A_p^+ necessary condition"
    assert rep["result"]["w0"] == {"kind": "exp_poly", "coeffs": [0, 1, 0, -2]}


def test_failed_expectation_exits_one_and_writes_reports(tmp_path):
    cfg = {"experiment": "class-constant", "search": FAST,
           "inputs": {"weight": CONST, "class": "Ap+", "p": 2},
           "expect": [{"path": "estimate.value", "approx": 0.3, "rel_tol": 1e-4}]}
    assert run(tmp_path, cfg) == 1
    rep = report(tmp_path)
    assert rep["pass"] is False and rep["checks"]["expect:estimate.value"] is False


def test_compute_error_exits_three(tmp_path):
    cfg = {"experiment": "rhi", "inputs": {"weight": EXP, "side": "minus", "r_grid": [2, 4],
                                           "intervals": {"window": 8, "max_len": 16, "n": 20, "min_len": 4},
                                           "cap": 1.5}}
    assert run(tmp_path, cfg) == 3


def test_interpolate_run_is_exact(tmp_path):
    cfg = {"experiment": "interpolate", "inputs": {"mode": "diagonal", "p": 2, "p1": 4, "theta": "1/3",
                                                   "w": CONST, "w1": EXP}}
    assert run(tmp_path, cfg) == 0
    plan = report(tmp_path)["result"]["plan"]
    assert plan["p0"]["exact"] == "8/5" and plan["r_theta"]["exact"] == "9/5"


def test_csv_columns_match_describe(tmp_path):
    cfg = {"experiment": "rk-moduli", "seed": 1,
           "inputs": {"operator": {"kind": "identity"}, "family": {"p": 2, "count": 3, "modes": ["translates"]},
                      "h_grid": [0.05, 0.1], "M_grid": [1.0, 4.0]}}
    assert run(tmp_path, cfg) == 0
    with (tmp_path / "out" / "rk-moduli.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == EXPERIMENTS["rk-moduli"].columns
    assert len(rows) == 1 + 4


def test_reports_are_byte_identical(tmp_path):
    cfg = {"experiment": "commutator-report", "seed": 3,
           "inputs": {"symbol": BUMP, "operator": {"kind": "cz", "p": 2, "delta": 0.1}, "count": 2,
                      "h_grid": [0.025, 0.05], "M_grid": [4.0, 8.0]}}
    assert run(tmp_path, cfg, "a") == 0
    assert run(tmp_path, cfg, "b") == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    assert a == b


def test_threads_flag_and_environment(tmp_path, monkeypatch):
    cfg = {"experiment": "class-constant", "search": FAST, "inputs": {"weight": EXP, "class": "Ap+", "p": 2}}
    monkeypatch.setattr(numerics, "DEFAULT_THREADS", 1)
    monkeypatch.setenv("ONESIDED_LAB_THREADS", "3")
    assert run(tmp_path, cfg, "env") == 0
    assert numerics.DEFAULT_THREADS == 3
    assert run(tmp_path, cfg, "flag", "--threads", "2") == 0
    assert numerics.DEFAULT_THREADS == 2
    assert report(tmp_path, "env")["result"] == report(tmp_path, "flag")["result"]


def test_describe_gap_check_lists_inputs():
    text = describe("gap-check")
    for key in ('"u"', '"v"', '"p"', '"q"', '"t"', '"K"'):
        assert key in text


def test_describe_interpolate_mentions_modes():
    text = describe("interpolate")
    assert "diagonal" in text and "offdiagonal" in text


def test_describe_unknown():
    with pytest.raises(UnknownExperiment):
        describe("bogus")
    assert main(["describe", "bogus"]) == 2


def test_validate_subcommand(tmp_path, capsys):
    good = write(tmp_path, {"experiment": "hormander-check", "inputs": {"kernel": {"kind": "fractional",
                                                                                  "params": {"alpha": 0.5}}}})
    assert main(["validate", good]) == 0
    bad = write(tmp_path, {"experiment": "hormander-check", "inputs": {}}, "bad.json")
    assert main(["validate", bad]) == 2


def test_every_experiment_has_schema_and_columns():
    for name, exp in EXPERIMENTS.items():
        assert exp.columns and exp.anchors
        assert name in describe(name)
