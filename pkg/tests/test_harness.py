import json

import numpy as np
import pytest

from hymflow.lattice import make_torus
from hymflow import fields as fl
from hymflow.checkpoint import save_field, load_field, metric_meta
from hymflow.harness import (ConfigError, parse_config, load_config,
                             run_scenario, run_property_suite, build_model)
from hymflow.cli import main as cli_main

MINIMAL = """
name = "mini"
[lattice]
n = 1
grid = 16
[bundle]
charges = [[1]]
"""


def test_parse_minimal_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.flow["stepper"] == "hym"
    assert cfg.flow["grad_tol"] == 1e-5
    assert cfg.monitors["alpha_N"][0] == [1.0, 0.0]
    assert cfg.initial_metric["recipe"] == "identity"
    resolved = cfg.resolved()
    assert resolved["version"]
    assert resolved["flow"]["t_max"] == 50.0


def test_parse_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL + "\nwhatever = 3\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL + "\n[flow]\nfoo = 1\n")
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(MINIMAL + "\n[monitors]\nalpha_N = [[0.5, 0.0]]\n")
    with pytest.raises(ConfigError, match="grid"):
        parse_config(MINIMAL.replace("grid = 16", "grid = 15"))
    with pytest.raises(ConfigError, match="charges"):
        parse_config(MINIMAL.replace("charges = [[1]]", "charges = [[1, 2]]"))
    with pytest.raises(ConfigError, match="stepper"):
        parse_config(MINIMAL + "\n[flow]\nstepper = 'leapfrog'\n")


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    lat = make_torus(1, 12)
    m = fl.build_background(lat, [[1], [0]])
    h = fl.random_positive_metric(m, seed=1, kmax=1, amp=0.4)
    path = tmp_path / "h.ckpt"
    save_field(path, h, metric_meta(m))
    arr, header = load_field(path)
    assert arr.tobytes() == np.ascontiguousarray(h.astype("<c16")).tobytes()
    assert header["rank"] == 2 and header["charges"] == [[1], [0]]
    # tampered payload is rejected
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_field(path)


def test_run_scenario_s1(tmp_path):
    cfg = load_config("scenarios/s1_line_n1.toml")
    summary, code = run_scenario(cfg, out_root=str(tmp_path))
    assert code == 0
    assert summary["converged"] and summary["monotone_ok"] and summary["floor_ok"]
    assert summary["final_type"] == pytest.approx([1.0], abs=1e-4)
    outdir = tmp_path / "s1_line_n1"
    assert (outdir / "trace.csv").exists()
    assert (outdir / "manifest.json").exists()
    assert (outdir / "final_state.ckpt").exists()
    saved = json.loads((outdir / "summary.json").read_text())
    assert saved["hym_final"] == pytest.approx(2 * np.pi, abs=1e-3)


def test_run_scenario_checkpoint_restart_and_corruption(tmp_path):
    cfg = load_config("scenarios/s1_line_n1.toml")
    summary, code = run_scenario(cfg, out_root=str(tmp_path))
    ck = tmp_path / "s1_line_n1" / "final_state.ckpt"

    text = open("scenarios/s1_line_n1.toml").read()
    text = text.replace('recipe = "scalar_bump"', 'recipe = "checkpoint"')
    text = text.replace("amplitude = 0.3", f'path = "{ck}"')
    cfg2 = parse_config(text)
    summary2, code2 = run_scenario(cfg2, out_root=str(tmp_path / "restart"))
    assert code2 == 0 and summary2["converged"]

    # corrupted checkpoint (negative eigenvalue) fails the positivity gate
    arr, header = load_field(ck)
    arr[..., 0, 0] = -1.0
    bad = tmp_path / "bad.ckpt"
    save_field(bad, arr, header)
    text3 = text.replace(str(ck), str(bad))
    cfg3 = parse_config(text3)
    with pytest.raises(ValueError, match="positivity"):
        run_scenario(cfg3, out_root=str(tmp_path / "bad"))


def test_reproducibility_bit_identical(tmp_path):
    cfg = load_config("scenarios/s1_line_n1.toml")
    run_scenario(cfg, out_root=str(tmp_path / "a"))
    run_scenario(cfg, out_root=str(tmp_path / "b"))
    ta = (tmp_path / "a" / "s1_line_n1" / "trace.csv").read_bytes()
    tb = (tmp_path / "b" / "s1_line_n1" / "trace.csv").read_bytes()
    assert ta == tb
    ca = (tmp_path / "a" / "s1_line_n1" / "final_state.ckpt").read_bytes()
    cb = (tmp_path / "b" / "s1_line_n1" / "final_state.ckpt").read_bytes()
    assert ca == cb


def test_run_scenario_nonconvergence_exit_code(tmp_path):
    text = open("scenarios/s1_line_n1.toml").read()
    text = text.replace("t_max = 10.0", "t_max = 0.05")
    text = text.replace("grad_tol = 1e-6", "grad_tol = 1e-13")
    cfg = parse_config(text)
    summary, code = run_scenario(cfg, out_root=str(tmp_path))
    assert code == 3 and not summary["converged"]
    assert summary["monotone_ok"]


def test_build_model_beta_fallback():
    # negative-degree Hom block: the extension is reported unusable and the
    # scenario falls back to a metric-only perturbation
    text = MINIMAL.replace("charges = [[1]]", "charges = [[0], [1]]")
    cfg = parse_config(text + "\n")
    cfg.bundle["extension_strength"] = 0.5
    model, report = build_model(cfg)
    assert model.beta is None
    assert report["used"] == 0.0 and report["residual"] > 0.1


def test_property_suite_seed_variation():
    sizes = {k: 60 for k in ("trace_bound", "leq_axioms", "shatz",
                             "phi_monotone", "norm_equiv", "sigma_symmetry",
                             "distinguish")}
    sizes["norm_equiv"] = 10
    for seed in range(10):
        assert run_property_suite(seed=seed, sizes=sizes)["passed"]


def test_property_suite_and_mutant(capsys):
    sizes = {k: 300 for k in ("trace_bound", "leq_axioms", "shatz",
                              "phi_monotone", "norm_equiv", "sigma_symmetry",
                              "distinguish")}
    sizes["norm_equiv"] = 50
    rep = run_property_suite(seed=0, sizes=sizes)
    assert rep["passed"]
    rep2 = run_property_suite(seed=1, sizes=sizes)
    assert rep2["passed"]
    bad = run_property_suite(seed=0, sizes=sizes, mutants={"leq": True})
    assert not bad["passed"]
    out = capsys.readouterr().out
    assert "FAIL" in out and "case" in out


def test_cli_run_props_inspect(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HYMFLOW_OUT", str(tmp_path))
    code = cli_main(["run", "scenarios/s1_line_n1.toml"])
    assert code == 0
    out = capsys.readouterr().out
    assert '"converged": true' in out
    ck = tmp_path / "s1_line_n1" / "final_state.ckpt"
    assert cli_main(["inspect", str(ck)]) == 0
    out = capsys.readouterr().out
    assert "positive: True" in out
    bad = tmp_path / "nonsense.toml"
    bad.write_text("name = 'x'\n[latt]\nn=1\n")
    assert cli_main(["run", str(bad)]) == 2
