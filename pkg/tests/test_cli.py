import json

import pytest

from stochavg.cli import main

walker = {"experiment": "walker", "seed": 7, "model": {"n": 10, "a": 1.0, "sigma": 1.0},
          "run": {"horizon": 1.0, "n_paths": 100}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_walker_simulation_is_byte_identical(tmp_path):
    cfg = write(tmp_path, walker)
    assert main(["simulate", cfg, "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["simulate", cfg, "--out-dir", str(tmp_path / "b"), "--workers", "3"]) == 0
    for name in ("walker_paths.csv", "walker_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "walker_paths.csv").read_text().splitlines()
    rows = [line for line in lines if not line.startswith("#")]
    assert len(rows) == 1 + 100 * 11
    assert any(line.startswith("# seed: 7") for line in lines)


def test_brwre_and_compare(tmp_path, capsys):
    base = {"experiment": "brwre", "seed": 3, "model": {"n": 10, "alpha": 0.5, "sigma_e": 0.3},
            "run": {"horizon": 0.5, "n_paths": 200, "grid_points": 3}}
    assert main(["simulate", write(tmp_path, base), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "brwre_summary.bin").read_bytes()[:8] == b"SAVGSUM\0"
    out = tmp_path / "cmp.json"
    paths = str(tmp_path / "brwre_paths.csv")
    assert main(["compare", paths, paths, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["all_passed"] is True
    assert main(["compare", paths, paths, "--tests", "mean,bogus"]) == 2


def test_sde_simulation(tmp_path):
    cfg = {"experiment": "sde", "seed": 5, "model": {"alpha": 0.5, "sigma_e": 0.3, "x0": [1.0]},
           "run": {"horizon": 1.0, "dt": 0.01, "n_paths": 20}}
    assert main(["simulate", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "sde_paths.csv").exists()


def test_validation_errors_exit_2(tmp_path, capsys):
    bad = {"experiment": "brwre", "seed": 1,
           "model": {"n": 10, "alpha": 0.5, "sigma_e": 0.3, "kernel": {"rates": [[0, 2], [1, 0]]}, "x0": [1, 1]},
           "run": {"horizon": 1.0, "n_paths": 2}}
    assert main(["simulate", write(tmp_path, bad)]) == 2
    assert "model.kernel" in capsys.readouterr().err
    no_seed = {k: v for k, v in walker.items() if k != "seed"}
    assert main(["simulate", write(tmp_path, no_seed)]) == 2
    assert main(["check-generators", write(tmp_path, walker)]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["simulate", str(tmp_path / "broken.json")]) == 2
    assert main(["simulate", str(tmp_path / "missing.json")]) == 2


def test_runtime_errors_exit_3(tmp_path, capsys):
    boom = {"experiment": "brwre", "seed": 1,
            "model": {"n": 5, "environment": {"atoms": [{"support": [3], "probs": ["1"], "weight": "1"}]}},
            "run": {"horizon": 5.0, "n_paths": 2, "cap": 6}}
    assert main(["simulate", write(tmp_path, boom), "--out-dir", str(tmp_path)]) == 3


def test_oracle(capsys):
    assert main(["oracle", "--name", "integral_variance", "rho=1", "t=1", "var_y=1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(2 * 2.718281828459045 ** -1, rel=1e-12)
    assert main(["oracle", "--name", "max_bound", "alpha=1", "rho=0", "p=2", "pth_moment=1"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 3.0
    assert main(["oracle", "--name", "variance", "rho=oops"]) == 2


def test_generator_check_and_averaging(tmp_path):
    gen = {"experiment": "generator-check", "seed": 1,
           "model": {"function": "square", "n_list": [10, 20], "alpha": 0.5, "sigma_e": 0.3}}
    assert main(["check-generators", write(tmp_path, gen), "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "generator-check_report.json").read_text())
    assert rep
    avg = {"experiment": "averaging-report", "seed": 2,
           "model": {"function": "x_exp", "n_list": [10, 20], "alpha": 0.5, "sigma_e": 0.3},
           "run": {"horizon": 0.5, "n_paths": 20, "grid_points": 11}}
    assert main(["averaging-report", write(tmp_path, avg, "avg.json"), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "averaging-report_report.json").exists()


def test_verify_exit_codes(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "acceptance", "--only", "4", "--out", str(out), "--quiet"]) == 0
    assert json.loads(out.read_text())["all_passed"] is True
    assert main(["verify", "acceptance", "--only", "6", "--quiet", "--out", str(out)]) == 1
    assert main(["verify", "acceptance", "--only", "99", "--quiet"]) == 2
