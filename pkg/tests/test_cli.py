"""Command-line behavior: verbs, output-directory resolution, overrides,
and the documented exit codes (0 ok, 1 failed check, 2 usage, 3 I/O)."""

import json
import subprocess
import sys

import pytest

import rankmin.cli as cli
import rankmin.harness as harness

CFG = """
[problem]
n = 6
r = 2
r_star = 2
kappa = 1

[solvers]
algorithms = projgd
eta = 0.4

[run]
seed_count = 2
max_iters = 30
"""

PROBE = """
[probe]
objective = quadratic
n = 3
r = 1
r_star = 1
kappa = 1
starts = 18
iters = 1500
"""


def write(path, text):
    path.write_text(text)
    return str(path)


def test_run_with_out_flag(tmp_path, capsys):
    cfg = write(tmp_path / "grid.ini", CFG)
    out = tmp_path / "results"
    assert cli.main(["run", cfg, "--out", str(out), "--jobs", "1"]) == 0
    assert (out / "manifest.json").is_file()
    assert "wrote" in capsys.readouterr().out


def test_run_out_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path / "grid.ini", CFG)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "root"))
    assert cli.main(["run", cfg, "--jobs", "1"]) == 0
    assert (tmp_path / "root" / "run" / "manifest.json").is_file()


def test_run_without_any_out_is_usage_error(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path / "grid.ini", CFG)
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    assert cli.main(["run", cfg, "--jobs", "1"]) == 2
    assert "output directory" in capsys.readouterr().err


def test_run_missing_config_is_io_error(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 3
    assert "error" in capsys.readouterr().err


def test_run_bad_config_is_usage_error(tmp_path, capsys):
    cfg = write(tmp_path / "grid.ini", "[solvers]\netas = 0.4\n")
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "etas" in capsys.readouterr().err


def test_seed_and_format_overrides(tmp_path):
    cfg = write(tmp_path / "grid.ini", CFG)
    out = tmp_path / "results"
    rc = cli.main(["run", cfg, "--out", str(out), "--seed", "7",
                   "--format", "csv", "--jobs", "1"])
    assert rc == 0
    names = sorted(p.name for p in out.iterdir())
    assert "projgd_k1_rs2_eta0.4_s7.csv" in names
    assert "projgd_k1_rs2_eta0.4_s8.csv" in names
    assert not [n for n in names if n.endswith((".svg", ".json"))]


def test_bad_format_override(tmp_path, capsys):
    cfg = write(tmp_path / "grid.ini", CFG)
    rc = cli.main(["run", cfg, "--out", str(tmp_path / "o"), "--format", "csv,png"])
    assert rc == 2
    assert "png" in capsys.readouterr().err


def test_preset_verb(tmp_path, monkeypatch):
    monkeypatch.setitem(harness.PRESETS, "tinytest", lambda: harness.ExperimentSpec(
        n=6, r=2, r_star=(2,), kappa=(1.0,), algorithms=("projgd",), etas=(0.4,),
        seed_count=1, max_iters=20))
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["preset", "tinytest", "--jobs", "1"]) == 0
    assert (tmp_path / "tinytest" / "manifest.json").is_file()


def test_unknown_preset_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["preset", "fig9"])
    assert exc.value.code == 2


def test_plot_rerenders(tmp_path, capsys):
    cfg = write(tmp_path / "grid.ini", CFG)
    out = tmp_path / "results"
    assert cli.main(["run", cfg, "--out", str(out), "--jobs", "1"]) == 0
    svgs = sorted(p.name for p in out.iterdir() if p.suffix == ".svg")
    for name in svgs:
        (out / name).unlink()
    assert cli.main(["plot", str(out)]) == 0
    assert "rendered" in capsys.readouterr().out
    assert sorted(p.name for p in out.iterdir() if p.suffix == ".svg") == svgs


def test_plot_without_manifest_is_io_error(tmp_path):
    assert cli.main(["plot", str(tmp_path)]) == 3


def test_verify_exit_codes(monkeypatch, tmp_path):
    monkeypatch.setattr(cli, "verify_suite", lambda level, out: {"all_passed": True})
    assert cli.main(["verify"]) == 0
    monkeypatch.setattr(cli, "verify_suite", lambda level, out: {"all_passed": False})
    assert cli.main(["verify", "--level", "full", "--out", str(tmp_path / "v.json")]) == 1


def test_probe_report(tmp_path):
    cfg = write(tmp_path / "probe.ini", PROBE)
    out = tmp_path / "probe.json"
    assert cli.main(["probe", cfg, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["instance"]["objective"] == "quadratic"
    pts = report["points"]
    assert pts and sum(p["cluster_size"] for p in pts) == 18
    best = pts[0]
    assert best["classification"] == "second-order-minimizer"
    assert best["rel_err_to_truth"] < 1e-6


def test_probe_stdout_default(tmp_path, capsys):
    cfg = write(tmp_path / "probe.ini", PROBE)
    assert cli.main(["probe", cfg]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["points"]


def test_probe_unknown_key(tmp_path, capsys):
    cfg = write(tmp_path / "probe.ini", "[probe]\nnn = 3\n")
    assert cli.main(["probe", cfg]) == 2
    assert "nn" in capsys.readouterr().err


def test_probe_budget_guard(tmp_path, capsys):
    cfg = write(tmp_path / "probe.ini", PROBE + "budget = 100\n")
    assert cli.main(["probe", cfg]) == 2
    assert "budget" in capsys.readouterr().err


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-c",
                           "import rankmin.cli, sys; sys.exit(rankmin.cli.main(['--help']))"],
                          capture_output=True, text=True)
    # argparse exits 0 on --help
    assert proc.returncode == 0
    for verb in ("run", "preset", "plot", "verify", "probe"):
        assert verb in proc.stdout
