import csv
import math
import subprocess
import sys

import pytest

from fbimcf.cli import (
    EXIT_CONFIG,
    EXIT_NONCONVERGED,
    EXIT_OK,
    EXIT_VERIFY,
    ConfigError,
    ExperimentConfig,
    main,
    parse_config,
    preset_text,
)

SMALL = ["--set", "grid_size=16"]


def _write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_parse_minimal_config():
    cfg = parse_config("schema=1\n# comment\nname = demo  # trailing\ntau=3\n")
    assert cfg.name == "demo" and cfg.tau == 3.0
    assert cfg.metric == "euclidean" and cfg.support == "plane"
    assert cfg.t_schedule == (0.0, 0.5, 1.0, 2.0)


def test_schedule_forms():
    assert parse_config("schema=1\ntau=3\nt_schedule=0:1:0.25\n").t_schedule == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert parse_config("schema=1\ntau=3\nt_schedule=0.5,2\n").t_schedule == (0.5, 2.0)


@pytest.mark.parametrize("text", [
    "name=x\n",
    "schema=2\n",
    "schema=1\nbogus=1\n",
    "schema=1\ntau=1\ntau=2\n",
    "schema=1\ntau=abc\n",
    "schema=1\nnot a pair\n",
    "schema=1\nt_schedule=0:1:0\n",
    "schema=1\nverify_penrose=maybe\n",
    "schema=1\ninitial=neck_disc\n",
    "schema=1\nmetric=kerr\n",
])
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("name", ["hemisphere", "schwarzschild", "catenoid"])
def test_presets_parse(name):
    cfg = parse_config(preset_text(name))
    assert isinstance(cfg, ExperimentConfig) and cfg.name == name


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset_text("torus")


def test_config_errors_exit_two(tmp_path):
    assert main(["verify", _write(tmp_path, "tau=1\n")]) == EXIT_CONFIG
    assert main(["verify", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["verify"]) == EXIT_CONFIG
    assert main(["verify", "--preset", "hemisphere", "--set", "novalue"]) == EXIT_CONFIG
    assert main(["verify", "--preset", "hemisphere", "--set", "grid_size=x"]) == EXIT_CONFIG


def test_verify_passes_on_hemisphere_preset(tmp_path):
    assert main(["verify", "--preset", "hemisphere", "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "report.txt").read_text().splitlines()
    assert lines and all(ln.split(" # ")[0].endswith(("PASS", "INFO")) for ln in lines)
    header = (tmp_path / "flow.csv").read_text().splitlines()[0]
    assert header == "t,area,boundary_length,willmore,hawking_mass,euler_char,eccentricity,geroch_integrand"


def test_verify_failure_exits_one(tmp_path):
    code = main(["verify", "--preset", "hemisphere", "--out", str(tmp_path), "--tolerance-scale", "1e-6"] + SMALL)
    assert code == EXIT_VERIFY
    assert "FAIL" in (tmp_path / "report.txt").read_text()


def test_non_convergence_exits_three(tmp_path):
    code = main(["solve", "--preset", "hemisphere", "--out", str(tmp_path), "--set", "max_iter=1"] + SMALL)
    assert code == EXIT_NONCONVERGED
    assert (tmp_path / "barrier.txt").read_text().startswith("converged 0")


def test_solve_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        assert main(["solve", "--preset", "hemisphere", "--out", str(out)] + SMALL) == EXIT_OK
        outs.append((out / "field.txt").read_bytes())
    assert outs[0] == outs[1]


def test_flow_writes_contours(tmp_path):
    assert main(["flow", "--preset", "hemisphere", "--out", str(tmp_path), "--set", "grid_size=32"]) == EXIT_OK
    text = (tmp_path / "contours.txt").read_text()
    assert text.startswith("# t rho z H")
    rows = list(csv.DictReader(open(tmp_path / "flow.csv")))
    assert [float(r["t"]) for r in rows] == [0.0, 0.5, 1.0, 2.0]
    assert all(int(r["euler_char"]) == 1 for r in rows)


def test_masses_csv(tmp_path):
    assert main(["masses", "--preset", "schwarzschild", "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "masses.csv").read_text().splitlines()
    assert lines[0] == "radius,hemisphere_term,circle_term,partial_mass"
    summary = [ln for ln in lines if ln.startswith("# adm_mass=")]
    assert len(summary) == 1
    assert float(summary[0].split("=")[1].split()[0]) == pytest.approx(1.0, abs=1e-3)


def test_smooth_outputs(tmp_path):
    args = ["smooth", "--preset", "hemisphere", "--out", str(tmp_path), "--set", "smooth_vertices=60",
            "--set", "smooth_dt=0.01", "--set", "smooth_t_end=0.2", "--set", "smooth_snapshots=0.1"]
    assert main(args) == EXIT_OK
    lines = (tmp_path / "smooth.csv").read_text().splitlines()
    assert lines[0] == "t,sup_H,min_H,area"
    assert float(lines[-1].split(",")[0]) == pytest.approx(0.2)
    assert (tmp_path / "smooth_snapshot_000.txt").exists()
    summary = (tmp_path / "smooth_summary.txt").read_text()
    assert "stop_reason reached end time" in summary


def test_convergence_table(tmp_path):
    args = ["convergence", "--preset", "hemisphere", "--out", str(tmp_path), "--set", "convergence_levels=16,32"]
    assert main(args) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "convergence.csv")))
    assert [int(r["n"]) for r in rows] == [16, 32]
    err = [float(r["hemisphere_error"]) for r in rows]
    assert err[1] < err[0]
    assert all(math.isnan(float(r["subsolution_constant"])) for r in rows)


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fbimcf.cli", "solve", "--preset", "hemisphere", "--out", str(tmp_path)]
                         + SMALL, capture_output=True, text=True)
    assert out.returncode == EXIT_OK
    assert out.stdout.startswith("converged 1")
