import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mfgtorus import cli
from mfgtorus.fieldio import read_csv, read_flow, write_flow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
DEMO = CONFIGS / "demo_small_coupling.cfg"


def fast_config(tmp_path: Path) -> Path:
    """The demo problem with small Monte-Carlo sample sizes."""
    text = DEMO.read_text()
    text = text.split("[oracle.feynman_kac]")[0] + """\
[oracle.feynman_kac]
n_samples = 2000
n_steps = 100
seed = 1

[oracle.particles]
n_samples = 20000
n_steps = 100
seed = 2

[oracle.exploitability]
n_samples = 500
n_steps = 100
seed = 3

[oracle.decoupling]
n_samples = 1000
n_steps = 100
seed = 4
"""
    path = tmp_path / "fast.cfg"
    path.write_text(text)
    return path


def run(*argv):
    return cli.main([*map(str, argv), "--quiet"])


def files(bundle: Path) -> dict:
    return {p.relative_to(bundle).as_posix(): p.read_bytes() for p in sorted(bundle.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def demo_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo") / "bundle"
    assert run("solve", DEMO, "--out", out) == 0
    return out


def test_demo_solve_writes_the_bundle(demo_bundle):
    man = json.loads((demo_bundle / "manifest.json").read_text())
    assert man["converged"] and man["certified_residual"] <= 1e-6
    assert len(man["iterations"]) <= 50
    for rel in ("equilibrium/rho.flow", "equilibrium/v.flow", "nse/v.flow", "plots/rho.csv", "plots/plot_rho.gp"):
        assert (demo_bundle / rel).is_file()
    assert man["time_direction"]["nse/rho.flow"].startswith("reversed")


def test_demo_verify_passes_every_check(demo_bundle):
    assert run("verify", demo_bundle, DEMO) == 0
    report = json.loads((demo_bundle / "verify_report.json").read_text())
    names = [c["name"] for c in report["checks"]]
    assert names == list(cli.CHECK_NAMES) and len(set(names)) == len(names)
    assert report["passed"]


@pytest.mark.parametrize("field", ["rho", "v", "u"])
def test_export_round_trips(demo_bundle, field):
    _, original = read_flow(demo_bundle / "equilibrium" / f"{field}.flow", vector=field == "v")
    assert run("export", demo_bundle, field, "flow") == 0
    _, again = read_flow(demo_bundle / "export" / f"{field}.flow", vector=field == "v")
    assert np.array_equal(again, original)
    assert run("export", demo_bundle, field, "csv") == 0
    assert np.array_equal(read_csv(demo_bundle / "export" / f"{field}.csv", 1, vector=field == "v"), original)


def test_export_errors(demo_bundle, tmp_path):
    assert run("export", demo_bundle, "pressure", "csv") == 1
    assert run("export", demo_bundle, "rho", "xlsx") == 1
    assert run("export", tmp_path / "nowhere", "rho", "csv") == 1


def test_zero_cost_control_vanishes(tmp_path):
    out = tmp_path / "zero"
    assert run("solve", CONFIGS / "zero_cost.cfg", "--out", out) == 0
    _, v = read_flow(out / "nse" / "v.flow", vector=True)
    assert np.all(v == 0.0)


def test_input_errors(tmp_path, capsys):
    bad = tmp_path / "odd.cfg"
    bad.write_text(DEMO.read_text().replace("N = 64", "N = 63"))
    assert cli.main(["solve", str(bad)]) == 1
    assert "even" in capsys.readouterr().err
    assert run("solve", tmp_path / "missing.cfg") == 1
    assert run("verify", tmp_path / "missing_bundle", DEMO) == 1
    assert run("solve", DEMO, "--cfl", "2.0", "--out", tmp_path / "x") == 1


def test_nonconvergence_exit_code(tmp_path):
    cfg = tmp_path / "short.cfg"
    cfg.write_text(DEMO.read_text().replace("max_iter = 50", "max_iter = 2"))
    out = tmp_path / "short"
    assert run("solve", cfg, "--out", out) == 2
    assert not json.loads((out / "manifest.json").read_text())["converged"]


def test_fault_injection_fails_momentum(tmp_path):
    cfg = fast_config(tmp_path)
    out = tmp_path / "bundle"
    assert run("solve", cfg, "--out", out) == 0
    hdr, v = read_flow(out / "equilibrium" / "v.flow", vector=True)
    x = np.arange(hdr.N) / hdr.N
    write_flow(out / "equilibrium" / "v.flow", v + 0.1 * np.sin(2 * np.pi * x), hdr.d, hdr.T)
    assert run("verify", out, cfg) == 3
    checks = {c["name"]: c for c in json.loads((out / "verify_report.json").read_text())["checks"]}
    assert not checks["momentum_residual"]["passed"]
    assert checks["fpk_initial_residual"]["passed"]


def test_determinism_across_threads(tmp_path):
    cfg = fast_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("solve", cfg, "--out", a, "--threads", "1") == 0
    assert run("solve", cfg, "--out", b, "--threads", "4") == 0
    assert files(a) == files(b)
    assert run("verify", a, cfg, "--threads", "1") == 0
    assert run("verify", b, cfg, "--threads", "3") == 0
    assert (a / "verify_report.json").read_bytes() == (b / "verify_report.json").read_bytes()


def test_seed_override_changes_the_config_hash(tmp_path):
    cfg = fast_config(tmp_path)
    out = tmp_path / "seeded"
    assert run("solve", cfg, "--out", out, "--seed", "5") == 0
    assert run("verify", out, cfg, "--seed", "5") == 0
    assert run("verify", out, cfg) == 3


def test_output_root_env_and_module_entry(tmp_path):
    env = {**os.environ, cli.OUTPUT_ROOT_ENV: str(tmp_path / "root")}
    proc = subprocess.run([sys.executable, "-m", "mfgtorus", "solve", str(CONFIGS / "zero_cost.cfg"), "--quiet"],
                          env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "root" / "runs" / "zero_cost" / "manifest.json").is_file()
