import json
import math
import subprocess
import sys

import pytest

from dmgpe import cli
from dmgpe.config import SCHEMA, build_config, defaults
from dmgpe.errors import ConfigurationError, DetectionError
from dmgpe.io import CSV_HEADER, read_field, read_timeseries_csv, sha256_file

SMALL = ["--set", "grid.nx=64", "--set", "grid.ny=64", "--set", "grid.dx=0.25", "--set", "grid.dy=0.25",
         "--set", "waveguide.semi_major=5"]


def run(argv, capsys=None):
    code = cli.main(argv)
    if capsys is None:
        return code
    cap = capsys.readouterr()
    return code, cap.out, cap.err


# ---------------------------------------------------------------- config validation

def test_defaults_build_for_every_kind():
    for kind in ("ground", "evolve", "sweep-beta", "revival-table", "interfere", "oracle"):
        cfg = build_config(defaults(kind))
        assert cfg.kind == kind
        assert cfg.grid.shape == (512, 512)


def test_interfere_defaults_are_managed():
    cfg = build_config(defaults("interfere"))
    assert cfg.waveguide.eccentricity == 0.9
    assert cfg.dispersion().beta == pytest.approx(0.19)


def test_all_problems_reported_together():
    with pytest.raises(ConfigurationError) as e:
        build_config({"waveguide.gamma": -1.0, "evolution.dt": 0.0, "bogus.key": 1, "grid.nx": 100})
    assert set(e.value.fields) >= {"waveguide.gamma", "evolution.dt", "bogus.key", "grid.nx"}


def test_strict_mode_requires_waveguide_keys():
    with pytest.raises(ConfigurationError) as e:
        build_config({"experiment.kind": "evolve", "waveguide.depth": 20.0, "waveguide.semi_major": 10.0,
                      "waveguide.eccentricity": 0.5}, strict=True)
    assert e.value.fields == ["waveguide.gamma"]


def test_physical_coupling():
    cfg = build_config({"coupling.g": "physical", "physical.oscillator_length": 2.318e-6})
    assert cfg.g == pytest.approx(42.056, abs=5e-3)


def test_explicit_grid_overrides_preset():
    cfg = build_config({"grid.preset": "ci", "grid.nx": 64})
    assert (cfg.grid.nx, cfg.grid.ny, cfg.grid.dx) == (64, 256, 0.2)


def test_schema_defaults_are_self_consistent():
    # every default must survive its own coercion
    build_config({k: v for k, (_, v) in SCHEMA.items() if v is not None})


# ---------------------------------------------------------------- exit codes

def test_missing_required_key_exit_2(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("experiment.kind = evolve\nwaveguide.depth = 20\nwaveguide.semi_major = 10\n"
                   "waveguide.eccentricity = 0.5\n")
    code, _, err = run(["run", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert "waveguide.gamma" in err


def test_unknown_key_exit_2(tmp_path, capsys):
    code, _, err = run(["ground", "--set", "waveguide.gama=1.0", "--out", str(tmp_path)], capsys)
    assert code == 2
    assert "waveguide.gama" in err


def test_run_needs_config(capsys):
    code, _, err = run(["run"], capsys)
    assert code == 2 and "--config" in err


def test_bad_set_syntax(capsys):
    code, _, err = run(["ground", "--set", "novalue"], capsys)
    assert code == 2


def test_env_override_is_validated(monkeypatch, capsys):
    monkeypatch.setenv("DMGPE_WAVEGUIDE__DEPTH", "-3")
    code, _, err = run(["ground"], capsys)
    assert code == 2 and "waveguide.depth" in err


def test_numeric_failure_exit_3(tmp_path, capsys):
    code, _, err = run(["evolve", *SMALL, "--set", "evolution.n_steps=20", "--set", "evolution.max_norm_drift=1e-300",
                        "--out", str(tmp_path)], capsys)
    assert code == 3
    assert "step" in err


def test_detection_failure_exit_4(monkeypatch, capsys):
    def boom(*a, **k):
        raise DetectionError("no fringes")

    monkeypatch.setattr(cli, "run_experiment", boom)
    code, _, err = run(["interfere"], capsys)
    assert code == 4 and "no fringes" in err


# ---------------------------------------------------------------- small runs

def test_ground_harmonic_run(tmp_path, capsys):
    out = tmp_path / "g"
    code, stdout, _ = run(["ground", *SMALL, "--set", "ground.trap=harmonic", "--set", "coupling.g=0",
                           "--heatmaps", "--out", str(out)], capsys)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["energy"] == pytest.approx(1.0, abs=1e-3)
    f = read_field(out / "ground.gpe2")
    assert f.grid.shape == (64, 64)
    man = json.loads((out / "manifest.json").read_text())
    names = {e["path"] for e in man["files"]}
    assert names == {"ground.gpe2", "ground_t0.0000.png"}
    for e in man["files"]:
        assert e["sha256"] == sha256_file(out / e["path"])
    assert man["config"]["grid.nx"] == 64
    assert "revival_predicted_ms" in man["derived"]
    assert man["heatmap_raw_maxima"]["ground_t0.0000.png"] == pytest.approx(float(f.density.max()))


def test_ground_waveguide_cross_sections(tmp_path, capsys):
    out = tmp_path / "g"
    code, stdout, _ = run(["ground", *SMALL, "--set", "waveguide.eccentricity=0.5", "--set", "dispersion.beta=auto",
                           "--out", str(out)], capsys)
    assert code == 0
    s = json.loads(stdout)
    assert s["beta"] == pytest.approx(0.75)
    lines = (out / "cross_sections.csv").read_text().splitlines()
    assert lines[0] == "coordinate,density_x_axis,density_y_axis" and len(lines) == 65


def test_evolve_run_outputs(tmp_path, capsys):
    out = tmp_path / "e"
    args = ["evolve", *SMALL, "--set", "evolution.n_steps=40", "--set", "evolution.record_stride=4",
            "--set", "snapshots.fractions=0.001", "--heatmaps", "--out", str(out)]
    code, stdout, _ = run(args, capsys)
    assert code == 0
    s = json.loads(stdout)
    assert s["lobes_at_fraction"] == {"0.001": 2}
    assert s["norm_drift_max"] < 1e-12
    ts = read_timeseries_csv(out / "timeseries.csv")
    assert (out / "timeseries.csv").read_text().splitlines()[0] == CSV_HEADER
    assert len(ts) == 11 and ts.survival[0] == pytest.approx(1.0)
    snap = sorted(out.glob("snapshot_t*.gpe2"))
    assert len(snap) == 1 and read_field(snap[0]).t == pytest.approx(0.08)
    assert (out / "density_t0.0800.png").exists()


def test_evolve_is_bitwise_deterministic(tmp_path, capsys):
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, _, _ = run(["evolve", *SMALL, "--set", "evolution.n_steps=30", "--set", "coupling.g=3",
                          "--set", "snapshots.fractions=0.001", "--out", str(out)], capsys)
        assert code == 0
        hashes.append({p.name: sha256_file(p) for p in out.iterdir() if p.name != "manifest.json"})
    assert hashes[0] == hashes[1]


def test_run_subcommand_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("\n".join([
        "experiment.kind = evolve",
        "waveguide.depth = 20",
        "waveguide.gamma = 1.4142135623730951",
        "waveguide.semi_major = 5",
        "waveguide.eccentricity = 0.5",
        "grid.nx = 64", "grid.ny = 64", "grid.dx = 0.25", "grid.dy = 0.25",
        "evolution.n_steps = 10",
        "snapshots.fractions = 0.0005",
    ]) + "\n")
    code, stdout, _ = run(["run", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    assert json.loads(stdout)["eccentricity"] == 0.5


def test_interfere_smoke(tmp_path, capsys):
    out = tmp_path / "i"
    code, stdout, _ = run(["interfere", *SMALL, "--set", "schedule.switch_time=2.0", "--set", "schedule.capture_time=3.0",
                           "--out", str(out)], capsys)
    assert code == 0
    s = json.loads(stdout)
    assert s["final_time"] == pytest.approx(5.0)
    assert s["ratio_v_over_u"] * s["ratio_u_over_v"] == pytest.approx(1.0)
    assert s["sigma"] == pytest.approx(math.sqrt(0.19))
    assert (out / "fringes.csv").exists()


def test_sweep_small(tmp_path, capsys):
    out = tmp_path / "s"
    code, stdout, _ = run(["sweep-beta", "--set", "grid.nx=128", "--set", "grid.ny=128", "--set", "grid.dx=0.2",
                           "--set", "grid.dy=0.2", "--set", "sweep.eccentricities=0", "--set", "sweep.n_points=3",
                           "--set", "sweep.beta_min=0.8", "--set", "sweep.beta_max=1.2",
                           "--set", "sweep.refine_points=0", "--set", "itp.convergence_tol=1e-8",
                           "--out", str(out)], capsys)
    assert code == 0
    assert "beta_c=1.0000" in stdout
    assert (out / "sweep_summary.csv").exists()


def test_oracle_subcommand(tmp_path, capsys):
    code, stdout, _ = run(["oracle", "--preset", "ci", "--set", "evolution.dt=0.02", "--out", str(tmp_path)], capsys)
    lines = stdout.strip().splitlines()
    assert code == 0, stdout
    assert lines and all(l.startswith("PASS") for l in lines)
    assert any(l.startswith("PASS rescaling eps=0.75 g=0") for l in lines)
    assert (tmp_path / "oracles.csv").exists()


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "dmgpe.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for kind in ("run", "ground", "evolve", "sweep-beta", "revival-table", "interfere", "oracle"):
        assert kind in res.stdout
