import json

import pytest

from ternary.cli import PARTICLE_DEFAULTS, STUDY_DEFAULTS, run_command
from ternary.config import ConfigError, parse_config, parse_config_text, serialize_config
from ternary.io import format_scalar, read_csv, verify_manifest


def test_parse_config_merges_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# particles\nN = 12\nt_end = 0.5  # short\nperiodic = false\n", encoding="utf-8")
    cfg = parse_config(path, PARTICLE_DEFAULTS)
    assert cfg["N"] == 12 and cfg["t_end"] == 0.5 and cfg["periodic"] is False
    assert cfg["eps"] == PARTICLE_DEFAULTS["eps"]


def test_parse_config_errors_name_key_and_line(tmp_path):
    with pytest.raises(ConfigError, match="line 2: unknown key 'speed'"):
        parse_config_text("N = 3\nspeed = 2\n", PARTICLE_DEFAULTS)
    with pytest.raises(ConfigError, match="line 1: key 'N' expects int"):
        parse_config_text("N = many\n", PARTICLE_DEFAULTS)
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("N 3\n", PARTICLE_DEFAULTS)
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "missing.cfg", PARTICLE_DEFAULTS)


def test_config_round_trip():
    cfg = dict(STUDY_DEFAULTS, n_list=(8, 27), t_list=(0.0, 0.25), c0=0.3)
    assert parse_config_text(serialize_config(cfg), STUDY_DEFAULTS) == cfg
    assert parse_config_text(serialize_config(PARTICLE_DEFAULTS), PARTICLE_DEFAULTS) == PARTICLE_DEFAULTS


def test_format_scalar_round_trips():
    for x in (0.1, 1 / 3, 2.0**-40, -1e300):
        assert float(format_scalar(x)) == x


def test_exit_codes(tmp_path, capsys):
    assert run_command(["simulate-particles", "--set", "eps=1.0", "--out", str(tmp_path / "a")]) == 1
    assert "ConfigurationDensityError" in capsys.readouterr().err
    assert run_command(["simulate-particles", "--unknown-flag"]) == 2
    assert run_command(["no-such-command"]) == 2
    assert run_command(["simulate-particles", "--set", "colour=red"]) == 2


def test_simulate_particles_outputs_and_determinism(tmp_path):
    args = ["simulate-particles", "--set", "N=15", "--set", "t_end=1.0", "--seed", "3"]
    assert run_command(args + ["--out", str(tmp_path / "a")]) == 0
    assert run_command(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("events.csv", "final.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "simulate-particles" and manifest["seed"] == 3
    assert sorted(manifest["files"]) == ["events.csv", "final.csv", "summary.json"]
    header, rows = read_csv(tmp_path / "a" / "final.csv")
    assert header[:3] == ["particle", "x0", "x1"] and len(rows) == 15


def test_manifest_detects_tampering(tmp_path):
    out = tmp_path / "run"
    assert run_command(["pseudo-trajectory", "--out", str(out)]) == 0
    assert verify_manifest(out / "manifest.json") == []
    assert run_command(["verify", "--manifest", str(out / "manifest.json")]) == 0
    with (out / "proximity.json").open("a") as fh:
        fh.write(" ")
    assert verify_manifest(out / "manifest.json") == ["proximity.json: digest mismatch"]
    assert run_command(["verify", "--manifest", str(out / "manifest.json")]) == 1


def test_other_subcommands(tmp_path):
    assert run_command(["solve-kinetic", "--set", "n=500", "--set", "t_end=0.2", "--set", "checkpoints=2",
                        "--set", "entropy_bins=8", "--out", str(tmp_path / "k")]) == 0
    header, rows = read_csv(tmp_path / "k" / "moments.csv")
    assert header == ["t", "mass", "p0", "p1", "energy", "entropy", "entropy_se"] and len(rows) == 3
    assert run_command(["measure-estimates", "--set", "n_samples=10000", "--set", "dims=2",
                        "--set", "rho_exponents=3,4", "--out", str(tmp_path / "m")]) == 0
    assert run_command(["convergence-study", "--set", "n_list=6,9", "--set", "runs=10", "--set", "t_list=0,0.2",
                        "--set", "bootstrap=50", "--deterministic", "--out", str(tmp_path / "c")]) == 0
    header, rows = read_csv(tmp_path / "c" / "study.csv")
    assert header[:7] == ["t_end", "N", "eps", "distance", "ci_lo", "ci_hi", "failures"] and len(rows) == 4


def test_verify_quick(capsys):
    assert run_command(["verify", "--quick"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out
