import csv
import os
import sys

import pytest

from conftest import small
from ghostsim import cli
from ghostsim.configfile import (LENGTH_UNITS, format_config, parse_config, parse_config_text, parse_quantity,
                                 write_config)
from ghostsim.errors import ConfigError
from ghostsim.pgm import read_pgm
from ghostsim.scenarios import SCENARIOS, default_config

SMALL_TWO_HOLE = """\
scenario = two_hole
[grid]
nx = 128
ny = 128
[ensemble]
n_realizations = {n}
shard_size = 100
[object]
y1 = -0.2 mm
y2 = 200um   # inline comment
[detector]
scan_start = -0.5mm
scan_stop = 0.5mm
"""


@pytest.mark.parametrize("text, value", [("80um", 80e-6), ("80 µm", 80e-6), ("0.1 m", 0.1), ("10cm", 0.1),
                                         ("532nm", 532e-9), ("-0.5mm", -0.5e-3), ("1e-3 m", 1e-3)])
def test_length_units(text, value):
    assert parse_quantity(text, LENGTH_UNITS) == value


@pytest.mark.parametrize("text", ["80", "80 furlongs", "abc", "1..2mm"])
def test_bad_quantities(text):
    with pytest.raises(ConfigError):
        parse_quantity(text, LENGTH_UNITS, "l_c")


def test_time_unit_and_defaults_kept():
    cfg = parse_config_text("[source]\ntau_c = 2 ns\nl_c = 60 um\n", "equal_plane")
    assert cfg.source.tau_c == pytest.approx(2e-9)
    assert cfg.source.l_c == pytest.approx(60e-6)
    assert cfg.grid == default_config("equal_plane").grid


@pytest.mark.parametrize("text, line, match", [
    ("[grid]\ndx = 10\n", 2, "needs a unit"),
    ("[grid]\n\nfoo = 1\n", 3, "unknown key 'foo'"),
    ("[nope]\n", 1, "unknown section"),
    ("[grid]\nnx = 64\nnx = 32\n", 3, "duplicate"),
    ("[grid]\nnx = 12.5\n", 2, "integer"),
    ("nx = 4\n", 1, "inside a section"),
    ("[grid]\njunk\n", 2, "key = value"),
])
def test_config_errors_carry_line_numbers(text, line, match):
    with pytest.raises(ConfigError, match=match) as info:
        parse_config_text(text, "equal_plane")
    assert f"line {line}" in str(info.value)


def test_scenario_conflict_and_absence():
    with pytest.raises(ConfigError, match="requested"):
        parse_config_text("scenario = two_hole\n", "equal_plane")
    with pytest.raises(ConfigError, match="no scenario"):
        parse_config_text("[grid]\nnx = 64\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "absent.ini", "equal_plane")


@pytest.mark.parametrize("name", SCENARIOS)
def test_round_trip(name, tmp_path):
    cfg = default_config(name)
    write_config(cfg, tmp_path / "c.ini")
    again = parse_config(tmp_path / "c.ini")
    assert again == cfg
    assert format_config(again) == format_config(cfg)


def test_none_clears_optional_value():
    cfg = parse_config_text("[source]\nbeam_radius = none\n", "near_to_far")
    assert cfg.source.beam_radius is None
    with pytest.raises(ConfigError):
        parse_config_text("[source]\nl_c = none\n", "near_to_far")


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_cli_pass_writes_documented_outputs(tmp_path, capsys):
    ini = tmp_path / "two.ini"
    ini.write_text(SMALL_TWO_HOLE.format(n=1500), encoding="utf-8")
    out = tmp_path / "out"
    assert run_cli("--config", ini, "--out", out) == 0
    stdout = capsys.readouterr().out
    assert "verdict: PASS" in stdout
    manifest = (out / "manifest.txt").read_text().split()
    assert {"summary.txt", "config.resolved.ini", "contrast.csv", "ghost_image.csv", "ghost_image.pgm"} <= set(manifest)
    for name in manifest:
        assert (out / name).exists()
    with open(out / "ghost_image.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x_m", "g2", "covariance", "stderr"]
    assert len(rows) == 102
    pixels, maxval = read_pgm(out / "ghost_image.pgm")
    assert maxval == 255 and pixels.max() == 255
    assert (out / "ghost_image.pgm").read_bytes().startswith(b"P2")
    # The resolved config reproduces the run.
    assert parse_config(out / "config.resolved.ini").object.y2 == pytest.approx(0.2e-3)


def test_cli_failed_check_exits_one(tmp_path, capsys):
    ini = tmp_path / "two.ini"
    ini.write_text(SMALL_TWO_HOLE.format(n=40) + "[analysis]\ncontrast_tolerance = 0.0001\n", encoding="utf-8")
    assert run_cli("--config", ini, "--out", tmp_path / "o") == 1
    assert "verdict: FAIL" in capsys.readouterr().out


def test_cli_errors_exit_two(tmp_path, capsys):
    assert run_cli("--scenario", "equal_plane", "--realizations", 1, "--out", tmp_path / "x") == 2
    assert "at least 2" in capsys.readouterr().err
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\ndx = 10\n", encoding="utf-8")
    assert run_cli("--scenario", "equal_plane", "--config", bad) == 2
    assert "line 2" in capsys.readouterr().err
    assert run_cli("--config", tmp_path / "none.ini", "--scenario", "two_hole") == 2
    assert run_cli() == 2


def test_cli_unknown_scenario_lists_choices(capsys):
    with pytest.raises(SystemExit) as info:
        run_cli("--scenario", "holography")
    assert info.value.code == 2
    assert "two_hole" in capsys.readouterr().err


@pytest.mark.skipif(sys.platform == "win32" or os.geteuid() == 0, reason="root ignores permissions")
def test_cli_unwritable_output_exits_two(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    ini = tmp_path / "two.ini"
    ini.write_text(SMALL_TWO_HOLE.format(n=100), encoding="utf-8")
    assert run_cli("--config", ini, "--out", locked / "sub") == 2


def test_cli_output_path_blocked_by_file_exits_two(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    ini = tmp_path / "two.ini"
    ini.write_text(SMALL_TWO_HOLE.format(n=100), encoding="utf-8")
    assert run_cli("--config", ini, "--out", blocker / "sub") == 2
    assert "cannot create output directory" in capsys.readouterr().err


def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_outputs_byte_identical_across_worker_counts(tmp_path):
    ini = tmp_path / "two.ini"
    ini.write_text(SMALL_TWO_HOLE.format(n=500), encoding="utf-8")
    assert run_cli("--config", ini, "--out", tmp_path / "w1", "--workers", 1) == 0
    assert run_cli("--config", ini, "--out", tmp_path / "w3", "--workers", 3) == 0
    assert _tree(tmp_path / "w1") == _tree(tmp_path / "w3")


def test_seed_and_realization_overrides():
    req = cli.RunRequest(scenario="two_hole", seed=5, realizations=77)
    cfg = cli.resolve_config(req)
    assert (cfg.ensemble.master_seed, cfg.ensemble.n_realizations) == (5, 77)


def test_write_outputs_includes_frames(tmp_path):
    from ghostsim.scenarios import run_scenario
    cfg = small("equal_plane", 200, source=dict(l_c=40e-6),
                detector=dict(scan_start=-0.5e-3, scan_stop=0.5e-3), output=dict(dump_frames=2))
    names = cli.write_outputs(run_scenario(cfg), cfg, tmp_path)
    frames = [n for n in names if n.startswith("frame")]
    assert len(frames) == 2
    pixels, maxval = read_pgm(tmp_path / frames[0])
    assert pixels.shape == (128, 128) and maxval == 65535
