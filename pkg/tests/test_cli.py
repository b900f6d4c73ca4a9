import csv

import pytest

from airfl_dp import cli
from airfl_dp.config import load_config
from airfl_dp.errors import InfeasibleError, NumericalError

FAST = ["--n", "4", "--m", "6", "--d", "8", "--T", "4", "--trials", "2", "--samples-per-device", "20", "--batch", "5"]


def test_simulate_writes_rounds(tmp_path, capsys):
    assert cli.main(["simulate", *FAST, "--out", str(tmp_path)]) == 0
    assert "desk-scale analogue" in capsys.readouterr().out
    with open(tmp_path / "rounds.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 8


def test_config_file_with_flag_override(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("T = 9\nscheme = clip\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfg_path), *FAST, "--out", str(out)]) == 0
    with open(out / "rounds.csv") as fh:
        assert max(int(r["t"]) for r in csv.DictReader(fh)) == 3  # --T 4 wins over the file


def test_emit_config_is_loadable(tmp_path, capsys):
    assert cli.main(["simulate", *FAST, "--eps-tilde", "0.4", "--emit-config"]) == 0
    path = tmp_path / "resolved.cfg"
    path.write_text(capsys.readouterr().out)
    cfg = load_config(path)
    assert cfg.eps_tilde == 0.4 and cfg.T == 4 and cfg.c is not None


def test_configuration_error_exit_code(capsys):
    assert cli.main(["simulate", "--n", "10", "--m", "4"]) == 2
    assert "zero forcing" in capsys.readouterr().err
    assert cli.main(["simulate", "--T", "abc"]) == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["simulate", "--warp", "9"])
    assert info.value.code == 2


@pytest.mark.parametrize("error,code", [(InfeasibleError("x", device=1), 3), (NumericalError("x"), 4)])
def test_error_classes_map_to_exit_codes(monkeypatch, error, code):
    def boom(cfg, args):
        raise error

    monkeypatch.setitem(cli.COMMANDS, "optimize", boom)
    assert cli.main(["optimize", *FAST]) == code


def test_sweep_command(tmp_path):
    args = ["sweep", *FAST, "--axis", "snr", "--values", "0,-20", "--schemes", "airfl-zf,airfl-dp", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["scheme"] for r in rows] == ["airfl-zf", "airfl-dp", "airfl-zf", "airfl-dp"]


def test_privacy_curve_command(tmp_path, capsys):
    assert cli.main(["privacy-curve", *FAST, "--D", "5", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "privacy_curve.csv") as fh:
        eps = [float(r["dp_eps"]) for r in csv.DictReader(fh)]
    assert len(eps) == 4 and all(b >= a for a, b in zip(eps, eps[1:]))


def test_optimize_command(tmp_path, capsys):
    assert cli.main(["optimize", *FAST, "--out", str(tmp_path)]) == 0
    assert "scaled=True" in capsys.readouterr().out
    with open(tmp_path / "allocation.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4


def test_validate_command(capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out
