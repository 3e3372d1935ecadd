import openpyxl
import pytest

from app import __version__
from app.core.exceptions import EXIT_CONFIG_ERROR, EXIT_OK
from app.harness.report import read_csv
from app.main import main

QUICK_RUN = ["--preset", "fig2", "--trials", "1", "--geometries", "1", "--snr", "10", "--algos", "minorize_pwcsit"]


def test_preset_run_writes_rows(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(QUICK_RUN + ["--out", str(out), "--seed", "3"]) == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 1
    assert rows[0].algorithm == "minorize_pwcsit" and rows[0].snr_db == 10.0
    assert out.read_text(encoding="utf-8").startswith("# config=")
    assert "1 rows written" in capsys.readouterr().out


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("preset = fig3\nsnr_db = 0, 20\nalgorithms = wsmse\ntrials = 1\ngeometry_draws = 1\n",
                   encoding="utf-8")
    out = tmp_path / "sweep.csv"
    assert main(["--config", str(cfg), "--snr", "5", "--out", str(out)]) == EXIT_OK
    assert [r.snr_db for r in read_csv(out)] == [5.0]


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG_ERROR


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("preset = fig2\nantenna_spacing = 0.5\n", encoding="utf-8")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG_ERROR
    assert not (tmp_path / "x.csv").exists()


def test_xlsx_output(tmp_path):
    out, book = tmp_path / "sweep.csv", tmp_path / "sweep.xlsx"
    assert main(QUICK_RUN + ["--out", str(out), "--xlsx", str(book)]) == EXIT_OK
    ws = openpyxl.load_workbook(book).active
    assert ws.max_row == 2
    assert ws.cell(row=2, column=2).value == "minorize_pwcsit"


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


@pytest.mark.parametrize("streams,amplitude", [(5, 1.0), (1, -1.0)])
def test_invalid_scenario_file_exits_with_config_error(tmp_path, streams, amplitude):
    scenario = tmp_path / "scenario.yaml"
    scenario.write_text(
        "cells: 1\nnt: [2]\nusers:\n  - serving: 0\n    nr: 2\n"
        f"    streams: {streams}\n    links:\n      - amplitudes: [{amplitude}]\n        aod: [0.1]\n        aoa: [0.2]\n",
        encoding="utf-8",
    )
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(f"scenario_file = {scenario}\nsnr_db = 0\nalgorithms = minorize_pwcsit\n", encoding="utf-8")
    out = tmp_path / "x.csv"
    assert main(["--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG_ERROR
    assert not out.exists()
