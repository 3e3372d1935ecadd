import math

import numpy as np
import openpyxl
import pytest
from pydantic import ValidationError

from app.core import settings
from app.core.channel import random_scenario
from app.core.exceptions import ConfigError
from app.harness import runner
from app.harness.config import build_config, dump_scenario, load_scenario, parse_config, read_key_values
from app.harness.report import config_hash, emit_csv, emit_xlsx, read_csv
from app.harness.runner import build_geometry, db_to_power, run_sweep, sweep_cells
from app.schemas.config import parse_snr_points
from app.schemas.result import ROW_FIELDS, SweepRow

# Small enough for a test run, still exercising every code path of a sweep cell
TINY_SWEEP = {
    "preset": "fig2",
    "snr_db": "0,10",
    "trials": 3,
    "geometry_draws": 2,
    "max_iter": 15,
    "seed": 5,
}


@pytest.fixture
def config_file(tmp_path):
    def write(text):
        path = tmp_path / "sweep.cfg"
        path.write_text(text, encoding="utf-8")
        return path
    return write


# --- CONFIGURATION ---

def test_presets_parse(config_file):
    config = parse_config(config_file("preset = fig2\n"))
    assert (config.nt, config.nr, config.cells, config.users_per_cell, config.paths) == (3, 3, 2, 2, 3)
    assert config.snr_db == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    assert config.algorithms == ["wsmse", "minorize_icsit", "minorize_pwcsit"]
    assert parse_config(config_file("preset = fig4  # ZF feasible\n")).nt == 10


def test_empty_config_reports_missing_key(config_file):
    with pytest.raises(ConfigError) as exc:
        parse_config(config_file(""))
    assert "missing" in exc.value.message


def test_unknown_key_is_named(config_file):
    with pytest.raises(ConfigError) as exc:
        parse_config(config_file("preset = fig2\nbeam_width = 3\n"))
    assert "beam_width" in exc.value.message


def test_type_mismatch(config_file):
    with pytest.raises(ConfigError) as exc:
        parse_config(config_file("preset = fig2\ntrials = many\n"))
    assert "trials" in exc.value.message


def test_malformed_lines(config_file):
    with pytest.raises(ConfigError):
        read_key_values(config_file("preset fig2\n"))
    with pytest.raises(ConfigError):
        read_key_values(config_file("seed = 1\nseed = 2\n"))


def test_unknown_preset():
    with pytest.raises(ConfigError):
        build_config({"preset": "fig9"})


def test_precedence(config_file, monkeypatch):
    """environment < preset < file < command line"""
    monkeypatch.setattr(settings, "DEFAULT_TRIALS", 7)
    assert build_config({"preset": "fig2"}).trials == 7
    path = config_file("preset = fig2\ntrials = 11\nnt = 5\n")
    config = parse_config(path, {"trials": 13, "seed": None})
    assert config.trials == 13
    assert config.nt == 5
    assert config.seed == settings.DEFAULT_SEED


def test_snr_points():
    assert parse_snr_points("0:5:30") == [0, 5, 10, 15, 20, 25, 30]
    assert parse_snr_points("-10, 0, 12.5") == [-10.0, 0.0, 12.5]
    assert parse_snr_points(3) == [3.0]
    with pytest.raises(ValueError):
        parse_snr_points("0:-5:30")
    assert db_to_power(20.0) == pytest.approx(100.0)


def test_duplicate_algorithms_collapse():
    config = build_config({**TINY_SWEEP, "algorithms": "wsmse, wsmse,minorize_pwcsit"})
    assert config.algorithms == ["wsmse", "minorize_pwcsit"]


# --- SWEEPS ---

def test_row_count():
    config = build_config({**TINY_SWEEP, "trials": 1, "algorithms": "minorize_pwcsit"})
    rows = run_sweep(config)
    assert len(rows) == 2 * 2 * 1
    assert [(r.geometry_draw, r.snr_db) for r in rows] == [(0, 0.0), (0, 10.0), (1, 0.0), (1, 10.0)]
    assert len(sweep_cells(config)) == len(rows)


def test_sweep_output_is_deterministic(tmp_path):
    config = build_config({**TINY_SWEEP, "algorithms": "minorize_icsit,minorize_pwcsit"})
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(run_sweep(config), first, config)
    emit_csv(run_sweep(config), second, config)
    assert first.read_bytes() == second.read_bytes()


def test_workers_do_not_change_rows(tmp_path):
    config = build_config({**TINY_SWEEP, "algorithms": "wsmse,minorize_pwcsit"})
    parallel = build_config({**TINY_SWEEP, "algorithms": "wsmse,minorize_pwcsit", "workers": 2})
    serial_out, parallel_out = tmp_path / "serial.csv", tmp_path / "parallel.csv"
    emit_csv(run_sweep(config), serial_out, config)
    emit_csv(run_sweep(parallel), parallel_out, config)
    assert serial_out.read_bytes() == parallel_out.read_bytes()


def test_geometry_depends_on_seed_and_draw_only():
    config = build_config(TINY_SWEEP)
    a, b = build_geometry(config, 1), build_geometry(config, 1)
    assert np.array_equal(a.link(0, 1).aod, b.link(0, 1).aod)
    assert not np.array_equal(a.link(0, 1).aod, build_geometry(config, 0).link(0, 1).aod)


def test_instantaneous_csit_is_not_worse():
    """Perfect channel knowledge should not lose to the pathwise design on average."""
    config = build_config({**TINY_SWEEP, "preset": "fig4", "snr_db": "10", "trials": 20, "geometry_draws": 1,
                           "algorithms": "minorize_icsit,minorize_pwcsit", "max_iter": 30})
    icsit, pwcsit = run_sweep(config)
    assert icsit.ewsr_mc_mean >= pwcsit.ewsr_mc_mean - 3 * (icsit.ewsr_mc_stderr + pwcsit.ewsr_mc_stderr)


def test_scenario_file_round_trip_and_sweep(tmp_path):
    scn = random_scenario(2, 1, 2, nt=3, nr=2, power=4.0, rng=np.random.default_rng(1))
    path = tmp_path / "scenario.yaml"
    dump_scenario(scn, path)
    loaded = load_scenario(path)
    assert loaded.serving == scn.serving and loaded.power == scn.power
    assert np.allclose(loaded.link(1, 0).ht, scn.link(1, 0).ht)

    config = build_config({"scenario_file": str(path), "snr_db": "0,5", "algorithms": "minorize_pwcsit",
                           "trials": 4, "max_iter": 10})
    rows = run_sweep(config)
    assert len(rows) == 2
    assert {r.geometry_draw for r in rows} == {0}


def test_bad_scenario_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text("cells: 2\nnt: [3]\nusers: []\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)


SINGLE_CELL_SCENARIO = """\
cells: 1
nt: [2]
power: [4.0]
users:
  - serving: 0
    nr: 2
    streams: {streams}
    links:
      - amplitudes: [{amplitude}]
        aod: [0.3]
        aoa: [-0.2]
"""


@pytest.mark.parametrize("streams,amplitude", [(5, 1.0), (1, -1.0), (1, 0.0)])
def test_invalid_scenario_file_is_a_config_error(tmp_path, streams, amplitude):
    path = tmp_path / "scenario.yaml"
    path.write_text(SINGLE_CELL_SCENARIO.format(streams=streams, amplitude=amplitude), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)
    with pytest.raises(ConfigError):
        build_config({"scenario_file": str(path), "snr_db": "0", "algorithms": "minorize_pwcsit"})


def test_scenario_file_is_loaded_once_per_sweep(tmp_path, monkeypatch):
    path = tmp_path / "scenario.yaml"
    path.write_text(SINGLE_CELL_SCENARIO.format(streams=1, amplitude=1.0), encoding="utf-8")
    config = build_config({"scenario_file": str(path), "snr_db": "0,5,10", "algorithms": "minorize_pwcsit",
                           "trials": 2, "max_iter": 5, "workers": 1})
    loads = []

    def counting_load(p):
        loads.append(p)
        return load_scenario(p)

    monkeypatch.setattr(runner, "load_scenario", counting_load)
    assert len(run_sweep(config)) == 3
    assert len(loads) == 1


# --- TRENDS ---

def _mean_by(rows, field, algorithm):
    by_snr = {}
    for row in rows:
        if row.algorithm == algorithm:
            by_snr.setdefault(row.snr_db, []).append(getattr(row, field))
    return {snr: float(np.mean(values)) for snr, values in sorted(by_snr.items())}


def test_mean_objective_grows_with_snr():
    config = build_config({**TINY_SWEEP, "snr_db": "0,15,30", "max_iter": 30,
                           "algorithms": "minorize_icsit,minorize_pwcsit"})
    rows = run_sweep(config)
    for algorithm in config.algorithms:
        means = list(_mean_by(rows, "objective_nats", algorithm).values())
        assert np.all(np.diff(means) > 0), algorithm


def _pathwise_share(preset):
    config = build_config({"preset": preset, "snr_db": "25", "trials": 10, "geometry_draws": 2, "max_iter": 30,
                           "seed": 5, "algorithms": "minorize_icsit,minorize_pwcsit"})
    rows = run_sweep(config)
    icsit = _mean_by(rows, "ewsr_mc_mean", "minorize_icsit")[25.0]
    pwcsit = _mean_by(rows, "ewsr_mc_mean", "minorize_pwcsit")[25.0]
    return pwcsit / icsit


def test_pathwise_loss_shrinks_when_zero_forcing_fits():
    """Nt = 10, Nr = 4 leaves room for pathwise ZF; Nt = Nr = 3 does not."""
    assert _pathwise_share("fig4") > _pathwise_share("fig2")


def test_pathwise_rate_keeps_growing_at_high_snr():
    config = build_config({"preset": "fig4", "snr_db": "20,30", "trials": 50, "geometry_draws": 2, "max_iter": 30,
                           "seed": 5, "algorithms": "minorize_pwcsit"})
    means = _mean_by(run_sweep(config), "ewsr_mc_mean", "minorize_pwcsit")
    assert means[30.0] - means[20.0] > 2.0


# --- REPORTS ---

def test_empty_sweep_writes_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# ")
    assert lines[1:] == [",".join(ROW_FIELDS)]


def test_csv_round_trip(tmp_path):
    config = build_config({**TINY_SWEEP, "trials": 2, "geometry_draws": 1, "algorithms": "wsmse"})
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    emit_csv(run_sweep(config), first, config)
    emit_csv(read_csv(first), second, config)
    assert first.read_bytes() == second.read_bytes()


def test_xlsx_header(tmp_path):
    path = tmp_path / "sweep.xlsx"
    row = SweepRow(snr_db=0.0, algorithm="wsmse", geometry_draw=0, objective_nats=float("nan"),
                   objective_bits=float("nan"), ewsr_mc_mean=float("nan"), ewsr_mc_stderr=float("nan"),
                   iterations=0, kkt_residual=float("nan"), converged=False)
    emit_xlsx([row], path)
    ws = openpyxl.load_workbook(path).active
    assert [c.value for c in ws[1]] == list(ROW_FIELDS)
    assert ws.cell(row=2, column=4).value is None


def test_row_validation():
    values = dict(snr_db=0.0, algorithm="wsmse", geometry_draw=0, objective_nats=math.nan, objective_bits=math.nan,
                  ewsr_mc_mean=math.nan, ewsr_mc_stderr=math.nan, iterations=0, kkt_residual=math.nan)
    assert not SweepRow(**values, converged=False).converged
    with pytest.raises(ValidationError):
        SweepRow(**values, converged=True)
    with pytest.raises(ValidationError):
        SweepRow(**{**values, "ewsr_mc_stderr": -1.0}, converged=False)


def test_config_hash_ignores_workers():
    serial = build_config({**TINY_SWEEP, "workers": 1})
    parallel = build_config({**TINY_SWEEP, "workers": 2})
    assert config_hash(serial) == config_hash(parallel)
    assert config_hash(serial) != config_hash(build_config({**TINY_SWEEP, "seed": 6}))
