import json

import numpy as np
import pandas as pd
import pytest

from hopper_stiffness.dataset import (
    append_calibration_row,
    read_trace,
    read_winner_map,
    success_region_frame,
    sweep_frame,
    winner_map_frame,
    winner_map_name,
    write_csv,
    write_json,
    write_trace,
)
from hopper_stiffness import config
from hopper_stiffness.config import CONFIGS_DIR
from hopper_stiffness.emulator import PdGains, fit_oscillator, synthesize_trace
from hopper_stiffness.episode import GuardMode
from hopper_stiffness.errors import ConfigError, TraceFormatError
from hopper_stiffness.run_config import RunConfig, load_run_config, parse_run_config
from hopper_stiffness.sweep import best_stiffness_map, success_region
from tests.conftest import make_result


@pytest.fixture
def result():
    apex = {
        (3000.0, 2400.0, 15.0, 1.0): 40.0,
        (4000.0, 2400.0, 15.0, 1.0): 40.5,
        (5000.0, 2600.0, 25.0, 1.0): 30.0,
    }
    return make_result(apex)


def test_sweep_frame_schema(result):
    df = sweep_frame(result)
    assert list(df.columns) == [
        "k_g_N_m", "d_g_Ns_m", "k_l_N_m", "d_l_Ns_m", "E_in_J",
        "status", "apex_mean_mm", "apex_std_mm", "winner_flag",
    ]
    assert len(df) == 6 * 3
    row = df[(df.k_g_N_m == 2400.0) & (df.d_g_Ns_m == 15.0) & (df.k_l_N_m == 4000.0)].iloc[0]
    assert row.apex_mean_mm == pytest.approx(40.5)
    assert row.winner_flag == 1
    assert df.status.isin(["SteadyHopping", "FailedLiftoff"]).all()
    assert df.loc[df.status == "FailedLiftoff", "apex_mean_mm"].isna().all()


def test_winner_map_csv_round_trip(result, tmp_path):
    winner_map = best_stiffness_map(result)
    path = write_csv(winner_map_frame(winner_map), tmp_path / winner_map_name(35.0, 1.0))
    assert path.name == "winner_map_dl35_E1.csv"

    text = path.read_text()
    assert text.splitlines()[0] == "k_g_N_m,d_g_Ns_m,winners"
    assert "2400,15,3000;4000" in text
    assert "FAIL" in text

    loaded = read_winner_map(path)
    assert loaded.winners == winner_map.winners
    np.testing.assert_array_equal(loaded.ground_stiffness, winner_map.ground_stiffness)


def test_success_region_frame(result):
    df = success_region_frame(success_region(result, 1.0))
    assert list(df.columns) == ["k_g_N_m", "d_g_Ns_m", "success"]
    assert df.success.sum() == 2


def test_writers_are_deterministic(result, tmp_path):
    a = write_csv(sweep_frame(result), tmp_path / "a.csv").read_bytes()
    b = write_csv(sweep_frame(result), tmp_path / "b.csv").read_bytes()
    assert a == b
    assert b"\r\n" not in a

    write_json({"b": 1, "a": [1.5]}, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text()) == {"a": [1.5], "b": 1}
    assert (tmp_path / "s.json").read_text().startswith('{\n    "a"')


def test_trace_file_round_trip(tmp_path):
    trace = synthesize_trace(2400.0, 16.0, 2.0, samples=200)
    path = write_trace(trace, tmp_path / "trace.csv")
    assert path.read_text().splitlines()[:2] == ["mass_kg=2", "t_s,r_m"]

    loaded = read_trace(path)
    assert loaded.mass == 2.0
    np.testing.assert_allclose(loaded.positions, trace.positions, rtol=1e-11)
    assert read_trace(path, mass=3.0).mass == 3.0


def test_trace_file_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(TraceFormatError):
        read_trace(empty)

    headless = tmp_path / "headless.csv"
    headless.write_text("t_s,r_m\n" + "\n".join(f"{i * 0.01},{i * 1e-4}" for i in range(30)))
    with pytest.raises(TraceFormatError):
        read_trace(headless)
    assert len(read_trace(headless, mass=1.0)) == 30

    wrong = tmp_path / "wrong.csv"
    wrong.write_text("mass_kg=2\ntime,pos\n0,0\n")
    with pytest.raises(TraceFormatError):
        read_trace(wrong)


def test_calibration_table_appends(tmp_path):
    fit = fit_oscillator(synthesize_trace(2400.0, 16.0, 2.0))
    path = tmp_path / "calibration.csv"
    append_calibration_row(path, fit, PdGains(kp=2500.0, kd=15.0))
    table = append_calibration_row(path, fit)
    assert list(table.columns) == ["Kp", "Kd", "kg_N_m", "dg_Ns_m", "r2"]
    assert len(pd.read_csv(path)) == 2
    assert table.Kp.isna().tolist() == [False, True]


def test_default_config_file_matches_defaults():
    cfg = load_run_config()
    defaults = RunConfig()
    assert cfg.hopper == defaults.hopper
    assert cfg.ground == defaults.ground
    assert cfg.energy == defaults.energy
    assert cfg.sweep.ground_stiffness == defaults.sweep.ground_stiffness
    assert cfg.sweep.leg_stiffness == [3000.0, 4000.0, 5000.0]
    assert len(cfg.portrait.drop_heights) == 6


def test_malformed_yaml_reports_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("hopper:\n  body_mass: 2.5\n  toe_mass: [0.3\nground: {}\n")
    with pytest.raises(ConfigError, match=r"bad\.yaml:\d+:\d+"):
        load_run_config(path)


def test_schema_errors_name_the_key():
    with pytest.raises(ConfigError, match="hopper.spring"):
        parse_run_config({"hopper": {"spring": 1.0}})
    with pytest.raises(ConfigError, match="sweep.leg_stiffness"):
        parse_run_config({"sweep": {"leg_stiffness": []}})
    with pytest.raises(ConfigError, match="portrait.drop_heights"):
        parse_run_config({"portrait": {"drop_heights": [0.1]}})
    with pytest.raises(ConfigError):
        parse_run_config([1, 2])
    assert parse_run_config(None) == RunConfig()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "nope.yaml")


def test_experiment_grid_config():
    cfg = load_run_config(CONFIGS_DIR / "experiment-table1.yaml")
    sweep = cfg.sweep
    assert sweep.leg_stiffness == [3351.0, 4279.0, 5341.0]
    np.testing.assert_array_equal(sweep.ground_stiffness.values(), [2401.7, 3410.8, 4420.0])
    np.testing.assert_array_equal(sweep.ground_damping.values(), [17.1, 35.2, 53.3, 71.4])
    assert sweep.energies == [0.97]
    assert sweep.discard_incomplete
    assert len(sweep.ground_profiles()) == 12

    episode = sweep.episode
    assert episode.guard_mode is GuardMode.EXPERIMENT
    assert episode.stance_fixed_duration == 0.150
    assert episode.skip_hops == 3
    assert episode.steady_window == 20
    assert episode.max_hops == 23
    assert episode.steady_std_tol == 0.002


def test_removed_keys_are_rejected():
    with pytest.raises(ConfigError, match="linkage"):
        parse_run_config({"linkage": {"link1": 0.1, "link2": 0.2}})
    with pytest.raises(ConfigError, match="portrait.orbits"):
        parse_run_config({"portrait": {"orbits": 0}})


def test_config_exposes_only_used_paths():
    for name in ("DATA_DIR", "RAW_DATA_DIR", "PROCESSED_DATA_DIR", "FIGURES_DIR"):
        assert not hasattr(config, name)
    assert config.DEFAULT_CONFIG_PATH.parent == config.CONFIGS_DIR
