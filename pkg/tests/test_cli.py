import json

import pytest
from typer.testing import CliRunner

from hopper_stiffness.cli import app
from hopper_stiffness.config import CONFIGS_DIR

runner = CliRunner()


@pytest.fixture
def short_config(tmp_path):
    path = tmp_path / "short.yaml"
    path.write_text(
        "episode:\n  max_hops: 11\n  steady_window: 10\n"
        f"output_dir: {tmp_path / 'out'}\n"
    )
    return path


def test_synth_trace_then_fit(tmp_path):
    trace = tmp_path / "trace.csv"
    result = runner.invoke(app, ["synth-trace", str(trace), "--kg", "2400", "--dg", "16", "--mass", "2"])
    assert result.exit_code == 0, result.output
    assert trace.read_text().startswith("mass_kg=2\n")

    out = tmp_path / "fit"
    result = runner.invoke(app, ["fit", str(trace), "--out", str(out), "--kp", "2500", "--kd", "15"])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "fit_trace.json").read_text())
    assert summary["k_g_N_m"] == pytest.approx(2400.0, rel=1e-6)
    assert summary["d_g_Ns_m"] == pytest.approx(16.0, rel=1e-6)
    assert summary["accepted"] is True
    assert (out / "calibration.csv").exists()
    assert (out / "figures" / "fit_trace.svg").exists()


def test_fit_empty_file_is_input_error(tmp_path):
    trace = tmp_path / "empty.csv"
    trace.write_text("")
    result = runner.invoke(app, ["fit", str(trace), "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_fit_flat_trace_is_fit_failure(tmp_path):
    trace = tmp_path / "flat.csv"
    trace.write_text("mass_kg=1\nt_s,r_m\n" + "\n".join(f"{i * 0.01},-0.004" for i in range(50)) + "\n")
    result = runner.invoke(app, ["fit", str(trace), "--out", str(tmp_path)])
    assert result.exit_code == 5


def test_select_prints_softest_winner(tmp_path):
    path = tmp_path / "winner_map_dl35_E1.csv"
    path.write_text(
        "k_g_N_m,d_g_Ns_m,winners\n"
        "4200,30,5000\n4200,35,5000\n4400,30,5000\n4400,35,3000;4000\n"
    )
    result = runner.invoke(app, ["select", str(path), "--kg", "4380", "--dg", "34.8"])
    assert result.exit_code == 0, result.output
    assert result.stdout.strip() == "3000"

    result = runner.invoke(app, ["select", str(path), "--kg", "9000", "--dg", "35"])
    assert result.exit_code == 2


def test_simulate_writes_outputs(short_config, tmp_path):
    result = runner.invoke(app, ["--quiet", "simulate", "--config", str(short_config)])
    assert result.exit_code in (0, 1), result.output

    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] in ("SteadyHopping", "NoConvergence")
    assert summary["hop_count"] == 11
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "time_s,phase,x_b_m,v_b_m_s,x_t_m,v_t_m_s"


def test_simulate_config_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("hopper: [unclosed\n")
    assert runner.invoke(app, ["simulate", "--config", str(bad)]).exit_code == 2

    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("hoper: {}\n")
    assert runner.invoke(app, ["simulate", "--config", str(unknown)]).exit_code == 2

    huge = tmp_path / "huge.yaml"
    huge.write_text("energy:\n  input_energy: 30.0\nhopper:\n  leg_stiffness: 3000.0\n")
    assert runner.invoke(app, ["simulate", "--config", str(huge)]).exit_code == 2


def test_portrait_needs_two_heights(tmp_path):
    cfg = tmp_path / "one.yaml"
    cfg.write_text("portrait:\n  drop_heights: [0.1]\n")
    assert runner.invoke(app, ["portrait", "--config", str(cfg)]).exit_code == 2


def test_sweep_rejects_empty_stiffness(tmp_path):
    cfg = tmp_path / "empty.yaml"
    cfg.write_text("sweep:\n  leg_stiffness: []\n")
    assert runner.invoke(app, ["sweep", "--config", str(cfg)]).exit_code == 2


def test_tiny_sweep_is_deterministic(tmp_path):
    cfg = tmp_path / "tiny.yaml"
    cfg.write_text(
        "sweep:\n"
        "  leg_stiffness: [3500.0, 4500.0]\n"
        "  leg_damping: [35.0]\n"
        "  ground_stiffness: {start: 3800.0, step: 800.0, end: 4600.0}\n"
        "  ground_damping: {start: 35.0, step: 10.0, end: 45.0}\n"
        "  energies: [1.0]\n"
        "  workers: 1\n"
        "  episode: {max_hops: 11, steady_window: 10}\n"
    )
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        result = runner.invoke(app, ["--quiet", "sweep", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output

    names = ["sweep.csv", "winner_map_dl35_E1.csv", "success_region_E1.csv", "trend_violations.csv"]
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()
    for svg in ("success_regions.svg", "apex_dl35_E1.svg", "winner_map_dl35_E1.svg"):
        assert (first / "figures" / svg).read_bytes() == (second / "figures" / svg).read_bytes()
    assert len((first / "sweep.csv").read_text().splitlines()) == 1 + 4 * 2


def test_global_seed_reaches_trace_synthesis(tmp_path):
    noisy = ["--noise", "0.001", "--samples", "200"]
    paths = {name: tmp_path / f"{name}.csv" for name in ("global", "local", "config", "other")}
    cfg = tmp_path / "seeded.yaml"
    cfg.write_text("seed: 3\n")

    assert runner.invoke(app, ["--seed", "3", "synth-trace", str(paths["global"]), *noisy]).exit_code == 0
    assert runner.invoke(app, ["synth-trace", str(paths["local"]), *noisy, "--seed", "3"]).exit_code == 0
    assert runner.invoke(app, ["--config", str(cfg), "synth-trace", str(paths["config"]), *noisy]).exit_code == 0
    assert runner.invoke(app, ["--seed", "4", "synth-trace", str(paths["other"]), *noisy]).exit_code == 0

    reference = paths["global"].read_bytes()
    assert paths["local"].read_bytes() == reference
    assert paths["config"].read_bytes() == reference
    assert paths["other"].read_bytes() != reference


def test_global_config_and_out_apply_to_commands(short_config, tmp_path):
    out = tmp_path / "elsewhere"
    result = runner.invoke(app, ["--quiet", "--config", str(short_config), "--out", str(out), "simulate"])
    assert result.exit_code in (0, 1), result.output
    assert (out / "summary.json").exists()
    assert not (tmp_path / "out" / "summary.json").exists()


def test_portrait_keeps_repeated_heights(tmp_path):
    cfg = tmp_path / "twice.yaml"
    cfg.write_text(
        "episode:\n  max_hops: 11\n  steady_window: 10\n"
        "portrait:\n  drop_heights: [0.1, 0.1]\n  orbits: 2\n"
    )
    out = tmp_path / "portrait"
    result = runner.invoke(app, ["--quiet", "portrait", "--config", str(cfg), "--out", str(out)])
    assert result.exit_code == 0, result.output

    summary = json.loads((out / "portrait_summary.json").read_text())
    assert summary["orbits"] == 2
    assert len(summary["drops"]) == 2
    assert summary["drops"][0] == summary["drops"][1]

    rows = (out / "portrait.csv").read_text().splitlines()[1:]
    half = len(rows) // 2
    assert len(rows) == 2 * half
    assert rows[:half] == rows[half:]


@pytest.mark.slow
def test_experiment_grid_runs_through_sweep(tmp_path):
    out = tmp_path / "experiment"
    config = CONFIGS_DIR / "experiment-table1.yaml"
    result = runner.invoke(
        app, ["--quiet", "--threads", "4", "sweep", "--config", str(config), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert len((out / "sweep.csv").read_text().splitlines()) == 1 + 12 * 3
    assert (out / "winner_map_dl35_E0.97.csv").exists()
