# hopper_stiffness/dataset.py
"""Tabular inputs and outputs. Lengths in result tables are millimetres; trajectories stay in SI."""

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from hopper_stiffness.emulator import OscillationTrace, OscillatorFit, PdGains
from hopper_stiffness.episode import EpisodeOutcome, EpisodeTrajectory, HopEnergy
from hopper_stiffness.errors import TraceFormatError
from hopper_stiffness.model import V_B, V_T, X_B, X_T
from hopper_stiffness.sweep import SuccessRegion, SweepResult, TrendViolation, WinnerMap

FLOAT_FORMAT = "%.10g"
CALIBRATION_COLUMNS = ["Kp", "Kd", "kg_N_m", "dg_Ns_m", "r2"]


def _mm(value: float | None) -> float:
    return float("nan") if value is None else value * 1000.0


def _label(value: float) -> str:
    return f"{value:g}"


# ======================================================
# Writers
# ======================================================
def write_csv(df: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(data: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=4, sort_keys=True)
        f.write("\n")
    return path


def _json_float(value: float | None):
    if value is None or not math.isfinite(value):
        return None
    return float(value)


# ======================================================
# Episodes
# ======================================================
def trajectory_frame(trajectory: EpisodeTrajectory) -> pd.DataFrame:
    states = trajectory.states
    return pd.DataFrame(
        {
            "time_s": trajectory.times,
            "phase": trajectory.phases,
            "x_b_m": states[:, X_B],
            "v_b_m_s": states[:, V_B],
            "x_t_m": states[:, X_T],
            "v_t_m_s": states[:, V_T],
        }
    )


def energy_frame(audit: list[HopEnergy]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "hop": e.index,
                "injected_J": e.injected,
                "dissipated_leg_J": e.dissipated_leg,
                "dissipated_ground_J": e.dissipated_ground,
                "ground_residual_J": e.ground_residual,
                "mechanical_change_J": e.mechanical_change,
                "balance_residual_J": e.balance_residual,
            }
            for e in audit
        ],
        columns=[
            "hop",
            "injected_J",
            "dissipated_leg_J",
            "dissipated_ground_J",
            "ground_residual_J",
            "mechanical_change_J",
            "balance_residual_J",
        ],
    )


def episode_summary(outcome: EpisodeOutcome, audit: list[HopEnergy], steady_window: int) -> dict:
    tail = audit[-steady_window:]
    injected = sum(e.injected for e in tail)
    dissipated = sum(e.dissipated for e in tail)
    return {
        "status": outcome.status.value,
        "failure_reason": outcome.failure_reason,
        "notes": list(outcome.notes),
        "hop_count": len(outcome.hops),
        "apex_mean_mm": _json_float(None if outcome.apex_mean is None else _mm(outcome.apex_mean)),
        "apex_std_mm": _json_float(None if outcome.apex_std is None else _mm(outcome.apex_std)),
        "apex_heights_mm": [_mm(h.apex_height) for h in outcome.hops],
        "energy_audit": {
            "hops": len(audit),
            "steady_injected_J": injected,
            "steady_dissipated_J": dissipated,
            "steady_balance_ratio": _json_float(dissipated / injected) if injected else None,
        },
    }


def portrait_frame(runs: list[tuple[float, EpisodeTrajectory]]) -> pd.DataFrame:
    frames = []
    for drop_height, trajectory in runs:
        frame = trajectory_frame(trajectory)[["time_s", "phase", "x_b_m", "v_b_m_s"]]
        frame.insert(0, "drop_height_m", drop_height)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


# ======================================================
# Sweeps
# ======================================================
def sweep_frame(result: SweepResult) -> pd.DataFrame:
    rows = []
    for cell in result.cells:
        for outcome in cell.outcomes:
            rows.append(
                {
                    "k_g_N_m": cell.ground.ground_stiffness,
                    "d_g_Ns_m": cell.ground.ground_damping,
                    "k_l_N_m": outcome.leg_stiffness,
                    "d_l_Ns_m": cell.leg_damping,
                    "E_in_J": cell.energy,
                    "status": outcome.status.value,
                    "apex_mean_mm": _mm(outcome.apex_mean),
                    "apex_std_mm": _mm(outcome.apex_std),
                    "winner_flag": int(outcome.leg_stiffness in cell.winners),
                }
            )
    return pd.DataFrame(rows)


def winner_map_frame(winner_map: WinnerMap) -> pd.DataFrame:
    rows = []
    for k_g in winner_map.ground_stiffness:
        for d_g in winner_map.ground_damping:
            winners = winner_map.winners_at(k_g, d_g)
            rows.append(
                {
                    "k_g_N_m": float(k_g),
                    "d_g_Ns_m": float(d_g),
                    "winners": ";".join(_label(k) for k in winners) if winners else "FAIL",
                }
            )
    return pd.DataFrame(rows)


def read_winner_map(path: Path, leg_damping: float = float("nan"), energy: float = float("nan")) -> WinnerMap:
    df = pd.read_csv(path, dtype={"winners": str})
    missing = {"k_g_N_m", "d_g_Ns_m", "winners"} - set(df.columns)
    if missing:
        raise TraceFormatError(f"{path}: missing winner-map columns {sorted(missing)}")

    winners = {}
    for row in df.itertuples(index=False):
        key = (round(float(row.k_g_N_m), 9), round(float(row.d_g_Ns_m), 9))
        text = str(row.winners).strip()
        winners[key] = () if text == "FAIL" else tuple(float(v) for v in text.split(";"))
    return WinnerMap(
        ground_stiffness=np.sort(df["k_g_N_m"].unique().astype(float)),
        ground_damping=np.sort(df["d_g_Ns_m"].unique().astype(float)),
        leg_damping=leg_damping,
        energy=energy,
        winners=winners,
    )


def success_region_frame(region: SuccessRegion) -> pd.DataFrame:
    k_g, d_g = np.meshgrid(region.ground_stiffness, region.ground_damping, indexing="ij")
    return pd.DataFrame(
        {
            "k_g_N_m": k_g.ravel(),
            "d_g_Ns_m": d_g.ravel(),
            "success": region.grid.ravel().astype(int),
        }
    )


def trend_violation_frame(violations: list[TrendViolation]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "axis": v.axis,
                "k_l_N_m": v.leg_stiffness,
                "k_g_N_m": v.ground_stiffness,
                "d_g_Ns_m": v.ground_damping,
                "apex_before_mm": _mm(v.apex_before),
                "apex_after_mm": _mm(v.apex_after),
            }
            for v in violations
        ],
        columns=["axis", "k_l_N_m", "k_g_N_m", "d_g_Ns_m", "apex_before_mm", "apex_after_mm"],
    )


def winner_map_name(leg_damping: float, energy: float) -> str:
    return f"winner_map_dl{_label(leg_damping)}_E{_label(energy)}.csv"


def success_region_name(energy: float) -> str:
    return f"success_region_E{_label(energy)}.csv"


# ======================================================
# Emulator traces and fits
# ======================================================
def read_trace(path: Path, mass: float | None = None) -> OscillationTrace:
    """Read a ``mass_kg=<value>`` header line followed by a ``t_s,r_m`` table."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].strip():
        raise TraceFormatError(f"{path}: trace file is empty")

    header = lines[0].strip()
    if header.startswith("mass_kg="):
        try:
            file_mass = float(header.split("=", 1)[1])
        except ValueError as exc:
            raise TraceFormatError(f"{path}:1: bad mass header {header!r}") from exc
        skip = 1
    else:
        file_mass, skip = None, 0

    mass = mass if mass is not None else file_mass
    if mass is None:
        raise TraceFormatError(f"{path}: no mass_kg header and no mass given")

    try:
        df = pd.read_csv(path, skiprows=skip)
    except pd.errors.EmptyDataError as exc:
        raise TraceFormatError(f"{path}: no samples") from exc
    if not {"t_s", "r_m"} <= set(df.columns):
        raise TraceFormatError(f"{path}: expected columns t_s, r_m, got {list(df.columns)}")
    return OscillationTrace(
        times=df["t_s"].to_numpy(dtype=float),
        positions=df["r_m"].to_numpy(dtype=float),
        mass=float(mass),
    )


def write_trace(trace: OscillationTrace, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({"t_s": trace.times, "r_m": trace.positions})
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"mass_kg={trace.mass:g}\n")
        df.to_csv(f, index=False, float_format="%.12g", lineterminator="\n")
    return path


def fit_summary(fit: OscillatorFit) -> dict:
    return {
        "amplitude_m": fit.amplitude,
        "alpha_1_s2": fit.alpha,
        "beta_1_s": fit.beta,
        "phase_rad": fit.phase,
        "offset_m": fit.offset,
        "mass_kg": fit.mass,
        "k_g_N_m": fit.ground_stiffness,
        "d_g_Ns_m": fit.ground_damping,
        "residual_rms_m": fit.residual_rms,
        "r2": fit.r_squared,
        "accepted": fit.accepted,
        "min_r2": fit.min_r_squared,
        "evaluations": fit.evaluations,
    }


def append_calibration_row(path: Path, fit: OscillatorFit, gains: PdGains | None = None) -> pd.DataFrame:
    row = pd.DataFrame(
        [
            {
                "Kp": gains.kp if gains else float("nan"),
                "Kd": gains.kd if gains else float("nan"),
                "kg_N_m": fit.ground_stiffness,
                "dg_Ns_m": fit.ground_damping,
                "r2": fit.r_squared,
            }
        ],
        columns=CALIBRATION_COLUMNS,
    )
    path = Path(path)
    table = pd.concat([pd.read_csv(path), row], ignore_index=True) if path.exists() else row
    write_csv(table, path)
    return table
