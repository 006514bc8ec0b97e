# hopper_stiffness/workflow_sweep.py

from pathlib import Path
from typing import List, Optional, TypedDict

from langgraph.graph import END, StateGraph
from loguru import logger
import pandas as pd

from hopper_stiffness.dataset import success_region_frame, success_region_name, sweep_frame
from hopper_stiffness.dataset import trend_violation_frame, winner_map_frame, winner_map_name
from hopper_stiffness.dataset import write_csv
from hopper_stiffness.plots import plot_apex_heatmaps, plot_success_regions, plot_winner_map
from hopper_stiffness.run_config import RunConfig, load_run_config
from hopper_stiffness.sweep import SuccessRegion, SweepResult, WinnerMap, best_stiffness_map
from hopper_stiffness.sweep import mean_apex_by_leg_damping, run_sweep, success_region
from hopper_stiffness.sweep import trend_violations


# ======================================================
# Graph State
# ======================================================
class SweepState(TypedDict, total=False):
    config_path: Optional[str]
    output_dir: Optional[str]
    workers: Optional[int]
    progress: bool

    run_config: RunConfig
    result: SweepResult
    winner_maps: List[WinnerMap]
    regions: List[SuccessRegion]
    trends: pd.DataFrame
    files: List[str]


# ======================================================
# Nodes
# ======================================================
def load_config_node(state: SweepState) -> SweepState:
    cfg = load_run_config(state.get("config_path"))
    update = {}
    if state.get("output_dir"):
        update["output_dir"] = Path(state["output_dir"])
    if state.get("workers"):
        update["sweep"] = cfg.sweep.model_copy(update={"workers": state["workers"]})
    state["run_config"] = cfg.model_copy(update=update) if update else cfg
    return state


def run_sweep_node(state: SweepState) -> SweepState:
    spec = state["run_config"].sweep
    state["result"] = run_sweep(spec, progress=state.get("progress", True))
    return state


def summarize_node(state: SweepState) -> SweepState:
    result = state["result"]
    spec = result.spec

    state["winner_maps"] = [
        best_stiffness_map(result, leg_damping=d_l, energy=energy)
        for d_l in spec.leg_damping
        for energy in spec.energies
    ]
    state["regions"] = [success_region(result, energy) for energy in spec.energies]
    for smaller, larger in zip(state["regions"], state["regions"][1:]):
        if not smaller.issubset(larger):
            logger.warning(f"Success region at {smaller.energy:g} J is not inside {larger.energy:g} J")

    frames = []
    for d_l in spec.leg_damping:
        for energy in spec.energies:
            found = trend_violations(result, d_l, energy, slack=spec.episode.steady_std_tol)
            if found:
                logger.warning(f"{len(found)} apex trend violations at d_l={d_l:g}, E_in={energy:g}")
            frame = trend_violation_frame(found)
            frame.insert(0, "E_in_J", energy)
            frame.insert(0, "d_l_Ns_m", d_l)
            frames.append(frame)
    state["trends"] = pd.concat(frames, ignore_index=True)

    for energy in spec.energies:
        means = mean_apex_by_leg_damping(result, energy)
        text = ", ".join(f"d_l={d_l:g}: {m * 1000:.3f} mm" for d_l, m in means.items())
        logger.info(f"Mean apex at E_in={energy:g} J: {text}")
    return state


def persist_node(state: SweepState) -> SweepState:
    out = Path(state["run_config"].output_dir)
    result = state["result"]

    files = [write_csv(sweep_frame(result), out / "sweep.csv")]
    for winner_map in state["winner_maps"]:
        name = winner_map_name(winner_map.leg_damping, winner_map.energy)
        files.append(write_csv(winner_map_frame(winner_map), out / name))
    for region in state["regions"]:
        files.append(write_csv(success_region_frame(region), out / success_region_name(region.energy)))
    files.append(write_csv(state["trends"], out / "trend_violations.csv"))

    state["files"] = [str(f) for f in files]
    return state


def render_node(state: SweepState) -> SweepState:
    out = Path(state["run_config"].output_dir) / "figures"
    result = state["result"]

    files = []
    for winner_map in state["winner_maps"]:
        stem = f"dl{winner_map.leg_damping:g}_E{winner_map.energy:g}"
        files.append(
            plot_apex_heatmaps(result, winner_map.leg_damping, winner_map.energy, out / f"apex_{stem}.svg")
        )
        files.append(plot_winner_map(winner_map, out / f"winner_map_{stem}.svg"))
    files.append(plot_success_regions(state["regions"], out / "success_regions.svg"))

    state["files"] = state["files"] + [str(f) for f in files]
    logger.info(f"Wrote {len(state['files'])} sweep artifacts to {out.parent}")
    return state


# ======================================================
# Build LangGraph
# ======================================================
def build_sweep_workflow():
    graph = StateGraph(SweepState)

    graph.add_node("load_config", load_config_node)
    graph.add_node("run_sweep", run_sweep_node)
    graph.add_node("summarize", summarize_node)
    graph.add_node("persist", persist_node)
    graph.add_node("render", render_node)

    graph.set_entry_point("load_config")
    graph.add_edge("load_config", "run_sweep")
    graph.add_edge("run_sweep", "summarize")
    graph.add_edge("summarize", "persist")
    graph.add_edge("persist", "render")
    graph.add_edge("render", END)

    return graph.compile()
