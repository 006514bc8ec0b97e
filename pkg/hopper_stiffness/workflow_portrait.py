# hopper_stiffness/workflow_portrait.py

from pathlib import Path
from typing import List, Optional, Tuple, TypedDict

from langgraph.graph import END, StateGraph
from loguru import logger
from tqdm import tqdm

from hopper_stiffness.dataset import portrait_frame, write_csv, write_json
from hopper_stiffness.episode import EpisodeOutcome, EpisodeTrajectory, run_episode
from hopper_stiffness.plots import plot_phase_portrait
from hopper_stiffness.run_config import RunConfig, load_run_config

# steady apex means from different drop heights must agree within this (m)
LIMIT_CYCLE_TOL = 1e-4


# ======================================================
# Graph State
# ======================================================
class PortraitState(TypedDict, total=False):
    config_path: Optional[str]
    output_dir: Optional[str]
    progress: bool

    run_config: RunConfig
    # one entry per configured drop, in order; repeated heights stay separate
    outcomes: List[Tuple[float, EpisodeOutcome]]
    runs: List[Tuple[float, EpisodeTrajectory]]
    files: List[str]


# ======================================================
# Nodes
# ======================================================
def load_config_node(state: PortraitState) -> PortraitState:
    cfg = load_run_config(state.get("config_path"))
    if state.get("output_dir"):
        cfg = cfg.model_copy(update={"output_dir": Path(state["output_dir"])})
    state["run_config"] = cfg
    return state


def simulate_drops_node(state: PortraitState) -> PortraitState:
    cfg = state["run_config"]
    heights = cfg.portrait.drop_heights
    orbits = cfg.portrait.orbits
    logger.info(f"Simulating {len(heights)} drop heights for the phase portrait ({orbits} orbits each)")

    outcomes, runs = [], []
    for height in tqdm(heights, desc="drop heights", disable=not state.get("progress", True)):
        episode = cfg.episode.model_copy(update={"keep_trajectory": True, "drop_height": height})
        outcome = run_episode(cfg.hopper, cfg.ground, cfg.energy, episode, cfg.integrator)
        outcomes.append((height, outcome))
        if outcome.trajectory is not None:
            runs.append((height, outcome.trajectory.last_hops(orbits)))
        logger.debug(f"drop {height:g} m: {outcome.status.value}, apex {outcome.apex_mean}")

    state["outcomes"] = outcomes
    state["runs"] = runs
    return state


def check_convergence_node(state: PortraitState) -> PortraitState:
    apexes = [o.apex_mean for _, o in state["outcomes"] if o.succeeded]
    if len(apexes) < len(state["outcomes"]):
        logger.warning("Some drop heights did not reach steady hopping")
    if apexes:
        spread = max(apexes) - min(apexes)
        if spread > LIMIT_CYCLE_TOL:
            logger.warning(f"Steady apex spread {spread * 1000:.4f} mm across drop heights")
        else:
            logger.info(f"All drop heights settle on one limit cycle (spread {spread * 1000:.2e} mm)")
    return state


def persist_node(state: PortraitState) -> PortraitState:
    cfg = state["run_config"]
    out = Path(cfg.output_dir)

    files = []
    if state["runs"]:
        files.append(write_csv(portrait_frame(state["runs"]), out / "portrait.csv"))
        files.append(plot_phase_portrait(state["runs"], out / "portrait.svg"))
    summary = {
        "orbits": cfg.portrait.orbits,
        "drops": [
            {
                "drop_height_m": height,
                "status": outcome.status.value,
                "apex_mean_mm": None if outcome.apex_mean is None else outcome.apex_mean * 1000.0,
                "hop_count": len(outcome.hops),
            }
            for height, outcome in state["outcomes"]
        ],
    }
    files.append(write_json(summary, out / "portrait_summary.json"))

    state["files"] = [str(f) for f in files]
    return state


# ======================================================
# Build LangGraph
# ======================================================
def build_portrait_workflow():
    graph = StateGraph(PortraitState)

    graph.add_node("load_config", load_config_node)
    graph.add_node("simulate_drops", simulate_drops_node)
    graph.add_node("check_convergence", check_convergence_node)
    graph.add_node("persist", persist_node)

    graph.set_entry_point("load_config")
    graph.add_edge("load_config", "simulate_drops")
    graph.add_edge("simulate_drops", "check_convergence")
    graph.add_edge("check_convergence", "persist")
    graph.add_edge("persist", END)

    return graph.compile()
