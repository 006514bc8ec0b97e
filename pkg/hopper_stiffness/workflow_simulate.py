# hopper_stiffness/workflow_simulate.py

from pathlib import Path
from typing import List, Optional, TypedDict

from langgraph.graph import END, StateGraph
from loguru import logger

from hopper_stiffness.dataset import energy_frame, episode_summary, trajectory_frame, write_csv
from hopper_stiffness.dataset import write_json
from hopper_stiffness.episode import EpisodeOutcome, HopEnergy, energy_audit, run_episode
from hopper_stiffness.run_config import RunConfig, load_run_config


# ======================================================
# Graph State
# ======================================================
class SimulateState(TypedDict, total=False):
    config_path: Optional[str]
    output_dir: Optional[str]

    run_config: RunConfig
    outcome: EpisodeOutcome
    audit: List[HopEnergy]
    files: List[str]


# ======================================================
# Nodes
# ======================================================
def load_config_node(state: SimulateState) -> SimulateState:
    cfg = load_run_config(state.get("config_path"))
    if state.get("output_dir"):
        cfg = cfg.model_copy(update={"output_dir": Path(state["output_dir"])})
    state["run_config"] = cfg
    return state


def simulate_node(state: SimulateState) -> SimulateState:
    cfg = state["run_config"]
    episode = cfg.episode.model_copy(update={"keep_trajectory": True})

    logger.info(
        f"Simulating k_l={cfg.hopper.leg_stiffness:g}, d_l={cfg.hopper.leg_damping:g}, "
        f"k_g={cfg.ground.ground_stiffness:g}, d_g={cfg.ground.ground_damping:g}, "
        f"E_in={cfg.energy.input_energy:g} J"
    )
    outcome = run_episode(cfg.hopper, cfg.ground, cfg.energy, episode, cfg.integrator)
    logger.info(f"Episode finished: {outcome.status.value} after {len(outcome.hops)} hops")
    if outcome.failure_reason:
        logger.warning(outcome.failure_reason)

    state["outcome"] = outcome
    return state


def audit_node(state: SimulateState) -> SimulateState:
    cfg = state["run_config"]
    outcome = state["outcome"]
    if outcome.trajectory is None:
        state["audit"] = []
        return state

    audit = energy_audit(outcome.trajectory, cfg.hopper, cfg.ground, cfg.episode.gravity)
    worst = max((abs(e.balance_residual) for e in audit), default=0.0)
    logger.debug(f"Energy audit over {len(audit)} hops, worst balance residual {worst:.3e} J")
    state["audit"] = audit
    return state


def persist_node(state: SimulateState) -> SimulateState:
    cfg = state["run_config"]
    out = Path(cfg.output_dir)
    outcome = state["outcome"]

    files = []
    if outcome.trajectory is not None:
        files.append(write_csv(trajectory_frame(outcome.trajectory), out / "trajectory.csv"))
    files.append(write_csv(energy_frame(state["audit"]), out / "energy_audit.csv"))
    summary = episode_summary(outcome, state["audit"], cfg.episode.steady_window)
    files.append(write_json(summary, out / "summary.json"))

    state["files"] = [str(f) for f in files]
    return state


# ======================================================
# Build LangGraph
# ======================================================
def build_simulate_workflow():
    graph = StateGraph(SimulateState)

    graph.add_node("load_config", load_config_node)
    graph.add_node("simulate", simulate_node)
    graph.add_node("energy_audit", audit_node)
    graph.add_node("persist", persist_node)

    graph.set_entry_point("load_config")
    graph.add_edge("load_config", "simulate")
    graph.add_edge("simulate", "energy_audit")
    graph.add_edge("energy_audit", "persist")
    graph.add_edge("persist", END)

    return graph.compile()
