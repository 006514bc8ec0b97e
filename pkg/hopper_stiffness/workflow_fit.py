# hopper_stiffness/workflow_fit.py

from pathlib import Path
from typing import List, Optional, TypedDict

from langgraph.graph import END, StateGraph
from loguru import logger

from hopper_stiffness.dataset import append_calibration_row, fit_summary, read_trace, write_json
from hopper_stiffness.emulator import OscillationTrace, OscillatorFit, PdGains, fit_oscillator
from hopper_stiffness.emulator import trim_to_release
from hopper_stiffness.plots import plot_oscillator_fit
from hopper_stiffness.run_config import RunConfig, load_run_config


# ======================================================
# Graph State
# ======================================================
class FitState(TypedDict, total=False):
    config_path: Optional[str]
    output_dir: Optional[str]
    trace_path: str
    mass: Optional[float]
    gains: Optional[PdGains]
    trim: bool

    run_config: RunConfig
    trace: OscillationTrace
    fit: OscillatorFit
    files: List[str]


# ======================================================
# Nodes
# ======================================================
def load_trace_node(state: FitState) -> FitState:
    cfg = load_run_config(state.get("config_path"))
    if state.get("output_dir"):
        cfg = cfg.model_copy(update={"output_dir": Path(state["output_dir"])})
    state["run_config"] = cfg

    trace = read_trace(Path(state["trace_path"]), state.get("mass"))
    if state.get("trim"):
        trace = trim_to_release(trace)
    logger.info(f"Loaded {len(trace)} samples from {state['trace_path']} (m_w = {trace.mass:g} kg)")
    state["trace"] = trace
    return state


def fit_node(state: FitState) -> FitState:
    fit = fit_oscillator(state["trace"], cfg=state["run_config"].fit)
    if not fit.accepted:
        logger.warning(f"Fit R^2 = {fit.r_squared:.4f} is below the acceptance bar")
    state["fit"] = fit
    return state


def persist_node(state: FitState) -> FitState:
    cfg = state["run_config"]
    out = Path(cfg.output_dir)
    stem = Path(state["trace_path"]).stem

    files = [
        write_json(fit_summary(state["fit"]), out / f"fit_{stem}.json"),
        plot_oscillator_fit(state["trace"], state["fit"], out / "figures" / f"fit_{stem}.svg", cfg.fit.gravity),
    ]
    calibration = out / "calibration.csv"
    append_calibration_row(calibration, state["fit"], state.get("gains"))
    files.append(calibration)

    state["files"] = [str(f) for f in files]
    return state


# ======================================================
# Build LangGraph
# ======================================================
def build_fit_workflow():
    graph = StateGraph(FitState)

    graph.add_node("load_trace", load_trace_node)
    graph.add_node("fit_oscillator", fit_node)
    graph.add_node("persist", persist_node)

    graph.set_entry_point("load_trace")
    graph.add_edge("load_trace", "fit_oscillator")
    graph.add_edge("fit_oscillator", "persist")
    graph.add_edge("persist", END)

    return graph.compile()
