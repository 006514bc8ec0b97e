# hopper_stiffness/cli.py
"""Command-line front end.

Exit codes: 0 success, 1 no steady state (simulate), 2 config or input error,
3 numerical failure, 4 failed lift-off, 5 fit failure.
"""

from pathlib import Path
import sys
from typing import Optional

from loguru import logger
import typer

from hopper_stiffness.dataset import read_winner_map, write_trace
from hopper_stiffness.emulator import PdGains, synthesize_trace
from hopper_stiffness.episode import EpisodeStatus
from hopper_stiffness.errors import DegenerateTrace, FitError, HopperValueError, IntegrationError
from hopper_stiffness.model import GroundProfile
from hopper_stiffness.run_config import load_run_config
from hopper_stiffness.sweep import select_stiffness
from hopper_stiffness.workflow_fit import build_fit_workflow
from hopper_stiffness.workflow_portrait import build_portrait_workflow
from hopper_stiffness.workflow_simulate import build_simulate_workflow
from hopper_stiffness.workflow_sweep import build_sweep_workflow

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FAILED_LIFTOFF = 4
EXIT_FIT = 5

STATUS_EXIT = {
    EpisodeStatus.STEADY_HOPPING: EXIT_OK,
    EpisodeStatus.NO_CONVERGENCE: EXIT_NO_CONVERGENCE,
    EpisodeStatus.NUMERICAL_FAILURE: EXIT_NUMERICAL,
    EpisodeStatus.FAILED_LIFTOFF: EXIT_FAILED_LIFTOFF,
}

app = typer.Typer(add_completion=False, help="Two-mass hopper simulation and ground-stiffness sweeps.")

_options = {"quiet": False, "config": None, "out": None, "threads": None, "seed": None}

ConfigOption = typer.Option(None, "--config", "-c", help="YAML run configuration")
OutOption = typer.Option(None, "--out", "-o", help="Output directory")


def _progress() -> bool:
    return not _options["quiet"] and sys.stderr.isatty()


def _pick(value, key: str):
    """Command-level option, falling back to the global one."""
    return value if value is not None else _options[key]


def _invoke(graph, inputs: dict) -> dict:
    try:
        return graph.invoke(inputs)
    except (FitError, DegenerateTrace) as exc:
        logger.error(f"fit failed: {exc}")
        raise typer.Exit(code=EXIT_FIT)
    except (HopperValueError, FileNotFoundError) as exc:
        logger.error(str(exc))
        raise typer.Exit(code=EXIT_CONFIG)
    except IntegrationError as exc:
        logger.error(f"numerical failure: {exc}")
        raise typer.Exit(code=EXIT_NUMERICAL)


@app.callback()
def main(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML run configuration for every command"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory for every command"),
    threads: Optional[int] = typer.Option(None, "--threads", "-j", min=1, help="Sweep worker processes"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="RNG seed for synthetic data"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only log warnings and errors"),
):
    _options.update(quiet=quiet, config=config, out=out, threads=threads, seed=seed)
    if quiet:
        logger.remove()
        logger.add(sys.stderr, level="WARNING")


@app.command()
def simulate(config: Optional[Path] = ConfigOption, out: Optional[Path] = OutOption):
    """Run one episode and write trajectory.csv and summary.json."""
    state = _invoke(
        build_simulate_workflow(),
        {"config_path": _pick(config, "config"), "output_dir": _pick(out, "out")},
    )
    status = state["outcome"].status
    logger.success(f"{status.value}; wrote {len(state['files'])} files")
    raise typer.Exit(code=STATUS_EXIT[status])


@app.command()
def sweep(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = typer.Option(None, "--threads", "-j", min=1, help="Worker processes"),
):
    """Grid search over ground profiles, leg stiffness, leg damping and input energy."""
    state = _invoke(
        build_sweep_workflow(),
        {
            "config_path": _pick(config, "config"),
            "output_dir": _pick(out, "out"),
            "workers": _pick(threads, "threads"),
            "progress": _progress(),
        },
    )
    logger.success(f"Sweep complete; wrote {len(state['files'])} files")


@app.command()
def portrait(config: Optional[Path] = ConfigOption, out: Optional[Path] = OutOption):
    """Body phase portrait over several drop heights."""
    state = _invoke(
        build_portrait_workflow(),
        {"config_path": _pick(config, "config"), "output_dir": _pick(out, "out"), "progress": _progress()},
    )
    statuses = {o.status for _, o in state["outcomes"]}
    logger.success(f"Portrait complete; wrote {len(state['files'])} files")
    for status in (EpisodeStatus.NUMERICAL_FAILURE, EpisodeStatus.FAILED_LIFTOFF):
        if status in statuses:
            raise typer.Exit(code=STATUS_EXIT[status])


@app.command()
def fit(
    trace: Path = typer.Argument(..., help="Trace CSV (mass_kg header, t_s and r_m columns)"),
    mass: Optional[float] = typer.Option(None, "--mass", "-m", help="Test mass (kg), overrides the header"),
    kp: Optional[float] = typer.Option(None, "--kp", help="Proportional gain used for this trace"),
    kd: Optional[float] = typer.Option(None, "--kd", help="Derivative gain used for this trace"),
    trim: bool = typer.Option(False, "--trim", help="Drop samples before the release point"),
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
):
    """Fit an underdamped oscillator to a drop-test trace."""
    if not trace.exists():
        logger.error(f"trace file not found: {trace}")
        raise typer.Exit(code=EXIT_CONFIG)
    gains = PdGains(kp=kp, kd=kd) if kp is not None and kd is not None else None
    state = _invoke(
        build_fit_workflow(),
        {
            "config_path": _pick(config, "config"),
            "output_dir": _pick(out, "out"),
            "trace_path": str(trace),
            "mass": mass,
            "gains": gains,
            "trim": trim,
        },
    )
    result = state["fit"]
    typer.echo(
        f"k_g={result.ground_stiffness:.6g} N/m d_g={result.ground_damping:.6g} Ns/m "
        f"R2={result.r_squared:.6f} accepted={result.accepted}"
    )
    logger.success(f"Fit complete; wrote {len(state['files'])} files")


@app.command()
def select(
    winner_map: Path = typer.Argument(..., help="winner_map_*.csv written by sweep"),
    kg: float = typer.Option(..., "--kg", help="Ground stiffness (N/m)"),
    dg: float = typer.Option(..., "--dg", help="Ground damping (Ns/m)"),
):
    """Print the leg stiffness to use on a given ground."""
    try:
        winners = read_winner_map(winner_map)
        stiffness = select_stiffness(winners, GroundProfile(ground_stiffness=kg, ground_damping=dg))
    except (HopperValueError, FileNotFoundError, ValueError) as exc:
        logger.error(str(exc))
        raise typer.Exit(code=EXIT_CONFIG)
    typer.echo(f"{stiffness:g}")


@app.command("synth-trace")
def synth_trace(
    out: Path = typer.Argument(..., help="Trace CSV to write"),
    kg: float = typer.Option(2400.0, "--kg", help="Ground stiffness (N/m)"),
    dg: float = typer.Option(16.0, "--dg", help="Ground damping (Ns/m)"),
    mass: float = typer.Option(2.0, "--mass", "-m", help="Test mass (kg)"),
    amplitude: float = typer.Option(0.02, "--amplitude", help="Initial amplitude (m)"),
    noise: float = typer.Option(0.0, "--noise", help="Gaussian noise std (m)"),
    duration: float = typer.Option(1.0, "--duration", help="Trace length (s)"),
    samples: int = typer.Option(1000, "--samples", help="Sample count"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Noise RNG seed (default: the config's seed)"),
    config: Optional[Path] = ConfigOption,
):
    """Write a synthetic drop-test trace for the given ground."""
    try:
        seed = _pick(seed, "seed")
        if seed is None:
            seed = load_run_config(_pick(config, "config")).seed
        trace = synthesize_trace(
            kg, dg, mass, amplitude=amplitude, duration=duration, samples=samples, noise_std=noise, seed=seed
        )
    except (HopperValueError, FitError) as exc:
        logger.error(str(exc))
        raise typer.Exit(code=EXIT_CONFIG)
    write_trace(trace, out)
    logger.success(f"Wrote {len(trace)} samples to {out} (seed {seed})")


if __name__ == "__main__":
    app()
