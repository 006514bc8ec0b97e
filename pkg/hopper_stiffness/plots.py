# hopper_stiffness/plots.py
"""Static SVG figures. Failed cells are left blank."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib.colors import ListedColormap  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from hopper_stiffness.emulator import OscillationTrace, OscillatorFit, oscillator_signal  # noqa: E402
from hopper_stiffness.episode import EpisodeTrajectory  # noqa: E402
from hopper_stiffness.model import V_B, X_B  # noqa: E402
from hopper_stiffness.sweep import SuccessRegion, SweepResult, WinnerMap  # noqa: E402

# fixed element ids so repeated runs write identical files
plt.rcParams["svg.hashsalt"] = "hopper-stiffness"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _grid_extent(k_axis: np.ndarray, d_axis: np.ndarray) -> list[float]:
    dk = k_axis[1] - k_axis[0] if k_axis.size > 1 else 1.0
    dd = d_axis[1] - d_axis[0] if d_axis.size > 1 else 1.0
    return [d_axis[0] - dd / 2, d_axis[-1] + dd / 2, k_axis[0] - dk / 2, k_axis[-1] + dk / 2]


def plot_apex_heatmaps(result: SweepResult, leg_damping: float, energy: float, path: Path) -> Path:
    """One panel per leg stiffness: steady apex (mm) over the ground grid."""
    spec = result.spec
    k_axis, d_axis = spec.ground_stiffness.values(), spec.ground_damping.values()
    cells = result.cells_for(leg_damping, energy)

    grids = {k_l: np.full((k_axis.size, d_axis.size), np.nan) for k_l in spec.leg_stiffness}
    for cell in cells:
        i = int(np.argmin(np.abs(k_axis - cell.ground.ground_stiffness)))
        j = int(np.argmin(np.abs(d_axis - cell.ground.ground_damping)))
        for outcome in cell.outcomes:
            if outcome.succeeded:
                grids[outcome.leg_stiffness][i, j] = outcome.apex_mean * 1000.0

    finite = np.concatenate([g[np.isfinite(g)] for g in grids.values()] + [np.array([0.0])])
    vmin, vmax = float(finite.min()), float(finite.max())
    if vmax <= vmin:
        vmax = vmin + 1.0

    fig, axes = plt.subplots(1, len(grids), figsize=(4 * len(grids), 4), squeeze=False)
    for ax, (k_l, grid) in zip(axes[0], grids.items()):
        im = ax.imshow(
            np.ma.masked_invalid(grid),
            origin="lower",
            aspect="auto",
            cmap="viridis",
            vmin=vmin,
            vmax=vmax,
            extent=_grid_extent(k_axis, d_axis),
        )
        ax.set_title(f"k_l = {k_l:g} N/m")
        ax.set_xlabel("d_g (Ns/m)")
        ax.set_ylabel("k_g (N/m)")
    fig.colorbar(im, ax=axes[0].tolist(), label="apex height (mm)")
    fig.suptitle(f"Average apex height, d_l = {leg_damping:g} Ns/m, E_in = {energy:g} J")
    return _save(fig, path)


def plot_winner_map(winner_map: WinnerMap, path: Path) -> Path:
    k_axis, d_axis = winner_map.ground_stiffness, winner_map.ground_damping
    labels = sorted({w for w in winner_map.winners.values() if w})
    code = {w: n for n, w in enumerate(labels)}

    grid = np.full((k_axis.size, d_axis.size), np.nan)
    for i, k_g in enumerate(k_axis):
        for j, d_g in enumerate(d_axis):
            winners = winner_map.winners_at(k_g, d_g)
            if winners:
                grid[i, j] = code[winners]

    colors = plt.get_cmap("tab10").colors[: max(len(labels), 1)]
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.imshow(
        np.ma.masked_invalid(grid),
        origin="lower",
        aspect="auto",
        cmap=ListedColormap(colors),
        vmin=-0.5,
        vmax=max(len(labels), 1) - 0.5,
        extent=_grid_extent(k_axis, d_axis),
    )
    handles = [
        Patch(color=colors[code[w]], label=" / ".join(f"{k:g}" for k in w)) for w in labels
    ]
    ax.legend(handles=handles, title="best k_l (N/m)", loc="upper left", bbox_to_anchor=(1.02, 1.0))
    ax.set_xlabel("d_g (Ns/m)")
    ax.set_ylabel("k_g (N/m)")
    ax.set_title(f"Best leg stiffness, d_l = {winner_map.leg_damping:g}, E_in = {winner_map.energy:g} J")
    fig.tight_layout()
    return _save(fig, path)


def plot_success_regions(regions: list[SuccessRegion], path: Path) -> Path:
    """Cells coloured by the lowest energy at which some leg stiffness hops steadily."""
    regions = sorted(regions, key=lambda r: r.energy)
    k_axis, d_axis = regions[0].ground_stiffness, regions[0].ground_damping

    grid = np.full((k_axis.size, d_axis.size), np.nan)
    for n, region in reversed(list(enumerate(regions))):
        grid[region.grid] = n

    colors = plt.get_cmap("Blues")(np.linspace(0.9, 0.35, len(regions)))
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.imshow(
        np.ma.masked_invalid(grid),
        origin="lower",
        aspect="auto",
        cmap=ListedColormap(colors),
        vmin=-0.5,
        vmax=len(regions) - 0.5,
        extent=_grid_extent(k_axis, d_axis),
    )
    handles = [Patch(color=colors[n], label=f"{r.energy:g} J") for n, r in enumerate(regions)]
    ax.legend(handles=handles, title="E_in", loc="upper left", bbox_to_anchor=(1.02, 1.0))
    ax.set_xlabel("d_g (Ns/m)")
    ax.set_ylabel("k_g (N/m)")
    ax.set_title(f"Successful hopping region, d_l = {regions[0].leg_damping:g} Ns/m")
    fig.tight_layout()
    return _save(fig, path)


def plot_phase_portrait(runs: list[tuple[float, EpisodeTrajectory]], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    for drop_height, trajectory in runs:
        ax.plot(
            trajectory.states[:, X_B] * 1000.0,
            trajectory.states[:, V_B],
            linewidth=0.8,
            label=f"drop {drop_height * 1000:g} mm",
        )
    ax.set_xlabel("body position (mm)")
    ax.set_ylabel("body velocity (m/s)")
    ax.set_title("Body phase portrait")
    ax.legend(fontsize="small")
    ax.grid(True, linewidth=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_oscillator_fit(trace: OscillationTrace, fit: OscillatorFit, path: Path, g: float) -> Path:
    t = trace.times - trace.times[0]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, trace.positions * 1000.0, ".", markersize=2, label="trace")
    model = oscillator_signal(trace.times, fit.amplitude, fit.alpha, fit.beta, fit.phase, g)
    model = model + (fit.offset + g / fit.alpha)
    ax.plot(t, model * 1000.0, linewidth=1.0, label=f"fit (R^2 = {fit.r_squared:.4f})")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("ground position (mm)")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
