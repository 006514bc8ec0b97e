# hopper_stiffness/sweep.py
"""Grid search over ground profiles x leg stiffness (x leg damping x input energy).

Every combination is one independent episode. Cells are enumerated in a fixed
order (leg damping, energy, ground stiffness, ground damping, leg stiffness)
and results are assembled by that index, so serial and pooled runs agree.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import math
import os

from loguru import logger
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt
from pydantic import model_validator
from tqdm import tqdm

from hopper_stiffness.config import DEFAULT_WORKERS
from hopper_stiffness.episode import EpisodeConfig, EpisodeStatus, run_episode
from hopper_stiffness.errors import EmptyCell, HopperValueError, OutOfDomain, UnknownEnergyLevel
from hopper_stiffness.errors import UnreachableCell
from hopper_stiffness.integrator import IntegratorConfig
from hopper_stiffness.model import EnergyBudget, GroundProfile, HopperParams

_MATCH_TOL = 1e-9


# ======================================================
# Sweep specification
# ======================================================
class GridRange(BaseModel):
    """Inclusive ``start:step:end`` range, or an explicit list of ``points``."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    start: float | None = None
    step: PositiveFloat | None = None
    end: float | None = None
    points: list[float] | None = Field(default=None, min_length=1)

    @model_validator(mode="after")
    def _ordered(self) -> "GridRange":
        bounds = (self.start, self.step, self.end)
        if self.points is not None:
            if any(b is not None for b in bounds):
                raise ValueError("give either points or start/step/end, not both")
            if any(b <= a for a, b in zip(self.points, self.points[1:])):
                raise ValueError(f"grid points must be strictly increasing: {self.points}")
            return self
        if any(b is None for b in bounds):
            raise ValueError("a range needs start, step and end")
        if self.end < self.start:
            raise ValueError(f"range end {self.end} is below start {self.start}")
        return self

    def values(self) -> np.ndarray:
        if self.points is not None:
            return np.round(np.asarray(self.points, dtype=float), 9)
        count = int(math.floor((self.end - self.start) / self.step + 1e-9)) + 1
        return np.round(self.start + self.step * np.arange(count), 9)


class SweepSpec(BaseModel):
    """Reference simulation grids by default: 16 x 13 ground profiles."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    hopper: HopperParams = HopperParams()
    leg_stiffness: list[PositiveFloat] = Field(default=[3000.0, 4000.0, 5000.0], min_length=1)
    leg_damping: list[NonNegativeFloat] = Field(default=[30.0, 35.0, 40.0], min_length=1)
    ground_stiffness: GridRange = GridRange(start=2400.0, step=200.0, end=5400.0)
    ground_damping: GridRange = GridRange(start=15.0, step=5.0, end=75.0)
    energies: list[PositiveFloat] = Field(default=[1.0, 1.56, 2.25], min_length=1)
    tie_threshold: NonNegativeFloat = 0.001
    reference_leg_damping: NonNegativeFloat = 35.0
    # drop a ground profile from the comparison when any leg stiffness fails on it
    discard_incomplete: bool = False
    episode: EpisodeConfig = EpisodeConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    workers: PositiveInt = DEFAULT_WORKERS

    def ground_profiles(self) -> list[GroundProfile]:
        return [
            GroundProfile(ground_stiffness=float(k_g), ground_damping=float(d_g))
            for k_g in self.ground_stiffness.values()
            for d_g in self.ground_damping.values()
        ]


# ======================================================
# Results
# ======================================================
@dataclass(frozen=True)
class CellOutcome:
    leg_stiffness: float
    status: EpisodeStatus
    apex_mean: float | None
    apex_std: float | None
    hop_count: int
    failure_reason: str | None = None

    @property
    def succeeded(self) -> bool:
        return self.status is EpisodeStatus.STEADY_HOPPING


@dataclass(frozen=True)
class CellResult:
    ground: GroundProfile
    leg_damping: float
    energy: float
    outcomes: tuple[CellOutcome, ...]
    winners: tuple[float, ...]
    discarded: bool = False

    @property
    def reachable(self) -> bool:
        return bool(self.winners)

    def outcome_for(self, leg_stiffness: float) -> CellOutcome:
        for outcome in self.outcomes:
            if math.isclose(outcome.leg_stiffness, leg_stiffness, abs_tol=_MATCH_TOL):
                return outcome
        raise KeyError(leg_stiffness)


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    cells: tuple[CellResult, ...]

    def cells_for(self, leg_damping: float, energy: float) -> list[CellResult]:
        if not any(math.isclose(e, energy, abs_tol=_MATCH_TOL) for e in self.spec.energies):
            raise UnknownEnergyLevel(f"sweep did not run at E_in={energy} J")
        if not any(math.isclose(d, leg_damping, abs_tol=_MATCH_TOL) for d in self.spec.leg_damping):
            raise HopperValueError(f"sweep did not run at d_l={leg_damping} Ns/m")
        return [
            cell
            for cell in self.cells
            if math.isclose(cell.energy, energy, abs_tol=_MATCH_TOL)
            and math.isclose(cell.leg_damping, leg_damping, abs_tol=_MATCH_TOL)
        ]


@dataclass(frozen=True)
class WinnerMap:
    ground_stiffness: np.ndarray
    ground_damping: np.ndarray
    leg_damping: float
    energy: float
    winners: dict[tuple[float, float], tuple[float, ...]]

    def winners_at(self, k_g: float, d_g: float) -> tuple[float, ...]:
        return self.winners[(round(float(k_g), 9), round(float(d_g), 9))]


@dataclass(frozen=True)
class SuccessRegion:
    energy: float
    leg_damping: float
    ground_stiffness: np.ndarray
    ground_damping: np.ndarray
    grid: np.ndarray  # bool, shape (len(ground_stiffness), len(ground_damping))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.grid))

    def issubset(self, other: "SuccessRegion") -> bool:
        return bool(np.all(~self.grid | other.grid))


@dataclass(frozen=True)
class TrendViolation:
    axis: str
    leg_stiffness: float
    ground_stiffness: float
    ground_damping: float
    apex_before: float
    apex_after: float


# ======================================================
# Running the sweep
# ======================================================
def _init_worker():
    # one BLAS thread per process
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def _run_cell(
    item: tuple[HopperParams, GroundProfile, float, EpisodeConfig, IntegratorConfig],
) -> CellOutcome:
    hopper, ground, energy, episode, integrator = item
    try:
        outcome = run_episode(hopper, ground, EnergyBudget(input_energy=energy), episode, integrator)
    except Exception as exc:  # a broken cell must not abort the sweep
        logger.warning(f"cell {ground} k_l={hopper.leg_stiffness} failed: {exc}")
        return CellOutcome(hopper.leg_stiffness, EpisodeStatus.NUMERICAL_FAILURE, None, None, 0, str(exc))
    return CellOutcome(
        leg_stiffness=hopper.leg_stiffness,
        status=outcome.status,
        apex_mean=outcome.apex_mean,
        apex_std=outcome.apex_std,
        hop_count=len(outcome.hops),
        failure_reason=outcome.failure_reason,
    )


def winners_for_cell(outcomes: tuple[CellOutcome, ...], tie_threshold: float) -> tuple[float, ...]:
    """Leg stiffness values whose steady apex is within ``tie_threshold`` of the best one."""
    succeeded = [o for o in outcomes if o.succeeded]
    if not succeeded:
        raise EmptyCell("no leg stiffness reached steady hopping on this cell")
    best = max(o.apex_mean for o in succeeded)
    return tuple(
        sorted(o.leg_stiffness for o in succeeded if o.apex_mean >= best - tie_threshold - 1e-12)
    )


def run_sweep(spec: SweepSpec, workers: int | None = None, progress: bool = True) -> SweepResult:
    workers = workers or spec.workers
    profiles = spec.ground_profiles()
    episode = spec.episode.model_copy(update={"keep_trajectory": False})

    layout = [
        (d_l, energy, ground)
        for d_l in spec.leg_damping
        for energy in spec.energies
        for ground in profiles
    ]
    items = [
        (
            spec.hopper.model_copy(update={"leg_stiffness": k_l, "leg_damping": d_l}),
            ground,
            energy,
            episode,
            spec.integrator,
        )
        for d_l, energy, ground in layout
        for k_l in spec.leg_stiffness
    ]
    logger.info(
        f"Sweeping {len(profiles)} ground profiles x {len(spec.leg_stiffness)} stiffness x "
        f"{len(spec.leg_damping)} leg damping x {len(spec.energies)} energies "
        f"({len(items)} episodes, {workers} workers)"
    )

    bar = dict(total=len(items), disable=not progress, desc="episodes")
    if workers == 1:
        outcomes = [_run_cell(item) for item in tqdm(items, **bar)]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as ex:
            chunk = max(1, len(items) // (workers * 8))
            outcomes = list(tqdm(ex.map(_run_cell, items, chunksize=chunk), **bar))

    n_k = len(spec.leg_stiffness)
    cells = []
    for i, (d_l, energy, ground) in enumerate(layout):
        cell_outcomes = tuple(outcomes[i * n_k : (i + 1) * n_k])
        discarded = spec.discard_incomplete and not all(o.succeeded for o in cell_outcomes)
        try:
            winners = () if discarded else winners_for_cell(cell_outcomes, spec.tie_threshold)
        except EmptyCell:
            winners = ()
        if discarded:
            logger.warning(
                f"Discarding ({ground.ground_stiffness:g}, {ground.ground_damping:g}) at "
                f"d_l={d_l:g}, E_in={energy:g}: not every leg stiffness hopped"
            )
        cells.append(CellResult(ground, d_l, energy, cell_outcomes, winners, discarded))

    failed = sum(1 for o in outcomes if not o.succeeded)
    if failed:
        logger.warning(f"{failed} of {len(outcomes)} episodes did not reach steady hopping")
    return SweepResult(spec=spec, cells=tuple(cells))


# ======================================================
# Maps and regions
# ======================================================
def _resolve(result: SweepResult, leg_damping: float | None, energy: float | None):
    leg_damping = result.spec.reference_leg_damping if leg_damping is None else leg_damping
    energy = result.spec.energies[0] if energy is None else energy
    return leg_damping, energy, result.cells_for(leg_damping, energy)


def best_stiffness_map(
    result: SweepResult,
    tie_threshold: float | None = None,
    leg_damping: float | None = None,
    energy: float | None = None,
) -> WinnerMap:
    """Winner set per ground cell; discarded cells and cells where every stiffness failed map to ``()``."""
    threshold = result.spec.tie_threshold if tie_threshold is None else tie_threshold
    leg_damping, energy, cells = _resolve(result, leg_damping, energy)

    winners = {}
    for cell in cells:
        key = (round(cell.ground.ground_stiffness, 9), round(cell.ground.ground_damping, 9))
        if cell.discarded:
            winners[key] = ()
            continue
        try:
            winners[key] = winners_for_cell(cell.outcomes, threshold)
        except EmptyCell:
            winners[key] = ()
    return WinnerMap(
        ground_stiffness=result.spec.ground_stiffness.values(),
        ground_damping=result.spec.ground_damping.values(),
        leg_damping=leg_damping,
        energy=energy,
        winners=winners,
    )


def success_region(
    result: SweepResult, energy: float, leg_damping: float | None = None
) -> SuccessRegion:
    leg_damping, energy, cells = _resolve(result, leg_damping, energy)
    k_axis = result.spec.ground_stiffness.values()
    d_axis = result.spec.ground_damping.values()

    grid = np.zeros((k_axis.size, d_axis.size), dtype=bool)
    for cell in cells:
        i = int(np.argmin(np.abs(k_axis - cell.ground.ground_stiffness)))
        j = int(np.argmin(np.abs(d_axis - cell.ground.ground_damping)))
        grid[i, j] = any(o.succeeded for o in cell.outcomes)
    return SuccessRegion(energy, leg_damping, k_axis, d_axis, grid)


def select_stiffness(winner_map: WinnerMap, query: GroundProfile) -> float:
    """Softest winner of the grid cell nearest to ``query`` in normalised grid coordinates."""
    k_axis, d_axis = winner_map.ground_stiffness, winner_map.ground_damping
    k_q, d_q = query.ground_stiffness, query.ground_damping
    if not (
        k_axis[0] - _MATCH_TOL <= k_q <= k_axis[-1] + _MATCH_TOL
        and d_axis[0] - _MATCH_TOL <= d_q <= d_axis[-1] + _MATCH_TOL
    ):
        raise OutOfDomain(f"({k_q}, {d_q}) is outside the swept ground grid")

    def normalise(axis: np.ndarray, value: float) -> np.ndarray:
        span = axis[-1] - axis[0]
        return (axis - value) / span if span > 0 else np.zeros_like(axis)

    dk = normalise(k_axis, k_q)
    dd = normalise(d_axis, d_q)
    distance = dk[:, None] ** 2 + dd[None, :] ** 2
    i, j = np.unravel_index(int(np.argmin(distance)), distance.shape)

    winners = winner_map.winners_at(k_axis[i], d_axis[j])
    if not winners:
        raise UnreachableCell(f"no stiffness hops steadily at ({k_axis[i]}, {d_axis[j]})")
    return min(winners)


# ======================================================
# Trend checks
# ======================================================
def trend_violations(
    result: SweepResult,
    leg_damping: float | None = None,
    energy: float | None = None,
    slack: float = 0.0,
) -> list[TrendViolation]:
    """Apex must not rise with ground damping nor fall with ground stiffness (succeeded cells only)."""
    leg_damping, energy, cells = _resolve(result, leg_damping, energy)
    k_axis = result.spec.ground_stiffness.values()
    d_axis = result.spec.ground_damping.values()
    by_ground = {
        (round(c.ground.ground_stiffness, 9), round(c.ground.ground_damping, 9)): c for c in cells
    }

    def apex(k_l: float, k_g: float, d_g: float) -> float | None:
        outcome = by_ground[(round(float(k_g), 9), round(float(d_g), 9))].outcome_for(k_l)
        return outcome.apex_mean if outcome.succeeded else None

    violations = []
    for k_l in result.spec.leg_stiffness:
        for k_g in k_axis:
            for d_a, d_b in zip(d_axis, d_axis[1:]):
                before, after = apex(k_l, k_g, d_a), apex(k_l, k_g, d_b)
                if before is not None and after is not None and after > before + slack:
                    violations.append(TrendViolation("ground_damping", k_l, k_g, d_b, before, after))
        for d_g in d_axis:
            for k_a, k_b in zip(k_axis, k_axis[1:]):
                before, after = apex(k_l, k_a, d_g), apex(k_l, k_b, d_g)
                if before is not None and after is not None and after < before - slack:
                    violations.append(TrendViolation("ground_stiffness", k_l, k_b, d_g, before, after))
    return violations


def mean_apex_by_leg_damping(result: SweepResult, energy: float) -> dict[float, float]:
    """Mean steady apex over all succeeded episodes, per leg damping value."""
    means = {}
    for d_l in result.spec.leg_damping:
        apexes = [
            o.apex_mean for cell in result.cells_for(d_l, energy) for o in cell.outcomes if o.succeeded
        ]
        means[d_l] = float(np.mean(apexes)) if apexes else float("nan")
    return means
