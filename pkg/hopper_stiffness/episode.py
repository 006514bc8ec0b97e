# hopper_stiffness/episode.py
"""Hopping episodes: the flight/stance state machine driven over many hops.

A leg setpoint switch injects energy at every touchdown (``l - p`` -> ``l``)
and again at every liftoff (``l`` -> ``l - p``). A hop runs from one touchdown
to the next and owns the apex of the flight inside it.
"""

from dataclasses import dataclass, field
from enum import Enum

from loguru import logger
import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

from hopper_stiffness.config import GRAVITY
from hopper_stiffness.errors import InsufficientHops, IntegrationError, MissingTrajectory
from hopper_stiffness.integrator import (
    Direction,
    EventSpec,
    IntegratorConfig,
    PhaseTrajectory,
    integrate_phase,
)
from hopper_stiffness.model import (
    D_GROUND,
    D_LEG,
    STANCE_TOE_TOLERANCE,
    V_B,
    V_T,
    X_B,
    X_T,
    EnergyBudget,
    GroundProfile,
    HopperParams,
    HybridState,
    Phase,
    flight_equilibrium_drop_state,
    ground_spring_energy,
    mechanical_energy,
    phase_rhs,
    precompression_from_energy,
    setpoint_switch_energy,
    standing_rest_height,
)

FAILURE_RULE_NOTE = (
    "failed lift-off is read as: stance longer than max_stance_duration, flight that "
    "never returns the toe to the ground, a body that does not rise above rest height "
    "after liftoff, a toe pulled more than STANCE_TOE_TOLERANCE above the ground at "
    "liftoff, or touchdowns or refused liftoffs closer than chatter_interval"
)


# ======================================================
# Configuration and result types
# ======================================================
class GuardMode(str, Enum):
    SIMULATION = "simulation"
    EXPERIMENT = "experiment"


class EpisodeStatus(str, Enum):
    STEADY_HOPPING = "SteadyHopping"
    FAILED_LIFTOFF = "FailedLiftoff"
    NO_CONVERGENCE = "NoConvergence"
    NUMERICAL_FAILURE = "NumericalFailure"


class EpisodeConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    max_hops: PositiveInt = 60
    steady_window: PositiveInt = 10
    steady_std_tol: PositiveFloat = 1e-6
    drop_height: PositiveFloat = 0.1
    guard_mode: GuardMode = GuardMode.SIMULATION
    stance_fixed_duration: PositiveFloat = 0.150
    max_stance_duration: PositiveFloat = 1.0
    max_flight_duration: PositiveFloat = 2.0
    chatter_interval: PositiveFloat = 1e-3
    skip_hops: NonNegativeInt = 0
    keep_trajectory: bool = False
    non_sticking_ground: bool = False
    gravity: PositiveFloat = GRAVITY

    @model_validator(mode="after")
    def _enough_hops(self) -> "EpisodeConfig":
        if self.max_hops <= self.steady_window:
            raise ValueError("max_hops must exceed steady_window")
        if self.max_hops < self.steady_window + self.skip_hops:
            raise ValueError("max_hops must cover skip_hops plus a full steady_window")
        return self


@dataclass(frozen=True)
class HopRecord:
    index: int
    touchdown_time: float
    liftoff_time: float
    apex_time: float
    apex_height: float
    injected_energy: float
    dissipated_energy: float


@dataclass
class EpisodeTrajectory:
    times: np.ndarray
    states: np.ndarray
    phases: np.ndarray
    precompression: float
    touchdown_indices: list[int]
    liftoff_indices: list[int]

    def state_at(self, index: int, phase: Phase) -> HybridState:
        return HybridState.from_vector(
            self.states[index], phase, self.times[index], self.precompression
        )

    def last_hops(self, count: int) -> "EpisodeTrajectory":
        """Tail holding the last ``count`` touchdown-to-touchdown orbits (all of it if shorter)."""
        marks = self.touchdown_indices
        closed = bool(marks) and marks[-1] == self.times.size - 1
        needed = count + 1 if closed else count
        if count < 1 or len(marks) < needed:
            return self
        start = marks[-needed]
        return EpisodeTrajectory(
            times=self.times[start:],
            states=self.states[start:],
            phases=self.phases[start:],
            precompression=self.precompression,
            touchdown_indices=[i - start for i in marks if i >= start],
            liftoff_indices=[i - start for i in self.liftoff_indices if i >= start],
        )


@dataclass(frozen=True)
class EpisodeOutcome:
    status: EpisodeStatus
    apex_mean: float | None
    apex_std: float | None
    hops: tuple[HopRecord, ...]
    trajectory: EpisodeTrajectory | None = None
    failure_reason: str | None = None
    notes: tuple[str, ...] = ()

    @property
    def succeeded(self) -> bool:
        return self.status is EpisodeStatus.STEADY_HOPPING

    @property
    def apex_heights(self) -> np.ndarray:
        return np.array([hop.apex_height for hop in self.hops])


@dataclass(frozen=True)
class HopEnergy:
    index: int
    injected_touchdown: float
    injected_liftoff: float
    dissipated_leg: float
    dissipated_ground: float
    ground_residual: float
    mechanical_change: float

    @property
    def injected(self) -> float:
        return self.injected_touchdown + self.injected_liftoff

    @property
    def dissipated(self) -> float:
        return self.dissipated_leg + self.dissipated_ground + self.ground_residual

    @property
    def balance_residual(self) -> float:
        """Zero up to integration error: what the audit cannot account for."""
        return self.mechanical_change - (self.injected - self.dissipated)


@dataclass
class _Recorder:
    enabled: bool
    times: list[np.ndarray] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    phases: list[np.ndarray] = field(default_factory=list)
    touchdowns: list[int] = field(default_factory=list)
    liftoffs: list[int] = field(default_factory=list)
    size: int = 0

    def add(self, segment: PhaseTrajectory, phase: Phase, boundary: bool = True) -> None:
        """Append a segment; ``boundary=False`` continues the current phase."""
        if not self.enabled:
            return
        if boundary and phase is Phase.STANCE:
            self.touchdowns.append(self.size)
        elif boundary and self.size:
            self.liftoffs.append(self.size)
        self.times.append(segment.times)
        self.states.append(segment.states)
        self.phases.append(np.full(segment.times.size, phase.value))
        self.size += segment.times.size

    def close(self, last_touchdown: bool, precompression: float) -> EpisodeTrajectory | None:
        if not self.enabled or not self.times:
            return None
        touchdowns = list(self.touchdowns)
        if last_touchdown:
            # the final flight ends on a touchdown that never got its stance
            touchdowns.append(self.size - 1)
        return EpisodeTrajectory(
            times=np.concatenate(self.times),
            states=np.vstack(self.states),
            phases=np.concatenate(self.phases),
            precompression=precompression,
            touchdown_indices=touchdowns,
            liftoff_indices=list(self.liftoffs),
        )


# ======================================================
# Steady-state statistics
# ======================================================
def steady_state_apex(records: list[HopRecord], cfg: EpisodeConfig) -> tuple[float, float, bool]:
    """Mean and sample standard deviation of the last ``steady_window`` apex heights."""
    window = cfg.steady_window
    if len(records) < window:
        raise InsufficientHops(f"need {window} hops, got {len(records)}")

    apexes = np.array([hop.apex_height for hop in records[-window:]])
    mean = float(np.mean(apexes))
    std = float(np.std(apexes, ddof=1)) if window > 1 else 0.0
    return mean, std, std <= cfg.steady_std_tol


def shifted_steady_mean(records: list[HopRecord], cfg: EpisodeConfig, shift: int = 1) -> float:
    """Steady mean over the window ending ``shift`` hops before the last one."""
    if shift == 0:
        return steady_state_apex(records, cfg)[0]
    return steady_state_apex(records[:-shift], cfg)[0]


def monotone_decay_violations(
    records: list[HopRecord], steady_mean: float, band: float
) -> list[int]:
    """Hop indices where the apex rose while still more than ``band`` above ``steady_mean``."""
    violations = []
    for prev, nxt in zip(records, records[1:]):
        if prev.apex_height - steady_mean <= band:
            break
        if nxt.apex_height > prev.apex_height:
            violations.append(nxt.index)
    return violations


# ======================================================
# Episode
# ======================================================
def _flight_apex(flight: PhaseTrajectory) -> tuple[float, float] | None:
    """Highest body position strictly after liftoff, or None when the body only fell."""
    candidates = [(hit.time, float(hit.state[X_B])) for hit in flight.hits_named("apex")]
    idx = int(np.argmax(flight.states[:, X_B]))
    if idx > 0:
        candidates.append((float(flight.times[idx]), float(flight.states[idx, X_B])))
    if not candidates:
        return None
    return max(candidates, key=lambda item: item[1])


def _toe_sinking(y: np.ndarray) -> bool:
    """Toe below the ground surface and still moving down."""
    return y[X_T] < 0.0 and y[V_T] < 0.0


def run_episode(
    hopper: HopperParams,
    ground: GroundProfile,
    energy: EnergyBudget,
    cfg: EpisodeConfig | None = None,
    icfg: IntegratorConfig | None = None,
) -> EpisodeOutcome:
    """Drop the hopper and alternate stance/flight until ``max_hops`` or a failure."""
    cfg = cfg or EpisodeConfig()
    icfg = icfg or IntegratorConfig()
    g = cfg.gravity
    experiment = cfg.guard_mode is GuardMode.EXPERIMENT

    p = precompression_from_energy(energy, hopper.leg_stiffness, hopper.rest_length)
    start = flight_equilibrium_drop_state(hopper, p, cfg.drop_height, g)
    rest_height = standing_rest_height(hopper)
    rest_length = hopper.rest_length
    k_g, d_g = ground.ground_stiffness, ground.ground_damping

    flight_rhs = phase_rhs(Phase.FLIGHT, hopper, ground, p, g)
    stance_rhs = phase_rhs(Phase.STANCE, hopper, ground, p, g)

    touchdown = EventSpec("touchdown", lambda t, y: y[X_T], Direction.FALLING)
    apex = EventSpec("apex", lambda t, y: y[V_B], Direction.FALLING, terminal=False)
    liftoff = EventSpec("liftoff", lambda t, y: (y[X_B] - y[X_T]) - rest_length, Direction.RISING)
    ground_release = EventSpec(
        "ground_release", lambda t, y: -k_g * y[X_T] - d_g * y[V_T], Direction.FALLING
    )
    recompressed = EventSpec(
        "recompressed", lambda t, y: (y[X_B] - y[X_T]) - rest_length, Direction.FALLING
    )
    release_events = [ground_release] if cfg.non_sticking_ground else []
    stance_events = ([] if experiment else [liftoff]) + release_events
    stance_limit = cfg.stance_fixed_duration if experiment else cfg.max_stance_duration
    stance_cfg = icfg.model_copy(update={"max_phase_duration": stance_limit})
    flight_cfg = icfg.model_copy(update={"max_phase_duration": cfg.max_flight_duration})

    recorder = _Recorder(cfg.keep_trajectory)
    records: list[HopRecord] = []

    def stance_phase(index: int, td_time: float, y_td: np.ndarray) -> tuple[PhaseTrajectory, str | None]:
        segment = integrate_phase(td_time, y_td, stance_rhs, stance_events, stance_cfg)
        recorder.add(segment, Phase.STANCE)
        last_refusal = None
        # a liftoff with the toe still driven into the ground is refused: contact
        # continues with the stance setpoint until the leg recompresses and extends again
        while not experiment and segment.event == "liftoff" and _toe_sinking(segment.terminal_state):
            t_ref = segment.terminal_time
            if last_refusal is not None and t_ref - last_refusal < cfg.chatter_interval:
                return segment, f"contact chatter in stance {index} at t={t_ref:.6f} s"
            last_refusal = t_ref
            logger.debug(f"stance {index}: toe still sinking at t={t_ref:.6f} s, liftoff refused")

            for events in ([recompressed, *release_events], stance_events):
                budget = cfg.max_stance_duration - (segment.terminal_time - td_time)
                if budget <= 0.0:
                    return segment, f"stance {index} exceeded {cfg.max_stance_duration} s"
                segment = integrate_phase(
                    segment.terminal_time,
                    segment.terminal_state,
                    stance_rhs,
                    events,
                    icfg.model_copy(update={"max_phase_duration": budget}),
                )
                recorder.add(segment, Phase.STANCE, boundary=False)
                if segment.timed_out or segment.event == "ground_release":
                    break

        if segment.timed_out and not experiment:
            return segment, f"stance {index} exceeded {cfg.max_stance_duration} s"
        return segment, None

    def outcome(status: EpisodeStatus, reason: str | None = None, ended_on_touchdown=True):
        mean = std = None
        usable = records[cfg.skip_hops :]
        if status in (EpisodeStatus.STEADY_HOPPING, EpisodeStatus.NO_CONVERGENCE):
            mean, std, _ = steady_state_apex(usable, cfg)
        notes = (FAILURE_RULE_NOTE,) if status is EpisodeStatus.FAILED_LIFTOFF else ()
        if reason:
            logger.debug(f"episode ended {status.value} after {len(records)} hops: {reason}")
        return EpisodeOutcome(
            status=status,
            apex_mean=mean,
            apex_std=std,
            hops=tuple(records),
            trajectory=recorder.close(ended_on_touchdown, p),
            failure_reason=reason,
            notes=notes,
        )

    try:
        drop = integrate_phase(0.0, start.to_vector(), flight_rhs, [touchdown], flight_cfg)
        recorder.add(drop, Phase.FLIGHT)
        if drop.timed_out:
            return outcome(
                EpisodeStatus.FAILED_LIFTOFF, "toe never reached the ground after release", False
            )
        t, y = drop.terminal_time, drop.terminal_state

        for index in range(cfg.max_hops):
            td_time, y_td = t, y
            td_state = HybridState.from_vector(y_td, Phase.FLIGHT, td_time, p, hopper.rest_length)
            injected = setpoint_switch_energy(td_state, hopper, Phase.STANCE)

            stance, failure = stance_phase(index, td_time, y_td)
            if failure:
                return outcome(EpisodeStatus.FAILED_LIFTOFF, failure, False)

            lo_time, y_lo = stance.terminal_time, stance.terminal_state
            if y_lo[X_T] > STANCE_TOE_TOLERANCE:
                return outcome(
                    EpisodeStatus.FAILED_LIFTOFF,
                    f"ground pulled the toe above the surface during stance {index}",
                    False,
                )
            lo_state = HybridState.from_vector(y_lo, Phase.STANCE, lo_time, p, hopper.rest_length)
            injected += setpoint_switch_energy(lo_state, hopper, Phase.FLIGHT)
            residual = ground_spring_energy(lo_state, ground)

            flight = integrate_phase(lo_time, y_lo, flight_rhs, [touchdown, apex], flight_cfg)
            recorder.add(flight, Phase.FLIGHT)
            if flight.timed_out:
                return outcome(
                    EpisodeStatus.FAILED_LIFTOFF,
                    f"toe did not come back to the ground after liftoff {index}",
                    False,
                )

            t, y = flight.terminal_time, flight.terminal_state
            peak = _flight_apex(flight)
            if peak is None:
                return outcome(
                    EpisodeStatus.FAILED_LIFTOFF, f"body did not rise after liftoff {index}"
                )
            apex_time, apex_pos = peak
            apex_height = apex_pos - rest_height
            if apex_height <= 0.0:
                return outcome(
                    EpisodeStatus.FAILED_LIFTOFF,
                    f"body stayed below rest height after liftoff {index}",
                )
            if t - td_time < cfg.chatter_interval:
                return outcome(EpisodeStatus.FAILED_LIFTOFF, f"touchdown chatter at t={t:.6f} s")

            dissipated = (y[D_LEG] - y_td[D_LEG]) + (y[D_GROUND] - y_td[D_GROUND]) + residual
            records.append(
                HopRecord(
                    index=index,
                    touchdown_time=td_time,
                    liftoff_time=lo_time,
                    apex_time=apex_time,
                    apex_height=apex_height,
                    injected_energy=injected,
                    dissipated_energy=dissipated,
                )
            )
    except IntegrationError as exc:
        return outcome(EpisodeStatus.NUMERICAL_FAILURE, str(exc), False)

    _, _, steady = steady_state_apex(records[cfg.skip_hops :], cfg)
    return outcome(EpisodeStatus.STEADY_HOPPING if steady else EpisodeStatus.NO_CONVERGENCE)


# ======================================================
# Energy audit
# ======================================================
def energy_audit(
    trajectory: EpisodeTrajectory | None,
    hopper: HopperParams,
    ground: GroundProfile,
    g: float = GRAVITY,
) -> list[HopEnergy]:
    """Per-hop energy injected by the setpoint switches against damper and contact losses."""
    if trajectory is None:
        raise MissingTrajectory("energy audit needs an episode run with keep_trajectory=True")

    audit = []
    tds, los = trajectory.touchdown_indices, trajectory.liftoff_indices
    for k in range(min(len(los), len(tds) - 1)):
        at_touchdown = trajectory.state_at(tds[k], Phase.FLIGHT)
        at_liftoff = trajectory.state_at(los[k], Phase.STANCE)
        at_next = trajectory.state_at(tds[k + 1], Phase.FLIGHT)

        audit.append(
            HopEnergy(
                index=k,
                injected_touchdown=setpoint_switch_energy(at_touchdown, hopper, Phase.STANCE),
                injected_liftoff=setpoint_switch_energy(at_liftoff, hopper, Phase.FLIGHT),
                dissipated_leg=at_next.dissipated_leg - at_touchdown.dissipated_leg,
                dissipated_ground=at_next.dissipated_ground - at_touchdown.dissipated_ground,
                ground_residual=ground_spring_energy(at_liftoff, ground),
                mechanical_change=mechanical_energy(at_next, hopper, ground, g)
                - mechanical_energy(at_touchdown, hopper, ground, g),
            )
        )
    return audit
