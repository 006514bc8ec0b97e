# hopper_stiffness/model.py
"""Physical types and force laws of the two-mass vertical hopper.

Coordinates are vertical and positive up. ``x_t = 0`` is the undeformed ground
surface; ``x_b`` is the body position. In flight the leg spring pulls towards
the shortened setpoint ``l - p``; in stance it pushes towards the rest length
``l``. Both phases share the same leg damper.
"""

from enum import Enum
import math
from typing import Callable, NamedTuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    model_validator,
)

from hopper_stiffness.config import GRAVITY
from hopper_stiffness.errors import CompressionExceedsLeg, HopperValueError

# Integrator state layout: positions/velocities plus cumulative damping losses
STATE_SIZE = 6
X_B, V_B, X_T, V_T, D_LEG, D_GROUND = range(STATE_SIZE)
# Highest toe position accepted in stance; a sticky ground may pull the toe a little above the surface
STANCE_TOE_TOLERANCE = 0.01

_FROZEN = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)


# ======================================================
# Domain Types
# ======================================================
class Phase(str, Enum):
    FLIGHT = "flight"
    STANCE = "stance"


class HopperParams(BaseModel):
    """Masses, rest length and leg spring-damper of the hopper."""

    model_config = _FROZEN

    body_mass: PositiveFloat = 2.5
    toe_mass: PositiveFloat = 0.3
    rest_length: PositiveFloat = 0.0975
    leg_stiffness: PositiveFloat = 4000.0
    leg_damping: NonNegativeFloat = 35.0


class GroundProfile(BaseModel):
    model_config = _FROZEN

    ground_stiffness: PositiveFloat = 3800.0
    ground_damping: NonNegativeFloat = 45.0


class EnergyBudget(BaseModel):
    model_config = _FROZEN

    input_energy: PositiveFloat = 1.0


class HybridState(BaseModel):
    """Phase tag plus body/toe kinematics at one instant."""

    model_config = _FROZEN

    phase: Phase
    time: float = 0.0
    body_pos: float
    body_vel: float = 0.0
    toe_pos: float
    toe_vel: float = 0.0
    precompression: NonNegativeFloat = 0.0
    dissipated_leg: float = Field(default=0.0, description="Cumulative leg damper loss (J)")
    dissipated_ground: float = Field(default=0.0, description="Cumulative ground damper loss (J)")
    rest_length: PositiveFloat | None = Field(
        default=None, description="Leg rest length; when given, the pre-compression must stay below it"
    )

    @model_validator(mode="after")
    def _check_contact(self) -> "HybridState":
        if self.rest_length is not None and self.precompression >= self.rest_length:
            raise ValueError(
                f"pre-compression {self.precompression} m is not shorter than the leg ({self.rest_length} m)"
            )
        if self.phase is Phase.STANCE and self.toe_pos > STANCE_TOE_TOLERANCE:
            raise ValueError(f"stance state with the toe {self.toe_pos:.4f} m above the ground")
        return self

    @property
    def leg_length(self) -> float:
        return self.body_pos - self.toe_pos

    def to_vector(self) -> np.ndarray:
        return np.array(
            [
                self.body_pos,
                self.body_vel,
                self.toe_pos,
                self.toe_vel,
                self.dissipated_leg,
                self.dissipated_ground,
            ],
            dtype=float,
        )

    @classmethod
    def from_vector(
        cls,
        y: np.ndarray,
        phase: Phase,
        time: float,
        precompression: float,
        rest_length: float | None = None,
    ) -> "HybridState":
        return cls(
            phase=phase,
            time=float(time),
            body_pos=float(y[X_B]),
            body_vel=float(y[V_B]),
            toe_pos=float(y[X_T]),
            toe_vel=float(y[V_T]),
            precompression=float(precompression),
            dissipated_leg=float(y[D_LEG]),
            dissipated_ground=float(y[D_GROUND]),
            rest_length=rest_length,
        )


class StateRate(NamedTuple):
    body_vel: float
    body_acc: float
    toe_vel: float
    toe_acc: float


# ======================================================
# Energy injection and setpoints
# ======================================================
def precompression_from_energy(
    energy: EnergyBudget | float,
    leg_stiffness: float,
    rest_length: float | None = None,
) -> float:
    """Leg compression ``p`` that stores ``E_in = k_l p^2 / 2`` in the leg spring."""
    e_in = energy.input_energy if isinstance(energy, EnergyBudget) else float(energy)
    if not e_in > 0 or not leg_stiffness > 0:
        raise HopperValueError(
            f"energy and stiffness must be positive, got E={e_in}, k_l={leg_stiffness}"
        )

    p = math.sqrt(2.0 * e_in / leg_stiffness)
    if rest_length is not None and p >= rest_length:
        raise CompressionExceedsLeg(
            f"pre-compression {p:.6f} m is not shorter than the leg ({rest_length} m)"
        )
    return p


def leg_setpoint(phase: Phase, hopper: HopperParams, precompression: float) -> float:
    if phase is Phase.FLIGHT:
        return hopper.rest_length - precompression
    return hopper.rest_length


def standing_rest_height(hopper: HopperParams) -> float:
    """Body position with the leg at rest length and the toe on undeformed ground."""
    return hopper.rest_length


# ======================================================
# Forces and derivatives
# ======================================================
def leg_force(state: HybridState, hopper: HopperParams) -> float:
    """Internal leg force; positive pushes the body up and the toe down."""
    setpoint = leg_setpoint(state.phase, hopper, state.precompression)
    return hopper.leg_stiffness * (setpoint - state.leg_length) - hopper.leg_damping * (
        state.body_vel - state.toe_vel
    )


def ground_force(state: HybridState, ground: GroundProfile) -> float:
    """Ground supporting force on the toe. Not clamped: it may pull on the toe."""
    if state.phase is Phase.FLIGHT:
        return 0.0
    return -ground.ground_stiffness * state.toe_pos - ground.ground_damping * state.toe_vel


def derivatives(
    state: HybridState,
    hopper: HopperParams,
    ground: GroundProfile,
    g: float = GRAVITY,
) -> StateRate:
    f_leg = leg_force(state, hopper)
    f_ground = ground_force(state, ground)
    return StateRate(
        body_vel=state.body_vel,
        body_acc=f_leg / hopper.body_mass - g,
        toe_vel=state.toe_vel,
        toe_acc=(-f_leg + f_ground) / hopper.toe_mass - g,
    )


def phase_rhs(
    phase: Phase,
    hopper: HopperParams,
    ground: GroundProfile,
    precompression: float,
    g: float = GRAVITY,
) -> Callable[[float, np.ndarray], np.ndarray]:
    """Vector field of one phase over the integrator state layout.

    Same force laws as :func:`derivatives`, unpacked to plain floats because the
    integrator calls it several times per step. The two trailing components
    are the instantaneous leg and ground damper powers.
    """
    m_b, m_t = hopper.body_mass, hopper.toe_mass
    k_l, d_l = hopper.leg_stiffness, hopper.leg_damping
    k_g, d_g = ground.ground_stiffness, ground.ground_damping
    setpoint = leg_setpoint(phase, hopper, precompression)
    in_stance = phase is Phase.STANCE

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x_b, v_b, x_t, v_t = y[X_B], y[V_B], y[X_T], y[V_T]
        rel_vel = v_b - v_t
        f_leg = k_l * (setpoint - x_b + x_t) - d_l * rel_vel
        toe_force = -f_leg
        ground_power = 0.0
        if in_stance:
            toe_force += -k_g * x_t - d_g * v_t
            ground_power = d_g * v_t * v_t
        return np.array(
            [
                v_b,
                f_leg / m_b - g,
                v_t,
                toe_force / m_t - g,
                d_l * rel_vel * rel_vel,
                ground_power,
            ]
        )

    return rhs


# ======================================================
# Initial conditions and energy bookkeeping
# ======================================================
def flight_equilibrium_drop_state(
    hopper: HopperParams,
    precompression: float,
    drop_height: float,
    g: float = GRAVITY,
) -> HybridState:
    """Release state: body held still, toe hanging at rest on the compressed leg.

    The toe is at rest when the leg carries its weight (``F_l = -m_t g``), which
    stretches the leg by ``m_t g / k_l`` beyond the flight setpoint.
    """
    if not drop_height > 0:
        raise HopperValueError(f"drop height must be positive, got {drop_height}")

    separation = (hopper.rest_length - precompression) + hopper.toe_mass * g / hopper.leg_stiffness
    return HybridState(
        phase=Phase.FLIGHT,
        time=0.0,
        body_pos=drop_height + separation,
        toe_pos=drop_height,
        precompression=precompression,
        rest_length=hopper.rest_length,
    )


def leg_spring_energy(state: HybridState, hopper: HopperParams, phase: Phase | None = None) -> float:
    """Leg spring potential measured from the setpoint of ``phase`` (default: the state's)."""
    setpoint = leg_setpoint(phase or state.phase, hopper, state.precompression)
    return 0.5 * hopper.leg_stiffness * (state.leg_length - setpoint) ** 2


def ground_spring_energy(state: HybridState, ground: GroundProfile) -> float:
    if state.phase is Phase.FLIGHT:
        return 0.0
    return 0.5 * ground.ground_stiffness * state.toe_pos**2


def mechanical_energy(
    state: HybridState,
    hopper: HopperParams,
    ground: GroundProfile,
    g: float = GRAVITY,
) -> float:
    kinetic = 0.5 * hopper.body_mass * state.body_vel**2 + 0.5 * hopper.toe_mass * state.toe_vel**2
    gravitational = g * (hopper.body_mass * state.body_pos + hopper.toe_mass * state.toe_pos)
    return kinetic + gravitational + leg_spring_energy(state, hopper) + ground_spring_energy(
        state, ground
    )


def setpoint_switch_energy(state: HybridState, hopper: HopperParams, to_phase: Phase) -> float:
    """Jump in leg spring energy when the setpoint switches from ``state.phase`` to ``to_phase``."""
    return leg_spring_energy(state, hopper, to_phase) - leg_spring_energy(state, hopper)
