import numpy as np
import pytest

from hopper_stiffness.episode import EpisodeConfig, EpisodeStatus
from hopper_stiffness.model import EnergyBudget, GroundProfile, HopperParams
from hopper_stiffness.sweep import CellOutcome, CellResult, GridRange, SweepResult, SweepSpec
from hopper_stiffness.sweep import winners_for_cell


@pytest.fixture
def hopper():
    return HopperParams()


@pytest.fixture
def ground():
    return GroundProfile()


@pytest.fixture
def energy():
    return EnergyBudget(input_energy=1.0)


@pytest.fixture
def short_episode():
    """Enough hops for statistics and audits, too few to expect a settled limit cycle."""
    return EpisodeConfig(max_hops=12, steady_window=10, keep_trajectory=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_result(apex_mm, energies=(1.0,), leg_damping=(35.0,), fail=()):
    """Hand-built sweep result on a 2x3 ground grid.

    ``apex_mm`` maps ``(k_l, k_g, d_g, energy)`` to an apex in mm; missing keys
    and keys listed in ``fail`` are FailedLiftoff.
    """
    spec = SweepSpec(
        leg_stiffness=[3000.0, 4000.0, 5000.0],
        leg_damping=list(leg_damping),
        ground_stiffness=GridRange(start=2400.0, step=200.0, end=2600.0),
        ground_damping=GridRange(start=15.0, step=5.0, end=25.0),
        energies=list(energies),
        reference_leg_damping=leg_damping[0],
        tie_threshold=0.001,
    )
    cells = []
    for d_l in spec.leg_damping:
        for e in spec.energies:
            for profile in spec.ground_profiles():
                k_g, d_g = profile.ground_stiffness, profile.ground_damping
                outcomes = []
                for k_l in spec.leg_stiffness:
                    key = (k_l, k_g, d_g, e)
                    if key in apex_mm and key not in fail:
                        outcomes.append(
                            CellOutcome(k_l, EpisodeStatus.STEADY_HOPPING, apex_mm[key] / 1000.0, 0.0, 60)
                        )
                    else:
                        outcomes.append(CellOutcome(k_l, EpisodeStatus.FAILED_LIFTOFF, None, None, 1))
                outcomes = tuple(outcomes)
                try:
                    winners = winners_for_cell(outcomes, spec.tie_threshold)
                except ValueError:
                    winners = ()
                cells.append(CellResult(profile, d_l, e, outcomes, winners))
    return SweepResult(spec=spec, cells=tuple(cells))
