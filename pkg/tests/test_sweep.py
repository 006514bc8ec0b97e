import numpy as np
import pytest

from hopper_stiffness.episode import EpisodeConfig, EpisodeStatus
from hopper_stiffness.errors import EmptyCell, OutOfDomain, UnknownEnergyLevel, UnreachableCell
from hopper_stiffness.model import GroundProfile
from hopper_stiffness.sweep import (
    CellOutcome,
    GridRange,
    SweepSpec,
    WinnerMap,
    best_stiffness_map,
    mean_apex_by_leg_damping,
    run_sweep,
    select_stiffness,
    success_region,
    trend_violations,
    winners_for_cell,
)
from tests.conftest import make_result

STEADY = EpisodeStatus.STEADY_HOPPING


def test_default_grid_has_208_profiles():
    spec = SweepSpec()
    assert spec.ground_stiffness.values().size == 16
    assert spec.ground_damping.values().size == 13
    assert len(spec.ground_profiles()) == 208
    assert spec.ground_stiffness.values()[-1] == 5400.0


def test_grid_range_validation():
    with pytest.raises(ValueError):
        GridRange(start=10.0, step=1.0, end=5.0)
    np.testing.assert_allclose(GridRange(start=0.1, step=0.1, end=0.3).values(), [0.1, 0.2, 0.3])


def test_empty_stiffness_list_is_rejected():
    with pytest.raises(ValueError):
        SweepSpec(leg_stiffness=[])


def test_winners_within_threshold():
    outcomes = (
        CellOutcome(3000.0, STEADY, 0.0400, 0.0, 60),
        CellOutcome(4000.0, STEADY, 0.0412, 0.0, 60),
        CellOutcome(5000.0, STEADY, 0.0405, 0.0, 60),
    )
    assert winners_for_cell(outcomes, 0.001) == (4000.0, 5000.0)
    assert winners_for_cell(outcomes, 0.0) == (4000.0,)


def test_winners_ignore_failed_runs():
    outcomes = (
        CellOutcome(3000.0, STEADY, 0.030, 0.0, 60),
        CellOutcome(5000.0, EpisodeStatus.FAILED_LIFTOFF, None, None, 2),
    )
    assert winners_for_cell(outcomes, 0.001) == (3000.0,)
    with pytest.raises(EmptyCell):
        winners_for_cell(outcomes[1:], 0.001)


def test_best_stiffness_map_marks_unreachable_cells():
    apex = {(4000.0, 2400.0, 15.0, 1.0): 40.0, (3000.0, 2400.0, 20.0, 1.0): 35.0}
    result = make_result(apex)
    winner_map = best_stiffness_map(result)
    assert winner_map.winners_at(2400.0, 15.0) == (4000.0,)
    assert winner_map.winners_at(2400.0, 20.0) == (3000.0,)
    assert winner_map.winners_at(2600.0, 25.0) == ()


def test_select_stiffness_uses_nearest_cell():
    axes_k = np.array([4200.0, 4400.0, 4600.0])
    axes_d = np.array([30.0, 35.0, 40.0])
    winners = {(k, d): (5000.0,) for k in axes_k for d in axes_d}
    winners[(4400.0, 35.0)] = (3000.0, 4000.0)
    winners[(4600.0, 40.0)] = ()
    winner_map = WinnerMap(axes_k, axes_d, 35.0, 1.0, winners)

    assert select_stiffness(winner_map, GroundProfile(ground_stiffness=4420.0, ground_damping=35.2)) == 3000.0
    with pytest.raises(OutOfDomain):
        select_stiffness(winner_map, GroundProfile(ground_stiffness=6000.0, ground_damping=35.0))
    with pytest.raises(UnreachableCell):
        select_stiffness(winner_map, GroundProfile(ground_stiffness=4600.0, ground_damping=40.0))


def test_success_regions_grow_with_energy():
    apex = {}
    for k_g in (2400.0, 2600.0):
        apex[(3000.0, k_g, 15.0, 1.0)] = 30.0
        for d_g in (15.0, 20.0):
            apex[(3000.0, k_g, d_g, 2.0)] = 40.0
    result = make_result(apex, energies=(1.0, 2.0))

    low, high = success_region(result, 1.0), success_region(result, 2.0)
    assert low.grid.shape == (2, 3)
    assert low.count == 2 and high.count == 4
    assert low.issubset(high)
    assert not high.issubset(low)
    with pytest.raises(UnknownEnergyLevel):
        success_region(result, 3.0)


def test_trend_violations():
    apex = {}
    for k_g in (2400.0, 2600.0):
        for d_g, base in ((15.0, 40.0), (20.0, 38.0), (25.0, 36.0)):
            apex[(3000.0, k_g, d_g, 1.0)] = base + (k_g - 2400.0) / 100.0
    result = make_result(apex)
    assert trend_violations(result) == []

    apex[(3000.0, 2400.0, 25.0, 1.0)] = 39.0  # rises with damping
    found = trend_violations(make_result(apex))
    assert [v.axis for v in found] == ["ground_damping"]
    assert found[0].ground_damping == 25.0


def test_mean_apex_by_leg_damping():
    apex = {(3000.0, 2400.0, 15.0, 1.0): 40.0, (4000.0, 2400.0, 15.0, 1.0): 30.0}
    result = make_result(apex, leg_damping=(30.0, 40.0))
    means = mean_apex_by_leg_damping(result, 1.0)
    assert means[30.0] == pytest.approx(0.035)
    assert means[40.0] == pytest.approx(0.035)


@pytest.fixture(scope="module")
def tiny_spec():
    return SweepSpec(
        leg_stiffness=[3500.0, 4500.0],
        leg_damping=[35.0],
        ground_stiffness=GridRange(start=3800.0, step=800.0, end=4600.0),
        ground_damping=GridRange(start=35.0, step=10.0, end=45.0),
        energies=[1.0],
        reference_leg_damping=35.0,
        episode=EpisodeConfig(max_hops=11, steady_window=10),
        workers=1,
    )


def test_run_sweep_layout_and_determinism(tiny_spec):
    first = run_sweep(tiny_spec, progress=False)
    assert len(first.cells) == 4
    assert [c.ground.ground_stiffness for c in first.cells] == [3800.0, 3800.0, 4600.0, 4600.0]
    assert [c.ground.ground_damping for c in first.cells] == [35.0, 45.0, 35.0, 45.0]
    for cell in first.cells:
        assert [o.leg_stiffness for o in cell.outcomes] == [3500.0, 4500.0]

    pooled = run_sweep(tiny_spec, workers=2, progress=False)
    assert pooled == first


@pytest.mark.slow
def test_default_grid_trends():
    result = run_sweep(SweepSpec(leg_damping=[35.0], energies=[1.0], workers=8), progress=False)
    winner_map = best_stiffness_map(result, leg_damping=35.0, energy=1.0)
    assert 5000.0 in winner_map.winners_at(5400.0, 15.0)
    # most damped reachable cell on the softest ground
    soft_cells = [c for c in result.cells if c.ground.ground_stiffness == 2400.0 and c.reachable]
    assert soft_cells
    cell = max(soft_cells, key=lambda c: c.ground.ground_damping)
    apexes = [o.apex_mean for o in cell.outcomes if o.succeeded]
    assert 3000.0 in cell.winners or max(apexes) - min(apexes) <= 0.001
    assert trend_violations(result, 35.0, 1.0, slack=1e-6) == []
    for cell in result.cells:
        for outcome in cell.outcomes:
            if outcome.succeeded:
                assert outcome.apex_std < 1e-6


@pytest.mark.slow
def test_success_region_grows_with_energy_and_leg_damping_costs_height():
    result = run_sweep(SweepSpec(workers=8), progress=False)
    regions = [success_region(result, e) for e in result.spec.energies]
    for smaller, larger in zip(regions, regions[1:]):
        assert smaller.issubset(larger)
        assert smaller.count < larger.count

    means = mean_apex_by_leg_damping(result, 1.0)
    assert means[30.0] > means[35.0] > means[40.0]


def test_grid_range_from_points():
    axis = GridRange(points=[2401.7, 3410.8, 4420.0])
    np.testing.assert_array_equal(axis.values(), [2401.7, 3410.8, 4420.0])
    with pytest.raises(ValueError):
        GridRange(points=[17.1, 17.1])
    with pytest.raises(ValueError):
        GridRange(points=[1.0, 2.0], start=1.0, step=1.0, end=2.0)
    with pytest.raises(ValueError):
        GridRange(start=1.0, end=2.0)


def test_incomplete_cells_are_discarded():
    # the softer leg cannot store 12 J below its rest length, so it never runs
    spec = SweepSpec(
        leg_stiffness=[2000.0, 3000.0],
        leg_damping=[35.0],
        ground_stiffness=GridRange(points=[4400.0]),
        ground_damping=GridRange(points=[35.0]),
        energies=[12.0],
        reference_leg_damping=35.0,
        discard_incomplete=True,
        episode=EpisodeConfig(max_hops=11, steady_window=10),
        workers=1,
    )
    result = run_sweep(spec, progress=False)
    (cell,) = result.cells
    assert cell.discarded
    assert cell.winners == ()
    assert cell.outcome_for(2000.0).status is EpisodeStatus.NUMERICAL_FAILURE
    assert best_stiffness_map(result).winners_at(4400.0, 35.0) == ()
