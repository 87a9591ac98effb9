import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecobatch.core import Phase, Trajectory, Vehicle, VehicleKind, phase_at
from ecobatch.online import (FrontPrediction, NoFeasible, PlannerConfig, PlannerState,
                             PredictionSource, Violation, ViolationKind, examine, plan_static,
                             plan_step, predict_front, select_candidate)


def cav(entry, position=0.0, speed=6.0):
    return Vehicle(0, VehicleKind.CAV, entry, position, speed)


def test_leader_takes_cheapest_entry(batch, plan, params, grid):
    i, aligned = select_candidate(batch, 0, 0, (0.0, 6.0), None, plan, params, grid)
    assert i == 0 and aligned.travel_ticks == batch.entries[0].travel_ticks
    np.testing.assert_array_equal(aligned.positions, batch.entries[0].trajectory.positions)


def test_signal_rejection(batch, plan, params, grid):
    # Entering at tick 20, the cheapest 15-tick entry would cross at 36: red.
    best = batch.entries[0]
    with pytest.raises(Violation) as exc:
        examine(best.trajectory, 20, 20, (0.0, 6.0), None, plan, params, grid)
    assert exc.value.kind is ViolationKind.SIGNAL
    _, aligned = select_candidate(batch, 20, 20, (0.0, 6.0), None, plan, params, grid)
    cross = 20 + Trajectory(aligned.positions).crossing_index(params.L_s)
    assert phase_at(plan, cross, grid) is not Phase.RED


def test_safe_distance_rejection(batch, plan, params, grid):
    front = FrontPrediction(0, np.full(300, 50.0), PredictionSource.GIPPS_HDV)
    with pytest.raises(Violation) as exc:
        examine(batch.entries[0].trajectory, 0, 0, (0.0, 6.0), front, plan, params, grid)
    assert exc.value.kind is ViolationKind.SAFE_DISTANCE
    with pytest.raises(NoFeasible) as nf:
        select_candidate(batch, 0, 0, (0.0, 6.0), front, plan, params, grid)
    assert set(nf.value.rejections) == set(range(len(batch)))


def test_selection_respects_front_gap(batch, plan, params, grid):
    # A front 30 m ahead at 6 m/s that never stops.
    front = FrontPrediction(0, 30.0 + 6.0 * np.arange(300), PredictionSource.GIPPS_HDV)
    _, aligned = select_candidate(batch, 0, 0, (0.0, 6.0), front, plan, params, grid)
    own = aligned.window(0, 60)
    cutoff = own <= params.L_s
    assert np.all((front.window(0, 60) - own - 5.0)[cutoff] >= -1e-9)


def test_bridge_checks(batch, plan, params, grid):
    tr = batch.entries[0].trajectory
    x5 = tr.position_at(5)
    # On track: accepted and starts at the actual position.
    a = examine(tr, 0, 5, (x5, tr.speeds[4]), None, plan, params, grid)
    assert a.positions[0] == x5 and a.start_tick == 5
    # Far ahead of the track: would need to drive backwards.
    with pytest.raises(Violation) as exc:
        examine(tr, 0, 5, (x5 + 50.0, tr.speeds[4]), None, plan, params, grid)
    assert exc.value.kind is ViolationKind.REVERSAL
    # Far behind: the bridge speed exceeds the acceleration limit.
    with pytest.raises(Violation) as exc:
        examine(tr, 0, 5, (x5 - 8.0, tr.speeds[4]), None, plan, params, grid)
    assert exc.value.kind is ViolationKind.ACCELERATION


def test_plan_static_is_entry_selection(batch, plan, params, grid):
    a = plan_static(cav(7), batch, None, plan, params, grid)
    _, b = select_candidate(batch, 7, 7, (0.0, 6.0), None, plan, params, grid)
    assert a == b


@pytest.mark.parametrize("entry", [0, 7, 21, 44, 63])
def test_rolling_sections_reproduce_static(batch, plan, params, grid, entry):
    static = plan_static(cav(entry), batch, None, plan, params, grid)
    cfg, state = PlannerConfig(1.0), PlannerState()
    xs = [0.0]
    t, v = entry, 6.0
    while xs[-1] <= params.L_s:
        s = plan_step(cav(entry, xs[-1], v), t, batch, None, plan, params, grid, state, cfg)
        assert s is not None
        v = s[1] - s[0]
        xs.append(float(s[1]))
        t += 1
    np.testing.assert_array_equal(xs, static.window(entry, t))
    assert not state.events and state.calls == t - entry


def test_plan_step_schedule_and_fallback(batch, plan, params, grid):
    cfg = PlannerConfig(2.0)
    with pytest.raises(ValueError):
        plan_step(cav(0), 3, batch, None, plan, params, grid, PlannerState(), cfg)
    with pytest.raises(ValueError):
        plan_step(cav(0), 0, batch, None, plan, params, grid, PlannerState(), PlannerConfig())
    state = PlannerState()
    blocked = FrontPrediction(0, np.full(300, 20.0), PredictionSource.GIPPS_HDV)
    assert plan_step(cav(0, 10.0, 6.0), 2, batch, blocked, plan, params, grid, state, cfg) is None
    assert state.fallback and state.events[0].tick == 2


def test_predict_front_sources(batch, plan, params, grid):
    _, aligned = select_candidate(batch, 0, 0, (0.0, 6.0), None, plan, params, grid)
    realized = aligned.window(0, 3)
    p = predict_front(0, realized, 0.0, 3, 40, VehicleKind.CAV, aligned, None, plan, params, grid)
    assert p.source is PredictionSource.PLANNED_CAV
    np.testing.assert_array_equal(p.window(0, 40), aligned.window(0, 40))
    h = predict_front(0, np.array([0.0, 6.0]), 6.0, 1, 40, VehicleKind.HDV, None, None,
                      plan, params, grid)
    assert h.source is PredictionSource.GIPPS_HDV and h.position_at(2) == 12.0
    with pytest.raises(ValueError):
        predict_front(0, np.array([0.0]), 6.0, 1, 40, VehicleKind.HDV, None, None,
                      plan, params, grid)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100), st.integers(0, 20), st.floats(0, 200), st.floats(0, 16),
       st.one_of(st.none(), st.tuples(st.floats(5, 250), st.floats(0, 16))),
       st.booleans(), st.sampled_from([None, 150, 240]))
def test_screened_selection_matches_plain(batch, plan, params, grid, entry, k, x, v, front,
                                          from_now, horizon):
    fp = None if front is None else FrontPrediction(
        0, front[0] + front[1] * np.arange(400), PredictionSource.GIPPS_HDV)
    state = (0.0, 6.0) if k == 0 else (x, v)
    outcomes = []
    for screen in (True, False):
        try:
            i, a = select_candidate(batch, entry, entry + k, state, fp, plan, params, grid,
                                    horizon_ticks=horizon, check_from_now=from_now, screen=screen)
            outcomes.append(("ok", i, a))
        except NoFeasible as exc:
            outcomes.append(("none", exc.rejections))
    assert outcomes[0] == outcomes[1]
