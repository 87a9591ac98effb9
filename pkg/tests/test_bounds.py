import pytest
from hypothesis import given, strategies as st

from ecobatch.bounds import Mode, feasible_interval, gap_certificate
from ecobatch.core import translate


def test_static_example(plan, grid):
    assert feasible_interval(25, 70, 80, 15, plan, 2, grid, Mode.STATIC) == list(range(46, 55))


def test_rolling_example(plan, grid):
    assert feasible_interval(25, 70, 80, 15, plan, 2, grid, Mode.ROLLING) == list(range(46, 56))


def test_leader_singleton(plan, grid):
    # Enters at 0 and leaves at T_min in rolling mode: only T_min fits.
    assert feasible_interval(0, None, 15, 15, plan, 2, grid, "rolling") == [15]


def test_red_travel_times_removed(plan, grid):
    # Crossing at t_e + xi + 1 must avoid red [30, 60).
    assert feasible_interval(10, None, 50, 15, plan, 2, grid, Mode.STATIC) == [15, 16, 17, 18]
    assert feasible_interval(10, 35, 50, 15, plan, 2, grid, Mode.STATIC) == []


def test_interval_extends_past_phi_cycles(plan, grid):
    iv = feasible_interval(200, None, 300, 15, plan, 1, grid, Mode.STATIC)
    assert all(not 30 <= (200 + xi + 1) % 60 < 60 for xi in iv)
    assert iv


def test_precondition(plan, grid):
    with pytest.raises(ValueError):
        feasible_interval(10, None, 10, 15, plan, 2, grid, Mode.STATIC)


def test_certificate_zero_for_optimal_entry(batch):
    e = batch.entries[0]
    c = gap_certificate(translate(e.trajectory, 9), batch, [e.travel_ticks])
    assert c.sup_gap == 0.0 and c.inf_gap == 0.0
    assert c.best_batch_fuel_in_interval == c.realized_fuel == e.fuel


def test_empty_interval_certificate(batch):
    c = gap_certificate(batch.entries[0].trajectory, batch, [1, 2, 3])
    assert c.empty and c.sup_gap == 0.0
    assert c.to_dict()["empty_interval"] is True


@given(st.integers(0, 75), st.sets(st.integers(15, 90), min_size=1))
def test_certificate_properties(batch, i, interval):
    e = batch.entries[i]
    c = gap_certificate(e.trajectory, batch, interval)
    assert c.sup_gap >= 0.0 and c.inf_gap == 0.0
    if e.travel_ticks in interval:
        assert c.best_batch_fuel_in_interval <= c.realized_fuel
    bigger = gap_certificate(e.trajectory, batch, interval | set(range(15, 91)))
    assert bigger.best_batch_fuel_in_interval <= c.best_batch_fuel_in_interval
    expected = abs(c.realized_fuel - c.best_batch_fuel_in_interval) / c.realized_fuel
    assert c.sup_gap == expected
