import math

import pytest
from hypothesis import given, strategies as st

from ecobatch.core import Trajectory, translate
from ecobatch.fuel import (DEFAULT_COEFFICIENTS, TABLE_ROWS, VtMicroCoefficients, fuel_rate,
                           interval_fuel, interval_fuel_sum, trajectory_fuel)


def direct_rate(v, a, rows=TABLE_ROWS):
    """Independent oracle: the double sum written out, printed layout rows[j][i]."""
    return math.exp(math.fsum(rows[j][i] * v ** i * a ** j for i in range(4) for j in range(4)))


def test_idle_rate():
    assert math.isclose(fuel_rate(0.0, 0.0), math.exp(-7.537), rel_tol=1e-12)


def test_printed_layout_mapping():
    K = DEFAULT_COEFFICIENTS.K
    assert K[0][0] == -7.537
    assert K[1][0] == 0.4438  # coefficient of v
    assert K[0][1] == 0.0973  # coefficient of a
    assert VtMicroCoefficients.from_table_rows(TABLE_ROWS) == DEFAULT_COEFFICIENTS
    assert DEFAULT_COEFFICIENTS.table_rows() == [list(r) for r in TABLE_ROWS]


@given(st.floats(0, 16), st.floats(-2, 2))
def test_rate_matches_direct_sum(v, a):
    assert math.isclose(fuel_rate(v, a), direct_rate(v, a), rel_tol=1e-9)


def test_overflow_is_infinite():
    # Hard braking at speed drives the cubic terms huge but still finite.
    assert math.isfinite(fuel_rate(16.0, -6.0)) and fuel_rate(16.0, -6.0) > 1e25
    assert fuel_rate(1e4, -1e4) == math.inf


def test_coefficients_validation():
    with pytest.raises(ValueError):
        VtMicroCoefficients(((0.0,) * 4,) * 3)
    with pytest.raises(ValueError):
        VtMicroCoefficients(((math.nan,) * 4,) * 4)


def test_interval_fuel_theta():
    assert interval_fuel(3.0, 1.0, 0.5) == fuel_rate(3.0, 1.0) * 0.5
    with pytest.raises(ValueError):
        interval_fuel(3.0, 1.0, 0.0)


def test_interval_fuel_sum_hand_case():
    tr = Trajectory([0.0, 2.0, 5.0, 8.0])
    expected = math.fsum([fuel_rate(2.0, 1.0), fuel_rate(3.0, 0.0), fuel_rate(3.0, 0.0)])
    assert interval_fuel_sum(tr, 0, 3) == expected
    # Past the stored end the speed is held, so the acceleration is 0.
    assert interval_fuel_sum(tr, 2, 4) == math.fsum([fuel_rate(3.0, 0.0)] * 2)


def test_trajectory_fuel_stops_at_departure():
    tr = Trajectory([0.0, 4.0, 8.0, 12.0, 16.0])
    assert trajectory_fuel(tr, 8.0) == interval_fuel_sum(tr, 0, 2)
    assert trajectory_fuel(tr, 100.0) == interval_fuel_sum(tr, 0, 4)


@given(st.integers(0, 75), st.integers(0, 500))
def test_translate_preserves_fuel(batch, i, start):
    entry = batch.entries[i]
    moved = translate(entry.trajectory, start)
    assert trajectory_fuel(moved, 200.0) == trajectory_fuel(entry.trajectory, 200.0)
