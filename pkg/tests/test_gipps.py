import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecobatch.core import Phase, SignalPlan, TimeGrid, VehicleParams, phase_at
from ecobatch.gipps import (FollowingContext, gipps_speed, next_speed, predict_hdv_speed,
                            rollout, safe_speed, step_hdv)


@given(st.floats(0, 500), st.sampled_from([0.5, 1.0]))
def test_safe_speed_never_exceeds_spare_gap(gap, theta):
    v = safe_speed(gap, VehicleParams(), TimeGrid(theta))
    assert v >= 0
    assert v * theta <= gap + 1e-9


@given(st.floats(0, 500))
def test_safe_speed_allows_stop_within_gap(gap):
    # From v, braking at |d_max| each tick covers v*theta + stopping distance.
    p, g = VehicleParams(), TimeGrid()
    v = safe_speed(gap, p, g)
    b = -p.d_max
    assert v * g.theta + v * v / (2 * b) <= gap + 1e-7


def test_gipps_speed_caps(params, grid):
    assert gipps_speed(6.0, None, None, params, grid) == 8.0
    assert gipps_speed(15.5, None, None, params, grid) == params.v_max
    assert gipps_speed(10.0, 0.0, 0.0, params, grid) == 0.0


def test_stop_line_binds_only_before_line(params, grid):
    ctx = FollowingContext(10.0, None, None, to_stopline=3.0)
    assert predict_hdv_speed(ctx, Phase.RED, params, grid) == safe_speed(3.0, params, grid)
    assert predict_hdv_speed(ctx, Phase.GREEN, params, grid) == 12.0
    past = FollowingContext(10.0, None, None, to_stopline=-1.0)
    assert predict_hdv_speed(past, Phase.RED, params, grid) == 12.0


def test_next_speed_matches_gipps_speed(params, grid):
    v = next_speed(6.0, 10.0, 30.0, False, 5.0, params, 1.0)
    assert v == gipps_speed(6.0, None, 15.0, params, grid)


def test_speed_factor_scales(params, grid):
    x1, v1 = step_hdv(0.0, 6.0, None, SignalPlan(), params, grid, 0, speed_factor=0.9)
    assert x1 == 6.0 and v1 == pytest.approx(8.0 * 0.9)


@given(st.floats(0, 16), st.integers(0, 119))
def test_rollout_equals_repeated_steps(v0, t0):
    p, g, plan = VehicleParams(), TimeGrid(), SignalPlan()
    xs = rollout(0.0, v0, t0, t0 + 40, lambda _k: None, plan, p, g)
    x, v = 0.0, v0
    for i in range(1, 41):
        x, v = step_hdv(x, v, None, plan, p, g, t0 + i - 1)
        assert xs[i] == x


def test_leader_stops_at_red_line(params, grid):
    plan = SignalPlan(offset=30.0)
    xs = rollout(0.0, 6.0, 0, 59, lambda _k: None, plan, params, grid)
    # Red until tick 30: the leader waits on the near side of the line.
    for t in range(30):
        assert phase_at(plan, t, grid) is Phase.RED
        assert xs[t] <= params.L_s + 1e-9
    assert xs[29] > params.L_s - 1.0
    assert xs[-1] > params.L_s


@given(st.lists(st.floats(0, 16), min_size=60, max_size=60), st.floats(5, 60))
def test_follower_keeps_nonnegative_spare_gap(front_speeds, head):
    p, g, plan = VehicleParams(), TimeGrid(), SignalPlan(cycle=60, green=55, yellow=5, red=0)
    front = np.concatenate(([head], head + np.cumsum(front_speeds)))
    spacing = p.l_v + p.S_HDV
    xs = rollout(0.0, 0.0, 0, 60, lambda k: float(front[k]), plan, p, g, spacing)
    if head >= spacing:
        assert np.all(front[: xs.size] - xs - spacing >= -1e-9)
