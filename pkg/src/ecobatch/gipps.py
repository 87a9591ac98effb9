"""Gipps-style car following used to predict and simulate human-driven vehicles.

Stepping convention: the state at tick ``t`` is ``(x_t, v_t)`` where ``v_t`` is
the speed held during ``[t, t + theta)``.  One step moves the vehicle with
``v_t`` and then picks ``v_{t+1}`` from the positions at ``t + 1``.  Because the
safe-speed term never lets a vehicle cover more than its spare gap in one tick,
and fronts never move backwards, spare gaps stay nonnegative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Phase, SignalPlan, TimeGrid, VehicleParams, phase_at, plan_ticks


@dataclass(frozen=True)
class FollowingContext:
    """Inputs to one speed prediction.

    ``clearance`` is the spare gap to the front vehicle (already net of
    ``l_v`` and ``S_HDV``); ``None`` for a leader.  ``to_stopline`` is
    ``L_s - x_self``.
    """

    v_self: float
    v_front: Optional[float]
    clearance: Optional[float]
    to_stopline: float


def safe_speed(gap: float, params: VehicleParams, grid: TimeGrid) -> float:
    """Largest speed from which a stop is possible within ``gap`` at ``|d_max|``.

    Never exceeds ``gap / theta``, so one tick at this speed cannot eat more
    than the spare gap.
    """
    b = -params.d_max
    bth = b * grid.theta
    return -bth + math.sqrt(bth * bth + 2.0 * b * max(gap, 0.0))


def gipps_speed(v_self: float, v_front: Optional[float], clearance: Optional[float],
                params: VehicleParams, grid: TimeGrid) -> float:
    """Next-tick speed: min of accelerating, the speed limit and the safe speed.

    ``v_front`` does not enter the result: the front is assumed able to stop
    at once.
    """
    v = min(v_self + params.a_max * grid.theta, params.v_max)
    if clearance is not None:
        v = min(v, safe_speed(clearance, params, grid))
    return max(v, params.v_min)


def predict_hdv_speed(ctx: FollowingContext, phase: Phase, params: VehicleParams,
                      grid: TimeGrid) -> float:
    v = gipps_speed(ctx.v_self, ctx.v_front, ctx.clearance, params, grid)
    # The stop line only binds vehicles that have not passed it.
    if phase is not Phase.GREEN and ctx.to_stopline >= 0:
        v = min(v, gipps_speed(ctx.v_self, 0.0, ctx.to_stopline, params, grid))
    return v


def next_speed(v: float, x_next: float, x_front_next: Optional[float], stop_binding: bool,
               spacing: float, params: VehicleParams, theta: float) -> float:
    """Speed for ``[t+1, t+2)`` given the positions at ``t + 1``.

    Shared by real stepping and by prediction rollouts so both produce
    bit-identical numbers.  ``stop_binding`` is true when the phase at
    ``t + 1`` is not green.
    """
    b = -params.d_max
    bth = b * theta
    v_new = min(v + params.a_max * theta, params.v_max)
    if x_front_next is not None:
        g = x_front_next - x_next - spacing
        v_new = min(v_new, -bth + math.sqrt(bth * bth + 2.0 * b * (g if g > 0.0 else 0.0)))
    if stop_binding and x_next <= params.L_s:
        g = params.L_s - x_next
        v_new = min(v_new, -bth + math.sqrt(bth * bth + 2.0 * b * g))
    return v_new if v_new > params.v_min else params.v_min


def step_hdv(position: float, speed: float, front_position: Optional[float],
             plan: SignalPlan, params: VehicleParams, grid: TimeGrid, t: int,
             speed_factor: float = 1.0, spacing: Optional[float] = None) -> tuple[float, float]:
    """Advance one tick from ``(x_t, v_t)`` to ``(x_{t+1}, v_{t+1})``.

    ``front_position`` is the front vehicle's position at ``t + 1`` (fronts are
    stepped first) or ``None`` for a leader.  ``speed_factor`` scales the
    chosen speed, modelling a driver slower than the model predicts.
    """
    if spacing is None:
        spacing = params.l_v + params.S_HDV
    x_next = position + speed * grid.theta
    binding = phase_at(plan, t + 1, grid) is not Phase.GREEN
    v_next = next_speed(speed, x_next, front_position, binding, spacing, params, grid.theta)
    return x_next, v_next * speed_factor


def rollout(position: float, speed: float, t: int, t_end: int,
            front_positions: Callable[[int], Optional[float]], plan: SignalPlan,
            params: VehicleParams, grid: TimeGrid,
            spacing: Optional[float] = None) -> np.ndarray:
    """Model positions at ticks ``t..t_end`` from the state ``(x_t, v_t)``.

    ``front_positions(tick)`` gives the front position at an absolute tick,
    or ``None`` for a leader.
    """
    if spacing is None:
        spacing = params.l_v + params.S_HDV
    theta = grid.theta
    cycle, green, _, offset = plan_ticks(plan, theta)
    xs = np.empty(max(t_end - t + 1, 1))
    xs[0] = position
    x, v = position, speed
    for i, tick in enumerate(range(t + 1, t_end + 1), start=1):
        x = x + v * theta
        xs[i] = x
        v = next_speed(v, x, front_positions(tick), (tick + offset) % cycle >= green,
                       spacing, params, theta)
    return xs


def simulate_benchmark(scenario, params: VehicleParams, plan: SignalPlan, grid: TimeGrid,
                       K=None) -> list:
    """All vehicles, CAVs included, driven by the car-following model.

    Thin wrapper over the closed-loop simulator's benchmark mode; returns the
    realized trajectories in entry order.
    """
    from .sim import run_benchmark
    return [v.trajectory for v in run_benchmark(scenario, params, plan, grid, K).vehicles]
