"""Shared domain types: time grid, signal plan, vehicle limits and trajectories."""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

TOL = 1e-9


class HorizonOverflow(ValueError):
    """A translated trajectory would run past the modelling horizon."""


class TrajectoryError(ValueError):
    """A position sequence violates a trajectory invariant."""


def _ticks(seconds: float, theta: float, name: str) -> int:
    n = seconds / theta
    k = int(round(n))
    if abs(n - k) > 1e-9:
        raise ValueError(f"{name}={seconds} is not a multiple of theta={theta}")
    return k


@dataclass(frozen=True)
class TimeGrid:
    theta: float = 1.0
    horizon_ticks: int = 240

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.horizon_ticks < 1:
            raise ValueError("horizon_ticks must be >= 1")

    def ticks(self, seconds: float, name: str = "duration") -> int:
        return _ticks(seconds, self.theta, name)


class Phase(enum.Enum):
    GREEN = "G"
    YELLOW = "Y"
    RED = "R"


@dataclass(frozen=True)
class SignalPlan:
    """Fixed-cycle plan with phase order green -> yellow -> red.

    ``offset`` is the position within the cycle (seconds) at tick 0.
    """

    cycle: float = 60.0
    green: float = 25.0
    yellow: float = 5.0
    red: float = 30.0
    offset: float = 0.0

    def __post_init__(self):
        if min(self.green, self.yellow, self.red) < 0 or self.cycle <= 0:
            raise ValueError("phase durations must be nonnegative and cycle positive")
        if abs(self.green + self.yellow + self.red - self.cycle) > 1e-9:
            raise ValueError("green + yellow + red must equal cycle")


@functools.lru_cache(maxsize=64)
def plan_ticks(plan: SignalPlan, theta: float) -> tuple[int, int, int, int]:
    """``(cycle, green, yellow, offset)`` of a plan in whole ticks."""
    return (_ticks(plan.cycle, theta, "cycle"), _ticks(plan.green, theta, "green"),
            _ticks(plan.yellow, theta, "yellow"), _ticks(plan.offset, theta, "offset"))


def phase_at(plan: SignalPlan, tick: int, grid: TimeGrid) -> Phase:
    if tick < 0:
        raise ValueError("tick must be >= 0")
    cycle, green, yellow, offset = plan_ticks(plan, grid.theta)
    pos = (tick + offset) % cycle
    if pos < green:
        return Phase.GREEN
    if pos < green + yellow:
        return Phase.YELLOW
    return Phase.RED


def red_intervals(plan: SignalPlan, phi: int, grid: TimeGrid) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` tick ranges of the first ``phi`` red phases.

    A red phase already running at tick 0 (because of the offset) counts as the
    first one and is clipped at 0.
    """
    if phi < 1:
        raise ValueError("phi must be >= 1")
    theta = grid.theta
    cycle = _ticks(plan.cycle, theta, "cycle")
    red = _ticks(plan.red, theta, "red")
    offset = _ticks(plan.offset, theta, "offset") % cycle
    red_start = cycle - red
    first = red_start - offset
    if first + red <= 0:
        first += cycle
    out = []
    for j in range(phi):
        b = first + j * cycle
        out.append((max(b, 0), b + red))
    return out


@dataclass(frozen=True)
class VehicleParams:
    """Kinematic and geometric limits shared by all vehicles.

    Defaults reproduce the experiment table; ``v_D`` and ``S_CAV`` are not
    given there and default to ``v_I`` and ``S_HDV`` respectively.
    """

    v_min: float = 0.0
    v_max: float = 16.0
    a_max: float = 2.0
    d_max: float = -2.0
    d_E: float = -6.0
    v_I: float = 6.0
    v_D: float = 6.0
    l_v: float = 4.0
    S_HDV: float = 1.0
    S_CAV: float = 1.0
    L_s: float = 200.0

    def __post_init__(self):
        for name in ("v_min", "v_max", "a_max", "d_max", "d_E", "v_I", "v_D",
                     "l_v", "S_HDV", "S_CAV", "L_s"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.v_min <= self.v_max:
            raise ValueError("v_max: must be >= v_min")
        if self.v_max < max(self.v_I, self.v_D):
            raise ValueError("v_max: must be >= v_I and v_D")
        if not self.v_min <= self.v_I <= self.v_max:
            raise ValueError("v_I: must lie within [v_min, v_max]")
        if not self.v_min <= self.v_D <= self.v_max:
            raise ValueError("v_D: must lie within [v_min, v_max]")
        if not self.d_E <= self.d_max < 0 < self.a_max:
            raise ValueError("d_max: require d_E <= d_max < 0 < a_max")
        if self.v_min < 0:
            raise ValueError("v_min: vehicles never reverse, must be >= 0")
        if self.L_s <= 0:
            raise ValueError("L_s: must be positive")
        if self.l_v <= 0:
            raise ValueError("l_v: must be positive")
        if self.S_HDV < 0 or self.S_CAV < 0:
            raise ValueError("S_HDV/S_CAV: must be nonnegative")


class VehicleKind(enum.Enum):
    HDV = "HDV"
    CAV = "CAV"


def min_spacing(params: VehicleParams, follower: VehicleKind, front: VehicleKind) -> float:
    """Required front-to-front spacing ``l_v + S`` for a follower/front pair.

    HDVs keep ``S_HDV`` (the car-following model knows nothing else); CAVs keep
    the minimum gap of the vehicle type they follow.
    """
    if follower is VehicleKind.HDV or front is VehicleKind.HDV:
        return params.l_v + params.S_HDV
    return params.l_v + params.S_CAV


@dataclass
class Vehicle:
    id: int
    kind: VehicleKind
    entry_tick: int
    position: float = 0.0
    speed: float = 6.0


class Trajectory:
    """Discrete-time cumulative-position sequence starting at ``start_tick``.

    Only positions are stored; speeds and accelerations are derived.  Past the
    last stored position the vehicle is taken to keep its final speed.

    Passing ``limits`` makes the constructor also check speed bounds and
    accelerations against ``[min_accel, a_max]`` (``min_accel`` defaults to
    ``d_max``).
    """

    __slots__ = ("_x", "start_tick", "theta")

    def __init__(self, positions: Iterable[float], start_tick: int = 0, theta: float = 1.0,
                 limits: Optional[VehicleParams] = None, min_accel: Optional[float] = None):
        x = np.array(positions, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise TrajectoryError("need at least two positions")
        if not np.all(np.isfinite(x)):
            raise TrajectoryError("positions must be finite")
        if x[0] != 0.0:
            raise TrajectoryError("positions[0] must be 0")
        if np.any(np.diff(x) < -TOL):
            raise TrajectoryError("positions must be nondecreasing")
        if start_tick < 0 or int(start_tick) != start_tick:
            raise TrajectoryError("start_tick must be a nonnegative integer")
        x.flags.writeable = False
        self._x = x
        self.start_tick = int(start_tick)
        self.theta = float(theta)
        if limits is not None:
            self.check_kinematics(limits, min_accel)

    def check_kinematics(self, params: VehicleParams, min_accel: Optional[float] = None) -> None:
        lo = params.d_max if min_accel is None else min_accel
        v = self.speeds
        if np.any(v < params.v_min - TOL) or np.any(v > params.v_max + TOL):
            i = int(np.argmax((v < params.v_min - TOL) | (v > params.v_max + TOL)))
            raise TrajectoryError(f"speed {v[i]} at index {i} outside [{params.v_min}, {params.v_max}]")
        a = self.accelerations
        bad = (a < lo - TOL) | (a > params.a_max + TOL)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise TrajectoryError(f"acceleration {a[i]} at index {i} outside [{lo}, {params.a_max}]")

    @property
    def positions(self) -> np.ndarray:
        return self._x

    @property
    def speeds(self) -> np.ndarray:
        """``v_t = (x_{t+1} - x_t) / theta`` for every stored interval."""
        return np.diff(self._x) / self.theta

    @property
    def accelerations(self) -> np.ndarray:
        return np.diff(self.speeds) / self.theta

    @property
    def end_tick(self) -> int:
        """Absolute tick of the last stored position."""
        return self.start_tick + self._x.size - 1

    def __len__(self) -> int:
        return self._x.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.start_tick == other.start_tick and self.theta == other.theta
                and np.array_equal(self._x, other._x))

    def __repr__(self) -> str:
        return f"Trajectory(start_tick={self.start_tick}, n={self._x.size}, end={self._x[-1]:g})"

    def position_at(self, tick: int) -> float:
        i = tick - self.start_tick
        if i < 0:
            raise IndexError(f"tick {tick} precedes start_tick {self.start_tick}")
        n = self._x.size
        if i < n:
            return float(self._x[i])
        return float(self._x[-1] + (self._x[-1] - self._x[-2]) * (i - n + 1))

    def window(self, first: int, last: int) -> np.ndarray:
        """Positions at absolute ticks ``first..last`` inclusive, extrapolated past the end."""
        i0 = first - self.start_tick
        i1 = last - self.start_tick
        if i0 < 0:
            raise IndexError(f"tick {first} precedes start_tick {self.start_tick}")
        n = self._x.size
        if i1 < n:
            return self._x[i0:i1 + 1]
        idx = np.arange(i0, i1 + 1)
        out = np.empty(idx.size)
        inside = idx < n
        out[inside] = self._x[idx[inside]]
        out[~inside] = self._x[-1] + (self._x[-1] - self._x[-2]) * (idx[~inside] - n + 1)
        return out

    def departure_index(self, stop_line: float) -> Optional[int]:
        """Index (relative to start) at which the vehicle leaves the stop line.

        This is the first index with position >= ``stop_line`` from which the
        vehicle moves on; a vehicle resting exactly on the line has not left.
        ``None`` if it never does within the stored positions.
        """
        x = self._x
        reached = np.nonzero(x >= stop_line - TOL)[0]
        for i in reached:
            if x[i] > stop_line + TOL or i + 1 >= x.size or x[i + 1] > x[i] + TOL:
                return int(i)
        return None

    def crossing_index(self, stop_line: float) -> Optional[int]:
        """First index with position strictly beyond ``stop_line``."""
        beyond = np.nonzero(self._x > stop_line + TOL)[0]
        return int(beyond[0]) if beyond.size else None


def translate(traj: Trajectory, new_start: int, horizon_ticks: Optional[int] = None) -> Trajectory:
    """Shift a batch trajectory (starting at tick 0) so it starts at ``new_start``."""
    if traj.start_tick != 0:
        raise ValueError("only trajectories starting at tick 0 can be translated")
    if new_start < 0:
        raise ValueError("new_start must be >= 0")
    if horizon_ticks is not None and new_start + len(traj) - 1 > horizon_ticks:
        raise HorizonOverflow(
            f"start {new_start} + span {len(traj) - 1} exceeds horizon {horizon_ticks}")
    if new_start == 0:
        return traj
    out = Trajectory.__new__(Trajectory)
    out._x = traj.positions
    out.start_tick = int(new_start)
    out.theta = traj.theta
    return out

