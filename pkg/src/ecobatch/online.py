"""Online batch selection: translation, examination and the two planners.

A candidate is a batch trajectory shifted to the vehicle's entry tick.  It is
kept aligned to that entry tick even on re-plans; the vehicle bridges from its
actual state onto the candidate's position track in one tick.

Conventions used throughout: ``(x, v)`` at tick ``t0`` is the position at
``t0`` and the speed held during ``[t0 - 1, t0)``.  A candidate is across the
stop line at the first tick where its position exceeds ``L_s``; the signal
must show green or yellow at that tick.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (TOL, HorizonOverflow, Phase, SignalPlan, TimeGrid, Trajectory,
                   Vehicle, VehicleKind, VehicleParams, min_spacing, phase_at, plan_ticks,
                   translate)
from .gipps import rollout
from .offline import EcoBatch


@dataclass(frozen=True)
class PlannerConfig:
    """``epsilon=None`` plans once at entry; otherwise re-plan every ``epsilon`` seconds."""

    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def is_static(self) -> bool:
        return self.epsilon is None

    def epsilon_ticks(self, grid: TimeGrid) -> Optional[int]:
        if self.epsilon is None:
            return None
        k = grid.ticks(self.epsilon, "epsilon")
        if k < 1:
            raise ValueError("epsilon must be at least one tick")
        return k


class PredictionSource(enum.Enum):
    PLANNED_CAV = "PlannedCAV"
    GIPPS_HDV = "GippsPredictedHDV"


@dataclass(frozen=True)
class FrontPrediction:
    """Front-vehicle positions at ticks ``start_tick, start_tick + 1, ...``.

    Past ticks hold realized positions, later ones the prediction.  Beyond
    the stored range the front keeps its last speed.
    """

    start_tick: int
    positions: np.ndarray
    source: PredictionSource
    kind: VehicleKind = VehicleKind.HDV

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("prediction needs at least two positions")
        if np.any(np.diff(x) < -TOL):
            raise ValueError("predicted positions must be nondecreasing")
        object.__setattr__(self, "positions", x)

    def window(self, first: int, last: int) -> np.ndarray:
        return _window(self.positions, self.start_tick, first, last)

    def position_at(self, tick: int) -> float:
        return float(self.window(tick, tick)[0])


def _window(x: np.ndarray, start: int, first: int, last: int) -> np.ndarray:
    i0, i1 = first - start, last - start
    if i0 < 0:
        raise IndexError(f"tick {first} precedes start tick {start}")
    n = x.size
    if i1 < n:
        return x[i0:i1 + 1]
    idx = np.arange(i0, i1 + 1)
    out = np.where(idx < n, x[np.minimum(idx, n - 1)],
                   x[-1] + (x[-1] - x[-2]) * (idx - n + 1))
    return out


class ViolationKind(enum.Enum):
    SIGNAL = "Signal"
    SAFE_DISTANCE = "SafeDistance"
    EMERGENCY_BRAKING = "EmergencyBraking"
    REVERSAL = "Reversal"
    ACCELERATION = "Acceleration"


class Violation(Exception):
    """A candidate failed examination at ``tick``."""

    def __init__(self, kind: ViolationKind, tick: int, detail: str = ""):
        super().__init__(f"{kind.value} at tick {tick}" + (f": {detail}" if detail else ""))
        self.kind = kind
        self.tick = tick


class NoFeasible(Exception):
    """Every batch candidate was excluded or failed examination."""

    def __init__(self, message: str, rejections: Optional[dict] = None):
        super().__init__(message)
        self.rejections = rejections or {}


@dataclass(frozen=True, eq=False)
class AlignedPlan:
    """Accepted candidate as absolute positions from ``start_tick`` on.

    ``positions[0]`` is the vehicle's actual position at ``start_tick``.
    """

    start_tick: int
    positions: np.ndarray
    entry_tick: int
    travel_ticks: int
    batch_index: int = -1

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlignedPlan):
            return NotImplemented
        return ((self.start_tick, self.entry_tick, self.travel_ticks, self.batch_index)
                == (other.start_tick, other.entry_tick, other.travel_ticks, other.batch_index)
                and np.array_equal(self.positions, other.positions))

    def position_at(self, tick: int) -> float:
        return float(_window(self.positions, self.start_tick, tick, tick)[0])

    def window(self, first: int, last: int) -> np.ndarray:
        return _window(self.positions, self.start_tick, first, last)


def examine(candidate: Trajectory, entry_tick: int, now_tick: int, state: tuple[float, float],
            front: Optional[FrontPrediction], plan: SignalPlan, params: VehicleParams,
            grid: TimeGrid, spacing: Optional[float] = None,
            horizon_ticks: Optional[int] = None, check_from_now: bool = False) -> AlignedPlan:
    """Translate a batch candidate to ``entry_tick`` and test it from ``now_tick``.

    Checks, in order: the signal at the crossing tick, the spare gap to the
    front over the candidate's approach (from entry, or from ``now_tick``
    when ``check_from_now``), and on re-plans the one-tick bridge from the
    actual ``(x, v)`` plus the tick after it.

    Raises
    ------
    Violation
        With the kind and tick of the first failed check.
    HorizonOverflow
        If the translated candidate runs past ``horizon_ticks``.
    """
    if candidate.start_tick != 0:
        raise ValueError("batch candidates start at tick 0")
    if now_tick < entry_tick:
        raise ValueError("now_tick precedes entry_tick")
    aligned = translate(candidate, entry_tick, horizon_ticks)
    theta = grid.theta
    x, v = state
    cross = candidate.crossing_index(params.L_s)
    if cross is None:
        raise Violation(ViolationKind.SIGNAL, aligned.end_tick, "never crosses the stop line")
    t_cross = max(entry_tick + cross, now_tick + 1)
    if phase_at(plan, t_cross, grid) is Phase.RED:
        raise Violation(ViolationKind.SIGNAL, t_cross)

    k = now_tick - entry_tick
    if front is not None:
        if spacing is None:
            spacing = min_spacing(params, VehicleKind.CAV, front.kind)
        first = now_tick + 1 if check_from_now else entry_tick
        last = entry_tick + cross - 1
        if first <= last:
            own = aligned.window(first, last)
            if first <= now_tick <= last:
                own = own.copy()
                own[now_tick - first] = x
            bad = own > front.window(first, last) - spacing + TOL
            if bad.any():
                raise Violation(ViolationKind.SAFE_DISTANCE, first + int(np.argmax(bad)))

    ahead = aligned.window(now_tick + 1, max(aligned.end_tick, now_tick + 2))
    if k > 0:
        v_req = (ahead[0] - x) / theta
        if v_req < params.v_min - TOL:
            raise Violation(ViolationKind.REVERSAL, now_tick, f"bridge speed {v_req:g}")
        if v_req < v + params.d_E * theta - TOL:
            raise Violation(ViolationKind.EMERGENCY_BRAKING, now_tick,
                            f"bridge speed {v_req:g} from {v:g}")
        if v_req > v + params.a_max * theta + TOL or v_req > params.v_max + TOL:
            raise Violation(ViolationKind.ACCELERATION, now_tick, f"bridge speed {v_req:g} from {v:g}")
        a_next = ((ahead[1] - ahead[0]) / theta - v_req) / theta
        if a_next < params.d_E - TOL:
            raise Violation(ViolationKind.EMERGENCY_BRAKING, now_tick + 1)
        if a_next > params.a_max + TOL:
            raise Violation(ViolationKind.ACCELERATION, now_tick + 1)
    positions = np.concatenate(([x], ahead))
    return AlignedPlan(now_tick, positions, entry_tick, cross - 1)


class _Stacked:
    """Batch positions padded into one array, plus per-entry crossing indices."""

    def __init__(self, batch: EcoBatch):
        L = batch.params.L_s
        n = max(len(e.trajectory) for e in batch.entries)
        self.X = np.full((len(batch), n), np.inf)
        self.cross = np.full(len(batch), -1)
        self.span = np.empty(len(batch), dtype=int)
        for i, e in enumerate(batch.entries):
            x = e.trajectory.positions
            self.X[i, :x.size] = x
            self.span[i] = x.size - 1
            c = e.trajectory.crossing_index(L)
            self.cross[i] = -1 if c is None else c


_STACKED: dict = {}


def _stacked(batch: EcoBatch) -> _Stacked:
    hit = _STACKED.get(batch.hash)
    if hit is None:
        if len(_STACKED) > 16:
            _STACKED.clear()
        hit = _STACKED[batch.hash] = _Stacked(batch)
    return hit


def _screen(batch: EcoBatch, entry_tick: int, now_tick: int, x: float,
            front: Optional[FrontPrediction], plan: SignalPlan, params: VehicleParams,
            grid: TimeGrid, spacing: Optional[float], horizon_ticks: Optional[int],
            check_from_now: bool) -> list:
    """Per-entry outcome of the horizon, signal and spare-gap checks, vectorized.

    Mirrors the first part of :func:`examine`; ``None`` marks entries that
    still need the bridge checks.
    """
    st = _stacked(batch)
    n = len(batch)
    out: list = [None] * n
    cross = st.cross
    cycle, green, yellow, offset = plan_ticks(plan, grid.theta)
    t_cross = np.maximum(entry_tick + cross, now_tick + 1)
    red = (t_cross + offset) % cycle >= green + yellow
    bad_signal = (cross < 0) | red
    bad_gap = np.zeros(n, dtype=bool)
    if front is not None:
        if spacing is None:
            spacing = min_spacing(params, VehicleKind.CAV, front.kind)
        first = now_tick + 1 if check_from_now else entry_tick
        last_max = entry_tick + int(cross.max()) - 1
        if first <= last_max:
            k0 = first - entry_tick
            own = st.X[:, k0:last_max - entry_tick + 1].copy()
            if k0 <= now_tick - entry_tick < k0 + own.shape[1]:
                own[:, now_tick - first] = x
            limit = front.window(first, last_max) - spacing + TOL
            cols = np.arange(own.shape[1]) + k0
            inside = cols[None, :] < cross[:, None]
            bad_gap = ((own > limit[None, :]) & inside).any(axis=1)
    over = (np.zeros(n, dtype=bool) if horizon_ticks is None
            else entry_tick + st.span > horizon_ticks)
    for i in range(n):
        if over[i]:
            out[i] = "Horizon"
        elif bad_signal[i]:
            out[i] = ViolationKind.SIGNAL
        elif bad_gap[i]:
            out[i] = ViolationKind.SAFE_DISTANCE
    return out


def select_candidate(batch: EcoBatch, entry_tick: int, now_tick: int, state: tuple[float, float],
                     front: Optional[FrontPrediction], plan: SignalPlan, params: VehicleParams,
                     grid: TimeGrid, excluded=frozenset(), spacing: Optional[float] = None,
                     horizon_ticks: Optional[int] = None,
                     check_from_now: bool = False, screen: bool = True) -> tuple[int, AlignedPlan]:
    """Lowest-fuel batch entry that passes examination.

    With ``screen`` the cheap checks run for all entries at once and only
    survivors go through :func:`examine`; the outcome is identical.

    Raises
    ------
    NoFeasible
        When the batch is exhausted; ``rejections`` maps each tried index to
        its violation kind (or ``"Horizon"``).
    """
    if now_tick < entry_tick:
        raise ValueError("now_tick precedes entry_tick")
    pre = (_screen(batch, entry_tick, now_tick, state[0], front, plan, params, grid, spacing,
                   horizon_ticks, check_from_now) if screen else [None] * len(batch))
    rejections: dict = {}
    for i, entry in enumerate(batch.entries):
        if i in excluded:
            continue
        if pre[i] is not None:
            rejections[i] = pre[i]
            continue
        try:
            aligned = examine(entry.trajectory, entry_tick, now_tick, state, front, plan,
                              params, grid, spacing, horizon_ticks, check_from_now)
        except Violation as exc:
            rejections[i] = exc.kind
            continue
        except HorizonOverflow:
            rejections[i] = "Horizon"
            continue
        return i, AlignedPlan(aligned.start_tick, aligned.positions, entry_tick,
                              entry.travel_ticks, i)
    raise NoFeasible(f"no feasible candidate at tick {now_tick} (entry {entry_tick})", rejections)


def plan_static(vehicle: Vehicle, batch: EcoBatch, front: Optional[FrontPrediction],
                plan: SignalPlan, params: VehicleParams, grid: TimeGrid,
                horizon_ticks: Optional[int] = None) -> AlignedPlan:
    """Plan once at entry; the result is final for the vehicle."""
    _, aligned = select_candidate(batch, vehicle.entry_tick, vehicle.entry_tick,
                                  (0.0, vehicle.speed), front, plan, params, grid,
                                  horizon_ticks=horizon_ticks)
    return aligned


@dataclass(frozen=True)
class InfeasibilityEvent:
    vehicle_id: int
    tick: int
    rejections: dict = field(default_factory=dict, compare=False)


@dataclass
class PlannerState:
    """Per-vehicle rolling-planner memory.

    ``plan`` is the last accepted candidate; ``fallback`` is set for an
    interval in which no candidate was feasible.
    """

    plan: Optional[AlignedPlan] = None
    fallback: bool = False
    events: list = field(default_factory=list)
    calls: int = 0


def plan_step(vehicle: Vehicle, now_tick: int, batch: EcoBatch,
              front: Optional[FrontPrediction], plan: SignalPlan, params: VehicleParams,
              grid: TimeGrid, state: PlannerState, config: PlannerConfig,
              horizon_ticks: Optional[int] = None,
              check_from_now: bool = False) -> Optional[np.ndarray]:
    """One rolling update: re-select from the actual state and keep one section.

    Returns the positions at ticks ``now_tick .. now_tick + epsilon`` (the
    section covers ``[now_tick, now_tick + epsilon)``), or ``None`` after
    recording an :class:`InfeasibilityEvent`, in which case the caller drives
    the vehicle by car following for this interval.
    """
    eps = config.epsilon_ticks(grid)
    if eps is None:
        raise ValueError("plan_step needs a finite update interval")
    if (now_tick - vehicle.entry_tick) % eps:
        raise ValueError("plan_step called off the update schedule")
    state.calls += 1
    try:
        _, aligned = select_candidate(batch, vehicle.entry_tick, now_tick,
                                      (vehicle.position, vehicle.speed), front, plan, params,
                                      grid, horizon_ticks=horizon_ticks,
                                      check_from_now=check_from_now)
    except NoFeasible as exc:
        state.events.append(InfeasibilityEvent(vehicle.id, now_tick, exc.rejections))
        state.fallback = True
        return None
    state.plan = aligned
    state.fallback = False
    return aligned.window(now_tick, now_tick + eps)


def predict_front(front_entry_tick: int, realized: np.ndarray, speed: float, now_tick: int,
                  t_end: int, kind: VehicleKind, planned: Optional[AlignedPlan],
                  front_of_front: Optional[Callable[[int], Optional[float]]],
                  plan: SignalPlan, params: VehicleParams, grid: TimeGrid,
                  spacing: Optional[float] = None) -> FrontPrediction:
    """Front track: realized positions through ``now_tick`` then a forecast.

    ``realized[i]`` is the front position at ``front_entry_tick + i`` and
    ``speed`` its speed for ``[now_tick, now_tick + 1)``.  A front following
    a plan is forecast by that plan; otherwise by car following from its
    live state against ``front_of_front``.
    """
    realized = np.asarray(realized, dtype=float)
    if realized.size != now_tick - front_entry_tick + 1:
        raise ValueError("realized positions must end at now_tick")
    if planned is not None:
        future = planned.window(now_tick + 1, max(t_end, now_tick + 1))
        source = PredictionSource.PLANNED_CAV
    else:
        ff = front_of_front if front_of_front is not None else (lambda _t: None)
        future = rollout(float(realized[-1]), speed, now_tick, max(t_end, now_tick + 1), ff,
                         plan, params, grid, spacing)[1:]
        source = PredictionSource.GIPPS_HDV
    return FrontPrediction(front_entry_tick, np.concatenate((realized, future)), source, kind)
