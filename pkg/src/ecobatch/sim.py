"""Closed-loop single-lane simulation of mixed CAV/HDV traffic.

Each tick advances every entered vehicle from ``t`` to ``t + 1`` in entry
order, front first, so a follower always sees its front's fresh position.
HDVs (and CAVs without a usable plan) are driven by car following; CAVs
otherwise follow their selected batch candidate.  Every tick is checked for
negative spare gaps, red crossings and out-of-range CAV accelerations.  The
modelled area ends at the stop line: downstream, vehicles keep moving so
fronts stay visible, but gaps and kinematics are no longer checked.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (TOL, Phase, SignalPlan, TimeGrid, Trajectory, Vehicle, VehicleKind,
                   VehicleParams, min_spacing, phase_at)
from .fuel import DEFAULT_COEFFICIENTS, VtMicroCoefficients, trajectory_fuel
from .gipps import next_speed, rollout, step_hdv
from .offline import EcoBatch
from .online import (AlignedPlan, FrontPrediction, NoFeasible, PlannerConfig, PlannerState,
                     PredictionSource, plan_step, select_candidate)


class ScenarioMismatch(ValueError):
    """The batch was built for different parameters than the run uses."""


@dataclass(frozen=True)
class ScenarioConfig:
    n_vehicles: int = 20
    mpr: float = 1.0
    headway_min: float = 3.0
    headway_max: float = 8.0
    seed: int = 0
    prediction_error: float = 0.0
    planner: PlannerConfig = PlannerConfig()
    phi: int = 2
    horizon: float = 240.0
    check_from_now: bool = False

    def __post_init__(self):
        if self.n_vehicles < 1:
            raise ValueError("n_vehicles: must be >= 1")
        if not 0.0 <= self.mpr <= 1.0:
            raise ValueError("mpr: must lie in [0, 1]")
        if not 0.0 <= self.prediction_error < 1.0:
            raise ValueError("prediction_error: must lie in [0, 1)")
        if not 0 < self.headway_min <= self.headway_max:
            raise ValueError("headway_min: require 0 < headway_min <= headway_max")
        if self.phi < 1:
            raise ValueError("phi: must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon: must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed: must be a 64-bit unsigned integer")

    @property
    def mode(self) -> str:
        return "static" if self.planner.is_static else "rolling"


def generate_arrivals(config: ScenarioConfig, params: VehicleParams, grid: TimeGrid) -> list[Vehicle]:
    """Seeded arrivals: uniform headways rounded up to whole ticks, first at tick 0.

    Exactly ``round(mpr * n)`` vehicles (halves rounded up) are CAVs, placed
    by a seeded permutation.
    """
    if config.headway_min < grid.theta - 1e-12:
        raise ValueError("headway_min: must be at least one tick")
    rng = np.random.default_rng(config.seed)
    n = config.n_vehicles
    gaps = rng.uniform(config.headway_min, config.headway_max, n - 1)
    steps = np.ceil(gaps / grid.theta - 1e-9).astype(int)
    ticks = np.concatenate(([0], np.cumsum(steps)))
    n_cav = int(math.floor(config.mpr * n + 0.5))
    cav = set(rng.permutation(n)[:n_cav].tolist())
    return [Vehicle(i, VehicleKind.CAV if i in cav else VehicleKind.HDV, int(ticks[i]),
                    0.0, params.v_I) for i in range(n)]


@dataclass(frozen=True)
class ViolationRecord:
    tick: int
    vehicle_id: int
    kind: str
    detail: str = ""


@dataclass(frozen=True)
class LatencyRecord:
    vehicle_id: int
    tick: int
    seconds: float


@dataclass
class VehicleRecord:
    id: int
    kind: VehicleKind
    scheduled_tick: int
    entry_tick: Optional[int]
    trajectory: Optional[Trajectory]
    fuel: Optional[float]
    departure_tick: Optional[int]
    batch_indices: list = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.departure_tick is not None

    @property
    def travel_ticks(self) -> Optional[int]:
        if self.departure_tick is None:
            return None
        return self.departure_tick - self.entry_tick


@dataclass
class SimResult:
    scenario: ScenarioConfig
    mode: str
    vehicles: list
    latencies: list
    violations: list
    infeasibility_events: list
    certificates: dict = field(default_factory=dict)
    benchmark: bool = False

    @property
    def total_fuel(self) -> float:
        return math.fsum(v.fuel for v in self.vehicles if v.completed)

    def record(self, vehicle_id: int) -> VehicleRecord:
        return next(v for v in self.vehicles if v.id == vehicle_id)


@dataclass
class _Agent:
    vehicle: Vehicle
    index: int
    entry: Optional[int] = None
    xs: list = field(default_factory=list)
    v: float = 0.0
    # Gipps state speed for [t, t+1) is ``v``; ``plan`` drives a CAV when set.
    plan: Optional[AlignedPlan] = None
    gipps: bool = True
    planner: PlannerState = field(default_factory=PlannerState)
    batch_indices: list = field(default_factory=list)

    @property
    def kind(self) -> VehicleKind:
        return self.vehicle.kind

    def x(self, tick: int) -> float:
        return self.xs[tick - self.entry]


class _Engine:
    def __init__(self, scenario: ScenarioConfig, batch: Optional[EcoBatch], params: VehicleParams,
                 plan: SignalPlan, grid: TimeGrid, K: VtMicroCoefficients, benchmark: bool):
        self.sc, self.batch, self.params, self.plan = scenario, batch, params, plan
        self.K, self.benchmark = K, benchmark
        self.horizon = grid.ticks(scenario.horizon, "horizon")
        self.grid = TimeGrid(grid.theta, self.horizon)
        self.theta = grid.theta
        self.eps = scenario.planner.epsilon_ticks(self.grid)
        self.bound = batch.bound_ticks if batch is not None else 0
        self.agents = [_Agent(v, i) for i, v in enumerate(generate_arrivals(scenario, params, self.grid))]
        self.latencies: list = []
        self.violations: list = []
        self._memo: dict = {}
        self._memo_tick = -1

    # ---- helpers -------------------------------------------------------
    def front_of(self, a: _Agent) -> Optional[_Agent]:
        return self.agents[a.index - 1] if a.index > 0 else None

    def spacing(self, a: _Agent) -> float:
        f = self.front_of(a)
        return min_spacing(self.params, a.kind, f.kind if f is not None else a.kind)

    def binding(self, tick: int) -> bool:
        return phase_at(self.plan, tick, self.grid) is not Phase.GREEN

    def speed_factor(self, a: _Agent) -> float:
        return 1.0 - self.sc.prediction_error if a.kind is VehicleKind.HDV else 1.0

    def track(self, a: _Agent, t: int) -> np.ndarray:
        """Positions of an already-stepped agent at ticks ``a.entry..t_end``:
        realized through ``t + 1``, then plan or car-following forecast."""
        if self._memo_tick != t:
            self._memo, self._memo_tick = {}, t
        hit = self._memo.get(a.index)
        if hit is not None:
            return hit
        t_end = min(self.horizon, t + 1 + self.bound + 2)
        realized = np.asarray(a.xs, dtype=float)
        if a.plan is not None and not a.gipps:
            future = a.plan.window(t + 2, max(t_end, t + 2))
        else:
            f = self.front_of(a)
            if f is None or f.entry is None:
                ff = lambda _k: None
            else:
                ftrack = self.track(f, t)
                fe = f.entry
                n = ftrack.size

                def ff(k, ftrack=ftrack, fe=fe, n=n):
                    i = k - fe
                    return float(ftrack[i]) if i < n else float(ftrack[-1] + (ftrack[-1] - ftrack[-2]) * (i - n + 1))
            future = rollout(realized[-1], a.v, t + 1, max(t_end, t + 2), ff, self.plan,
                             self.params, self.grid, self.spacing(a))[1:]
        out = np.concatenate((realized, future))
        self._memo[a.index] = out
        return out

    def front_prediction(self, a: _Agent, t: int) -> Optional[FrontPrediction]:
        f = self.front_of(a)
        if f is None:
            return None
        src = (PredictionSource.PLANNED_CAV if f.plan is not None and not f.gipps
               else PredictionSource.GIPPS_HDV)
        return FrontPrediction(f.entry, self.track(f, t), src, f.kind)

    def select(self, a: _Agent, t: int, entry_tick: int, state) -> AlignedPlan:
        front = self.front_prediction(a, t)
        _, aligned = select_candidate(self.batch, entry_tick, t, state, front, self.plan,
                                      self.params, self.grid, horizon_ticks=self.horizon,
                                      check_from_now=self.sc.check_from_now)
        return aligned

    # ---- entry ---------------------------------------------------------
    def try_enter(self, a: _Agent, t: int) -> bool:
        f = self.front_of(a)
        if f is not None:
            if f.entry is None:
                return False
            s = self.spacing(a)
            if f.x(t) - s < -TOL or f.x(t + 1) - self.params.v_I * self.theta - s < -TOL:
                return False
        a.entry = t
        a.xs = [0.0]
        a.v = self.params.v_I
        if a.kind is VehicleKind.CAV and not self.benchmark:
            t0 = time.perf_counter()
            try:
                aligned = self.select(a, t, t, (0.0, self.params.v_I))
            except NoFeasible:
                a.entry, a.xs = None, []
                self._memo_tick = -1
                return False
            finally:
                self.latencies.append(LatencyRecord(a.vehicle.id, t, time.perf_counter() - t0))
            a.plan, a.gipps = aligned, False
            a.planner.plan = aligned
            a.batch_indices.append(aligned.batch_index)
        return True

    # ---- stepping ------------------------------------------------------
    def advance(self, a: _Agent, t: int):
        f = self.front_of(a)
        x_t = a.xs[-1]
        if a.kind is VehicleKind.CAV and not self.benchmark:
            if (self.eps is not None and t > a.entry and (t - a.entry) % self.eps == 0
                    and x_t < self.params.L_s):
                self.replan(a, t)
            if not a.gipps:
                a.xs.append(a.plan.position_at(t + 1))
                return
        fx = f.x(t + 1) if f is not None else None
        x1, v1 = step_hdv(x_t, a.v, fx, self.plan, self.params, self.grid, t,
                          self.speed_factor(a), self.spacing(a))
        a.xs.append(x1)
        a.v = v1

    def replan(self, a: _Agent, t: int):
        last = (a.xs[-1] - a.xs[-2]) / self.theta if len(a.xs) > 1 else self.params.v_I
        veh = replace(a.vehicle, entry_tick=a.entry, position=a.xs[-1], speed=last)
        t0 = time.perf_counter()
        front = self.front_prediction(a, t)
        section = plan_step(veh, t, self.batch, front, self.plan, self.params, self.grid,
                            a.planner, self.sc.planner, self.horizon, self.sc.check_from_now)
        self.latencies.append(LatencyRecord(a.vehicle.id, t, time.perf_counter() - t0))
        if section is None:
            if not a.gipps:
                self.to_following(a, t)
        else:
            a.plan, a.gipps = a.planner.plan, False
            a.batch_indices.append(a.plan.batch_index)

    def to_following(self, a: _Agent, t: int):
        """Hand a CAV to car following at ``t`` with the speed it would pick now,
        braking no harder than ``d_E``."""
        last = (a.xs[-1] - a.xs[-2]) / self.theta if len(a.xs) > 1 else self.params.v_I
        f = self.front_of(a)
        fx = f.x(t + 1) if f is not None else None
        v = next_speed(last, a.xs[-1], fx, self.binding(t), self.spacing(a),
                       self.params, self.theta)
        a.v = max(v, last + self.params.d_E * self.theta, self.params.v_min)
        a.gipps = True

    # ---- checks --------------------------------------------------------
    def check(self, t: int):
        p = self.params
        for a in self.agents:
            if a.entry is None or a.entry > t + 1:
                continue
            x1 = a.xs[t + 1 - a.entry]
            f = self.front_of(a)
            if f is not None and x1 <= p.L_s + TOL:
                gap = f.x(t + 1) - x1 - self.spacing(a)
                if gap < -1e-9:
                    self.violations.append(ViolationRecord(t + 1, a.vehicle.id, "SafeDistance",
                                                           f"spare gap {gap:.6g}"))
            if t >= a.entry and a.xs[t - a.entry] <= p.L_s + TOL < x1:
                if phase_at(self.plan, t + 1, self.grid) is Phase.RED:
                    self.violations.append(ViolationRecord(t + 1, a.vehicle.id, "Signal"))
            # Kinematic limits are enforced on the approach, where the planner is in charge.
            if a.kind is VehicleKind.CAV and t - 1 >= a.entry and a.xs[t - a.entry] <= p.L_s + TOL:
                v0 = (a.xs[t - a.entry] - a.xs[t - 1 - a.entry]) / self.theta
                v1 = (x1 - a.xs[t - a.entry]) / self.theta
                acc = (v1 - v0) / self.theta
                if acc < p.d_E - TOL or acc > p.a_max + TOL:
                    self.violations.append(ViolationRecord(t, a.vehicle.id, "Acceleration",
                                                           f"a={acc:.6g}"))
                if v1 < p.v_min - TOL or v1 > p.v_max + TOL:
                    self.violations.append(ViolationRecord(t, a.vehicle.id, "Speed", f"v={v1:.6g}"))

    # ---- main loop -----------------------------------------------------
    def run(self) -> SimResult:
        for t in range(self.horizon):
            for a in self.agents:
                if a.entry is None:
                    if a.vehicle.entry_tick > t or not self.try_enter(a, t):
                        continue
                self.advance(a, t)
            self.check(t)
        records = []
        events = []
        for a in self.agents:
            events.extend(a.planner.events)
            if a.entry is None:
                records.append(VehicleRecord(a.vehicle.id, a.kind, a.vehicle.entry_tick, None,
                                             None, None, None))
                continue
            traj = Trajectory(np.asarray(a.xs) - a.xs[0], a.entry, self.theta)
            dep = traj.departure_index(self.params.L_s)
            fuel = trajectory_fuel(traj, self.params.L_s, self.K) if dep is not None else None
            records.append(VehicleRecord(a.vehicle.id, a.kind, a.vehicle.entry_tick, a.entry,
                                         traj, fuel, a.entry + dep if dep is not None else None,
                                         list(a.batch_indices)))
        mode = "benchmark" if self.benchmark else self.sc.mode
        return SimResult(self.sc, mode, records, self.latencies, self.violations, events,
                         benchmark=self.benchmark)


def _check_batch(batch: EcoBatch, scenario: ScenarioConfig, params: VehicleParams,
                 plan: SignalPlan, grid: TimeGrid, K: VtMicroCoefficients):
    checks = (("params", batch.params, params), ("signal", batch.plan, plan),
              ("theta", batch.grid_spec.theta, grid.theta), ("phi", batch.phi, scenario.phi),
              ("coefficients", batch.coefficients, K))
    for name, got, want in checks:
        if got != want:
            raise ScenarioMismatch(f"{name}: batch has {got!r}, run uses {want!r}")


def run(scenario: ScenarioConfig, batch: EcoBatch, params: VehicleParams, plan: SignalPlan,
        grid: TimeGrid, K: VtMicroCoefficients = DEFAULT_COEFFICIENTS,
        certificates: bool = True) -> SimResult:
    """Simulate one scenario with planner-controlled CAVs.

    Violations are logged in the result rather than raised.  Gap
    certificates are attached for every completed CAV unless disabled.
    """
    _check_batch(batch, scenario, params, plan, grid, K)
    result = _Engine(scenario, batch, params, plan, grid, K, benchmark=False).run()
    if certificates:
        from .bounds import certify
        result.certificates = certify(result, batch)
    return result


def run_benchmark(scenario: ScenarioConfig, params: VehicleParams, plan: SignalPlan,
                  grid: TimeGrid, K: Optional[VtMicroCoefficients] = None) -> SimResult:
    """Same arrivals with every vehicle driven by car following."""
    return _Engine(scenario, None, params, plan, grid, K or DEFAULT_COEFFICIENTS,
                   benchmark=True).run()


@dataclass(frozen=True)
class Comparison:
    savings: float
    tempc_fuel: float
    benchmark_fuel: float
    n_common: int
    result: SimResult
    benchmark: SimResult
    # Vehicles dropped because either run's fuel overflowed to a non-finite value.
    n_nonfinite: int = 0


def compare_to_benchmark(scenario: ScenarioConfig, batch: EcoBatch, params: VehicleParams,
                         plan: SignalPlan, grid: TimeGrid,
                         K: VtMicroCoefficients = DEFAULT_COEFFICIENTS,
                         result: Optional[SimResult] = None) -> Comparison:
    """Relative fuel saving over vehicles that completed in both runs."""
    if result is None:
        result = run(scenario, batch, params, plan, grid, K)
    bench = run_benchmark(scenario, params, plan, grid, K)
    both = [(r, b) for r, b in zip(result.vehicles, bench.vehicles) if r.completed and b.completed]
    common = [(r, b) for r, b in both if math.isfinite(r.fuel) and math.isfinite(b.fuel)]
    ours = math.fsum(r.fuel for r, _ in common)
    theirs = math.fsum(b.fuel for _, b in common)
    savings = (theirs - ours) / theirs if theirs > 0 else 0.0
    return Comparison(savings, ours, theirs, len(common), result, bench, len(both) - len(common))


def _stats_ms(values) -> dict:
    if not values:
        return {"mean": None, "median": None, "p95": None, "n": 0}
    ms = np.asarray(values) * 1e3
    return {"mean": float(ms.mean()), "median": float(np.median(ms)),
            "p95": float(np.percentile(ms, 95)), "n": int(ms.size)}


def latency_profile(result: SimResult) -> dict:
    """Wall-clock statistics of planning calls, per call and per vehicle total."""
    if not result.latencies:
        raise ValueError("result contains no planning calls")
    per_vehicle: dict = {}
    for rec in result.latencies:
        per_vehicle[rec.vehicle_id] = per_vehicle.get(rec.vehicle_id, 0.0) + rec.seconds
    return {"mode": result.mode,
            "per_call_ms": _stats_ms([r.seconds for r in result.latencies]),
            "per_vehicle_ms": _stats_ms(list(per_vehicle.values()))}


def _sweep_one(args):
    scenario, batch, params, plan, grid, K, with_benchmark = args
    if with_benchmark:
        return compare_to_benchmark(scenario, batch, params, plan, grid, K)
    return run(scenario, batch, params, plan, grid, K)


def sweep_threads() -> int:
    env = os.environ.get("ECOBATCH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"ECOBATCH_THREADS must be an integer, got {env!r}") from None
        return max(n, 1)
    return os.cpu_count() or 1


def sweep(scenarios, batch: EcoBatch, params: VehicleParams, plan: SignalPlan, grid: TimeGrid,
          K: VtMicroCoefficients = DEFAULT_COEFFICIENTS, with_benchmark: bool = False,
          threads: Optional[int] = None) -> list:
    """Run many scenarios, in parallel processes when more than one worker is allowed.

    Results come back in input order whatever the completion order.
    """
    jobs = [(s, batch, params, plan, grid, K, with_benchmark) for s in scenarios]
    n = threads if threads is not None else sweep_threads()
    if n <= 1 or len(jobs) <= 1:
        return [_sweep_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
        return list(pool.map(_sweep_one, jobs))
