"""Offline generation of the fuel-minimal trajectory batch.

Every travel time ``xi`` gets its own fixed-horizon optimal control problem:
start at position 0 with speed ``v_I``, hit the stop line exactly at tick
``xi`` with speed at least ``v_D``, and never reach the line earlier.  The
problems are solved exactly on a (position, speed) grid by dynamic
programming.  Because the dynamics and the fuel rate do not depend on the
tick, the cost-to-go only depends on the number of ticks remaining, so one
backward sweep of depth ``max(xi)`` answers every travel time at once.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import SignalPlan, TimeGrid, Trajectory, VehicleParams
from .fuel import DEFAULT_COEFFICIENTS, VtMicroCoefficients, interval_fuel, interval_fuel_sum


class Infeasible(Exception):
    """No grid trajectory reaches the stop line at the requested tick."""


class EmptyBatch(Exception):
    """No travel time in the admissible range is feasible."""


class TooLarge(Exception):
    """The brute-force enumeration would exceed its node budget."""


def _multiple(value: float, step: float, name: str) -> int:
    n = value / step
    k = int(round(n))
    if abs(n - k) > 1e-9:
        raise ValueError(f"{name}={value} is not an integer multiple of {step}")
    return k


@dataclass(frozen=True)
class GridSpec:
    """Speed-grid resolution ``dv``; positions live on a ``dv * theta`` grid."""

    dv: float = 0.5
    theta: float = 1.0

    def __post_init__(self):
        if not self.dv > 0:
            raise ValueError("dv must be positive")
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def dx(self) -> float:
        return self.dv * self.theta

    def indices(self, params: VehicleParams) -> dict:
        """Integer grid indices of every parameter the solver needs.

        Raises ``ValueError`` naming the first parameter that is off-grid.
        """
        dv, th = self.dv, self.theta
        return {
            "s_min": _multiple(params.v_min, dv, "v_min"),
            "s_max": _multiple(params.v_max, dv, "v_max"),
            "s_I": _multiple(params.v_I, dv, "v_I"),
            "s_D": _multiple(params.v_D, dv, "v_D"),
            "L": _multiple(params.L_s, self.dx, "L_s"),
            "a_lo": _multiple(params.d_max * th, dv, "d_max"),
            "a_hi": _multiple(params.a_max * th, dv, "a_max"),
        }


class _Problem:
    """Grid tables shared by the DP, its reconstruction and the oracle."""

    def __init__(self, params: VehicleParams, spec: GridSpec, K: VtMicroCoefficients):
        self.params, self.spec, self.K = params, spec, K
        ix = spec.indices(params)
        self.s_min, self.s_max = ix["s_min"], ix["s_max"]
        self.s_I, self.s_D, self.L = ix["s_I"], ix["s_D"], ix["L"]
        self.steps = np.arange(ix["a_lo"], ix["a_hi"] + 1)
        self.speeds = np.arange(self.s_min, self.s_max + 1)
        # fuel[s - s_min, k] is the interval fuel at speed s with step steps[k].
        th = spec.theta
        self.fuel = np.array([[interval_fuel(s * spec.dv, d * spec.dv / th, th, K)
                               for d in self.steps] for s in self.speeds])

    def positions(self, speed_idx: list[int]) -> np.ndarray:
        """Positions 0..len(speed_idx) for a speed-index sequence, plus one extra
        tick past the line at the final speed."""
        p = np.concatenate(([0], np.cumsum(speed_idx)))
        p = np.append(p, p[-1] + speed_idx[-1])
        return p * self.spec.dx


class CostToGo:
    """Backward value tables ``W[r][p, s]``: least fuel from position index
    ``p`` and speed index ``s`` to the terminal set with ``r`` ticks left."""

    def __init__(self, params: VehicleParams, spec: GridSpec, max_ticks: int,
                 K: VtMicroCoefficients = DEFAULT_COEFFICIENTS):
        if max_ticks < 0:
            raise ValueError("max_ticks must be >= 0")
        self.problem = pb = _Problem(params, spec, K)
        L, n_s = pb.L, pb.speeds.size
        # Padding holds overshooting positions, which are never feasible.
        pad = max(pb.s_max, 0) + 1
        w0 = np.full((L + 1 + pad, n_s), np.inf)
        w0[L, max(pb.s_D, pb.s_min) - pb.s_min:] = 0.0
        self.W = [w0]
        p_next = np.arange(L)[:, None] + pb.speeds[None, :]
        s_idx = np.arange(n_s)
        for _ in range(max_ticks):
            prev = self.W[-1]
            best = np.full((L, n_s), np.inf)
            for k, d in enumerate(pb.steps):
                sn = s_idx + d
                ok = (sn >= 0) & (sn < n_s)
                c = np.full((L, n_s), np.inf)
                c[:, ok] = pb.fuel[ok, k][None, :] + prev[p_next[:, ok], sn[ok]]
                np.minimum(best, c, out=best)
            w = np.full_like(w0, np.inf)
            # Reaching the line before the last tick is excluded: rows >= L stay inf.
            w[:L] = best
            self.W.append(w)

    @property
    def max_ticks(self) -> int:
        return len(self.W) - 1

    def value(self, xi: int) -> float:
        pb = self.problem
        if not 1 <= xi <= self.max_ticks:
            raise ValueError(f"xi={xi} outside 1..{self.max_ticks}")
        return float(self.W[xi][0, pb.s_I - pb.s_min])

    def trajectory(self, xi: int) -> Trajectory:
        """Optimal trajectory for travel time ``xi``.

        Ties are broken toward the smallest next speed at every tick, which
        yields the lexicographically smallest speed sequence among optima.
        """
        if not math.isfinite(self.value(xi)):
            raise Infeasible(f"stop line unreachable in exactly {xi} ticks")
        pb = self.problem
        p, s = 0, pb.s_I - pb.s_min
        seq = [pb.s_I]
        for r in range(xi, 0, -1):
            target = self.W[r][p, s]
            prev = self.W[r - 1]
            p_n = p + int(pb.speeds[s])
            for k, d in enumerate(pb.steps):
                sn = s + int(d)
                if 0 <= sn < pb.speeds.size and pb.fuel[s, k] + prev[p_n, sn] == target:
                    break
            else:  # pragma: no cover - guarded by the finite value above
                raise RuntimeError("reconstruction lost the optimum")
            p, s = p_n, sn
            seq.append(int(pb.speeds[s]))
        return Trajectory(pb.positions(seq), 0, pb.spec.theta)


def solve_min_fuel(xi_ticks: int, params: VehicleParams, grid_spec: GridSpec,
                   K: VtMicroCoefficients = DEFAULT_COEFFICIENTS) -> Trajectory:
    """Fuel-minimal grid trajectory reaching the stop line exactly at ``xi_ticks``.

    Raises
    ------
    Infeasible
        If no admissible speed sequence hits the line at that tick.
    """
    if xi_ticks < 1:
        raise ValueError("xi_ticks must be >= 1")
    return CostToGo(params, grid_spec, xi_ticks, K).trajectory(xi_ticks)


def brute_force_min_fuel(xi_ticks: int, params: VehicleParams, grid_spec: GridSpec,
                         K: VtMicroCoefficients = DEFAULT_COEFFICIENTS,
                         max_nodes: int = 10_000_000) -> Trajectory:
    """Exhaustive enumeration of every grid acceleration sequence.

    Branches are cut only when a hard constraint already fails (speed out of
    range, line reached early or overshot).  Sequence fuel is the correctly
    rounded sum of interval fuels.
    """
    if xi_ticks < 1:
        raise ValueError("xi_ticks must be >= 1")
    pb = _Problem(params, grid_spec, K)
    steps = [int(d) for d in pb.steps]
    best_fuel = math.inf
    best_seq: Optional[list[int]] = None
    nodes = 0
    seq = [pb.s_I]
    terms: list[float] = []

    def visit(p: int, s: int, k: int):
        nonlocal best_fuel, best_seq, nodes
        nodes += 1
        if nodes > max_nodes:
            raise TooLarge(f"more than {max_nodes} enumeration nodes")
        if k == xi_ticks:
            if p == pb.L and s >= pb.s_D:
                total = math.fsum(terms)
                if total < best_fuel:
                    best_fuel, best_seq = total, list(seq)
            return
        p_n = p + s
        if p_n > pb.L or (p_n == pb.L and k + 1 < xi_ticks):
            return
        for j, d in enumerate(steps):
            sn = s + d
            if pb.s_min <= sn <= pb.s_max:
                seq.append(sn)
                terms.append(float(pb.fuel[s - pb.s_min, j]))
                visit(p_n, sn, k + 1)
                terms.pop()
                seq.pop()

    visit(0, pb.s_I, 0)
    if best_seq is None:
        raise Infeasible(f"stop line unreachable in exactly {xi_ticks} ticks")
    return Trajectory(pb.positions(best_seq), 0, grid_spec.theta)


@dataclass(frozen=True)
class BatchEntry:
    travel_ticks: int
    trajectory: Trajectory
    fuel: float


def batch_bound_ticks(plan: SignalPlan, phi: int, theta: float) -> int:
    """Largest admissible travel time ``(phi * C - R) / theta`` in ticks."""
    if phi < 1:
        raise ValueError("phi must be >= 1")
    return TimeGrid(theta).ticks(phi * plan.cycle - plan.red, "phi*cycle - red")


def canonical_entries(entries) -> list[dict]:
    return [{"travel_ticks": e.travel_ticks, "fuel": e.fuel,
             "positions": [float(x) for x in e.trajectory.positions]} for e in entries]


def content_hash(entries) -> str:
    blob = json.dumps(canonical_entries(entries), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class EcoBatch:
    """Fuel-ascending optimal trajectories, one per feasible travel time."""

    entries: tuple
    T_min: int
    params: VehicleParams
    grid_spec: GridSpec
    plan: SignalPlan
    phi: int
    coefficients: VtMicroCoefficients = DEFAULT_COEFFICIENTS
    hash: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.hash:
            object.__setattr__(self, "hash", content_hash(self.entries))

    @property
    def bound_ticks(self) -> int:
        return batch_bound_ticks(self.plan, self.phi, self.grid_spec.theta)

    def __len__(self) -> int:
        return len(self.entries)

    def by_travel_ticks(self) -> dict:
        return {e.travel_ticks: e for e in self.entries}


def build_batch(params: VehicleParams, grid_spec: GridSpec, plan: SignalPlan, phi: int,
                K: VtMicroCoefficients = DEFAULT_COEFFICIENTS) -> EcoBatch:
    """Solve every travel time in ``1..(phi*C - R)/theta`` and sort by fuel.

    Raises
    ------
    EmptyBatch
        If none of them is feasible.
    """
    bound = batch_bound_ticks(plan, phi, grid_spec.theta)
    entries = []
    if bound >= 1:
        ctg = CostToGo(params, grid_spec, bound, K)
        for xi in range(1, bound + 1):
            if not math.isfinite(ctg.value(xi)):
                continue
            traj = ctg.trajectory(xi)
            entries.append(BatchEntry(xi, traj, interval_fuel_sum(traj, 0, xi, K)))
    if not entries:
        raise EmptyBatch(f"no feasible travel time in 1..{bound} ticks")
    entries.sort(key=lambda e: (e.fuel, e.travel_ticks))
    T_min = min(e.travel_ticks for e in entries)
    return EcoBatch(tuple(entries), T_min, params, grid_spec, plan, phi, K)
