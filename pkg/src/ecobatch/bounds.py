"""Post-hoc optimality-gap certificates for planned CAV trajectories.

A CAV could only have used a batch travel time that starts after its front
has left, ends no later than its own realized departure, is kinematically
reachable and does not put the crossing into a red phase.  The cheapest
batch entry over that set bounds how much fuel the selection may have left
on the table.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .core import SignalPlan, TimeGrid, Trajectory, plan_ticks, red_intervals
from .fuel import DEFAULT_COEFFICIENTS, VtMicroCoefficients, trajectory_fuel
from .offline import EcoBatch


class Mode(enum.Enum):
    STATIC = "static"
    ROLLING = "rolling"


def feasible_interval(t_e: int, t_d_front: Optional[int], t_d_self: int, T_min: int,
                      plan: SignalPlan, phi: int, grid: TimeGrid, mode: Mode) -> list[int]:
    """Admissible travel times (ticks) for a CAV entering at ``t_e``.

    Lower end ``t_d_front - t_e + 1`` (``T_min`` without a front); upper end
    ``t_d_self - t_e - 1`` when planning once, ``t_d_self - t_e`` when
    re-planning.  Travel times whose crossing tick ``t_e + xi + 1`` is red are
    removed.  Red phases are generated for at least ``phi`` cycles and as many
    more as needed to cover the interval.
    """
    if not t_e < t_d_self:
        raise ValueError("t_d_self must come after t_e")
    mode = Mode(mode)
    lower = T_min if t_d_front is None else max(T_min, t_d_front - t_e + 1)
    upper = t_d_self - t_e - (1 if mode is Mode.STATIC else 0)
    if upper < lower:
        return []
    cycle = plan_ticks(plan, grid.theta)[0]
    n_cycles = max(phi, math.ceil((t_e + upper + 2) / cycle) + 1)
    reds = red_intervals(plan, n_cycles, grid)
    out = []
    for xi in range(lower, upper + 1):
        c = t_e + xi + 1
        if not any(b <= c < e for b, e in reds):
            out.append(xi)
    return out


@dataclass(frozen=True)
class GapCertificate:
    feasible_interval: tuple
    best_batch_fuel_in_interval: Optional[float]
    realized_fuel: float
    sup_gap: float
    inf_gap: float = 0.0

    @property
    def empty(self) -> bool:
        return self.best_batch_fuel_in_interval is None

    def to_dict(self) -> dict:
        iv = self.feasible_interval
        return {"interval": [iv[0], iv[-1]] if iv else [], "interval_size": len(iv),
                "empty_interval": self.empty,
                "best_batch_fuel_in_interval": self.best_batch_fuel_in_interval,
                "realized_fuel": self.realized_fuel, "sup_gap": self.sup_gap,
                "inf_gap": self.inf_gap}


def gap_certificate(realized: Trajectory, batch: EcoBatch, interval,
                    K: VtMicroCoefficients = DEFAULT_COEFFICIENTS,
                    stop_line: Optional[float] = None) -> GapCertificate:
    """Certificate ``|E_b - E*| / E_b`` with ``E*`` the best batch fuel over ``interval``.

    An interval holding no batch travel time yields ``sup_gap = 0``: the
    realized trajectory was the only option left.
    """
    if not len(batch):
        raise ValueError("batch is empty")
    L = batch.params.L_s if stop_line is None else stop_line
    e_b = trajectory_fuel(realized, L, K)
    allowed = set(interval)
    fuels = [e.fuel for e in batch.entries if e.travel_ticks in allowed]
    if not fuels:
        return GapCertificate(tuple(sorted(allowed)), None, e_b, 0.0)
    e_star = min(fuels)
    return GapCertificate(tuple(sorted(allowed)), e_star, e_b, abs(e_b - e_star) / e_b)


def certify(result, batch: EcoBatch) -> dict:
    """Certificates for every completed CAV of a simulation result, keyed by id."""
    from .core import VehicleKind
    mode = Mode.STATIC if result.mode == "static" else Mode.ROLLING
    grid = TimeGrid(batch.grid_spec.theta)
    out = {}
    prev = None
    for rec in result.vehicles:
        t_d_self = _exit_tick(rec, batch)
        # A vehicle still sitting on the line at the horizon has no exit tick yet.
        if rec.kind is VehicleKind.CAV and rec.completed and t_d_self is not None:
            t_d_front = _exit_tick(prev, batch) if prev is not None else None
            iv = feasible_interval(rec.entry_tick, t_d_front, t_d_self, batch.T_min,
                                   batch.plan, batch.phi, grid, mode)
            out[rec.id] = gap_certificate(rec.trajectory, batch, iv, batch.coefficients)
        prev = rec
    return out


def _exit_tick(rec, batch: EcoBatch) -> Optional[int]:
    """Tick at which a vehicle is first beyond the stop line."""
    if rec.trajectory is None:
        return None
    i = rec.trajectory.crossing_index(batch.params.L_s)
    return None if i is None else rec.entry_tick + i
