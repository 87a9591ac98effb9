"""VT-micro instantaneous fuel model and trajectory fuel accounting.

The rate is ``exp(sum_ij K[i][j] * v**i * a**j)`` with ``i`` the speed power
and ``j`` the acceleration power.  A single coefficient table covers both
acceleration and deceleration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import Trajectory

# Printed layout: one row per acceleration power j, one column per speed power i.
TABLE_ROWS = (
    (-7.537, 0.4438, 0.1716, -0.0420),
    (0.0973, 0.0518, 0.0029, -0.0071),
    (-0.003, -7.42e-4, 1.09e-4, 1.16e-4),
    (5.3e-5, 6e-6, -1e-5, -6e-6),
)


@dataclass(frozen=True)
class VtMicroCoefficients:
    """``K[i][j]`` multiplies ``v**i * a**j``."""

    K: tuple = tuple(tuple(TABLE_ROWS[j][i] for j in range(4)) for i in range(4))

    def __post_init__(self):
        K = tuple(tuple(float(c) for c in row) for row in self.K)
        if len(K) != 4 or any(len(row) != 4 for row in K):
            raise ValueError("coefficients must form a 4x4 table")
        if not all(math.isfinite(c) for row in K for c in row):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "K", K)

    @classmethod
    def from_table_rows(cls, rows: Sequence[Sequence[float]]) -> "VtMicroCoefficients":
        """Build from the printed layout (``rows[j][i]``)."""
        if len(rows) != 4 or any(len(r) != 4 for r in rows):
            raise ValueError("coefficients must form a 4x4 table")
        return cls(tuple(tuple(rows[j][i] for j in range(4)) for i in range(4)))

    def table_rows(self) -> list[list[float]]:
        return [[self.K[i][j] for i in range(4)] for j in range(4)]


DEFAULT_COEFFICIENTS = VtMicroCoefficients()


def fuel_rate(v: float, a: float, K: VtMicroCoefficients = DEFAULT_COEFFICIENTS) -> float:
    # Horner in a, then in v.
    k = K.K
    p = 0.0
    for i in (3, 2, 1, 0):
        row = k[i]
        p = p * v + (((row[3] * a + row[2]) * a + row[1]) * a + row[0])
    try:
        return math.exp(p)
    except OverflowError:
        return math.inf


def interval_fuel(v: float, a: float, theta: float,
                  K: VtMicroCoefficients = DEFAULT_COEFFICIENTS) -> float:
    if not theta > 0:
        raise ValueError("theta must be positive")
    return fuel_rate(v, a, K) * theta


def trajectory_fuel(traj: Trajectory, stop_line: float,
                    K: VtMicroCoefficients = DEFAULT_COEFFICIENTS,
                    end_index: Optional[int] = None) -> float:
    """Fuel from the first tick up to (not including) the departure index.

    ``end_index`` overrides the departure index; with neither available the
    whole stored trajectory is accounted.
    """
    if end_index is None:
        end_index = traj.departure_index(stop_line)
    if end_index is None:
        end_index = len(traj) - 1
    return interval_fuel_sum(traj, 0, end_index, K)


def interval_fuel_sum(traj: Trajectory, first: int, last: int,
                      K: VtMicroCoefficients = DEFAULT_COEFFICIENTS) -> float:
    """Sum of interval fuels for relative ticks ``first <= t < last``."""
    theta = traj.theta
    x = traj.positions
    n = x.size
    terms = []
    for t in range(first, last):
        v = (x[t + 1] - x[t]) / theta if t + 1 < n else (x[-1] - x[-2]) / theta
        if t + 2 < n:
            v_next = (x[t + 2] - x[t + 1]) / theta
        else:
            v_next = (x[-1] - x[-2]) / theta
        terms.append(interval_fuel(float(v), float((v_next - v) / theta), theta, K))
    return math.fsum(terms)
