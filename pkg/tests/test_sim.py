import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecobatch.core import Phase, VehicleKind, VehicleParams, phase_at
from ecobatch.gipps import simulate_benchmark
from ecobatch.online import PlannerConfig
from ecobatch.sim import (ScenarioConfig, ScenarioMismatch, compare_to_benchmark,
                          generate_arrivals, latency_profile, run, run_benchmark, sweep,
                          sweep_threads)


def strip(result):
    """Everything in a result except wall-clock latencies."""
    return ([(v.id, v.kind, v.entry_tick, None if v.trajectory is None else v.trajectory.positions.tolist(),
              v.fuel, v.departure_tick, v.batch_indices) for v in result.vehicles],
            result.violations, [(e.vehicle_id, e.tick) for e in result.infeasibility_events],
            {k: c.to_dict() for k, c in result.certificates.items()})


def test_arrivals_seeded(params, grid):
    a = generate_arrivals(ScenarioConfig(mpr=0.5, seed=3), params, grid)
    b = generate_arrivals(ScenarioConfig(mpr=0.5, seed=3), params, grid)
    assert a == b
    assert sum(v.kind is VehicleKind.CAV for v in a) == 10
    gaps = np.diff([v.entry_tick for v in a])
    assert a[0].entry_tick == 0 and np.all((gaps >= 3) & (gaps <= 8))


@pytest.mark.parametrize("mpr,n_cav", [(0.0, 0), (0.55, 11), (0.525, 11), (1.0, 20)])
def test_cav_count_rounding(params, grid, mpr, n_cav):
    a = generate_arrivals(ScenarioConfig(mpr=mpr), params, grid)
    assert sum(v.kind is VehicleKind.CAV for v in a) == n_cav


@pytest.mark.parametrize("kwargs", [dict(mpr=1.5), dict(n_vehicles=0), dict(prediction_error=1.0),
                                    dict(headway_min=5, headway_max=4), dict(phi=0)])
def test_scenario_validation(kwargs):
    with pytest.raises(ValueError):
        ScenarioConfig(**kwargs)


@pytest.mark.parametrize("eps", [None, 1.0])
def test_reproducible(batch, params, plan, grid, eps):
    sc = ScenarioConfig(mpr=0.6, seed=4, planner=PlannerConfig(eps), prediction_error=0.05)
    assert strip(run(sc, batch, params, plan, grid)) == strip(run(sc, batch, params, plan, grid))


@settings(max_examples=8, deadline=None)
@given(st.sampled_from([0.0, 0.5, 0.8, 1.0]), st.integers(0, 2 ** 32), st.sampled_from([None, 1.0]))
def test_fifo_on_approach_and_signal(batch, params, plan, grid, mpr, seed, eps):
    r = run(ScenarioConfig(mpr=mpr, seed=seed, planner=PlannerConfig(eps)), batch, params, plan, grid)
    assert not r.violations
    recs = [v for v in r.vehicles if v.trajectory is not None]
    for a, b in zip(recs, recs[1:]):
        for t in range(b.entry_tick, min(a.trajectory.end_tick, b.trajectory.end_tick) + 1):
            if b.trajectory.position_at(t) <= params.L_s:
                assert a.trajectory.position_at(t) >= b.trajectory.position_at(t)
    for v in recs:
        c = v.trajectory.crossing_index(params.L_s)
        if c is not None:
            assert phase_at(plan, v.entry_tick + c, grid) is not Phase.RED


def test_benchmark_shares_arrivals(batch, params, plan, grid):
    sc = ScenarioConfig(mpr=0.5, seed=2)
    ours, bench = run(sc, batch, params, plan, grid), run_benchmark(sc, params, plan, grid)
    assert [(v.id, v.kind, v.scheduled_tick) for v in ours.vehicles] == \
           [(v.id, v.kind, v.scheduled_tick) for v in bench.vehicles]
    assert bench.mode == "benchmark" and not bench.latencies
    trajs = simulate_benchmark(sc, params, plan, grid)
    assert [t.positions.tolist() for t in trajs] == \
           [v.trajectory.positions.tolist() for v in bench.vehicles]


def test_zero_mpr_saves_nothing(batch, params, plan, grid):
    c = compare_to_benchmark(ScenarioConfig(mpr=0.0, seed=1), batch, params, plan, grid)
    assert c.savings == 0.0 and c.tempc_fuel == c.benchmark_fuel


def test_savings_skip_non_finite(batch, params, plan, grid):
    c = compare_to_benchmark(ScenarioConfig(mpr=0.5, seed=4), batch, params, plan, grid)
    assert math.isfinite(c.savings)
    assert c.n_common + c.n_nonfinite <= 20


def test_rolling_equals_static_at_zero_error(batch, params, plan, grid):
    for seed in range(3):
        s = run(ScenarioConfig(mpr=0.6, seed=seed), batch, params, plan, grid)
        r = run(ScenarioConfig(mpr=0.6, seed=seed, planner=PlannerConfig(1.0)), batch, params, plan, grid)
        for a, b in zip(s.vehicles, r.vehicles):
            assert a.trajectory == b.trajectory
        assert not r.infeasibility_events


def test_batch_mismatch(batch, params, plan, grid):
    with pytest.raises(ScenarioMismatch, match="phi"):
        run(ScenarioConfig(phi=3), batch, params, plan, grid)
    with pytest.raises(ScenarioMismatch, match="params"):
        run(ScenarioConfig(), batch, VehicleParams(v_D=7.0), plan, grid)


def test_latency_profile(batch, params, plan, grid):
    r = run(ScenarioConfig(), batch, params, plan, grid)
    prof = latency_profile(r)
    assert prof["mode"] == "static" and prof["per_vehicle_ms"]["n"] == 20
    with pytest.raises(ValueError):
        latency_profile(run_benchmark(ScenarioConfig(), params, plan, grid))


def test_sweep_parallel_matches_serial(batch, params, plan, grid, monkeypatch):
    scs = [ScenarioConfig(mpr=m, seed=s) for m in (0.5, 1.0) for s in range(2)]
    serial = sweep(scs, batch, params, plan, grid, threads=1)
    parallel = sweep(scs, batch, params, plan, grid, threads=2)
    assert [strip(a) for a in serial] == [strip(b) for b in parallel]
    monkeypatch.setenv("ECOBATCH_THREADS", "3")
    assert sweep_threads() == 3
    monkeypatch.setenv("ECOBATCH_THREADS", "x")
    with pytest.raises(ValueError):
        sweep_threads()
