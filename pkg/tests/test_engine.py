"""Reference-engine behavior: exact stepping, bookkeeping, and ensembles."""

import math

import numpy as np
import pytest

from becload.collisions import ShellOccupancy
from becload.engine import (RateSystem, SimulationParams, ensemble, run,
                            run_replica, step, _channel_index)
from becload.pump import LoadingConfig, OutcouplingPolicy
from becload.rng import philox_stream
from becload.units import CHROMIUM_52_MASS, TrapSpec


def make_trap(m_max=2, virtual_extra=0):
    return TrapSpec(omega_g=2 * math.pi * 1000.0, m_max=m_max,
                    mass=CHROMIUM_52_MASS, scattering_length=6e-9,
                    virtual_extra=virtual_extra)


def base_params(**kw):
    defaults = dict(
        trap=make_trap(),
        loading=LoadingConfig(gamma_eff=0.0),
        t_end=10.0,
        delta=0.0,
        engine="reference",
        sample_grid=np.linspace(0.0, 10.0, 11),
    )
    defaults.update(kw)
    return SimulationParams(**defaults)


def test_inert_system_stays_empty():
    tr = run(base_params())
    assert tr.n_total.max() == 0
    assert tr.events_total.max() == 0
    assert tr.cum_loaded.max() == 0
    assert np.all(tr.fraction == 0.0)
    assert np.all(tr.energy_per_particle == 0.0)
    assert np.all(tr.bookkeeping_residual() == 0)


def test_default_grid_spans_run():
    params = base_params(sample_grid=None, t_end=7.0)
    tr = run(params)
    assert tr.times.size == 201
    assert tr.times[0] == 0.0
    assert tr.times[-1] == 7.0


def test_closed_system_conserves_number_and_energy():
    params = base_params(
        trap=make_trap(m_max=4, virtual_extra=0),
        delta=1.0,
        t_end=30.0,
        sample_grid=np.linspace(0.0, 30.0, 31),
        initial_occupancy=(2, 1, 1, 1, 2),
        evaporation=False,
        validate_every=50,
    )
    tr = run(params)
    assert np.all(tr.n_total == 7)
    expect = (14 + 1.5 * 7) / 7
    assert np.allclose(tr.energy_per_particle, expect, rtol=0, atol=1e-12)
    assert tr.events_total[-1] > 100
    assert np.all(np.diff(tr.events_total) >= 0)
    assert np.all(tr.bookkeeping_residual() == 0)


def test_step_respects_time_limit_and_zero_rates():
    state = ShellOccupancy([1, 1, 1])
    rates = RateSystem(state, _channel_index(3), 1.0,
                       LoadingConfig(gamma_eff=0.0), OutcouplingPolicy(),
                       False, 2)
    rng = philox_stream(1, 0)
    event, dt = step(state, rates, rng, t=5.0, t_limit=5.0)
    assert event is None and dt == 0.0

    empty = ShellOccupancy([0, 0, 0])
    idle = RateSystem(empty, _channel_index(3), 1.0,
                      LoadingConfig(gamma_eff=0.0), OutcouplingPolicy(),
                      False, 2)
    event, dt = step(empty, idle, rng, t=0.0, t_limit=9.0)
    assert event is None and dt == 9.0


def test_dwell_weighted_two_config_equilibrium():
    # three shells holding three quanta of energy admit exactly two
    # configurations, (1,1,1) and (0,3,0); their stationary weights are
    # proportional to the bosonic multiplicities 9 and 5
    state = ShellOccupancy([1, 1, 1])
    rates = RateSystem(state, _channel_index(3), 1.0,
                       LoadingConfig(gamma_eff=0.0), OutcouplingPolicy(),
                       False, 2)
    rng = philox_stream(7, 0)
    dwell = {}
    t = 0.0
    for _ in range(120000):
        key = (int(state.counts[0]), int(state.counts[1]), int(state.counts[2]))
        event, dt = step(state, rates, rng, t)
        assert event is not None
        dwell[key] = dwell.get(key, 0.0) + dt
        t += dt
    assert set(dwell) == {(1, 1, 1), (0, 3, 0)}
    total = sum(dwell.values())
    p_111 = dwell[(1, 1, 1)] / total
    p_030 = dwell[(0, 3, 0)] / total
    tv = 0.5 * (abs(p_111 - 9 / 14) + abs(p_030 - 5 / 14))
    assert tv < 0.02


def test_incremental_rates_track_full_recompute():
    state = ShellOccupancy([3, 2, 1, 0])
    rates = RateSystem(state, _channel_index(4), 0.7,
                       LoadingConfig(gamma_eff=0.5), OutcouplingPolicy(),
                       True, 2)
    rates.set_outcoupling_per_atom(0.6)
    rng = philox_stream(3, 0)
    t = 0.0
    for _ in range(150):
        event, dt = step(state, rates, rng, t)
        assert event is not None
        t += dt
        assert rates.consistency_error() < 1e-9
    state.validate()


def test_pure_birth_process_matches_exact_mean():
    # with no collisions the shells load independently, so the ground shell
    # alone is a Yule-type birth process with rate gamma*(N0+1) and mean
    # exp(gamma*t) - 1
    params = base_params(
        trap=make_trap(m_max=1, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=1.0),
        t_end=1.0,
        sample_grid=np.array([0.0, 0.5, 1.0]),
        realizations=400,
        seed=11,
    )
    res = ensemble(params)
    mean_end = res.mean["n0"][-1]
    exact = math.e - 1.0
    var = math.e * (math.e - 1.0)
    tol = 3.5 * math.sqrt(var / 400)
    assert abs(mean_end - exact) < tol
    for tr in res.trajectories:
        assert np.all(tr.cum_loaded == tr.n_total)
        assert np.all(tr.bookkeeping_residual() == 0)


def test_pure_death_outcoupling_matches_exact_mean():
    policy = OutcouplingPolicy(variant="constant", gamma_out=0.5,
                               start_time=0.5)
    params = base_params(
        trap=make_trap(m_max=1, virtual_extra=0),
        outcoupling=policy,
        t_end=2.5,
        sample_grid=np.array([0.0, 0.4, 2.5]),
        initial_occupancy=(50,),
        realizations=300,
        seed=5,
    )
    res = ensemble(params)
    # nothing happens before the outcoupler turns on
    assert np.all(res.mean["n0"][1] == 50)
    exact = 50 * math.exp(-1.0)
    var = 50 * math.exp(-1.0) * (1 - math.exp(-1.0))
    tol = 4 * math.sqrt(var / 300)
    assert abs(res.mean["n0"][-1] - exact) < tol
    for tr in res.trajectories:
        assert np.all(tr.cum_outcoupled + tr.n_total == 50)


def test_randomized_policy_resample_count():
    policy = OutcouplingPolicy(variant="randomized", c=1.17, f_max=0.05,
                               resample_interval=0.5, start_time=1.0)
    params = base_params(
        trap=make_trap(m_max=1, virtual_extra=0),
        outcoupling=policy,
        t_end=3.0,
        sample_grid=np.array([0.0, 3.0]),
        initial_occupancy=(10,),
    )
    tr = run(params)
    # draws occur at the activation time and every interval thereafter,
    # including one at the final boundary
    assert tr.event_counts["resample"] == 5


def test_max_events_freezes_remaining_samples():
    params = base_params(
        trap=make_trap(m_max=1, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=1.0),
        t_end=50.0,
        sample_grid=np.linspace(0.0, 50.0, 11),
        max_events=3,
    )
    tr = run(params)
    assert tr.events_total[-1] == 3
    assert tr.cum_loaded[-1] == 3
    frozen = tr.n_total[tr.events_total == 3]
    assert np.all(frozen == frozen[0])


def test_time_average_conserves_total_and_duration():
    params = base_params(
        trap=make_trap(m_max=2, virtual_extra=0),
        delta=1.0,
        t_end=50.0,
        sample_grid=np.array([0.0, 50.0]),
        initial_occupancy=(1, 1, 1),
        evaporation=False,
        avg_start=2.0,
    )
    tr = run(params)
    assert abs(tr.avg_duration - 48.0) < 1e-9
    assert abs(tr.avg_occupancy.sum() - 3.0) < 1e-9
    assert tr.avg_occupancy[1] > 0


def test_determinism_and_replica_separation():
    params = base_params(
        trap=make_trap(m_max=1, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=0.8),
        delta=0.5,
        t_end=8.0,
        sample_grid=np.linspace(0.0, 8.0, 9),
        seed=21,
    )
    a = run_replica(params, 0)
    b = run_replica(params, 0)
    for key in ("n_total", "n0", "events_total", "cum_loaded"):
        assert np.array_equal(getattr(a, key), getattr(b, key))
    c = run_replica(params, 1)
    assert not np.array_equal(a.events_total, c.events_total)


def test_ensemble_statistics_definition():
    params = base_params(
        trap=make_trap(m_max=1, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=1.0),
        t_end=1.0,
        sample_grid=np.array([0.0, 1.0]),
        realizations=3,
        seed=2,
    )
    res = ensemble(params)
    data = np.stack([tr.n_total.astype(float) for tr in res.trajectories])
    assert np.allclose(res.mean["n_total"], data.mean(axis=0))
    assert np.allclose(res.stderr["n_total"],
                       data.std(axis=0, ddof=1) / math.sqrt(3))
    single = ensemble(base_params(t_end=1.0, sample_grid=np.array([0.0, 1.0])))
    assert np.all(np.isnan(single.stderr["n_total"]))


def test_parallel_ensemble_matches_sequential():
    params = base_params(
        trap=make_trap(m_max=1, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=1.0),
        t_end=1.0,
        sample_grid=np.array([0.0, 1.0]),
        realizations=4,
        seed=9,
    )
    seq = ensemble(params)
    params.workers = 2
    par = ensemble(params)
    assert np.array_equal(seq.mean["n_total"], par.mean["n_total"])
    assert np.array_equal(seq.trajectories[2].n_total,
                          par.trajectories[2].n_total)


def test_full_pipeline_bookkeeping_identity():
    policy = OutcouplingPolicy(variant="constant", xi=0.8, start_time=5.0)
    params = base_params(
        trap=make_trap(m_max=3, virtual_extra=2),
        loading=LoadingConfig(gamma_eff=0.3),
        outcoupling=policy,
        delta=0.5,
        t_end=40.0,
        sample_grid=np.linspace(0.0, 40.0, 41),
        seed=13,
    )
    tr = run(params)
    assert np.all(tr.bookkeeping_residual() == 0)
    assert tr.events_total[-1] > 0
    assert tr.cum_outcoupled[-1] > 0
    assert np.all(np.diff(tr.events_total) >= 0)
    assert tr.final_counts[4:].max() == 0  # virtual shells drained


def test_parameter_validation():
    with pytest.raises(ValueError):
        run(base_params(t_end=-1.0, sample_grid=None))
    with pytest.raises(ValueError):
        run(base_params(sample_grid=np.array([0.0, 2.0, 1.0])))
    with pytest.raises(ValueError):
        run(base_params(sample_grid=np.array([0.0, 99.0])))
    with pytest.raises(ValueError):
        run(base_params(initial_occupancy=(-1,)))
    with pytest.raises(ValueError):
        run(base_params(engine="warp"))
    with pytest.raises(ValueError):
        run(base_params(realizations=0))
    with pytest.raises(ValueError):
        run(base_params(max_events=0))
    with pytest.raises(ValueError):
        run(base_params(delta=-0.1))
