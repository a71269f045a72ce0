import numpy as np
import pytest

from becload.collisions import ShellOccupancy
from becload.pump import (
    LoadingConfig,
    OutcouplingPolicy,
    apply_evaporation,
    loading_rates,
    outcoupling_rate,
)


def test_loading_rates_empty_trap():
    state = ShellOccupancy.empty(5)
    g = 0.37
    per_shell = loading_rates(state, LoadingConfig(gamma_eff=g, mode="per-shell"))
    assert per_shell[0] == pytest.approx(g)
    assert np.allclose(per_shell, g)
    ergodic = loading_rates(state, LoadingConfig(gamma_eff=g, mode="per-state-ergodic"))
    assert ergodic[0] == pytest.approx(g)
    assert ergodic[2] == pytest.approx(6 * g)
    assert ergodic[4] == pytest.approx(15 * g)


def test_loading_rates_enhancement_and_cap():
    state = ShellOccupancy([100, 0, 4, 0])
    g = 2.0
    lam = loading_rates(state, LoadingConfig(gamma_eff=g, mode="per-shell"))
    assert lam[0] == pytest.approx(101 * g)
    assert lam[2] == pytest.approx(5 * g)
    capped = loading_rates(state, LoadingConfig(gamma_eff=g, mode="per-shell",
                                                max_load_shell=1))
    assert capped[0] == pytest.approx(101 * g)
    assert capped[2] == 0.0
    assert capped[3] == 0.0


def test_loading_rates_uniform_fixed_delivery():
    state = ShellOccupancy([100, 0, 4, 0])
    g = 2.0
    lam = loading_rates(state, LoadingConfig(gamma_eff=g, mode="uniform"))
    assert np.allclose(lam, g / 4.0)
    assert lam.sum() == pytest.approx(g)
    capped = loading_rates(state, LoadingConfig(gamma_eff=g, mode="uniform",
                                                max_load_shell=1))
    assert capped[0] == pytest.approx(g / 2.0)
    assert capped[1] == pytest.approx(g / 2.0)
    assert capped[2] == 0.0


def test_loading_rates_stimulated_fixed_delivery():
    # total rate stays gamma_eff; landing weights are N_m + 1
    state = ShellOccupancy([3, 0, 1, 0])
    g = 2.0
    lam = loading_rates(state, LoadingConfig(gamma_eff=g, mode="stimulated"))
    assert np.allclose(lam, g * np.array([4.0, 1.0, 2.0, 1.0]) / 8.0)
    assert lam.sum() == pytest.approx(g)
    capped = loading_rates(state, LoadingConfig(gamma_eff=g, mode="stimulated",
                                                max_load_shell=0))
    assert capped[0] == pytest.approx(g)
    assert np.all(capped[1:] == 0.0)


def test_loading_config_validation():
    with pytest.raises(ValueError):
        LoadingConfig(gamma_eff=-1.0)
    with pytest.raises(ValueError):
        LoadingConfig(gamma_eff=1.0, mode="per-atom")


def test_apply_evaporation():
    state = ShellOccupancy([3, 1, 0, 2, 1])
    assert apply_evaporation(state, m_max=4) == 0
    assert state.total_atoms == 7
    removed = apply_evaporation(state, m_max=2)
    assert removed == 3
    assert state.total_atoms == 4
    assert list(state.counts) == [3, 1, 0, 0, 0]
    state.validate()


def test_evaporation_after_collision_event():
    # collision (m_max, m_max) -> (m_max-3, m_max+3): one product evaporates
    m_max = 5
    state = ShellOccupancy([0, 0, 0, 0, 0, 2, 0, 0, 0])
    state.remove(5, 2)
    state.add(2)
    state.add(8)
    assert apply_evaporation(state, m_max) == 1
    assert state.total_atoms == 1
    assert state.counts[2] == 1


def test_outcoupling_constant():
    policy = OutcouplingPolicy(variant="constant", xi=1.14, start_time=10.0)
    gamma_eff = 2.0
    empty = ShellOccupancy.empty(3)
    assert outcoupling_rate(policy, 20.0, empty, gamma_eff) == 0.0
    state = ShellOccupancy([950, 0, 0])
    assert outcoupling_rate(policy, 5.0, state, gamma_eff) == 0.0
    assert outcoupling_rate(policy, 20.0, state, gamma_eff) == pytest.approx(
        1.14 * gamma_eff * 950)
    absolute = OutcouplingPolicy(variant="constant", gamma_out=0.25)
    assert outcoupling_rate(absolute, 0.0, state, gamma_eff) == pytest.approx(0.25 * 950)


def test_outcoupling_randomized_range():
    policy = OutcouplingPolicy(variant="randomized", c=1.17, f_max=0.05)
    state = ShellOccupancy([100, 0, 0])
    gamma_eff = 1.0
    rng = np.random.default_rng(0)
    for _ in range(200):
        f = rng.uniform(0.0, policy.f_max)
        rate = outcoupling_rate(policy, 1.0, state, gamma_eff, f_value=f)
        per_atom = rate / 100.0
        assert 1.12 - 1e-12 <= per_atom / gamma_eff <= 1.17 + 1e-12


def test_outcoupling_policy_validation():
    with pytest.raises(ValueError):
        OutcouplingPolicy(variant="sometimes")
    with pytest.raises(ValueError):
        OutcouplingPolicy(variant="constant")
    with pytest.raises(ValueError):
        OutcouplingPolicy(variant="constant", gamma_out=1.0, xi=1.0)
    with pytest.raises(ValueError):
        OutcouplingPolicy(variant="randomized", c=1.0, f_max=1.5)
    with pytest.raises(ValueError):
        OutcouplingPolicy(variant="randomized", resample_interval=0.0)
    off = OutcouplingPolicy()
    assert outcoupling_rate(off, 1e9, ShellOccupancy([10]), 1.0) == 0.0
