"""Full-scale release gates for the simulator.

Each test here is one acceptance gate: it runs the real pipeline at the
documented scale (several go through the command line exactly as a user
would), measures the one quantity the gate is about, and asserts the
documented tolerance together with its wall-clock budget. Fine-grained
physics and API behavior live in the other test modules; this module is
deliberately expensive and statistically meaningful.
"""

import json
import math
import os
import time

import numpy as np
import pytest
from scipy.optimize import least_squares

from becload.cli import main as cli_main
from becload.collisions import ShellOccupancy, enumerate_channels, channel_rate
from becload.engine import (RateSystem, SimulationParams, ensemble, step,
                            _channel_index)
from becload.pump import LoadingConfig, OutcouplingPolicy
from becload.rng import philox_stream
from becload.units import CHROMIUM_52_MASS, TrapSpec
from becload.observables import monotone_non_increasing

OMEGA = 2.0 * math.pi * 1000.0


def _trap(m_max, virtual_extra=10, scattering_length=6e-9):
    return TrapSpec(omega_g=OMEGA, m_max=m_max, mass=CHROMIUM_52_MASS,
                    scattering_length=scattering_length,
                    virtual_extra=virtual_extra)


# ---------------------------------------------------------------------------
# preset runner shared by the end-to-end gates


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    """Run a named preset once through the CLI; cache (out_dir, elapsed)."""
    cache = {}

    def _run(name):
        if name not in cache:
            out = tmp_path_factory.mktemp("accept-" + name)
            t0 = time.perf_counter()
            rc = cli_main(["run", "--preset", name, "--out-dir", str(out)])
            elapsed = time.perf_counter() - t0
            assert rc == 0, "preset %s exited nonzero" % name
            cache[name] = (out, elapsed)
        return cache[name]

    return _run


def _summary(out_dir):
    with open(os.path.join(str(out_dir), "summary.json")) as fh:
        return json.load(fh)


def _replica_onset_stats(point):
    vals = [v for v in point["onset"]["per_replica_natural"] if v is not None]
    assert vals, "no replica condensed for %s" % point["label"]
    mean = float(np.mean(vals))
    sem = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return mean, sem


# ---------------------------------------------------------------------------
# gate 1: exact conservation at ten million events inside a minute


def test_event_loop_conserves_atom_number_and_energy_exactly():
    occ = [0] * 15
    occ[7] = 200
    params = SimulationParams(
        trap=_trap(m_max=14),
        loading=LoadingConfig(gamma_eff=0.0),
        t_end=1e9,
        sample_grid=np.linspace(0.0, 1e9, 11),
        seed=101, realizations=1, engine="fast",
        initial_occupancy=occ, evaporation=False,
        max_events=10_000_000)
    t0 = time.perf_counter()
    traj = ensemble(params).trajectories[0]
    elapsed = time.perf_counter() - t0
    counts = np.asarray(traj.final_counts)
    m = np.arange(counts.size)
    assert traj.events_total[-1] >= 10_000_000
    assert int(counts.sum()) == 200
    assert int((m * counts).sum()) == 7 * 200
    assert np.all(traj.n_total == 200)
    # shell energy per atom plus the 3/2 zero-point offset, exact throughout
    assert np.all(traj.energy_per_particle == 7.0 + 1.5)
    assert elapsed <= 60.0, "conservation run took %.1f s" % elapsed


# ---------------------------------------------------------------------------
# gate 2: three atoms in three shells reach the exact stationary mixture


def _stationary_distribution(start_counts, delta=1.0):
    """Brute-force stationary law over the reachable configuration graph."""
    channels = enumerate_channels(len(start_counts))
    start = tuple(int(c) for c in start_counts)
    index = {start: 0}
    order = [start]
    edges = []
    qi = 0
    while qi < len(order):
        cur = order[qi]
        qi += 1
        state = ShellOccupancy(list(cur))
        for ch in channels:
            r = channel_rate(state, ch, delta)
            if r <= 0.0:
                continue
            nxt = list(cur)
            nxt[ch.m1] -= 1
            nxt[ch.m2] -= 1
            nxt[ch.m3] += 1
            nxt[ch.m4] += 1
            nxt = tuple(nxt)
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
            edges.append((index[cur], index[nxt], r))
    gen = np.zeros((len(order), len(order)))
    for i, j, r in edges:
        gen[i, j] += r
        gen[i, i] -= r
    w, v = np.linalg.eig(gen.T)
    k = int(np.argmin(np.abs(w)))
    pi = np.abs(np.real(v[:, k]))
    return order, pi / pi.sum()


def test_tiny_closed_system_relaxes_to_its_exact_stationary_mixture():
    order, pi = _stationary_distribution([1, 1, 1])
    target = dict(zip(order, pi))
    assert set(target) == {(1, 1, 1), (0, 3, 0)}

    t0 = time.perf_counter()
    state = ShellOccupancy([1, 1, 1])
    rates = RateSystem(state, _channel_index(3), 1.0,
                       LoadingConfig(gamma_eff=0.0), OutcouplingPolicy(),
                       False, 2)
    rng = philox_stream(2024, 0)
    dwell = {}
    t = 0.0
    for _ in range(1_000_000):
        key = tuple(int(c) for c in state.counts)
        event, dt = step(state, rates, rng, t)
        assert event is not None
        dwell[key] = dwell.get(key, 0.0) + dt
        t += dt
    elapsed = time.perf_counter() - t0

    total = sum(dwell.values())
    tv = 0.5 * sum(abs(dwell.get(c, 0.0) / total - target[c]) for c in target)
    assert tv <= 0.02, "total variation %.4f" % tv
    assert elapsed <= 60.0, "sampling took %.1f s" % elapsed

    # cross-check the compiled engine on the same system: the two-config
    # space makes the configuration law an affine function of <N_1>
    params = SimulationParams(
        trap=_trap(m_max=2, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=0.0),
        t_end=2e5, delta=1.0,
        sample_grid=np.linspace(0.0, 2e5, 11),
        seed=2024, realizations=1, engine="fast",
        initial_occupancy=[1, 1, 1], evaporation=False,
        avg_start=0.0)
    traj = ensemble(params).trajectories[0]
    p111 = (3.0 - float(traj.avg_occupancy[1])) / 2.0
    tv_fast = abs(p111 - target[(1, 1, 1)])
    assert tv_fast <= 0.02, "fast-engine total variation %.4f" % tv_fast


# ---------------------------------------------------------------------------
# gate 3: a closed 15-shell gas equilibrates to Bose-Einstein occupations


def test_closed_gas_equilibrates_to_bose_einstein_occupations():
    occ = [0] * 15
    occ[4] = 200
    params = SimulationParams(
        trap=_trap(m_max=14, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=0.0),
        t_end=1e5,
        sample_grid=np.linspace(0.0, 1e5, 21),
        seed=11, realizations=1, engine="fast",
        initial_occupancy=occ, evaporation=False,
        avg_start=2e4, max_events=200_000_000)
    t0 = time.perf_counter()
    traj = ensemble(params).trajectories[0]
    elapsed = time.perf_counter() - t0

    avg = np.asarray(traj.avg_occupancy)[:15]
    g = np.array([(m + 1) * (m + 2) // 2 for m in range(15)], dtype=float)
    sel = avg >= 5.0
    mvec = np.arange(15.0)

    def resid(p):
        temp, mu = p
        pred = g / (np.exp((mvec - mu) / temp) - 1.0)
        return (pred[sel] - avg[sel]) / avg[sel]

    fit = least_squares(resid, x0=[2.5, -1.0],
                        bounds=([0.1, -50.0], [50.0, -1e-9]))
    worst = float(np.max(np.abs(fit.fun)))
    assert int(sel.sum()) >= 8, "too few well-occupied shells to fit"
    assert worst <= 0.10, "worst relative misfit %.3f (T=%.2f mu=%.2f)" % (
        worst, fit.x[0], fit.x[1])
    assert elapsed <= 600.0, "equilibration run took %.1f s" % elapsed


# ---------------------------------------------------------------------------
# gate 4: collisionless amplified loading reproduces the exact mean growth


def test_collisionless_amplified_loading_matches_exact_exponential_mean():
    gamma = 0.01
    params = SimulationParams(
        trap=_trap(m_max=1, virtual_extra=0),
        loading=LoadingConfig(gamma_eff=gamma, mode="per-shell",
                              max_load_shell=0),
        t_end=300.0, delta=0.0,
        sample_grid=np.linspace(0.0, 300.0, 7),
        seed=42, realizations=10_000, engine="fast")
    t0 = time.perf_counter()
    res = ensemble(params)
    elapsed = time.perf_counter() - t0

    exact = np.expm1(gamma * res.times)
    gap = np.abs(res.mean["n0"] - exact)
    bound = 3.0 * res.stderr["n0"] + 1e-12
    assert np.all(gap <= bound), "growth deviates: gap=%s bound=%s" % (
        np.array2string(gap, precision=4), np.array2string(bound, precision=4))
    assert elapsed <= 300.0, "replica sweep took %.1f s" % elapsed


# ---------------------------------------------------------------------------
# gate 5: reabsorption scaling exponents and exact channel competition


def test_reabsorption_scaling_exponents_and_channel_competition(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "bre"
    rc = cli_main(["bre-scan", "--out-dir", str(out)])
    assert rc == 0
    fit = _summary(out)["scaling"]["fit"]
    assert abs(fit["a2a_bad_ratio_exponent"] - 2.0) <= 0.1
    assert abs(fit["a2a_bad_occupancy_exponent"] - 1.0) <= 0.1
    assert abs(fit["a1a_ratio_exponent"] - 1.0) <= 0.05

    # independent check of the fast/slow flux competition: integrate the
    # no-jump master equation with flux accumulators and compare channel
    # totals with the resummed per-order bookkeeping
    from scipy.integrate import solve_ivp
    from becload.branching import (LambdaSystemSpec, ReducedLambdaModel,
                                   compute_order_terms, decay_rate_into_trap)

    gamma_er, gamma_eg, rabi, detuning = 1.0, 2e-3, 0.7, -0.2
    spec = LambdaSystemSpec(gamma_er, gamma_eg, rabi=rabi, detuning=detuning)
    model = ReducedLambdaModel(m_g=1, eta=0.0, occupations=(11,),
                               initial_state="r")
    w = decay_rate_into_trap(model, spec)
    drift = np.array([[0.0, -0.5j * rabi], [-0.5j * rabi, 1j * detuning]],
                     dtype=complex)
    drift[1, 1] -= 0.5 * (gamma_er + w)

    def rhs(t, y):
        rho = (y[0:4] + 1j * y[4:8]).reshape(2, 2)
        drho = drift @ rho + rho @ drift.conj().T
        return np.concatenate([
            drho.real.ravel(), drho.imag.ravel(),
            [gamma_er * rho[1, 1].real, w * rho[1, 1].real]])

    y0 = np.zeros(10)
    y0[0] = 1.0
    sol = solve_ivp(rhs, (0.0, 400.0), y0, method="DOP853",
                    rtol=1e-11, atol=1e-13)
    flux_fast, flux_slow = sol.y[8, -1], sol.y[9, -1]

    terms = compute_order_terms(model, spec)
    slow = terms["A1a"] + sum(v for k, v in terms.items()
                              if k.startswith("A2a"))
    fast = terms["A0"] + terms["A1b"] + terms["A2b"] + terms["residual"]
    assert slow == pytest.approx(flux_slow, rel=1e-6)
    assert fast == pytest.approx(flux_fast, rel=1e-6)
    elapsed = time.perf_counter() - t0
    assert elapsed <= 1800.0, "scaling scan took %.1f s" % elapsed


# ---------------------------------------------------------------------------
# gate 6: the baseline loading preset condenses inside the documented window


def test_baseline_loading_preset_condenses_within_documented_window(preset_run):
    out, elapsed = preset_run("fig3")
    summary = _summary(out)
    point = summary["points"][0]
    onset = point["onset"]["natural"]
    fraction = point["final"]["fraction_mean"]
    assert summary["loading_mode"] == "stimulated"
    assert summary["realizations"] == 10
    assert onset is not None and 1e4 <= onset <= 9e4, "onset %s" % onset
    assert fraction >= 0.5, "condensed fraction %.3f" % fraction
    assert elapsed <= 3600.0, "baseline preset took %.1f s" % elapsed


# ---------------------------------------------------------------------------
# gate 7: onset trends across loading rate, scattering length, trap depth


def test_onset_trends_across_loading_rate_scattering_length_and_depth(preset_run):
    out4, e4 = preset_run("fig4")
    out5, e5 = preset_run("fig5")
    out6, e6 = preset_run("fig6")

    # faster delivery condenses no later
    pts4 = _summary(out4)["points"]
    means4, sems4 = zip(*(_replica_onset_stats(p) for p in pts4))
    assert monotone_non_increasing(means4, sems4, sigma=2.0), (
        "onset vs loading rate: %s +- %s" % (means4, sems4))

    # stronger interactions condense no later, then saturate
    pts5 = _summary(out5)["points"]
    means5, sems5 = zip(*(_replica_onset_stats(p) for p in pts5))
    assert monotone_non_increasing(means5, sems5, sigma=2.0), (
        "onset vs scattering length: %s +- %s" % (means5, sems5))
    gap = abs(means5[1] - means5[2])
    err = 2.0 * math.hypot(sems5[1], sems5[2])
    assert gap <= err, (
        "last two onsets differ beyond ensemble error: %.0f vs %.0f" % (gap, err))

    # the deeper trap ends with at least as large a condensate
    pts6 = {p["label"]: p for p in _summary(out6)["points"]}
    n0_shallow = pts6["m_max=30"]["final"]["n0_mean"]
    n0_deep = pts6["m_max=60"]["final"]["n0_mean"]
    assert n0_deep >= n0_shallow, "final N0 %.1f (deep) < %.1f (shallow)" % (
        n0_deep, n0_shallow)

    total = e4 + e5 + e6
    assert total <= 7200.0, "trend presets took %.1f s" % total


# ---------------------------------------------------------------------------
# gate 8: the outcoupling-ratio scan brackets the survival threshold


def test_outcoupling_scan_brackets_survival_threshold(preset_run):
    out, elapsed = preset_run("fig7")
    summary = _summary(out)
    th = summary["threshold"]
    assert th is not None
    assert not th["open_ended"], "scan did not bracket the threshold"
    assert th["xi0"] is not None and 1.0 <= th["xi0"] <= 1.5, (
        "threshold ratio %s" % th["xi0"])
    finals = th["final_n0"]
    sems = [p["final"]["n0_stderr"] for p in summary["points"]]
    assert monotone_non_increasing(finals, sems, sigma=2.0), (
        "final N0 vs outcoupling ratio: %s +- %s" % (finals, sems))
    assert elapsed <= 7200.0, "threshold scan took %.1f s" % elapsed


# ---------------------------------------------------------------------------
# gate 9: randomized outcoupling stabilizes the held condensate


def test_randomized_outcoupling_stabilizes_the_condensate(preset_run):
    out, elapsed = preset_run("fig8")
    summary = _summary(out)
    stab = summary["points"][0]["stabilization"]
    assert stab is not None
    assert stab["mean_n0"] > 0.0
    assert stab["relative_std_mean"] <= 0.20, (
        "relative condensate noise %.3f" % stab["relative_std_mean"])
    # the extracted-flux report accompanies the documented reference rate
    assert stab["extracted_atoms_mean"] > 0.0
    assert stab["extraction_rate_si"] > 0.0
    assert stab["reference_extraction_rate_si"] == pytest.approx(7500.0)
    assert elapsed <= 3600.0, "stabilization preset took %.1f s" % elapsed


# ---------------------------------------------------------------------------
# gate 10: rerunning any preset reproduces its artifacts byte for byte


_REDUCED = {
    "fig3": ["run.t_end=2000", "run.realizations=2", "run.sample_points=21"],
    "fig4": ["run.t_end=2000", "run.realizations=2", "run.sample_points=21",
             "sweep.t_end=[2000, 1500, 1000]"],
    "fig5": ["run.t_end=2000", "run.realizations=2", "run.sample_points=21",
             "sweep.t_end=[2000, 1500, 1000]"],
    "fig6": ["run.t_end=2000", "run.realizations=2", "run.sample_points=21"],
    "fig7": ["outcoupling.start_time=200", "run.t_end=1200",
             "run.realizations=2", "run.sample_points=13",
             "sweep.values=[1.0, 1.4]"],
    "fig8": ["outcoupling.start_time=200", "run.t_end=1200",
             "run.realizations=2", "run.sample_points=13",
             "output.stabilization_window=[200.0, 1200.0]"],
    "thermalization": ["run.t_end=500", "run.realizations=2",
                       "run.sample_points=11"],
}


def _tree_bytes(root):
    found = {}
    for dirpath, _, files in os.walk(str(root)):
        for fn in files:
            path = os.path.join(dirpath, fn)
            with open(path, "rb") as fh:
                found[os.path.relpath(path, str(root))] = fh.read()
    return found


def test_preset_artifacts_are_byte_reproducible(tmp_path):
    for name, overrides in sorted(_REDUCED.items()):
        args = ["run", "--preset", name]
        for ov in overrides:
            args += ["--set", ov]
        trees = []
        for attempt in ("a", "b"):
            out = tmp_path / (name + "-" + attempt)
            rc = cli_main(args + ["--out-dir", str(out)])
            assert rc == 0, "%s rerun exited nonzero" % name
            trees.append(_tree_bytes(out))
        assert trees[0].keys() == trees[1].keys(), name
        for rel in trees[0]:
            assert trees[0][rel] == trees[1][rel], (
                "%s differs between reruns of %s" % (rel, name))

    trees = []
    for attempt in ("a", "b"):
        out = tmp_path / ("bre-" + attempt)
        rc = cli_main(["bre-scan", "--out-dir", str(out)])
        assert rc == 0
        trees.append(_tree_bytes(out))
    assert trees[0].keys() == trees[1].keys()
    for rel in trees[0]:
        assert trees[0][rel] == trees[1][rel], (
            "%s differs between reruns of the scaling scan" % rel)
