"""Continuous-time kinetic Monte Carlo driver.

Composes the collision, loading, and outcoupling channels into one event
system, samples exact exponential waiting times, and advances trajectories to
a fixed observation grid. Time-dependent outcoupling rates are piecewise
constant, so the exponential clock is truncated at every rate-change boundary
and redrawn, which keeps the sampling exact.

Two interchangeable engines produce the same trajectory schema: a pure-Python
reference engine built on the incrementally updated rate table (used for
small-system oracles and as the readable statement of the dynamics), and
a compiled engine for production-scale runs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .collisions import ChannelIndex, RateTable, ShellOccupancy, channel_rate
from .pump import LoadingConfig, OutcouplingPolicy
from .rng import philox_stream
from .units import TrapSpec, collision_unit_rate, shell_degeneracy

_INDEX_CACHE = {}


def _channel_index(S):
    if S not in _INDEX_CACHE:
        _INDEX_CACHE[S] = ChannelIndex(S)
    return _INDEX_CACHE[S]


@dataclass
class SimulationParams:
    """Complete description of one stochastic simulation.

    All times and rates are in trap units (1/omega_g and omega_g). delta is
    the collision unit rate; None derives it from the trap's scattering
    length. sample_grid defaults to 201 evenly spaced times spanning
    [0, t_end]. max_events stops a trajectory early (remaining grid rows
    repeat the frozen state), avg_start turns on time-averaged occupancy
    accumulation from that time onward, and validate_every makes the engine
    re-check its cached totals every so many events.
    """

    trap: TrapSpec
    loading: LoadingConfig
    t_end: float
    outcoupling: OutcouplingPolicy = field(default_factory=OutcouplingPolicy)
    delta: float = None
    sample_grid: np.ndarray = None
    seed: int = 0
    realizations: int = 1
    initial_occupancy: tuple = None
    evaporation: bool = True
    engine: str = "fast"
    max_events: int = None
    avg_start: float = None
    validate_every: int = 0
    refresh_every: int = 100000
    workers: int = 0


def _resolve(params):
    """Validate a SimulationParams and derive the quantities engines need."""
    trap = params.trap
    S = trap.total_shells
    if params.t_end <= 0:
        raise ValueError("t_end must be positive")
    if params.realizations < 1:
        raise ValueError("realizations must be at least 1")
    if params.engine not in ("fast", "reference"):
        raise ValueError("engine must be 'fast' or 'reference'")
    delta = params.delta if params.delta is not None else collision_unit_rate(trap)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if params.sample_grid is None:
        grid = np.linspace(0.0, params.t_end, 201)
    else:
        grid = np.asarray(params.sample_grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 1:
            raise ValueError("sample_grid must be a non-empty 1D array")
        if (np.diff(grid) <= 0).any():
            raise ValueError("sample_grid must be strictly increasing")
        if grid[0] < 0 or grid[-1] > params.t_end:
            raise ValueError("sample_grid must lie within [0, t_end]")
    counts = np.zeros(S, dtype=np.int64)
    if params.initial_occupancy is not None:
        init = np.asarray(params.initial_occupancy, dtype=np.int64)
        if init.ndim != 1 or init.size > S:
            raise ValueError("initial_occupancy must be 1D with at most %d shells" % S)
        if (init < 0).any():
            raise ValueError("initial_occupancy must be non-negative")
        counts[:init.size] = init
    max_events = params.max_events if params.max_events is not None else (1 << 62)
    if max_events < 1:
        raise ValueError("max_events must be positive")
    avg_start = params.avg_start
    if avg_start is not None and avg_start < 0:
        raise ValueError("avg_start must be non-negative")
    if params.refresh_every < 1:
        raise ValueError("refresh_every must be positive")
    return {
        "S": S,
        "m_max": trap.m_max,
        "delta": float(delta),
        "grid": grid,
        "counts": counts,
        "max_events": int(max_events),
        "avg_start": avg_start,
    }


@dataclass
class Trajectory:
    """Observables of one realization sampled on the observation grid.

    fraction and energy_per_particle are written as 0.0 on rows where the
    trap is empty so the columns stay plottable; the observables module's
    energy function reports the undefined case as NaN instead.
    """

    times: np.ndarray
    n_total: np.ndarray
    n0: np.ndarray
    fraction: np.ndarray
    energy_per_particle: np.ndarray
    cum_loaded: np.ndarray
    cum_evaporated: np.ndarray
    cum_outcoupled: np.ndarray
    cum_not_trapped: np.ndarray
    events_total: np.ndarray
    final_counts: np.ndarray
    event_counts: dict
    initial_atoms: int
    replica: int = 0
    avg_occupancy: np.ndarray = None
    avg_duration: float = 0.0

    def bookkeeping_residual(self):
        """initial + loaded - N - evaporated - outcoupled - not_trapped per row.

        Exactly zero at every sample when the accounting is consistent.
        """
        return (self.initial_atoms + self.cum_loaded - self.n_total
                - self.cum_evaporated - self.cum_outcoupled - self.cum_not_trapped)


OBSERVABLE_KEYS = ("n_total", "n0", "fraction", "energy_per_particle",
                   "cum_evaporated", "cum_outcoupled", "cum_not_trapped",
                   "events_total")


@dataclass
class EnsembleResult:
    """Per-grid-point mean and standard error across replicas."""

    times: np.ndarray
    mean: dict
    stderr: dict
    trajectories: list

    def mean_trajectory(self):
        """Lightweight view exposing the mean curves under trajectory names."""

        class _Mean:
            pass

        view = _Mean()
        view.times = self.times
        for key in OBSERVABLE_KEYS:
            setattr(view, key, self.mean[key])
        return view


class RateSystem:
    """All event rates of one trajectory in a single weighted table.

    Slot layout: [0, C) collision channels, [C, C+S) per-shell loading,
    C+S the outcoupling leaf. Rates touched by an event are recomputed from
    the current occupancy and written back individually.
    """

    def __init__(self, state, index, delta, loading, policy, evaporation, m_max,
                 refresh_every=100000):
        self.state = state
        self.index = index
        self.delta = delta
        self.loading = loading
        self.policy = policy
        self.evaporation = evaporation
        self.m_max = m_max
        self.C = len(index)
        self.S = state.shells
        top = loading.max_load_shell
        self.load_top = self.S - 1 if top is None else min(top, self.S - 1)
        self.table = RateTable(self.C + self.S + 1, rebuild_every=refresh_every)
        self.out_per_atom = 0.0
        for i, ch in enumerate(index.channels):
            self.table.set_value(i, channel_rate(state, ch, delta))
        for m in range(self.S):
            self.table.set_value(self.C + m, self._loading_rate(m))
        self._refresh_outcoupling_slot()

    def _loading_rate(self, m):
        if m > self.load_top:
            return 0.0
        n = int(self.state.counts[m])
        if self.loading.mode == "per-shell":
            return self.loading.gamma_eff * (n + 1)
        if self.loading.mode == "per-state-ergodic":
            return self.loading.gamma_eff * (n + shell_degeneracy(m))
        if self.loading.mode == "uniform":
            return self.loading.gamma_eff / (self.load_top + 1)
        # stimulated: fixed total delivery rate, bosonic landing weights
        band = int(self.state.counts[: self.load_top + 1].sum())
        return self.loading.gamma_eff * (n + 1) / float(band + self.load_top + 1)

    def _refresh_outcoupling_slot(self):
        self.table.set_value(self.C + self.S,
                             self.out_per_atom * int(self.state.counts[0]))

    def set_outcoupling_per_atom(self, rate):
        """Install the current per-condensate-atom extraction rate (0 = gated off)."""
        self.out_per_atom = float(rate)
        self._refresh_outcoupling_slot()

    def total(self):
        return self.table.total()

    def refresh_shells(self, shells):
        for i in self.index.affected_by_shells(shells):
            self.table.set_value(i, channel_rate(self.state, self.index.channels[i],
                                                 self.delta))
        if (self.loading.mode == "stimulated"
                and any(m <= self.load_top for m in shells)):
            # the landing normalization couples every shell's loading slot
            for m in range(self.S):
                self.table.set_value(self.C + m, self._loading_rate(m))
        else:
            for m in shells:
                self.table.set_value(self.C + m, self._loading_rate(m))
        if 0 in shells:
            self._refresh_outcoupling_slot()

    def apply_slot(self, slot):
        """Apply the event behind a sampled slot; returns an event descriptor.

        Event tuples: ("collision", channel, atoms_evaporated),
        ("load", shell, trapped), ("outcouple",).
        """
        state = self.state
        if slot < self.C:
            ch = self.index.channels[slot]
            deltas = {}
            for m, d in ((ch.m1, -1), (ch.m2, -1), (ch.m3, 1), (ch.m4, 1)):
                deltas[m] = deltas.get(m, 0) + d
            state.remove(ch.m1)
            state.remove(ch.m2)
            state.add(ch.m3)
            state.add(ch.m4)
            evaporated = 0
            if self.evaporation:
                for m in (ch.m3, ch.m4):
                    if m > self.m_max:
                        state.remove(m)
                        deltas[m] -= 1
                        evaporated += 1
            changed = {m for m, d in deltas.items() if d != 0}
            if changed:
                self.refresh_shells(changed)
            return ("collision", ch, evaporated)
        if slot < self.C + self.S:
            m = slot - self.C
            if self.evaporation and m > self.m_max:
                # the atom arrives above the cutoff and is removed before it
                # can interact; no occupancy or rate changes
                return ("load", m, False)
            state.add(m)
            self.refresh_shells({m})
            return ("load", m, True)
        state.remove(0)
        self.refresh_shells({0})
        return ("outcouple",)

    def consistency_error(self):
        """Worst absolute difference between stored and recomputed rates."""
        worst = 0.0
        for i, ch in enumerate(self.index.channels):
            worst = max(worst, abs(self.table.value(i)
                                   - channel_rate(self.state, ch, self.delta)))
        for m in range(self.S):
            worst = max(worst, abs(self.table.value(self.C + m) - self._loading_rate(m)))
        expect_out = self.out_per_atom * int(self.state.counts[0])
        worst = max(worst, abs(self.table.value(self.C + self.S) - expect_out))
        return worst


def step(state, rates, rng, t, t_limit=math.inf):
    """One exact stochastic-simulation step against a RateSystem.

    Draws the waiting time from the total rate, picks an event with
    probability proportional to its rate, applies it (including immediate
    evaporation) and updates the affected rates. Returns (event, dt); event
    is None when the clock ran past t_limit or no rate is active, in which
    case the state is untouched and dt advances exactly to t_limit.
    """
    total = rates.total()
    if total <= 0.0:
        return None, t_limit - t
    dt = rng.exponential(1.0 / total)
    if t + dt >= t_limit:
        return None, t_limit - t
    slot = rates.table.sample(rng.random())
    event = rates.apply_slot(slot)
    return event, dt


class _Recorder:
    """Collects grid samples, loss counters, and optional time averages."""

    def __init__(self, grid, S, avg_start):
        n = grid.size
        self.grid = grid
        self.n_total = np.zeros(n, dtype=np.int64)
        self.n0 = np.zeros(n, dtype=np.int64)
        self.weighted = np.zeros(n, dtype=np.int64)
        self.loaded = np.zeros(n, dtype=np.int64)
        self.evaporated = np.zeros(n, dtype=np.int64)
        self.outcoupled = np.zeros(n, dtype=np.int64)
        self.not_trapped = np.zeros(n, dtype=np.int64)
        self.events = np.zeros(n, dtype=np.int64)
        self.avg_start = avg_start
        self.avg_counts = np.zeros(S, dtype=np.float64)
        self.avg_duration = 0.0

    def record(self, gi, state, counters):
        self.n_total[gi] = state.total_atoms
        self.n0[gi] = state.counts[0]
        self.weighted[gi] = state.weighted_sum
        self.loaded[gi] = counters["loaded"]
        self.evaporated[gi] = counters["evaporated"]
        self.outcoupled[gi] = counters["outcoupled"]
        self.not_trapped[gi] = counters["not_trapped"]
        self.events[gi] = counters["events"]

    def accumulate(self, t, state, dt):
        if self.avg_start is None or dt <= 0.0:
            return
        lo = max(t, self.avg_start)
        w = t + dt - lo
        if w > 0.0:
            self.avg_counts += state.counts * w
            self.avg_duration += w


def _build_trajectory(rec, state, counters, initial_atoms, replica):
    n = rec.grid.size
    n_total = rec.n_total.copy()
    n0 = rec.n0.copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        fraction = np.where(n_total > 0, n0 / np.maximum(n_total, 1), 0.0)
        energy = np.where(n_total > 0,
                          (rec.weighted + 1.5 * n_total) / np.maximum(n_total, 1),
                          0.0)
    avg_occ = None
    avg_duration = 0.0
    if rec.avg_start is not None and rec.avg_duration > 0.0:
        avg_occ = rec.avg_counts / rec.avg_duration
        avg_duration = rec.avg_duration
    return Trajectory(
        times=rec.grid.copy(),
        n_total=n_total,
        n0=n0,
        fraction=fraction.astype(np.float64),
        energy_per_particle=energy.astype(np.float64),
        cum_loaded=rec.loaded.copy(),
        cum_evaporated=rec.evaporated.copy(),
        cum_outcoupled=rec.outcoupled.copy(),
        cum_not_trapped=rec.not_trapped.copy(),
        events_total=rec.events.copy(),
        final_counts=state.counts.copy(),
        event_counts=dict(counters["by_type"]),
        initial_atoms=initial_atoms,
        replica=replica,
        avg_occupancy=avg_occ,
        avg_duration=avg_duration,
    )


def _run_reference(params, replica, resolved):
    state = ShellOccupancy(resolved["counts"])
    if params.evaporation:
        spill = 0
        for m in range(resolved["m_max"] + 1, resolved["S"]):
            k = int(state.counts[m])
            if k:
                state.remove(m, k)
                spill += k
    else:
        spill = 0
    initial_atoms = state.total_atoms + spill
    index = _channel_index(resolved["S"])
    rates = RateSystem(state, index, resolved["delta"], params.loading,
                       params.outcoupling, params.evaporation, resolved["m_max"],
                       refresh_every=params.refresh_every)
    rng = philox_stream(params.seed, replica)
    rec = _Recorder(resolved["grid"], resolved["S"], resolved["avg_start"])
    policy = params.outcoupling
    randomized = policy.variant == "randomized"
    gamma_eff = params.loading.gamma_eff

    counters = {"loaded": 0, "evaporated": spill, "outcoupled": 0,
                "not_trapped": 0, "events": 0,
                "by_type": {"collision": 0, "load": 0, "outcouple": 0,
                            "resample": 0}}

    grid = resolved["grid"]
    t_end = params.t_end
    max_events = resolved["max_events"]
    t = 0.0
    gi = 0
    out_started = policy.variant == "off"
    pending_start = math.inf if out_started else policy.start_time
    next_resample = math.inf
    f_value = 0.0

    while True:
        while gi < grid.size and grid[gi] <= t:
            rec.record(gi, state, counters)
            gi += 1
        if not out_started and t >= pending_start:
            out_started = True
            pending_start = math.inf
            if randomized:
                f_value = rng.uniform(0.0, policy.f_max)
                counters["by_type"]["resample"] += 1
                next_resample = policy.start_time + policy.resample_interval
            rates.set_outcoupling_per_atom(policy.per_atom_rate(gamma_eff, f_value))
        while randomized and t >= next_resample:
            f_value = rng.uniform(0.0, policy.f_max)
            counters["by_type"]["resample"] += 1
            next_resample += policy.resample_interval
            rates.set_outcoupling_per_atom(policy.per_atom_rate(gamma_eff, f_value))
        if t >= t_end and gi >= grid.size:
            break
        if counters["events"] >= max_events:
            while gi < grid.size:
                rec.record(gi, state, counters)
                gi += 1
            break
        horizon = t_end
        if gi < grid.size:
            horizon = min(horizon, grid[gi])
        horizon = min(horizon, pending_start, next_resample)

        event, dt = step(state, rates, rng, t, t_limit=horizon)
        if event is None:
            rec.accumulate(t, state, horizon - t)
            t = horizon
            continue
        # the pre-event state persisted for dt, but `state` was already
        # advanced inside step(); undo the event's contribution per shell
        rec.accumulate(t, state, dt)
        kind = event[0]
        counters["events"] += 1
        counters["by_type"][kind] += 1
        if kind == "collision":
            ch, evaporated = event[1], event[2]
            counters["evaporated"] += evaporated
            if rec.avg_start is not None:
                _avg_fixup_collision(rec, t, dt, ch, evaporated,
                                     resolved["m_max"])
        elif kind == "load":
            m, trapped = event[1], event[2]
            counters["loaded"] += 1
            if not trapped:
                counters["not_trapped"] += 1
            elif rec.avg_start is not None:
                _avg_fixup(rec, t, dt, m, +1)
        else:
            counters["outcoupled"] += 1
            if rec.avg_start is not None:
                _avg_fixup(rec, t, dt, 0, -1)
        t += dt
        if params.validate_every and counters["events"] % params.validate_every == 0:
            state.validate()
            err = rates.consistency_error()
            if err > 1e-6:
                raise AssertionError("rate table inconsistent by %g" % err)

    return _build_trajectory(rec, state, counters, initial_atoms, replica)


def _avg_fixup(rec, t, dt, m, change):
    """Remove a single event's post-hoc contribution from the time average."""
    lo = max(t, rec.avg_start)
    w = t + dt - lo
    if w > 0.0:
        rec.avg_counts[m] -= change * w


def _avg_fixup_collision(rec, t, dt, ch, evaporated, m_max):
    deltas = {}
    for m, d in ((ch.m1, -1), (ch.m2, -1), (ch.m3, 1), (ch.m4, 1)):
        deltas[m] = deltas.get(m, 0) + d
    if evaporated:
        for m in (ch.m3, ch.m4):
            if m > m_max:
                deltas[m] -= 1
    for m, d in deltas.items():
        if d:
            _avg_fixup(rec, t, dt, m, d)


def _run_fast(params, replica, resolved):
    from . import fastkmc

    return fastkmc.run_trajectory(params, replica, resolved)


def run_replica(params, replica):
    """One trajectory with the stream derived from (seed, replica)."""
    resolved = _resolve(params)
    if params.engine == "reference":
        return _run_reference(params, replica, resolved)
    return _run_fast(params, replica, resolved)


def run(params):
    """Single trajectory (replica 0); deterministic for a fixed seed."""
    return run_replica(params, 0)


def _aggregate(trajectories, grid):
    mean = {}
    stderr = {}
    for key in OBSERVABLE_KEYS:
        data = np.stack([getattr(tr, key).astype(np.float64) for tr in trajectories])
        mean[key] = data.mean(axis=0)
        if data.shape[0] > 1:
            stderr[key] = data.std(axis=0, ddof=1) / math.sqrt(data.shape[0])
        else:
            stderr[key] = np.full(data.shape[1], np.nan)
    return EnsembleResult(times=grid.copy(), mean=mean, stderr=stderr,
                          trajectories=trajectories)


def ensemble(params):
    """Independent replicas with per-replica streams, averaged on the grid.

    With workers > 0 the replicas run in a process pool; the aggregation is
    collected in replica order, so the result is identical to a sequential
    run.
    """
    resolved = _resolve(params)
    reps = range(params.realizations)
    if params.workers and params.workers > 0 and params.realizations > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=params.workers) as pool:
            trajectories = list(pool.map(run_replica, [params] * params.realizations,
                                         reps))
    else:
        trajectories = [run_replica(params, r) for r in reps]
    return _aggregate(trajectories, resolved["grid"])
