"""Derived quantities computed from sampled trajectories.

This module turns raw trajectory arrays (shell totals, condensate
occupation, cumulative loss counters) into the figures of merit used by
the experiment drivers: condensate fraction and energy per particle,
condensation onset time, outcoupling threshold scans, and stabilization
statistics over a holding window.

Everything is a pure function over immutable data except
``threshold_scan``, which launches new simulations through the engine.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .engine import ensemble

__all__ = [
    "OnsetCriterion",
    "StabilizationStats",
    "ThresholdScanResult",
    "energy_per_particle",
    "onset_time",
    "locate_threshold",
    "threshold_scan",
    "stabilization_stats",
    "monotone_non_increasing",
]


def energy_per_particle(counts):
    """Mean energy per trapped atom in units of the shell spacing.

    Accepts a ShellOccupancy or a plain array of per-shell occupation
    numbers; shell m contributes m + 3/2 per atom (isotropic zero-point
    included). An empty trap has no defined energy per particle and
    yields NaN rather than raising.
    """
    arr = np.asarray(getattr(counts, "counts", counts), dtype=np.int64)
    n = int(arr.sum())
    if n == 0:
        return float("nan")
    shells = np.arange(arr.size, dtype=np.float64)
    return float(np.dot(arr, shells + 1.5) / n)


@dataclass(frozen=True)
class OnsetCriterion:
    """Operational definition of "the condensate has formed".

    n_abs: minimum number of condensed atoms.
    f_rel: minimum condensate fraction N0/N.
    sustained: require both conditions to hold at every later sample,
        so a transient spike does not count as onset.
    """

    n_abs: int = 20
    f_rel: float = 0.05
    sustained: bool = True

    def __post_init__(self):
        if self.n_abs < 1:
            raise ValueError("n_abs must be at least 1")
        if not 0.0 < self.f_rel < 1.0:
            raise ValueError("f_rel must lie strictly between 0 and 1")


def onset_time(times, n0, n_total, criterion=None):
    """Earliest sampled time at which the onset criterion is met.

    Works on ensemble-mean arrays as well as single trajectories. The
    fraction test is evaluated as ``n0 >= f_rel * n_total`` so that rows
    with an empty trap are handled without division. Returns None when
    the criterion is never (or, with sustained=True, never durably)
    satisfied.
    """
    crit = criterion if criterion is not None else OnsetCriterion()
    t = np.asarray(times, dtype=np.float64)
    c0 = np.asarray(n0, dtype=np.float64)
    ct = np.asarray(n_total, dtype=np.float64)
    if not (t.shape == c0.shape == ct.shape):
        raise ValueError("times, n0 and n_total must have matching shapes")
    ok = (c0 >= crit.n_abs) & (c0 >= crit.f_rel * ct)
    if not ok.any():
        return None
    if crit.sustained:
        bad = np.nonzero(~ok)[0]
        idx = int(bad[-1]) + 1 if bad.size else 0
        if idx >= t.size:
            return None
        return float(t[idx])
    return float(t[int(np.argmax(ok))])


@dataclass(frozen=True)
class ThresholdScanResult:
    """Outcome of an outcoupling threshold scan.

    xi / final_n0 hold the scan grid and the ensemble-mean condensate
    occupation at the horizon. The bracket is the pair of adjacent grid
    values straddling the retention level (an end is None when the
    crossing falls outside the grid), and xi0 interpolates the crossing
    inside the bracket. reference_n0 is the pre-outcoupling condensate
    occupation the retention level is measured against.
    """

    xi: tuple
    final_n0: tuple
    reference_n0: float
    retention_level: float
    bracket: tuple
    xi0: float
    open_ended: bool


def locate_threshold(xi_values, final_n0, level):
    """Bracket where final condensate occupation crosses a level.

    Expects retention to decrease as the outcoupling ratio grows; with
    noisy scans the outermost grid point still at or above the level is
    used as the lower edge. Returns (bracket, xi0, open_ended) where
    xi0 is the linear interpolation of the crossing, or None when the
    grid lies entirely on one side of the level.
    """
    xi = np.asarray(xi_values, dtype=np.float64)
    fin = np.asarray(final_n0, dtype=np.float64)
    if xi.size != fin.size or xi.size < 2:
        raise ValueError("need at least two scan points with matching finals")
    if np.any(np.diff(xi) <= 0):
        raise ValueError("scan grid must be strictly increasing")
    above = np.nonzero(fin >= level)[0]
    if above.size == 0:
        return (None, float(xi[0])), None, True
    i = int(above[-1])
    if i == xi.size - 1:
        return (float(xi[-1]), None), None, True
    x_lo, x_hi = float(xi[i]), float(xi[i + 1])
    f_lo, f_hi = float(fin[i]), float(fin[i + 1])
    if f_lo == f_hi:
        xi0 = x_lo
    else:
        xi0 = x_lo + (x_hi - x_lo) * (f_lo - level) / (f_lo - f_hi)
    return (x_lo, x_hi), float(xi0), False


def threshold_scan(base, xi_values, retention_frac=0.5, reference_n0=None):
    """Scan the outcoupling ratio and bracket the survival threshold.

    For each value of xi = gamma_out / gamma_eff, reruns the ensemble
    described by ``base`` with a constant outcoupling policy of that
    strength (the growth stage before ``start_time`` is identical across
    the scan because the outcoupling channel is silent until then) and
    records the ensemble-mean condensate occupation at the end of the
    horizon.

    The retention level defaults to ``retention_frac`` times the
    pre-outcoupling condensate occupation, which is read off the sample
    grid at the last point not later than the outcoupling start time.
    A finer grid over the returned bracket refines the estimate.
    """
    xi = [float(x) for x in xi_values]
    if len(xi) < 2:
        raise ValueError("scan grid needs at least two points")
    if any(b <= a for a, b in zip(xi, xi[1:])):
        raise ValueError("scan grid must be strictly increasing")
    start = base.outcoupling.start_time
    finals = []
    ref = reference_n0
    for x in xi:
        policy = replace(base.outcoupling, variant="constant",
                         gamma_out=None, xi=x)
        res = ensemble(replace(base, outcoupling=policy))
        finals.append(float(res.mean["n0"][-1]))
        if ref is None:
            pre = np.nonzero(res.times <= start)[0]
            if pre.size == 0:
                raise ValueError("sample grid has no point before the "
                                 "outcoupling start time")
            ref = float(res.mean["n0"][int(pre[-1])])
    level = retention_frac * ref
    bracket, xi0, open_ended = locate_threshold(xi, finals, level)
    if open_ended:
        side = "below" if bracket[0] is None else "above"
        warnings.warn("threshold scan did not bracket the retention level; "
                      "the crossing lies %s the grid" % side)
    return ThresholdScanResult(
        xi=tuple(xi),
        final_n0=tuple(finals),
        reference_n0=ref,
        retention_level=level,
        bracket=bracket,
        xi0=xi0,
        open_ended=open_ended,
    )


@dataclass(frozen=True)
class StabilizationStats:
    """Time-weighted condensate statistics over a holding window."""

    window: tuple
    mean_n0: float
    std_n0: float
    extracted_atoms: int
    extraction_rate: float

    @property
    def relative_std(self):
        return self.std_n0 / self.mean_n0 if self.mean_n0 else float("inf")


def stabilization_stats(trajectory, window):
    """Time-weighted mean and spread of N0 over a window.

    The trajectory samples are treated as piecewise constant between
    grid points, so each sample is weighted by its dwell time inside the
    window; a sample sitting exactly on the window end carries no
    weight. Extracted atoms are counted from the outcoupling counter
    difference across the window, and the extraction rate divides by the
    requested window length.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ValueError("window must have positive length")
    times = np.asarray(trajectory.times, dtype=np.float64)
    if t0 < times[0] or t1 > times[-1]:
        raise ValueError("window must lie within the sampled time span")
    idx = np.nonzero((times >= t0) & (times <= t1))[0]
    if idx.size < 2:
        raise ValueError("window too narrow for the sample grid")
    tw = times[idx]
    values = np.asarray(trajectory.n0, dtype=np.float64)[idx]
    edges = np.append(tw[1:], t1)
    weights = edges - tw
    total = weights.sum()
    mean = float(np.dot(weights, values) / total)
    var = float(np.dot(weights, (values - mean) ** 2) / total)
    extracted = int(trajectory.cum_outcoupled[idx[-1]]
                    - trajectory.cum_outcoupled[idx[0]])
    return StabilizationStats(
        window=(t0, t1),
        mean_n0=mean,
        std_n0=float(np.sqrt(var)),
        extracted_atoms=extracted,
        extraction_rate=extracted / (t1 - t0),
    )


def monotone_non_increasing(values, stderr=None, sigma=2.0):
    """Check a sequence decreases, allowing noise of a few stderr.

    Each successive value may exceed its predecessor by at most sigma
    combined standard errors (exactly zero when stderr is omitted).
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return True
    if stderr is None:
        tol = np.zeros(v.size - 1)
    else:
        se = np.asarray(stderr, dtype=np.float64)
        tol = sigma * np.hypot(se[:-1], se[1:])
    return bool(np.all(np.diff(v) <= tol))
