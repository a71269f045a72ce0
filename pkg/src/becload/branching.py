"""Order-by-order outcome probabilities for one cycle of optical pumping.

A single active atom is pumped between a reservoir level ``r`` and an
excited level ``e``; from ``e`` it either falls back on the fast line
(amplitude decay rate ``gamma_er``) or is deposited into a trapped level
``g`` by emitting on the slow line (rate ``gamma_eg``).  The slow photon
can in turn be reabsorbed by an atom that is already trapped, which is how
reabsorption heating enters at second order.  This module expands the
probabilities of the possible outcomes of one cycle in powers of the
slow/fast branching ratio and of the trap occupations, on a reduced
one-dimensional model: equal trap frequencies for ``e`` and ``g``,
motional coupling through one-dimensional Franck-Condon factors, and
photon emission directions averaged over the two axis directions.

The catalogue produced by :func:`compute_order_terms` contains

``A0``
    zeroth-order weight of the fast branch; the normalization anchor,
    exactly 1.
``A1a``
    probability that the pumped atom is deposited into the trap and its
    photon escapes unabsorbed (useful loading).
``A1b``
    first-order renormalization of the fast branch, ``-w/gamma_er`` with
    ``w`` the occupation-enhanced slow decay rate.  Changes no trap
    populations.
``A2a_neutral`` / ``A2a_bad`` / ``A2a_good`` / ``A2a_cross``
    probability that the deposit's photon is reabsorbed by a trapped
    atom, classified by the net effect on the lowest trap level: neutral
    leaves every occupation unchanged (the active atom lands exactly on
    the absorber's level), bad effectively promotes a lowest-level atom,
    good effectively transfers an excited-level atom into the lowest
    level, and cross shuffles population between two excited levels.
``A2b``
    second-order fast-branch renormalization, ``+(w/gamma_er)**2``.
    Changes no trap populations.
``residual``
    whatever the listed terms leave over; equals
    ``-(w/gamma_er)**3 / (1 + w/gamma_er)``, i.e. third order in the
    expansion parameter.

The terms always sum to one.  ``A2a_bad`` scales as the branching ratio
squared times the lowest-level occupation, which is the scaling law
:func:`scaling_report` verifies by fitting exponents over a grid.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_sylvester
from scipy.special import eval_genlaguerre

__all__ = [
    "ConvergenceError",
    "LambdaSystemSpec",
    "ReducedLambdaModel",
    "ScalingFit",
    "POPULATION_NEUTRAL_TERMS",
    "franck_condon",
    "build_alpha",
    "unitarity_defect",
    "suggested_level_count",
    "decay_rate_into_trap",
    "transfer_kernel",
    "classify_reabsorption",
    "a2a_time_kernel",
    "compute_order_terms",
    "verify_convergence",
    "scaling_report",
]

#: Catalogue entries that change no trap-level occupations.  The first three
#: are normalization terms that never move an atom between trap levels; the
#: neutral reabsorption bucket exchanges the absorber for the active atom on
#: the same level, so every occupation number is preserved.
POPULATION_NEUTRAL_TERMS = frozenset({"A0", "A1b", "A2b", "A2a_neutral"})


class ConvergenceError(RuntimeError):
    """Raised when the retained trap-level count is too small to trust."""


def franck_condon(l, m, eta):
    """Motional overlap ``<l| exp(i*eta*(a + a^dag)) |m>`` of one recoil kick.

    Evaluated in closed form,
    ``exp(-eta**2/2) * (i*eta)**|l-m| * sqrt(min!/max!) * L_min^{(|l-m|)}(eta**2)``,
    with ``L`` the generalized Laguerre polynomial.  ``eta`` is the
    Lamb-Dicke parameter; its sign encodes the emission direction along the
    axis.  Returns a complex amplitude.
    """
    if l < 0 or m < 0:
        raise ValueError("oscillator levels must be non-negative")
    d = abs(l - m)
    lo, hi = min(l, m), max(l, m)
    x = eta * eta
    mag = math.exp(-0.5 * x + 0.5 * (math.lgamma(lo + 1) - math.lgamma(hi + 1)))
    return mag * (1j * eta) ** d * float(eval_genlaguerre(lo, d, x))


@lru_cache(maxsize=32)
def _fc_matrix(n, eta):
    """Matrix of franck_condon(a, b, eta) for a, b < n (cached, read-only)."""
    out = np.empty((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            out[a, b] = franck_condon(a, b, eta)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _alpha_tensor(n, eta):
    plus = _fc_matrix(n, eta)
    minus = _fc_matrix(n, -eta)
    alpha = 0.5 * (
        np.einsum("lm,qp->lmpq", plus, plus.conj())
        + np.einsum("lm,qp->lmpq", minus, minus.conj())
    )
    alpha.setflags(write=False)
    return alpha


@lru_cache(maxsize=32)
def _fc_abs2(n, eta):
    """D[l, m] = |franck_condon(l, m, eta)|**2, the direction-averaged diagonal."""
    d = np.abs(_fc_matrix(n, eta)) ** 2
    d.setflags(write=False)
    return d


def build_alpha(model):
    """Direction-averaged coupling tensor ``alpha[l, m, m', l']``.

    ``alpha[l, m, m', l'] = (eta_lm(+k) eta*_l'm'(+k) + eta_lm(-k) eta*_l'm'(-k)) / 2``
    where ``eta_lm(+/-k)`` are the Franck-Condon amplitudes for the two
    emission directions.  The tensor is Hermitian under exchanging the
    paired index groups and its diagonal ``alpha[l, m, m, l]`` is real in
    ``[0, 1]``.  Entries whose two level changes have opposite parity
    vanish by the direction average.  Cached per ``(m_g, eta)``.
    """
    return _alpha_tensor(model.m_g, float(model.eta))


def unitarity_defect(l, eta, m_g):
    """``|1 - sum_m |eta_lm|**2|`` over the retained levels.

    The recoil kick is unitary, so the defect measures pure truncation
    error; it drops below 1e-8 once ``m_g >= l + 10*(1 + eta**2)``.
    """
    d = _fc_abs2(int(m_g), float(eta))
    return abs(1.0 - float(d[l].sum()))


def suggested_level_count(initial_level, eta):
    """Smallest retained-level count meeting the unitarity rule of thumb."""
    return int(math.ceil(initial_level + 10.0 * (1.0 + eta * eta))) + 1


@dataclass(frozen=True)
class LambdaSystemSpec:
    """Rates and drive of the three-level pumping cycle.

    gamma_er is the fast-line amplitude decay rate, gamma_eg the slow-line
    one; their ratio is the small parameter of the expansion.  rabi and
    detuning describe the coherent drive of the reservoir-to-excited
    transition, omega_trap the common trap frequency, and eta the
    Lamb-Dicke parameter of the slow line.
    """

    gamma_er: float
    gamma_eg: float
    rabi: float = 0.0
    detuning: float = 0.0
    omega_trap: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if self.gamma_er <= 0:
            raise ValueError("gamma_er must be positive")
        if self.gamma_eg < 0:
            raise ValueError("gamma_eg must be non-negative")
        if self.rabi < 0:
            raise ValueError("rabi must be non-negative")
        if self.omega_trap <= 0:
            raise ValueError("omega_trap must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")

    @property
    def branching_ratio(self):
        """gamma_eg / gamma_er, the expansion parameter."""
        return self.gamma_eg / self.gamma_er


@dataclass(frozen=True)
class ReducedLambdaModel:
    """Reduced motional model: retained levels, bath occupations, start state.

    m_g trap levels are retained for both electronic states.  occupations
    lists the background atom numbers per trap level (shorter tuples are
    zero-padded).  The active atom starts at motional level initial_level
    in electronic state initial_state ("e", or "r" which requires a
    coherent drive).  reabsorption_strength is the dimensionless
    single-absorber probability scale for the emitted photon to be
    recaptured instead of escaping, set by the photon escape geometry that
    the reduced model does not resolve.  expansion_order caps the
    catalogue at first or second order.
    """

    m_g: int
    eta: float
    occupations: tuple = ()
    initial_level: int = 0
    initial_state: str = "e"
    reabsorption_strength: float = 0.01
    expansion_order: int = 2

    def __post_init__(self):
        if self.m_g < 1:
            raise ValueError("at least one trap level must be retained")
        if not 0 <= self.initial_level < self.m_g:
            raise ValueError("initial_level must lie within the retained levels")
        if self.initial_state not in ("e", "r"):
            raise ValueError("initial_state must be 'e' or 'r'")
        if len(self.occupations) > self.m_g:
            raise ValueError("more occupations than retained levels")
        if any(n < 0 for n in self.occupations):
            raise ValueError("occupations must be non-negative")
        if self.reabsorption_strength < 0:
            raise ValueError("reabsorption_strength must be non-negative")
        if self.expansion_order not in (1, 2):
            raise ValueError("expansion_order must be 1 or 2")

    @classmethod
    def for_system(cls, spec, m_g, occupations=(), **kwargs):
        """Build a model whose Lamb-Dicke parameter matches ``spec.eta``."""
        return cls(m_g=m_g, eta=spec.eta, occupations=tuple(occupations), **kwargs)

    def occupation_vector(self):
        """Background occupations padded to length m_g, as floats."""
        out = np.zeros(self.m_g)
        out[: len(self.occupations)] = self.occupations
        return out


def decay_rate_into_trap(model, spec):
    """Occupation-enhanced slow-line decay rate ``w`` of the active atom.

    ``w = gamma_eg * sum_m (N_m + 1) |eta_{l m}|**2`` over the retained
    levels, with ``l`` the active atom's motional level.  The ``+1`` is
    spontaneous emission; the ``N_m`` part is bosonic stimulation into
    occupied levels.
    """
    d = _fc_abs2(model.m_g, float(model.eta))
    occ = model.occupation_vector()
    return spec.gamma_eg * float((occ + 1.0) @ d[model.initial_level])


def transfer_kernel(model):
    """Landing distribution of one reabsorption event, row-stochastic.

    ``T[mb, m']`` is the probability that, given the photon emitted by the
    active atom (starting at level ``l``) is reabsorbed by a background
    atom sitting at level ``mb``, the active atom has landed at level
    ``m'``.  Energy conservation of the exchanged photon ties the
    absorber's excitation level to ``j = mb + l - m'``; the joint weight is
    the product of the two direction-averaged Franck-Condon probabilities.
    The landing weights are deliberately not Bose-stimulated: stimulation
    of the landing level is a higher-order effect in this bookkeeping.
    Rows are normalized to one (rows with no allowed final state, possible
    only at isolated Lamb-Dicke values, are left zero).
    """
    n = model.m_g
    l = model.initial_level
    d = _fc_abs2(n, float(model.eta))
    t = np.zeros((n, n))
    for mb in range(n):
        for mp in range(n):
            j = mb + l - mp
            if 0 <= j < n:
                t[mb, mp] = d[l, mp] * d[j, mb]
        s = t[mb].sum()
        if s > 0.0:
            t[mb] /= s
    return t


def classify_reabsorption(mb, m_prime):
    """Bucket of one reabsorption event: absorber level -> landing level.

    neutral: landing level equals the absorber's level, every occupation
    unchanged.  bad: a lowest-level atom is effectively promoted.  good:
    an excited-level atom is effectively moved into the lowest level.
    cross: population shuffled between two distinct excited levels.
    """
    if m_prime == mb:
        return "neutral"
    if mb == 0:
        return "bad"
    if m_prime == 0:
        return "good"
    return "cross"


def a2a_time_kernel(model, spec, tau):
    """Memory kernel of the reabsorption term versus insertion separation.

    The nested second-order integrand depends on the separation ``tau``
    between the emission and reabsorption insertions only through the
    survival of the intermediate excited state against all of its decay
    channels, ``exp(-(gamma_er + w) * tau)``.  The coherent drive
    re-excites only through the reservoir, which resets the photon record,
    so it does not slow this decay.  Decays at least as fast as
    ``exp(-gamma_er * tau)``.
    """
    w = decay_rate_into_trap(model, spec)
    return np.exp(-(spec.gamma_er + w) * np.asarray(tau, dtype=float))


def _integrated_state_chain(spec, w, initial_state):
    """Time-integrated density matrix of the driven two-level {r, e} system,
    order by order in the slow-line damping.

    The no-jump evolution is ``rho' = A rho + rho A^dag`` with ``A`` the
    drift of the coherent drive plus half the fast decay; the slow decay
    enters as the perturbation ``-w/2`` on the excited level.  Integrating
    from t=0 to infinity turns each order of the expansion into a
    Sylvester equation: ``A Q0 + Q0 A^dag = -rho(0)`` and
    ``A Q_{k+1} + Q_{k+1} A^dag = -(W Q_k + Q_k W^dag)``.
    Basis order is (r, e).
    """
    drift = np.array(
        [[0.0, -0.5j * spec.rabi], [-0.5j * spec.rabi, 1j * spec.detuning]],
        dtype=complex,
    )
    drift[1, 1] -= 0.5 * spec.gamma_er
    pert = np.array([[0.0, 0.0], [0.0, -0.5 * w]], dtype=complex)
    rho0 = np.zeros((2, 2), dtype=complex)
    rho0[(0, 0) if initial_state == "r" else (1, 1)] = 1.0
    adj = drift.conj().T
    q0 = solve_sylvester(drift, adj, -rho0)
    q1 = solve_sylvester(drift, adj, -(pert @ q0 + q0 @ pert.conj().T))
    q2 = solve_sylvester(drift, adj, -(pert @ q1 + q1 @ pert.conj().T))
    return q0, q1, q2


def compute_order_terms(model, spec, check_convergence=False):
    """Catalogue of outcome probabilities of one pumping cycle.

    Returns a dict with keys A0, A1a, A1b, A2a_neutral, A2a_bad, A2a_good,
    A2a_cross, A2b and residual (see the module docstring for what each
    means).  The entries always sum to one.

    The fast-branch terms are the time-integrated fast-line flux
    ``gamma_er * integral rho_ee dt`` order by order in the slow-line
    damping; for an undriven start in ``e`` they reduce to the closed
    forms 1, ``-w/gamma_er`` and ``+(w/gamma_er)**2``.  The total deposit
    probability is the exact two-channel competition
    ``w / (gamma_er + w)``, of which the reabsorption matrix
    ``A2a[mb, m'] = P_deposit * strength * (gamma_eg/gamma_er) * N_mb * T[mb, m']``
    is carved out and bucketed; A1a is the remainder, so deposits are
    never double counted.

    With check_convergence=True the catalogue is recomputed with five more
    retained levels and a shift above one percent in any entry raises
    ConvergenceError.
    """
    if model.initial_state == "r" and spec.rabi == 0.0:
        raise ValueError("starting from the reservoir level requires a drive (rabi > 0)")
    w = decay_rate_into_trap(model, spec)
    eps_t = w / spec.gamma_er

    if spec.rabi == 0.0:
        a0_term = 1.0
        a1b = -eps_t
        a2b = eps_t * eps_t
    else:
        q0, q1, q2 = _integrated_state_chain(spec, w, model.initial_state)
        a0_term = spec.gamma_er * q0[1, 1].real
        a1b = spec.gamma_er * q1[1, 1].real
        a2b = spec.gamma_er * q2[1, 1].real
    if model.expansion_order < 2:
        a2b = 0.0

    p_deposit = eps_t / (1.0 + eps_t)

    if model.expansion_order >= 2:
        occ = model.occupation_vector()
        p_abs = model.reabsorption_strength * spec.branching_ratio * occ
        a2a = p_deposit * p_abs[:, None] * transfer_kernel(model)
        idx = np.arange(model.m_g)
        neutral = float(a2a[idx, idx].sum())
        bad = float(a2a[0, 1:].sum())
        good = float(a2a[1:, 0].sum())
        total = float(a2a.sum())
        cross = total - neutral - bad - good
    else:
        neutral = bad = good = cross = total = 0.0

    a1a = p_deposit - total
    terms = {
        "A0": a0_term,
        "A1a": a1a,
        "A1b": a1b,
        "A2a_neutral": neutral,
        "A2a_bad": bad,
        "A2a_good": good,
        "A2a_cross": max(cross, 0.0),
        "A2b": a2b,
    }
    terms["residual"] = 1.0 - (a0_term + a1a + a1b + total + a2b)

    if check_convergence:
        verify_convergence(model, spec)
    return terms


def verify_convergence(model, spec, extra_levels=5, rtol=0.01):
    """Raise ConvergenceError if adding levels shifts any term by > rtol.

    The time integrals are evaluated in closed form over an infinite
    horizon, so the retained-level count is the only truncation knob.
    """
    base = compute_order_terms(model, spec)
    wider = compute_order_terms(replace(model, m_g=model.m_g + extra_levels), spec)
    for key, value in base.items():
        ref = wider[key]
        if max(abs(value), abs(ref)) < 1e-12:
            continue
        shift = abs(value - ref) / max(abs(ref), 1e-12)
        if shift > rtol:
            raise ConvergenceError(
                f"{key} shifts by {shift:.2%} when the retained levels go "
                f"from {model.m_g} to {model.m_g + extra_levels}"
            )


def _ols_loglog(x1, x2, y):
    """OLS of y on [1, x1, x2]; returns coefficients and standard errors."""
    x = np.column_stack([np.ones_like(x1), x1, x2])
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    dof = max(len(y) - x.shape[1], 1)
    cov = (resid @ resid / dof) * np.linalg.inv(x.T @ x)
    return beta, np.sqrt(np.diag(cov))


@dataclass(frozen=True)
class ScalingFit:
    """Fitted scaling exponents of the reabsorption and deposit terms.

    a2a_bad is fitted as ``const * ratio**a * occupancy**b`` over the grid
    points inside the expansion's validity region (ratio * occupancy <=
    validity_limit); points outside are flagged and excluded.  The A1a
    exponent in the branching ratio is fitted on the same points.
    Standard errors are the OLS ones; the evaluation itself is
    deterministic, so they measure only curvature of the true law.
    """

    a2a_bad_ratio_exponent: float
    a2a_bad_ratio_stderr: float
    a2a_bad_occupancy_exponent: float
    a2a_bad_occupancy_stderr: float
    a1a_ratio_exponent: float
    a1a_ratio_stderr: float
    intercept: float
    n_points_used: int
    validity_limit: float
    flagged: tuple
    grid: tuple

    def as_dict(self):
        fit = {
            "a2a_bad_ratio_exponent": self.a2a_bad_ratio_exponent,
            "a2a_bad_ratio_stderr": self.a2a_bad_ratio_stderr,
            "a2a_bad_occupancy_exponent": self.a2a_bad_occupancy_exponent,
            "a2a_bad_occupancy_stderr": self.a2a_bad_occupancy_stderr,
            "a1a_ratio_exponent": self.a1a_ratio_exponent,
            "a1a_ratio_stderr": self.a1a_ratio_stderr,
            "intercept": self.intercept,
            "n_points_used": self.n_points_used,
            "validity_limit": self.validity_limit,
        }
        return {
            "fit": fit,
            "flagged": [list(p) for p in self.flagged],
            "grid": [dict(g) for g in self.grid],
        }


def scaling_report(ratios, occupancies, eta=0.3, initial_level=2, m_g=None,
                   reabsorption_strength=0.01, validity_limit=0.5,
                   check_convergence=True):
    """Fit the scaling exponents of A2a_bad and A1a over a parameter grid.

    For every branching ratio in ``ratios`` and lowest-level occupancy in
    ``occupancies`` the catalogue is evaluated with all background atoms
    in the lowest level, and ``log A2a_bad`` is regressed jointly on the
    log ratio and log occupancy.  Points with ratio*occupancy above
    validity_limit lie outside the expansion's stated validity; they are
    flagged in the report and excluded from the fit.  Expected exponents
    are 2 in the ratio and 1 in the occupancy, and 1 for A1a in the ratio.
    """
    ratios = [float(r) for r in ratios]
    occupancies = [float(n) for n in occupancies]
    if m_g is None:
        m_g = suggested_level_count(initial_level, eta)

    rows = []
    flagged = []
    for ratio in ratios:
        spec = LambdaSystemSpec(gamma_er=1.0, gamma_eg=ratio, eta=eta)
        for n0 in occupancies:
            model = ReducedLambdaModel(
                m_g=m_g, eta=eta, occupations=(n0,),
                initial_level=initial_level,
                reabsorption_strength=reabsorption_strength,
            )
            terms = compute_order_terms(model, spec)
            ok = ratio * n0 <= validity_limit
            if not ok:
                flagged.append((ratio, n0))
            rows.append(
                {
                    "branching_ratio": ratio,
                    "occupancy": n0,
                    "within_validity": ok,
                    "terms": terms,
                }
            )

    if check_convergence:
        corner = ReducedLambdaModel(
            m_g=m_g, eta=eta, occupations=(max(occupancies),),
            initial_level=initial_level,
            reabsorption_strength=reabsorption_strength,
        )
        verify_convergence(corner, LambdaSystemSpec(1.0, max(ratios), eta=eta))

    used = [r for r in rows if r["within_validity"]]
    if len(used) < 4:
        raise ValueError("need at least four grid points inside the validity region")
    log_r = np.log([r["branching_ratio"] for r in used])
    log_n = np.log([r["occupancy"] for r in used])
    beta_bad, se_bad = _ols_loglog(log_r, log_n, np.log([r["terms"]["A2a_bad"] for r in used]))
    beta_dep, se_dep = _ols_loglog(log_r, log_n, np.log([r["terms"]["A1a"] for r in used]))

    return ScalingFit(
        a2a_bad_ratio_exponent=float(beta_bad[1]),
        a2a_bad_ratio_stderr=float(se_bad[1]),
        a2a_bad_occupancy_exponent=float(beta_bad[2]),
        a2a_bad_occupancy_stderr=float(se_bad[2]),
        a1a_ratio_exponent=float(beta_dep[1]),
        a1a_ratio_stderr=float(se_dep[1]),
        intercept=float(beta_bad[0]),
        n_points_used=len(used),
        validity_limit=float(validity_limit),
        flagged=tuple(flagged),
        grid=tuple(rows),
    )
