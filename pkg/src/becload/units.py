"""Physical constants, trap/reservoir parameter types, and unit conversions.

Internally the simulator works in natural trap units: times in 1/omega_g,
energies in hbar*omega_g, rates in omega_g. The types here hold SI parameters
and provide the conversions plus a few derived quantities (collision unit
rate, effective loading rate, validity checks for the large-temperature
loading regime).
"""

import math
from dataclasses import dataclass

HBAR = 1.054571817e-34          # J s
K_B = 1.380649e-23              # J / K
ATOMIC_MASS = 1.66053906660e-27  # kg

CHROMIUM_52_MASS = 51.9961 * ATOMIC_MASS


def shell_degeneracy(m):
    """Number of degenerate 3D harmonic-oscillator states in energy shell m.

    g_m = (m+1)(m+2)/2, exact integer arithmetic.
    """
    if m < 0:
        raise ValueError("shell index must be non-negative, got %r" % (m,))
    return (m + 1) * (m + 2) // 2


def states_up_to(m):
    """Total number of oscillator states in shells 0..m inclusive.

    Closed form binomial(m+3, 3); useful as a cross-check on cumulative
    degeneracy sums and for sizing ergodic loading fluxes.
    """
    if m < 0:
        raise ValueError("shell index must be non-negative, got %r" % (m,))
    return (m + 1) * (m + 2) * (m + 3) // 6


@dataclass(frozen=True)
class TrapSpec:
    """Harmonic trap holding the ground-state atoms.

    omega_g: trap angular frequency (rad/s)
    m_max: highest bound shell index; shells above it are continuously emptied
    mass: atomic mass (kg)
    scattering_length: s-wave scattering length (m)
    virtual_extra: number of unbound shells kept above m_max so that
        collisions can promote atoms past the cutoff before they are removed
    """

    omega_g: float
    m_max: int
    mass: float
    scattering_length: float
    virtual_extra: int = 10

    def __post_init__(self):
        if self.omega_g <= 0:
            raise ValueError("omega_g must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.scattering_length < 0:
            raise ValueError("scattering_length must be non-negative")
        if self.m_max < 1:
            raise ValueError("m_max must be at least 1")
        if self.virtual_extra < 0:
            raise ValueError("virtual_extra must be non-negative")

    @property
    def total_shells(self):
        """Shell count including the virtual band: m = 0 .. m_max + virtual_extra."""
        return self.m_max + self.virtual_extra + 1

    @property
    def oscillator_length(self):
        """Ground-state oscillator length sqrt(hbar / (mass * omega_g)) in m."""
        return math.sqrt(HBAR / (self.mass * self.omega_g))


@dataclass(frozen=True)
class ReservoirSpec:
    """Thermal reservoir feeding the trap via optical pumping.

    gamma_eg: half spontaneous rate of the slow line (rad/s)
    n_ex: reservoir density (m^-3)
    N_ex: reservoir atom number
    T: temperature (K)
    omega_e: excited-state trap angular frequency (rad/s)
    omega_rec: recoil angular frequency (rad/s); only enters validity checks
    mass: atomic mass (kg), needed for the thermal de Broglie wavelength
    """

    gamma_eg: float
    n_ex: float
    N_ex: float
    T: float
    omega_e: float
    omega_rec: float = 0.0
    mass: float = CHROMIUM_52_MASS

    def phase_space_density(self):
        """n_ex * lambda(T)^3; a thermal reservoir has this well below 1."""
        return self.n_ex * thermal_de_broglie(self.mass, self.T) ** 3


@dataclass(frozen=True)
class NaturalUnits:
    """Conversions between SI and trap units (time 1/omega_g, energy hbar*omega_g)."""

    omega_g: float

    def time_to_si(self, t):
        return t / self.omega_g

    def time_from_si(self, t):
        return t * self.omega_g

    def rate_to_si(self, r):
        return r * self.omega_g

    def rate_from_si(self, r):
        return r / self.omega_g

    def energy_to_si(self, e):
        return e * HBAR * self.omega_g

    def energy_from_si(self, e):
        return e / (HBAR * self.omega_g)


def thermal_de_broglie(mass, T):
    """Thermal de Broglie wavelength sqrt(2 pi hbar^2 / (mass k_B T)) in m."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    return math.sqrt(2.0 * math.pi * HBAR * HBAR / (mass * K_B * T))


def collision_unit_rate(trap):
    """Two-body collision unit rate in units of omega_g.

    Dimensionless form (4/pi) * (a / l_osc)^2 with l_osc the oscillator
    length; multiply by omega_g (or use collision_unit_rate_si) for 1/s.
    """
    ratio = trap.scattering_length / trap.oscillator_length
    return (4.0 / math.pi) * ratio * ratio


def collision_unit_rate_si(trap):
    """Two-body collision unit rate in 1/s: 4 a^2 omega_g^2 mass / (pi hbar)."""
    a = trap.scattering_length
    return 4.0 * a * a * trap.omega_g ** 2 * trap.mass / (math.pi * HBAR)


def gamma_eff_from_reservoir(res, formula="excited-trap"):
    """Effective per-state loading rate in 1/s, derived from reservoir parameters.

    Two advisory variants are provided:
      "excited-trap":  2 * gamma_eg * N_ex * (hbar * omega_e / (k_B T))^3
      "phase-space":   2 * gamma_eg * 5.2 * n_ex * lambda(T)^3

    These are order-of-magnitude guides; simulations take gamma_eff as a
    direct input in omega_g units.
    """
    if res.T <= 0:
        raise ValueError("temperature must be positive")
    if formula == "excited-trap":
        if res.omega_e <= 0:
            raise ValueError("omega_e must be positive")
        x = HBAR * res.omega_e / (K_B * res.T)
        return 2.0 * res.gamma_eg * res.N_ex * x ** 3
    if formula == "phase-space":
        return 2.0 * res.gamma_eg * 5.2 * res.phase_space_density()
    raise ValueError("unknown formula %r; use 'excited-trap' or 'phase-space'" % (formula,))


def trap_depth_energy(trap, omega_rec=0.0):
    """Effective trap depth hbar*omega_g*m_max + hbar*omega_rec in J."""
    return HBAR * trap.omega_g * trap.m_max + HBAR * omega_rec


def reservoir_density_bound(trap, res):
    """Density scale phi * (mass * omega_g * m_eff / (2 pi hbar))^(3/2) in m^-3.

    m_eff = m_max + omega_rec/omega_g. The reservoir density should sit well
    above this bound for the pumping rate to be state-independent.
    """
    m_eff = trap.m_max + res.omega_rec / trap.omega_g
    scale = (trap.mass * trap.omega_g * m_eff / (2.0 * math.pi * HBAR)) ** 1.5
    return res.phase_space_density() * scale


@dataclass(frozen=True)
class ValidityCondition:
    """One inequality of the loading-regime check, with the compared values."""

    name: str
    lhs: float
    rhs: float
    passed: bool


@dataclass(frozen=True)
class ValidityReport:
    conditions: tuple

    @property
    def all_passed(self):
        return all(c.passed for c in self.conditions)

    def __iter__(self):
        return iter(self.conditions)


def check_large_temperature_regime(trap, res, ratio_threshold=10.0):
    """Check the assumptions behind the state-independent loading rate.

    Returns a report with three conditions (never raises; failures are
    advisory):
      excited-trap-frequency: omega_e < omega_g + 2*omega_rec/3
      temperature-above-depth: k_B T >= ratio_threshold * trap depth
      density-above-bound: n_ex >= ratio_threshold * reservoir_density_bound
    """
    lhs1 = res.omega_e
    rhs1 = trap.omega_g + 2.0 * res.omega_rec / 3.0
    cond1 = ValidityCondition("excited-trap-frequency", lhs1, rhs1, lhs1 < rhs1)

    lhs2 = K_B * res.T
    rhs2 = ratio_threshold * trap_depth_energy(trap, res.omega_rec)
    cond2 = ValidityCondition("temperature-above-depth", lhs2, rhs2, lhs2 >= rhs2)

    lhs3 = res.n_ex
    rhs3 = ratio_threshold * reservoir_density_bound(trap, res)
    cond3 = ValidityCondition("density-above-bound", lhs3, rhs3, lhs3 >= rhs3)

    return ValidityReport(conditions=(cond1, cond2, cond3))
