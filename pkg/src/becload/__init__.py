"""Stochastic kinetic simulation of continuous optical loading of a Bose-Einstein condensate.

Shell-resolved kinetic Monte Carlo of bosonic-enhanced pumping, ergodic
two-body collisions, evaporation above a trap cutoff, and condensate
outcoupling, plus a perturbative module quantifying photon-reabsorption
probabilities in a reduced three-level model.
"""

__version__ = "0.1.0"

from .units import (
    HBAR,
    K_B,
    ATOMIC_MASS,
    CHROMIUM_52_MASS,
    TrapSpec,
    ReservoirSpec,
    NaturalUnits,
    shell_degeneracy,
    states_up_to,
    collision_unit_rate,
    collision_unit_rate_si,
    gamma_eff_from_reservoir,
    check_large_temperature_regime,
)
