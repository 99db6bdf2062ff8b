"""Physical constants in the unit system used throughout the package.

Energies are E/h in MHz, fields in Gauss, temperatures in Kelvin.
"""

MU_B_OVER_H = 1.3996245  # MHz / G
KB_OVER_H = 20836.619  # MHz / K
GAMMA_E = 2.8025  # MHz / G, free-electron gyromagnetic ratio

PLANCK = 6.62607015e-34  # J s
HBAR = PLANCK / (2.0 * 3.141592653589793)
MU_0 = 1.25663706212e-6  # T m / A

TESLA_TO_GAUSS = 1.0e4
