"""Unit conventions.

Energies are kelvin (E/k_B), fields tesla, moments Bohr magnetons. Per-ion
susceptibilities are in mu_B / T. The only conversion factor between a moment
in a field and an energy lives here.
"""

from scipy import constants as _const

MU_B = _const.physical_constants["Bohr magneton"][0]  # J/T
K_B = _const.k  # J/K
MU_0 = _const.mu_0  # T m / A

#: Bohr magneton over Boltzmann constant, K/T (about 0.6717).
MU_B_OVER_K_B = MU_B / K_B
