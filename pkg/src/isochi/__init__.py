"""Isothermal, adiabatic and isolated susceptibilities of dilute hyperfine spin systems.

The package is layered bottom-up:

- :mod:`isochi.spinmodel` -- species definitions and closed-form 2x2 block physics
- :mod:`isochi.ensemble` -- populations and canonical thermodynamics
- :mod:`isochi.response` -- chi_T, chi_S, chi_I (two routes), finite probe amplitude
- :mod:`isochi.material` -- apical + basal spin-ice sample with a strain-gap mixture
- :mod:`isochi.fitting` -- peaks, hyperfine constant, gap weights, Curie law, populations
- :mod:`isochi.io` and :mod:`isochi.cli` -- config files, CSV spectra, command line
"""

from isochi.errors import (
    ConfigError,
    DegeneratePointError,
    FitError,
    IsochiError,
    SpectrumFormatError,
    ThermodynamicsError,
)
from isochi.units import MU_B_OVER_K_B
from isochi.spinmodel import (
    LevelPoint,
    SpinSpecies,
    StateLabel,
    block_bias,
    block_energies,
    block_moment_and_slope,
    concurrence,
    level_crossings,
    level_point,
)
from isochi.ensemble import (
    Populations,
    ThermoPoint,
    boltzmann_populations,
    custom_populations,
    frozen_populations,
    thermo,
)
from isochi.response import (
    ResponseCurve,
    chi_adiabatic,
    chi_isolated,
    chi_isolated_equilibrium,
    chi_isolated_finite_amplitude,
    chi_isolated_kubo,
    chi_isothermal,
    plateau_model,
)
from isochi.material import (
    DeltaDistribution,
    Material,
    from_si,
    spin_ice_material,
    to_si,
    total_spectrum,
)
from isochi.fitting import (
    FitResult,
    Peak,
    PeakSet,
    PopulationInference,
    detect_peaks,
    fit_curie,
    fit_hyperfine_A,
    fit_weights,
    infer_populations,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegeneratePointError",
    "DeltaDistribution",
    "FitError",
    "FitResult",
    "IsochiError",
    "LevelPoint",
    "MU_B_OVER_K_B",
    "Material",
    "Peak",
    "PeakSet",
    "PopulationInference",
    "Populations",
    "ResponseCurve",
    "SpectrumFormatError",
    "SpinSpecies",
    "StateLabel",
    "ThermoPoint",
    "ThermodynamicsError",
    "block_bias",
    "block_energies",
    "block_moment_and_slope",
    "boltzmann_populations",
    "chi_adiabatic",
    "chi_isolated",
    "chi_isolated_equilibrium",
    "chi_isolated_finite_amplitude",
    "chi_isolated_kubo",
    "chi_isothermal",
    "concurrence",
    "custom_populations",
    "detect_peaks",
    "fit_curie",
    "fit_hyperfine_A",
    "fit_weights",
    "from_si",
    "frozen_populations",
    "infer_populations",
    "level_crossings",
    "level_point",
    "plateau_model",
    "spin_ice_material",
    "thermo",
    "to_si",
    "total_spectrum",
]
