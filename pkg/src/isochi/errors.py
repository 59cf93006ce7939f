"""Exception hierarchy."""


class IsochiError(Exception):
    """Base class for all package errors."""


class DegeneratePointError(IsochiError, ValueError):
    """Raised at a true degeneracy (zero gap and zero bias) where moments are undefined."""


class ThermodynamicsError(IsochiError, ValueError):
    """Raised for invalid thermodynamic requests (non-positive T, zero heat capacity,
    fluctuation quantities of non-Boltzmann populations)."""


class FitError(IsochiError, RuntimeError):
    """Raised when a fit or peak search cannot produce a meaningful answer."""


class ConfigError(IsochiError, ValueError):
    """Raised for malformed or out-of-range configuration input."""


class SpectrumFormatError(IsochiError, ValueError):
    """Raised for malformed spectrum CSV files."""
