"""Level populations and canonical-ensemble thermodynamics.

Populations are indexed by :class:`~isochi.spinmodel.StateLabel`, i.e. by
adiabatic branch identity ``(m_I, +/-)``. Because the moment operator never
couples different ``m_I`` blocks and the two branches of a block never cross,
a label set prepared at one field can be carried unchanged to any other
field; that is how frozen (non-equilibrium) populations work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from isochi.errors import ThermodynamicsError
from isochi.spinmodel import SpinSpecies, StateLabel, block_energies, block_moment_and_slope

__all__ = [
    "Populations",
    "ThermoPoint",
    "boltzmann_populations",
    "frozen_populations",
    "custom_populations",
    "thermo",
    "state_arrays",
    "boltzmann_weights",
]

NORM_TOL = 1e-12


@dataclass(frozen=True)
class Populations:
    """Probability per state of one species.

    ``probs`` has shape ``(2I+1, 2)``: rows follow ``species.m_values()``,
    column 0 is the lower branch and column 1 the upper branch.
    ``provenance`` is ``"boltzmann"``, ``"frozen"`` or ``"custom"``; ``params``
    records the preparation field/temperature.
    """

    species: SpinSpecies
    probs: np.ndarray
    provenance: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.shape != (self.species.n_blocks, 2):
            raise ValueError(f"probs must have shape {(self.species.n_blocks, 2)}, got {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        if self.provenance not in ("boltzmann", "frozen", "custom"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def p_minus(self) -> np.ndarray:
        return self.probs[:, 0]

    @property
    def p_plus(self) -> np.ndarray:
        return self.probs[:, 1]

    @property
    def entries(self) -> dict[StateLabel, float]:
        out = {}
        for i, m in enumerate(self.species.m_values()):
            out[StateLabel(float(m), -1)] = float(self.probs[i, 0])
            out[StateLabel(float(m), +1)] = float(self.probs[i, 1])
        return out

    def __getitem__(self, label: StateLabel) -> float:
        return self.entries[StateLabel(float(label[0]), int(label[1]))]


@dataclass(frozen=True)
class ThermoPoint:
    """Per-ion thermodynamics; fluctuation quantities are ``None`` unless populations are Boltzmann."""

    magnetization_per_ion: float
    heat_capacity_per_ion: float | None
    dM_dT_per_ion: float | None
    partition_function: float | None


def state_arrays(species: SpinSpecies, B, with_slopes: bool = True):
    """Energies, moments (and slopes) of every state on a field array.

    Arrays have shape ``(2I+1, 2, *B.shape)``; axis 1 is (lower, upper).
    """
    B = np.asarray(B, dtype=float)
    m = species.m_values().reshape((-1,) + (1,) * B.ndim)
    ep, em = block_energies(species, m, B)
    energies = np.stack([em, ep], axis=1)
    if not with_slopes:
        return energies
    mp, mm, dp, dm = block_moment_and_slope(species, m, B)
    return energies, np.stack([mm, mp], axis=1), np.stack([dm, dp], axis=1)


def boltzmann_weights(energies: np.ndarray, T) -> np.ndarray:
    """Normalised ``exp(-E/T)`` over the first two axes, shifted by the ground energy."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ThermodynamicsError(f"temperature must be > 0, got {T}")
    if np.all(np.isinf(T)):
        w = np.ones_like(energies)
    else:
        e0 = energies.min(axis=(0, 1), keepdims=True)
        w = np.exp(-(energies - e0) / T)
    return w / w.sum(axis=(0, 1), keepdims=True)


def _log_partition(energies, T):
    if np.isinf(T):
        return np.log(energies.shape[0] * energies.shape[1]) + 0 * energies[0, 0]
    e0 = energies.min(axis=(0, 1))
    return -e0 / T + np.log(np.exp(-(energies - e0) / T).sum(axis=(0, 1)))


def boltzmann_populations(species: SpinSpecies, B: float, T: float) -> Populations:
    """Equilibrium populations at field ``B`` (T) and temperature ``T`` (K); ``T = inf`` is allowed."""
    if not T > 0:
        raise ThermodynamicsError(f"temperature must be > 0, got {T}")
    energies = state_arrays(species, float(B), with_slopes=False)
    p = boltzmann_weights(energies, T)
    return Populations(species, p, "boltzmann", {"B": float(B), "T": float(T)})


def frozen_populations(species: SpinSpecies, B_prep: float, T_prep: float) -> Populations:
    """Boltzmann populations prepared at ``(B_prep, T_prep)``, held fixed at every other field."""
    if not T_prep > 0:
        raise ThermodynamicsError(f"preparation temperature must be > 0, got {T_prep}")
    p = boltzmann_populations(species, B_prep, T_prep).probs
    return Populations(species, p, "frozen", {"B_prep": float(B_prep), "T_prep": float(T_prep)})


def custom_populations(species: SpinSpecies, values) -> Populations:
    """Populations from a ``{StateLabel: p}`` mapping or a ``(2I+1, 2)`` array.

    Mapping input may omit states (taken as 0) and is normalised.
    """
    if isinstance(values, Mapping):
        p = np.zeros((species.n_blocks, 2))
        ms = list(species.m_values())
        for (m, branch), v in values.items():
            try:
                i = ms.index(float(m))
            except ValueError:
                raise ValueError(f"m_I={m} not valid for I={species.nuclear_I}") from None
            p[i, 0 if branch < 0 else 1] = v
    else:
        p = np.array(values, dtype=float)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    total = p.sum()
    if not total > 0:
        raise ValueError("populations must not be all zero")
    return Populations(species, p / total, "custom")


def thermo(
    species: SpinSpecies,
    populations: Populations,
    B: float,
    T: float | None = None,
    fluctuations: bool | None = None,
) -> ThermoPoint:
    """Magnetization and, for Boltzmann populations, C_H, dM/dT and Q.

    Heat capacity is in units of k_B per ion and dM/dT in mu_B/K per ion,
    from the canonical fluctuation formulas ``var(E)/T^2`` and
    ``cov(E, m)/T^2``. ``fluctuations=True`` with non-Boltzmann populations
    raises :class:`ThermodynamicsError`; ``None`` computes them when allowed.
    """
    if populations.species != species:
        raise ValueError("populations belong to a different species")
    boltz = populations.provenance == "boltzmann"
    if fluctuations and not boltz:
        raise ThermodynamicsError(
            f"C_H and dM/dT are thermodynamic; populations are {populations.provenance!r}"
        )
    if T is None:
        T = populations.params.get("T")
    if T is not None and not T > 0:
        raise ThermodynamicsError(f"temperature must be > 0, got {T}")
    if boltz and (populations.params["B"] != float(B) or populations.params["T"] != T):
        raise ValueError("Boltzmann populations were prepared at a different (B, T)")

    energies, moments, _ = state_arrays(species, float(B))
    p = populations.probs
    M = float((p * moments).sum())
    Q = None if T is None else float(np.exp(_log_partition(energies, T)))
    if not boltz or fluctuations is False:
        return ThermoPoint(M, None, None, Q)

    if np.isinf(T):
        return ThermoPoint(M, 0.0, 0.0, Q)
    dE = energies - (p * energies).sum()
    C = float((p * dE**2).sum() / T**2)
    dMdT = float((p * dE * (moments - M)).sum() / T**2)
    return ThermoPoint(M, C, dMdT, Q)


def mean_energy(species: SpinSpecies, B: float, T: float) -> float:
    """Boltzmann-averaged energy, kelvin (used by tests and diagnostics)."""
    energies = state_arrays(species, float(B), with_slopes=False)
    return float((boltzmann_weights(energies, T) * energies).sum())

