"""Dilute spin-ice sample model: apical and basal sites with a strain-gap mixture."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from isochi.ensemble import boltzmann_weights, state_arrays
from isochi.response import (
    KINDS,
    ResponseCurve,
    chi_adiabatic,
    chi_isolated_kubo,
    chi_isothermal,
    finite_amplitude_from_probs,
)
from isochi.errors import ThermodynamicsError
from isochi.spinmodel import SpinSpecies
from isochi.units import MU_0, MU_B, MU_B_OVER_K_B

__all__ = [
    "DeltaDistribution",
    "Material",
    "spin_ice_material",
    "total_spectrum",
    "to_si",
    "from_si",
    "curie_constant",
    "DEFAULT_DELTAS",
    "DEFAULT_WEIGHTS",
    "CURIE_GEOMETRY_111",
]

DEFAULT_DELTAS = (0.015, 0.1)
DEFAULT_WEIGHTS = (0.511, 0.352)

#: mean cos^2 between <111> Ising axes and a [111] field: (1 + 3/9) / 4
CURIE_GEOMETRY_111 = 1.0 / 3.0

POPULATION_MODES = ("boltzmann", "frozen")


@dataclass(frozen=True)
class DeltaDistribution:
    """Discrete gap mixture ``{(delta_k, weight_k)}``.

    Ions not covered by the listed weights (``f0 = 1 - sum(weights)``) have
    zero gap and give no isolated response.
    """

    components: tuple[tuple[float, float], ...] = tuple(zip(DEFAULT_DELTAS, DEFAULT_WEIGHTS))

    def __post_init__(self):
        comps = tuple((float(d), float(w)) for d, w in self.components)
        deltas = [d for d, _ in comps]
        weights = [w for _, w in comps]
        if any(d <= 0 for d in deltas):
            raise ValueError("gap values must be > 0 (the zero-gap channel is implicit)")
        if any(b <= a for a, b in zip(deltas, deltas[1:])):
            raise ValueError("gap values must be strictly increasing")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if sum(weights) > 1 + 1e-12:
            raise ValueError(f"weights sum to {sum(weights)} > 1")
        object.__setattr__(self, "components", comps)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(d for d, _ in self.components)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for _, w in self.components)

    @property
    def f0(self) -> float:
        return 1.0 - sum(self.weights)

    @classmethod
    def single(cls, delta: float) -> "DeltaDistribution":
        return cls(((delta, 1.0),))


@dataclass(frozen=True)
class Material:
    """A sample: site species (each with its multiplicity), gap mixture, concentration.

    The ``gap_delta`` of each species template is ignored; gaps come from
    ``delta_distribution``.
    """

    species_groups: tuple[SpinSpecies, ...]
    delta_distribution: DeltaDistribution = field(default_factory=DeltaDistribution)
    concentration_x: float = 0.0025
    number_density: float | None = None

    def __post_init__(self):
        if not self.species_groups:
            raise ValueError("material needs at least one species")
        if not 0 < self.concentration_x <= 2:
            raise ValueError(f"concentration_x must lie in (0, 2], got {self.concentration_x}")
        if self.number_density is not None and not self.number_density > 0:
            raise ValueError("number_density must be > 0")
        object.__setattr__(self, "species_groups", tuple(self.species_groups))

    @property
    def site_fractions(self) -> tuple[float, ...]:
        total = sum(s.multiplicity for s in self.species_groups)
        return tuple(s.multiplicity / total for s in self.species_groups)

    def with_distribution(self, distribution: DeltaDistribution) -> "Material":
        return replace(self, delta_distribution=distribution)

    def only(self, name: str) -> "Material":
        """Same material restricted to the species called ``name`` (for single-site curves)."""
        groups = tuple(s for s in self.species_groups if s.name == name)
        if not groups:
            raise KeyError(name)
        return replace(self, species_groups=groups)


def spin_ice_material(
    x: float = 0.0025,
    g_parallel: float = 19.0,
    A: float = 0.2945,
    distribution: DeltaDistribution | None = None,
    nuclear_I: float = 3.5,
    number_density: float | None = None,
) -> Material:
    """Apical (projection 1, one site) and basal (projection 1/3, three sites) Ho ions.

    Both share ``mu = g_parallel / 2`` Bohr magnetons and hyperfine constant ``A`` (K).
    """
    if not g_parallel > 0:
        raise ValueError(f"g_parallel must be > 0, got {g_parallel}")
    if not A > 0:
        raise ValueError(f"A must be > 0, got {A}")
    mu = 0.5 * g_parallel
    apical = SpinSpecies(mu, A, 0.0, 1.0, nuclear_I, 1, "apical")
    basal = SpinSpecies(mu, A, 0.0, 1.0 / 3.0, nuclear_I, 3, "basal")
    return Material(
        (apical, basal),
        distribution if distribution is not None else DeltaDistribution(),
        x,
        number_density,
    )


def curie_constant(g_parallel: float, x: float = 0.0025, geometry: float = CURIE_GEOMETRY_111) -> float:
    """High-temperature ``chi T`` per formula unit, mu_B K / T, for ``x`` Ho per formula unit."""
    return x * geometry * (0.5 * g_parallel) ** 2 * MU_B_OVER_K_B


def _species_curve(sp, B, T, kind, populations_mode, probe, prep_B, prep_T):
    if kind == "isothermal":
        return chi_isothermal(sp, B, T)
    if kind == "adiabatic":
        return chi_adiabatic(sp, B, T)
    if kind == "isolated_kubo":
        if populations_mode != "boltzmann":
            raise ValueError("the pair-sum route needs Boltzmann populations")
        return chi_isolated_kubo(sp, T, B)
    # isolated, quasi-static or finite amplitude
    if populations_mode == "boltzmann":
        E, _, dm = state_arrays(sp, B)
        probs = boltzmann_weights(E, T)
    else:
        E0 = state_arrays(sp, float(prep_B), with_slopes=False)
        probs = boltzmann_weights(E0, prep_T)
        _, _, dm = state_arrays(sp, B)
        probs = np.broadcast_to(probs[:, :, None], dm.shape)
    if probe > 0:
        return finite_amplitude_from_probs(sp, np.asarray(probs), B, probe)
    return (probs * dm).sum(axis=(0, 1))


def total_spectrum(
    material: Material,
    B_grid,
    T: float | None,
    kind: str = "isolated",
    populations_mode: str = "boltzmann",
    probe_amplitude: float = 0.0,
    prep_field: float = 0.0,
    prep_temperature: float | None = None,
) -> ResponseCurve:
    """Site- and gap-weighted sum of single-species susceptibilities on ``B_grid`` (T).

    ``value(B) = sum_sites (mult / sum mult) * sum_k w_k * chi(species at delta_k; B)``,
    per Ho ion. The zero-gap channel contributes nothing. ``populations_mode``
    ``"frozen"`` holds Boltzmann populations prepared at
    ``(prep_field, prep_temperature)``; only isolated kinds accept it.
    ``probe_amplitude`` (T) > 0 selects the probe-cycle average.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; choose from {KINDS}")
    if populations_mode not in POPULATION_MODES:
        raise ValueError(f"unknown populations mode {populations_mode!r}")
    if probe_amplitude < 0:
        raise ValueError("probe amplitude must be >= 0")
    B = np.asarray(B_grid, dtype=float).ravel()
    if B.size < 1 or np.any(np.diff(B) <= 0):
        raise ValueError("field grid must be non-empty and strictly increasing")
    if populations_mode == "frozen":
        if kind not in ("isolated", "isolated_finite_amplitude"):
            raise ValueError(f"kind {kind!r} is thermodynamic; frozen populations are not allowed")
        if prep_temperature is None or not prep_temperature > 0:
            raise ThermodynamicsError("frozen populations need a preparation temperature > 0")
    elif T is None or not T > 0:
        raise ThermodynamicsError(f"temperature must be > 0, got {T}")
    if kind == "isolated_finite_amplitude" and probe_amplitude == 0:
        raise ValueError("kind 'isolated_finite_amplitude' needs probe_amplitude > 0")
    if kind not in ("isolated", "isolated_finite_amplitude") and probe_amplitude > 0:
        raise ValueError(f"probe amplitude applies to isolated kinds only, not {kind!r}")

    total = np.zeros_like(B)
    dist = material.delta_distribution
    for frac, template in zip(material.site_fractions, material.species_groups):
        for delta, weight in dist.components:
            if weight == 0:
                continue
            sp = template.with_delta(delta)
            total += frac * weight * _species_curve(
                sp, B, T, kind, populations_mode, probe_amplitude, prep_field, prep_temperature
            )

    out_kind = kind
    if kind == "isolated" and probe_amplitude > 0:
        out_kind = "isolated_finite_amplitude"
    meta = {
        "species": ",".join(s.name for s in material.species_groups),
        "T_K": T,
        "populations": populations_mode,
        "probe_mT": probe_amplitude * 1e3,
        "distribution": ";".join(f"{d}:{w}" for d, w in dist.components),
    }
    if populations_mode == "frozen":
        meta.update(prep_B_mT=prep_field * 1e3, prep_T_K=prep_temperature)
    return ResponseCurve(B, total, out_kind, "per_ion", meta)


def to_si(curve: ResponseCurve, number_density: float | None) -> ResponseCurve:
    """Per-ion (mu_B/T) curve to SI volume susceptibility ``mu0 n mu_B chi``; ``n`` in ions/m^3."""
    if curve.units != "per_ion":
        raise ValueError("curve is not in per-ion units")
    if number_density is None or not number_density > 0:
        raise ValueError("a number density > 0 is required for SI output")
    meta = dict(curve.metadata, number_density=number_density)
    return ResponseCurve(curve.fields, curve.values * (MU_0 * number_density * MU_B), curve.kind, "si", meta)


def from_si(curve: ResponseCurve, number_density: float) -> ResponseCurve:
    if curve.units != "si":
        raise ValueError("curve is not in SI units")
    if not number_density > 0:
        raise ValueError("number density must be > 0")
    meta = {k: v for k, v in curve.metadata.items() if k != "number_density"}
    return ResponseCurve(curve.fields, curve.values / (MU_0 * number_density * MU_B), curve.kind, "per_ion", meta)
