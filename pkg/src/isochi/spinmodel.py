"""Ising-like ion with a nuclear spin: closed-form 2x2 block physics.

Every species reduces to 2I+1 independent blocks, one per nuclear projection
``m_I``::

    [[ A m_I + mu_p B,   Delta          ],
     [ Delta,           -A m_I - mu_p B ]]

with ``mu_p = projection * moment_mu``. The bias ``h = A m_I + mu_p B`` acts
as an effective field, so each block behaves like a two-state system with an
avoided crossing where ``h = 0``.

All functions broadcast over array-valued ``m_I`` and ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from isochi.errors import DegeneratePointError
from isochi.units import MU_B_OVER_K_B

__all__ = [
    "SpinSpecies",
    "StateLabel",
    "LevelPoint",
    "Crossing",
    "block_bias",
    "block_energies",
    "block_moment_and_slope",
    "block_eigenvectors",
    "concurrence",
    "level_crossings",
    "level_point",
]


@dataclass(frozen=True)
class SpinSpecies:
    """One class of Ising-like ion.

    Parameters
    ----------
    moment_mu : float
        Moment of the pure up/down states, Bohr magnetons (g_parallel / 2).
    hyperfine_A : float
        Hyperfine constant A/k_B in kelvin.
    gap_delta : float
        Transverse (strain) term Delta/k_B in kelvin. Levels at a crossing are split by 2 Delta.
    projection : float
        Factor in (0, 1] multiplying the moment along the field (1 apical, 1/3 basal).
    nuclear_I : float
        Nuclear spin, a non-negative half-integer. ``0`` gives the plain two-state model.
    multiplicity : int
        Relative number of such sites.
    name : str
        Free-form identifier carried into metadata.
    """

    moment_mu: float
    hyperfine_A: float = 0.0
    gap_delta: float = 0.0
    projection: float = 1.0
    nuclear_I: float = 0.0
    multiplicity: int = 1
    name: str = "species"

    def __post_init__(self):
        if not self.moment_mu > 0:
            raise ValueError(f"moment_mu must be > 0, got {self.moment_mu}")
        if not self.gap_delta >= 0:
            raise ValueError(f"gap_delta must be >= 0, got {self.gap_delta}")
        if not 0 < self.projection <= 1:
            raise ValueError(f"projection must lie in (0, 1], got {self.projection}")
        if int(self.multiplicity) != self.multiplicity or self.multiplicity < 1:
            raise ValueError(f"multiplicity must be a positive integer, got {self.multiplicity}")
        twice = 2 * self.nuclear_I
        if self.nuclear_I < 0 or abs(twice - round(twice)) > 1e-12:
            raise ValueError(f"nuclear_I must be a non-negative half-integer, got {self.nuclear_I}")
        if not np.isfinite(self.hyperfine_A):
            raise ValueError("hyperfine_A must be finite")

    @property
    def mu_proj(self) -> float:
        """Projected moment along the field, mu_B."""
        return self.projection * self.moment_mu

    @property
    def zeeman_K_per_T(self) -> float:
        """d h / d B in K/T."""
        return self.mu_proj * MU_B_OVER_K_B

    @property
    def n_blocks(self) -> int:
        return int(round(2 * self.nuclear_I)) + 1

    @property
    def n_states(self) -> int:
        return 2 * self.n_blocks

    def m_values(self) -> np.ndarray:
        """Nuclear projections -I, -I+1, ..., +I (exact binary fractions)."""
        return -self.nuclear_I + np.arange(self.n_blocks, dtype=float)

    def labels(self) -> tuple["StateLabel", ...]:
        """All 2(2I+1) state labels, ordered (m_I ascending, then branch -, +)."""
        return tuple(StateLabel(float(m), b) for m in self.m_values() for b in (-1, +1))

    def with_delta(self, gap_delta: float) -> "SpinSpecies":
        return replace(self, gap_delta=gap_delta)


class StateLabel(NamedTuple):
    """Adiabatic state identity: nuclear projection and energy branch (+1 upper, -1 lower)."""

    m_I: float
    branch: int

    def __str__(self):
        sign = "+" if self.branch > 0 else "-"
        return f"({fraction_label(self.m_I)},{sign})"


@dataclass(frozen=True)
class LevelPoint:
    label: StateLabel
    energy: float
    moment: float
    moment_slope: float
    concurrence: float


class Crossing(NamedTuple):
    m_I: float
    field: float
    kind: str  # "avoided" or "direct"
    other_m_I: float | None = None


def fraction_label(x: float) -> str:
    return str(Fraction(x).limit_denominator(2))


def _check_m(species: SpinSpecies, m_I) -> np.ndarray:
    m = np.asarray(m_I, dtype=float)
    off = m + species.nuclear_I
    if np.any(np.abs(m) > species.nuclear_I + 1e-12) or np.any(np.abs(off - np.round(off)) > 1e-12):
        raise ValueError(f"m_I={m_I!r} is not a valid projection for I={species.nuclear_I}")
    return m


def block_bias(species: SpinSpecies, m_I, B):
    """Diagonal element ``h = A m_I + mu_p B`` of the block, kelvin."""
    m = _check_m(species, m_I)
    return species.hyperfine_A * m + species.zeeman_K_per_T * np.asarray(B, dtype=float)


def _gap_energy(species, m_I, B):
    h = block_bias(species, m_I, B)
    return h, np.hypot(h, species.gap_delta)


def block_energies(species: SpinSpecies, m_I, B):
    """Eigenvalues ``(E_plus, E_minus) = (+sqrt(h^2 + Delta^2), -sqrt(h^2 + Delta^2))`` in kelvin."""
    _, e = _gap_energy(species, m_I, B)
    return e, -e


def _raise_if_degenerate(species, e):
    if np.any(e == 0):
        raise DegeneratePointError(
            "moment undefined: Delta = 0 and the block bias vanishes (direct degeneracy)"
        )


def block_moment_and_slope(species: SpinSpecies, m_I, B):
    """Moments ``m = -dE/dB`` and their field derivatives for both branches.

    Returns
    -------
    m_plus, m_minus : mu_B
        ``-/+ mu_p h / E``.
    dm_plus, dm_minus : mu_B / T
        ``-/+ mu_p^2 (mu_B/k_B) Delta^2 / E^3``.
    """
    h, e = _gap_energy(species, m_I, B)
    _raise_if_degenerate(species, e)
    mp = species.mu_proj
    ratio = h / e
    curv = mp * species.zeeman_K_per_T * species.gap_delta**2 / e**3
    return -mp * ratio, mp * ratio, -curv, curv


def block_eigenvectors(species: SpinSpecies, m_I, B):
    """Normalised real eigenvectors in the (up, down) basis of one block.

    Up is the state whose diagonal element is ``+h``. Returns two arrays of
    shape ``(..., 2)`` for the upper and lower branch.
    """
    h, e = _gap_energy(species, m_I, B)
    _raise_if_degenerate(species, e)
    d = np.broadcast_to(species.gap_delta, np.shape(h)).astype(float)
    # (Delta, E - h) loses precision when h ~ E; (E + h, Delta) is the same ray.
    use_a = h <= 0
    up_plus = np.where(use_a, d, e + h)
    dn_plus = np.where(use_a, e - h, d)
    vp = np.stack([up_plus, dn_plus], axis=-1)
    vp /= np.linalg.norm(vp, axis=-1, keepdims=True)
    # lower branch is orthogonal to the upper one
    vm = np.stack([-vp[..., 1], vp[..., 0]], axis=-1)
    return vp, vm


def concurrence(species: SpinSpecies, m_I, B):
    """Overlap of a block eigenstate with its spin-reversed partner, ``Delta / sqrt(Delta^2 + h^2)``.

    Identical for both branches.
    """
    h, e = _gap_energy(species, m_I, B)
    _raise_if_degenerate(species, e)
    return species.gap_delta / e


def level_point(species: SpinSpecies, m_I: float, branch: int, B: float) -> LevelPoint:
    ep, em = block_energies(species, m_I, B)
    mp, mm, dp, dm = block_moment_and_slope(species, m_I, B)
    upper = branch > 0
    return LevelPoint(
        label=StateLabel(float(m_I), 1 if upper else -1),
        energy=float(ep if upper else em),
        moment=float(mp if upper else mm),
        moment_slope=float(dp if upper else dm),
        concurrence=float(concurrence(species, m_I, B)),
    )


def level_crossings(species: SpinSpecies) -> list[Crossing]:
    """Avoided and direct crossing fields, sorted by field.

    Avoided crossings (one per ``m_I``) sit where the block bias vanishes.
    Direct crossings are between diabatic levels ``+h_m`` and ``-h_m'`` of
    different blocks, located with Delta neglected: ``h_m + h_m' = 0``.
    """
    k = species.zeeman_K_per_T
    a = species.hyperfine_A
    ms = species.m_values()
    out = [Crossing(float(m), float(-a * m / k) + 0.0, "avoided") for m in ms]
    if a != 0:
        for i, m in enumerate(ms):
            for m2 in ms[i + 1:]:
                out.append(Crossing(float(m), float(-a * (m + m2) / (2 * k)) + 0.0, "direct", float(m2)))
    out.sort(key=lambda c: (c.field, c.kind, c.m_I))
    return out
