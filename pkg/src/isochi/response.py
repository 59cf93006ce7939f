"""Isothermal, adiabatic and isolated susceptibilities of one species.

All values are per ion in mu_B / T (the field derivative of a moment in
Bohr magnetons). Conversion to an SI volume susceptibility happens in
:func:`isochi.material.to_si`.

Two independent routes to the isolated susceptibility are provided:
:func:`chi_isolated` sums population-weighted moment slopes, and
:func:`chi_isolated_kubo` sums squared moment matrix elements over
eigenstate pairs. They must agree for Boltzmann populations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from isochi.ensemble import Populations, boltzmann_weights, state_arrays
from isochi.errors import ThermodynamicsError
from isochi.spinmodel import SpinSpecies, block_eigenvectors, block_energies
from isochi.units import MU_B_OVER_K_B

__all__ = [
    "ResponseCurve",
    "KINDS",
    "chi_isothermal",
    "chi_adiabatic",
    "chi_isolated",
    "chi_isolated_equilibrium",
    "chi_isolated_kubo",
    "chi_isolated_finite_amplitude",
    "plateau_model",
]

KINDS = ("isothermal", "adiabatic", "isolated", "isolated_kubo", "isolated_finite_amplitude")
UNITS = ("per_ion", "si")

#: pairs closer than this (K) are treated as degenerate in the pair sum
DEGENERACY_TOL = 1e-10
#: Gauss-Legendre order for the probe-cycle average
QUADRATURE_ORDER = 64


@dataclass(frozen=True)
class ResponseCurve:
    """Susceptibility on a field grid.

    ``fields`` in tesla, strictly increasing. ``units`` is ``"per_ion"``
    (mu_B/T per ion) or ``"si"`` (dimensionless volume susceptibility).
    """

    fields: np.ndarray
    values: np.ndarray
    kind: str
    units: str = "per_ion"
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        f = np.array(self.fields, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if f.shape != v.shape:
            raise ValueError("fields and values differ in length")
        if f.size and np.any(np.diff(f) <= 0):
            raise ValueError("field grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("susceptibility values must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.units not in UNITS:
            raise ValueError(f"unknown units {self.units!r}")
        if self.kind.startswith("isolated") and v.size:
            floor = -1e-12 * np.max(np.abs(v))
            if np.any(v < floor):
                raise ValueError("isolated susceptibility must be non-negative")
        f.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "fields", f)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self):
        return self.fields.size


def _check_T(T):
    T = float(T)
    if not (T > 0 and np.isfinite(T)):
        raise ThermodynamicsError(f"temperature must be finite and > 0, got {T}")
    return T


def _reduce(x):
    return float(x) if np.ndim(x) == 0 else x


def _fluctuations(species, B, T):
    """Boltzmann averages needed by chi_T and chi_S on a field array."""
    E, m, dm = state_arrays(species, B)
    p = boltzmann_weights(E, T)
    M = (p * m).sum(axis=(0, 1))
    Eav = (p * E).sum(axis=(0, 1))
    dE = E - Eav
    dmm = m - M
    return {
        "slope": (p * dm).sum(axis=(0, 1)),
        "var_m": (p * dmm**2).sum(axis=(0, 1)),
        "var_E": (p * dE**2).sum(axis=(0, 1)),
        "cov_Em": (p * dE * dmm).sum(axis=(0, 1)),
    }


def chi_isothermal(species: SpinSpecies, B, T: float):
    """Equilibrium ``dM/dB``: slope term plus moment fluctuations ``(mu_B/k_B) var(m)/T``."""
    T = _check_T(T)
    f = _fluctuations(species, np.asarray(B, dtype=float), T)
    return _reduce(f["slope"] + MU_B_OVER_K_B * f["var_m"] / T)


def chi_adiabatic(species: SpinSpecies, B, T: float):
    """Constant-entropy susceptibility ``chi_T - T (dM/dT)^2 / C_H`` per ion.

    Raises :class:`ThermodynamicsError` where the heat capacity vanishes.
    """
    T = _check_T(T)
    f = _fluctuations(species, np.asarray(B, dtype=float), T)
    if np.any(f["var_E"] == 0):
        raise ThermodynamicsError("heat capacity is zero; chi_S undefined (use chi_T if dM/dT = 0)")
    chi_t = f["slope"] + MU_B_OVER_K_B * f["var_m"] / T
    # T (dM/dT)^2 / C_H with dM/dT = cov/T^2 and C_H = var_E/T^2
    return _reduce(chi_t - MU_B_OVER_K_B * f["cov_Em"] ** 2 / (T * f["var_E"]))


def _isolated_from_probs(species, probs, B):
    _, _, dm = state_arrays(species, B)
    probs = probs.reshape(probs.shape[:2] + (1,) * (dm.ndim - 2)) if probs.ndim == 2 else probs
    return (probs * dm).sum(axis=(0, 1))


def chi_isolated(species: SpinSpecies, populations: Populations, B):
    """Fixed-population response ``sum_i p_i dm_i/dB``, for any populations."""
    if populations.species != species:
        raise ValueError("populations belong to a different species")
    return _reduce(_isolated_from_probs(species, populations.probs, np.asarray(B, dtype=float)))


def chi_isolated_equilibrium(species: SpinSpecies, B, T: float):
    """Isolated susceptibility with Boltzmann populations taken at each field point."""
    T = _check_T(T)
    E, _, dm = state_arrays(species, np.asarray(B, dtype=float))
    return _reduce((boltzmann_weights(E, T) * dm).sum(axis=(0, 1)))


def _full_eigensystem(species, B):
    """Energies, eigenvector matrix and moment operator in the full 2(2I+1) space.

    Basis order is (block 0 up, block 0 down, block 1 up, ...); state order
    is (block 0 lower, block 0 upper, block 1 lower, ...).
    """
    B = np.atleast_1d(np.asarray(B, dtype=float))
    ms = species.m_values()
    n = species.n_states
    ep, em = block_energies(species, ms[:, None], B[None, :])
    vp, vm = block_eigenvectors(species, ms[:, None], B[None, :])
    energies = np.empty((B.size, n))
    energies[:, 0::2] = em.T
    energies[:, 1::2] = ep.T
    V = np.zeros((B.size, n, n))
    for k in range(species.n_blocks):
        sl = slice(2 * k, 2 * k + 2)
        V[:, sl, 2 * k] = vm[k]
        V[:, sl, 2 * k + 1] = vp[k]
    # moment operator -dH/dB: the "up" diagonal +mu_p B carries moment -mu_p
    mu_op = np.tile([-species.mu_proj, species.mu_proj], species.n_blocks)
    return energies, V, mu_op


def chi_isolated_kubo(species: SpinSpecies, T: float, B):
    """Isolated susceptibility from the eigenstate pair sum.

    ``sum_{i != j} (p_i - p_j) |<i|mu|j>|^2 / (E_j - E_i)`` over all ordered
    pairs with ``|E_j - E_i| > DEGENERACY_TOL``.
    """
    T = _check_T(T)
    scalar = np.ndim(B) == 0
    energies, V, mu_op = _full_eigensystem(species, B)
    mel = np.einsum("bki,k,bkj->bij", V, mu_op, V)
    e0 = energies.min(axis=1, keepdims=True)
    p = np.exp(-(energies - e0) / T)
    p /= p.sum(axis=1, keepdims=True)
    gap = energies[:, None, :] - energies[:, :, None]  # E_j - E_i
    keep = np.abs(gap) > DEGENERACY_TOL
    safe_gap = np.where(keep, gap, 1.0)
    # p_i - p_j = -p_i expm1(-(E_j - E_i)/T), accurate for small gaps
    dp = -p[:, :, None] * np.expm1(-safe_gap / T)
    terms = np.where(keep, dp * mel**2 / safe_gap, 0.0)
    out = MU_B_OVER_K_B * terms.sum(axis=(1, 2))
    return float(out[0]) if scalar else out


def _cycle_nodes():
    x, w = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)
    return np.pi * (x + 1.0), np.pi * w


def _magnetization_fixed(species, B):
    h = species.hyperfine_A * species.m_values()[:, None] + species.zeeman_K_per_T * B[None, :]
    e = np.hypot(h, species.gap_delta)
    if np.any(e == 0):
        state_arrays(species, B)  # raises the degenerate-point error
    # lower branch carries +mu_p h/E, upper branch -mu_p h/E
    return species.mu_proj * (h / e)


def finite_amplitude_from_probs(species: SpinSpecies, probs: np.ndarray, B0, b: float):
    """Probe-cycle response for populations ``probs`` of shape (2I+1, 2) or (2I+1, 2, nB).

    Returns the in-phase fundamental of ``M(B0 + b sin t)`` divided by ``b``.
    """
    B0 = np.atleast_1d(np.asarray(B0, dtype=float))
    if probs.ndim == 2:
        probs = np.broadcast_to(probs[:, :, None], probs.shape + (B0.size,))
    diff = probs[:, 0, :] - probs[:, 1, :]
    theta, w = _cycle_nodes()
    s = np.sin(theta)
    Bt = (B0[:, None] + b * s[None, :]).ravel()
    m_cycle = _magnetization_fixed(species, Bt).reshape(-1, B0.size, theta.size)
    m_0 = _magnetization_fixed(species, B0)
    M_cycle = (diff[:, :, None] * (m_cycle - m_0[:, :, None])).sum(axis=0)
    return (M_cycle * (w * s)[None, :]).sum(axis=1) / (np.pi * b)


def chi_isolated_finite_amplitude(species: SpinSpecies, populations: Populations, B0, b: float):
    """Apparent isolated response for a sinusoidal probe of amplitude ``b`` (T) about ``B0``.

    Populations stay fixed over the cycle. ``b = 0`` returns the quasi-static value.
    """
    if b < 0:
        raise ValueError(f"probe amplitude must be >= 0, got {b}")
    if populations.species != species:
        raise ValueError("populations belong to a different species")
    if b == 0:
        return chi_isolated(species, populations, B0)
    out = finite_amplitude_from_probs(species, np.asarray(populations.probs), B0, b)
    return float(out[0]) if np.ndim(B0) == 0 else out


def plateau_model(chi_T, chi_S, chi_I, tau1: float, tau2: float, omega):
    """Two-relaxation interpolation between the three quasi-static plateaus.

    ``chi(w) = chi_I + (chi_S - chi_I)/(1 + i w tau2) + (chi_T - chi_S)/(1 + i w tau1)``,
    returned as ``chi' + i chi''`` with the loss part ``chi''`` non-negative.
    """
    if not tau1 > tau2 > 0:
        raise ValueError("need tau1 > tau2 > 0")
    scale = max(abs(chi_T), abs(chi_S), abs(chi_I), 1e-300)
    tol = 1e-12 * scale
    if not (chi_T + tol >= chi_S and chi_S + tol >= chi_I and chi_I >= -tol):
        raise ValueError("plateaus must satisfy chi_T >= chi_S >= chi_I >= 0")
    w = np.asarray(omega, dtype=float)
    chi = chi_I + (chi_S - chi_I) / (1 + 1j * w * tau2) + (chi_T - chi_S) / (1 + 1j * w * tau1)
    return np.conj(chi)
