import math

import mpmath as mp
import numpy as np
import pytest

from isochi import (
    SpinSpecies,
    StateLabel,
    ThermodynamicsError,
    boltzmann_populations,
    custom_populations,
    frozen_populations,
    thermo,
)
from isochi.ensemble import mean_energy, state_arrays

from conftest import MU_HO, c_codata, full_hamiltonian, two_state


def test_infinite_temperature_uniform(apical):
    p = boltzmann_populations(apical, 0.03, math.inf)
    np.testing.assert_allclose(p.probs, 1 / 16, rtol=0, atol=1e-15)


def test_ground_state_limit(apical):
    B = 0.04
    p = boltzmann_populations(apical, B, 1e-4)
    E = state_arrays(apical, B, with_slopes=False)
    i = np.unravel_index(np.argmin(E), E.shape)
    assert p.probs[i] == pytest.approx(1.0, abs=1e-12)


def test_two_state_zero_field():
    d, T = 0.015, 0.02
    p = boltzmann_populations(two_state(d), 0.0, T)
    assert p.p_minus[0] == pytest.approx(math.exp(d / T) / (2 * math.cosh(d / T)), rel=1e-14)
    assert p.p_plus[0] == pytest.approx(math.exp(-d / T) / (2 * math.cosh(d / T)), rel=1e-14)
    assert p.p_minus[0] - p.p_plus[0] == pytest.approx(math.tanh(d / T), rel=1e-14)


def test_frozen_high_temperature_uniform(apical):
    np.testing.assert_allclose(frozen_populations(apical, 0.0, 1e12).probs, 1 / 16, rtol=1e-9)


def test_frozen_76mK_concentrated_on_outer_states(apical):
    p = frozen_populations(apical, 0.0, 0.076)
    assert p[StateLabel(3.5, -1)] == pytest.approx(p[StateLabel(-3.5, -1)], rel=1e-12)
    assert p[StateLabel(3.5, -1)] + p[StateLabel(-3.5, -1)] > 0.97
    assert p.provenance == "frozen"


def test_frozen_equals_boltzmann_at_preparation(apical):
    a = frozen_populations(apical, 0.05, 0.3)
    b = boltzmann_populations(apical, 0.05, 0.3)
    np.testing.assert_array_equal(a.probs, b.probs)


def test_populations_against_dense_hamiltonian(apical):
    B, T = 0.07, 0.5
    E = np.linalg.eigvalsh(full_hamiltonian(apical, B))
    w = np.exp(-(E - E.min()) / T)
    ref = np.sort(w / w.sum())
    got = np.sort(boltzmann_populations(apical, B, T).probs.ravel())
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_custom_populations_normalised(apical):
    p = custom_populations(apical, {StateLabel(0.5, 1): 2.0, (-3.5, -1): 2.0})
    assert p[StateLabel(0.5, 1)] == 0.5 and p[(-3.5, -1)] == 0.5
    with pytest.raises(ValueError):
        custom_populations(apical, {(0.25, 1): 1.0})
    with pytest.raises(ValueError):
        custom_populations(apical, np.zeros((8, 2)))


def test_populations_validation(apical):
    from isochi import Populations

    with pytest.raises(ValueError):
        Populations(apical, np.full((8, 2), 0.1), "custom")
    with pytest.raises(ValueError):
        Populations(apical, np.full((7, 2), 1 / 14), "custom")
    with pytest.raises(ThermodynamicsError):
        boltzmann_populations(apical, 0.0, -1.0)
    with pytest.raises(ThermodynamicsError):
        frozen_populations(apical, 0.0, 0.0)


def test_zero_field_magnetisation_vanishes(apical, basal):
    for sp in (apical, basal, two_state(0.1)):
        for T in (0.1, 2.1, 50.0):
            tp = thermo(sp, boltzmann_populations(sp, 0.0, T), 0.0)
            assert abs(tp.magnetization_per_ion) < 1e-13
            assert abs(tp.dM_dT_per_ion) < 1e-13


def test_two_state_magnetisation_from_free_energy():
    """M = -(1/c) dF/dB with F = -T ln Q, Q evaluated in mpmath."""
    d, T, B = 0.05, 0.3, 0.004
    sp = two_state(d)
    c = c_codata()
    with mp.workdps(40):
        def F(b):
            h = mp.mpf(sp.mu_proj) * mp.mpf(c) * b
            e = mp.sqrt(h**2 + mp.mpf(d) ** 2)
            return -T * mp.log(2 * mp.cosh(e / T))

        dB = mp.mpf("1e-8")
        ref = float(-(F(mp.mpf(B) + dB) - F(mp.mpf(B) - dB)) / (2 * dB) / c)
    h = sp.zeeman_K_per_T * B
    e = math.hypot(h, d)
    closed = sp.mu_proj * h / e * math.tanh(e / T)
    got = thermo(sp, boltzmann_populations(sp, B, T), B).magnetization_per_ion
    assert got == pytest.approx(ref, rel=1e-10)
    assert got == pytest.approx(closed, rel=1e-12)


def test_heat_capacity_and_dMdT_finite_difference(apical):
    B, T, dT = 0.05, 0.4, 1e-5
    tp = thermo(apical, boltzmann_populations(apical, B, T), B)
    C_fd = (mean_energy(apical, B, T + dT) - mean_energy(apical, B, T - dT)) / (2 * dT)
    M = lambda t: thermo(apical, boltzmann_populations(apical, B, t), B).magnetization_per_ion
    dM_fd = (M(T + dT) - M(T - dT)) / (2 * dT)
    assert tp.heat_capacity_per_ion == pytest.approx(C_fd, rel=1e-7)
    assert tp.dM_dT_per_ion == pytest.approx(dM_fd, rel=1e-7)


def test_high_temperature_heat_capacity(apical):
    B = 0.02
    E = state_arrays(apical, B, with_slopes=False).ravel()
    T = 1e4
    C = thermo(apical, boltzmann_populations(apical, B, T), B).heat_capacity_per_ion
    Ebar = E.mean()
    assert C == pytest.approx(((E - Ebar) ** 2).sum() / (16 * T**2), rel=1e-3)
    assert thermo(apical, boltzmann_populations(apical, B, math.inf), B).heat_capacity_per_ion == 0.0


def test_partition_function(apical):
    B, T = 0.01, 1.0
    E = np.linalg.eigvalsh(full_hamiltonian(apical, B))
    Q = thermo(apical, boltzmann_populations(apical, B, T), B).partition_function
    assert Q == pytest.approx(np.exp(-E / T).sum(), rel=1e-12)


def test_fluctuations_need_boltzmann(apical):
    fr = frozen_populations(apical, 0.0, 0.076)
    with pytest.raises(ThermodynamicsError):
        thermo(apical, fr, 0.05, 1.0, fluctuations=True)
    tp = thermo(apical, fr, 0.05)
    assert tp.heat_capacity_per_ion is None and tp.dM_dT_per_ion is None


def test_mismatched_boltzmann_rejected(apical):
    with pytest.raises(ValueError):
        thermo(apical, boltzmann_populations(apical, 0.0, 1.0), 0.01)
    other = SpinSpecies(MU_HO, 0.3, 0.015, 1.0, 3.5)
    with pytest.raises(ValueError):
        thermo(other, boltzmann_populations(apical, 0.0, 1.0), 0.0)
