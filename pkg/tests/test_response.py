import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from isochi import (
    ResponseCurve,
    SpinSpecies,
    ThermodynamicsError,
    boltzmann_populations,
    chi_adiabatic,
    chi_isolated,
    chi_isolated_equilibrium,
    chi_isolated_finite_amplitude,
    chi_isolated_kubo,
    chi_isothermal,
    custom_populations,
    plateau_model,
)
from isochi.response import _full_eigensystem

from conftest import A_HO, MU_HO, brute_isolated, brute_magnetisation, c_codata, full_hamiltonian, two_state


def zero_field_two_state(mu, d, T):
    return mu**2 * c_codata() * math.tanh(d / T) / d


@pytest.mark.parametrize("d, T", [(0.015, 0.01), (0.015, 2.1), (0.1, 0.5)])
def test_two_state_zero_field_all_equal(d, T):
    sp = two_state(d)
    ref = zero_field_two_state(sp.mu_proj, d, T)
    pops = boltzmann_populations(sp, 0.0, T)
    for val in (
        chi_isothermal(sp, 0.0, T),
        chi_adiabatic(sp, 0.0, T),
        chi_isolated(sp, pops, 0.0),
        chi_isolated_kubo(sp, T, 0.0),
    ):
        assert val == pytest.approx(ref, rel=1e-10)


def test_curie_limit():
    sp = two_state(1e-6)
    T = 0.7
    assert chi_isothermal(sp, 0.0, T) == pytest.approx(sp.mu_proj**2 * c_codata() / T, rel=1e-9)


def test_isothermal_against_brute_force(apical):
    T, B, dB = 3.0, 0.0437, 1e-6
    M = lambda b: brute_magnetisation(apical, b, T)[0]
    ref = (M(B + dB) - M(B - dB)) / (2 * dB)
    assert chi_isothermal(apical, B, T) == pytest.approx(ref, rel=1e-7)


def test_far_from_crossings_high_T_is_curie(apical):
    T = 200.0
    B = 0.0
    assert chi_isothermal(apical, B, T) == pytest.approx(MU_HO**2 * c_codata() / T, rel=1e-3)


def test_adiabatic_against_brute_force(apical):
    T, B, d = 1.5, 0.03, 1e-5
    M = lambda b, t: brute_magnetisation(apical, b, t)[0]
    E = lambda b, t: brute_magnetisation(apical, b, t)[1]
    chi_T = (M(B + d * 1e-1, T) - M(B - d * 1e-1, T)) / (2 * d * 1e-1)
    dMdT = (M(B, T + d) - M(B, T - d)) / (2 * d)
    C = (E(B, T + d) - E(B, T - d)) / (2 * d)
    ref = chi_T - c_codata() * T * dMdT**2 / C
    assert chi_adiabatic(apical, B, T) == pytest.approx(ref, rel=1e-6)


def test_zero_field_adiabatic_equals_isothermal(apical):
    for T in (0.3, 2.1, 10.0):
        assert chi_adiabatic(apical, 0.0, T) == pytest.approx(chi_isothermal(apical, 0.0, T), rel=1e-12)


def test_two_state_ordering_in_field():
    # one two-level system: energy and moment are perfectly correlated, so
    # the entropy pins the populations and chi_S coincides with chi_I
    sp = two_state(0.015)
    for B, T in ((0.002, 0.05), (0.01, 1.0)):
        t, s, i = chi_isothermal(sp, B, T), chi_adiabatic(sp, B, T), chi_isolated_equilibrium(sp, B, T)
        assert sp.mu_proj**2 * c_codata() / T > t > s > 0
        assert s == pytest.approx(i, rel=1e-12)


def test_hyperfine_species_strict_ordering(apical):
    B, T = 0.05, 0.4
    t, s, i = chi_isothermal(apical, B, T), chi_adiabatic(apical, B, T), chi_isolated_equilibrium(apical, B, T)
    assert t > s > i > 0


def test_high_temperature_adiabatic_gap(apical):
    """chi_T - chi_S falls as 1/T, a fixed fraction (mu_p c B)^2 / var_inf(E) of chi_T."""
    B = 0.05
    E = np.linalg.eigvalsh(full_hamiltonian(apical, B))
    limit = (apical.zeeman_K_per_T * B) ** 2 / E.var()
    gaps = []
    for T in (100.0, 1000.0, 1e4):
        t, s = chi_isothermal(apical, B, T), chi_adiabatic(apical, B, T)
        gaps.append(t - s)
    assert gaps[0] / gaps[1] == pytest.approx(10.0, rel=1e-3)
    assert gaps[1] / gaps[2] == pytest.approx(10.0, rel=1e-4)
    assert gaps[2] / chi_isothermal(apical, B, 1e4) == pytest.approx(limit, rel=1e-6)


def test_adiabatic_zero_heat_capacity_raises():
    sp = SpinSpecies(1.0, 0.0, 1.0)
    with pytest.raises(ThermodynamicsError):
        chi_adiabatic(sp, 0.0, 1e-4)


def test_isolated_against_brute_force(apical):
    for B, T in ((0.023, 2.1), (0.05, 0.4), (0.16, 10.0)):
        ref = brute_isolated(apical, B, T)
        assert chi_isolated_equilibrium(apical, B, T) == pytest.approx(ref, rel=1e-6)


def test_two_state_lorentzian_high_T():
    d = 0.015
    sp = two_state(d)
    T = 100 * d
    half = d / sp.zeeman_K_per_T
    B = np.linspace(-half, half, 101)
    lor = sp.mu_proj**2 * c_codata() / T * d**2 / (d**2 + (sp.zeeman_K_per_T * B) ** 2)
    np.testing.assert_allclose(chi_isolated_equilibrium(sp, B, T), lor, rtol=1e-4)
    peak = chi_isolated_equilibrium(sp, 0.0, T)
    assert chi_isolated_equilibrium(sp, half, T) == pytest.approx(peak / 2, rel=1e-4)


def test_uniform_populations_give_zero(apical):
    pops = custom_populations(apical, np.ones((8, 2)))
    assert chi_isolated(apical, pops, np.linspace(0, 0.2, 11)) == pytest.approx(0.0, abs=1e-12)


def test_high_temperature_peaks_equal(apical):
    fields = [-A_HO * m / apical.zeeman_K_per_T for m in (-0.5, -1.5, -2.5, -3.5)]
    h = chi_isolated_equilibrium(apical, np.array(fields), 1e6)
    np.testing.assert_allclose(h / h[0], 1.0, atol=0.01)


def test_kubo_cross_block_elements_vanish(apical):
    _, V, mu_op = _full_eigensystem(apical, np.array([0.0231]))
    mel = np.einsum("bki,k,bkj->bij", V, mu_op, V)[0]
    for a in range(8):
        for b in range(8):
            if a != b:
                assert np.all(mel[2 * a:2 * a + 2, 2 * b:2 * b + 2] == 0)


def test_kubo_two_state_matrix_element():
    sp = two_state(0.02)
    _, V, mu_op = _full_eigensystem(sp, np.array([0.0]))
    mel = np.einsum("bki,k,bkj->bij", V, mu_op, V)[0]
    assert mel[0, 1] ** 2 == pytest.approx(sp.mu_proj**2, rel=1e-14)


def test_kubo_matches_slope_sum_random_grid(apical):
    rng = np.random.default_rng(7)
    B = rng.uniform(-0.25, 0.25, 200)
    for T in rng.uniform(0.05, 20, 5):
        a = chi_isolated_equilibrium(apical, B, T)
        b = chi_isolated_kubo(apical, T, B)
        assert np.max(np.abs(a - b) / np.abs(a)) < 1e-8


def test_finite_amplitude_small_probe_limit(apical):
    pops = boltzmann_populations(apical, 0.0231, 2.1)
    B0 = np.array([0.0231, 0.05])
    a = chi_isolated_finite_amplitude(apical, pops, B0, 1e-7)
    b = chi_isolated(apical, pops, B0)
    np.testing.assert_allclose(a, b, rtol=1e-6)
    np.testing.assert_array_equal(chi_isolated_finite_amplitude(apical, pops, B0, 0.0), b)


def quad_oracle(sp, pops, B0, b):
    """Fundamental of M(B0 + b sin t) by adaptive quadrature."""
    diff = pops.p_minus - pops.p_plus
    hs = sp.hyperfine_A * sp.m_values()

    def M(B):
        h = hs + sp.zeeman_K_per_T * B
        return float(diff @ (sp.mu_proj * h / np.hypot(h, sp.gap_delta)))

    val, _ = integrate.quad(lambda t: M(B0 + b * math.sin(t)) * math.sin(t), 0, 2 * math.pi,
                            limit=400, epsabs=1e-14, epsrel=1e-12)
    return val / (math.pi * b)


@pytest.mark.parametrize("d, b", [(0.001, 2e-4), (0.015, 2e-4), (0.1, 2e-4), (0.015, 1e-3)])
def test_finite_amplitude_against_quadrature(d, b):
    sp = two_state(d)
    pops = boltzmann_populations(sp, 0.0, 2.1)
    got = chi_isolated_finite_amplitude(sp, pops, 0.0, b)
    assert got == pytest.approx(quad_oracle(sp, pops, 0.0, b), rel=1e-6)


def test_finite_amplitude_suppression_trend():
    ratios = []
    for d in (0.0005, 0.001, 0.002, 0.015, 0.1):
        sp = two_state(d)
        pops = boltzmann_populations(sp, 0.0, 2.1)
        ratios.append(chi_isolated_finite_amplitude(sp, pops, 0.0, 2e-4) / chi_isolated(sp, pops, 0.0))
    assert all(a < b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] > 0.99
    assert ratios[0] < 0.5


def test_finite_amplitude_rejects_negative_probe(apical):
    with pytest.raises(ValueError):
        chi_isolated_finite_amplitude(apical, boltzmann_populations(apical, 0.0, 1.0), 0.0, -1e-4)


def test_plateau_limits_and_debye_peak():
    chi_T, chi_S, chi_I = 3.0, 2.0, 0.5
    tau1, tau2 = 1.0, 1e-6
    lo, hi = plateau_model(chi_T, chi_S, chi_I, tau1, tau2, np.array([1e-9, 1e12]))
    assert lo.real == pytest.approx(chi_T, rel=1e-8)
    assert hi.real == pytest.approx(chi_I, rel=1e-5)
    peak = plateau_model(chi_T, chi_S, chi_I, tau1, tau2, 1 / tau1)
    assert peak.imag == pytest.approx((chi_T - chi_S) / 2, rel=1e-5)
    w = np.geomspace(1e-4, 1e9, 300)
    assert np.all(plateau_model(chi_T, chi_S, chi_I, tau1, tau2, w).imag >= 0)


@pytest.mark.parametrize("args", [(1, 2, 0.5, 1.0, 0.1), (3, 2, 0.5, 0.1, 1.0), (3, 2, -0.5, 1.0, 0.1)])
def test_plateau_validation(args):
    with pytest.raises(ValueError):
        plateau_model(*args, 1.0)


def test_response_curve_validation():
    with pytest.raises(ValueError):
        ResponseCurve([0.0, 0.0], [1.0, 1.0], "isolated")
    with pytest.raises(ValueError):
        ResponseCurve([0.0, 1.0], [1.0, np.nan], "isolated")
    with pytest.raises(ValueError):
        ResponseCurve([0.0, 1.0], [1.0, -1.0], "isolated")
    with pytest.raises(ValueError):
        ResponseCurve([0.0, 1.0], [1.0, 1.0], "magic")
    c = ResponseCurve([0.0, 1.0], [1.0, 2.0], "isothermal")
    with pytest.raises(ValueError):
        c.values[0] = 3.0


@settings(max_examples=40, deadline=None)
@given(
    B=st.floats(-0.3, 0.3),
    T=st.floats(0.05, 50.0),
    d=st.floats(1e-3, 0.3),
    proj=st.sampled_from([1.0, 1 / 3]),
)
def test_ordering_property(B, T, d, proj):
    sp = SpinSpecies(MU_HO, A_HO, d, proj, 3.5)
    t, s, i = chi_isothermal(sp, B, T), chi_adiabatic(sp, B, T), chi_isolated_equilibrium(sp, B, T)
    tol = 1e-10 * t
    assert t + tol >= s and s + tol >= i and i >= -tol
