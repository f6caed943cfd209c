import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import eval_genlaguerre

from ionspin.physics import (
    CA40_MASS,
    TWO_PI,
    AtomicConstants,
    CutoffError,
    LaserBeamSpec,
    PhononDistribution,
    PhysicsDomainError,
    TransitionSpec,
    TrapConfig,
    ac_stark_shift,
    effective_wavevector,
    generalized_rabi_transfer,
    lamb_dicke_factor,
    laguerre,
    minimum_thermal_cutoff,
    rabi_per_scatter_figure_of_merit,
    raman_rabi_frequency,
    scattering_probability,
    scattering_rate,
    sideband_matrix_element,
    sideband_matrix_elements,
    thermal_distribution,
)

# CODATA 2018 values typed in by hand so the oracle does not share scipy's table
HBAR = 1.054571817e-34
AMU = 1.66053906660e-27
AXIAL = TWO_PI * 1.35e6


def eta_oracle(k):
    return k * math.sqrt(HBAR / (2 * 40 * AMU * AXIAL))


def displacement_oracle(eta, dim=90):
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    return expm(1j * eta * (a + a.T))


def beam(label="q729", angle=45, wavelength=729e-9, rabi=TWO_PI * 150e3, detuning=0.0):
    return LaserBeamSpec(rabi, detuning, wavelength, math.radians(angle), label)


# ---------------------------------------------------------------- Lamb-Dicke

def test_729_beam_at_45_degrees():
    k = effective_wavevector(beam())
    eta = lamb_dicke_factor(k, AXIAL, CA40_MASS)
    assert eta == pytest.approx(eta_oracle(TWO_PI / 729e-9 * math.cos(math.pi / 4)), rel=1e-8)
    assert eta == pytest.approx(0.05896, abs=5e-5)


def test_raman_pair_difference_vector_lies_on_axis():
    r1 = beam("R1", 45, 397e-9)
    r2 = beam("R2", 135, 397e-9)
    k = effective_wavevector(r1, r2)
    assert k == pytest.approx(math.sqrt(2) * TWO_PI / 397e-9, rel=1e-12)
    assert effective_wavevector(r1, r2, axis=(0, 1, 0)) == pytest.approx(0.0, abs=1e-6)
    assert lamb_dicke_factor(k, AXIAL) == pytest.approx(eta_oracle(k), rel=1e-8)


def test_copropagating_pair_has_no_motional_coupling():
    assert effective_wavevector(beam("R1", 45, 397e-9), beam("CC", 45, 397e-9)) == pytest.approx(0, abs=1e-6)
    assert lamb_dicke_factor(0.0, AXIAL) == 0.0


@pytest.mark.parametrize("k,w,m", [(-1.0, AXIAL, CA40_MASS), (1.0, 0.0, CA40_MASS), (1.0, AXIAL, 0.0)])
def test_lamb_dicke_rejects_bad_inputs(k, w, m):
    with pytest.raises(PhysicsDomainError):
        lamb_dicke_factor(k, w, m)


@given(st.floats(1e5, 1e8), st.floats(1e5, 1e8))
def test_lamb_dicke_scales_as_inverse_root_frequency(k, w):
    assert lamb_dicke_factor(k, 4 * w) == pytest.approx(lamb_dicke_factor(k, w) / 2, rel=1e-14)


def test_domain_types_reject_invalid_fields():
    with pytest.raises(PhysicsDomainError):
        TrapConfig(AXIAL, (TWO_PI * 2e6, TWO_PI * 2e6))
    with pytest.raises(PhysicsDomainError):
        TrapConfig(-AXIAL)
    with pytest.raises(PhysicsDomainError):
        beam(wavelength=0)
    with pytest.raises(PhysicsDomainError):
        beam(rabi=-1)
    with pytest.raises(PhysicsDomainError):
        TransitionSpec(1.0, 1.0)
    with pytest.raises(PhysicsDomainError):
        TransitionSpec(-1.0, 0.1)
    with pytest.raises(PhysicsDomainError):
        AtomicConstants(dipole_linewidth=0)
    with pytest.raises(PhysicsDomainError):
        PhononDistribution(np.array([1.0]))
    with pytest.raises(PhysicsDomainError):
        PhononDistribution(np.array([0.5, 0.4]))


# ---------------------------------------------------------------- Raman, scattering, Stark

def test_raman_rabi_frequency_values():
    assert raman_rabi_frequency(2.0, 3.0, 6.0) == 0.5
    assert raman_rabi_frequency(2.0, 3.0, -6.0) == 0.5
    with pytest.raises(PhysicsDomainError):
        raman_rabi_frequency(1.0, 1.0, 0.0)


def test_scattering_and_stark_formulae():
    om, d = TWO_PI * 100e6, TWO_PI * 40e9
    assert scattering_probability(om, d) == pytest.approx(om ** 2 / (2 * d ** 2))
    assert scattering_rate(om, d) == pytest.approx(TWO_PI * 22e6 * om ** 2 / (2 * d ** 2))
    assert ac_stark_shift(om, d) == pytest.approx(om ** 2 / (4 * d))
    assert ac_stark_shift(om, -d) == pytest.approx(-om ** 2 / (4 * d))
    for f in (scattering_probability, ac_stark_shift):
        with pytest.raises(PhysicsDomainError):
            f(om, 0.0)


def test_figure_of_merit_value():
    d = TWO_PI * 40e9
    assert rabi_per_scatter_figure_of_merit(d) == pytest.approx(math.sqrt(18) * 40e9 / 22e6, rel=1e-12)
    assert rabi_per_scatter_figure_of_merit(-d) == rabi_per_scatter_figure_of_merit(d)


@given(st.floats(1e6, 1e10), st.floats(1e6, 1e10), st.floats(1e9, 1e12), st.booleans())
def test_raman_over_scatter_identity(o1, o2, d, negative):
    d = -d if negative else d
    g = AtomicConstants().dipole_linewidth
    ratio = raman_rabi_frequency(o1, o2, d) / math.sqrt(g * scattering_probability(o1, d) * g * scattering_probability(o2, d))
    assert ratio == pytest.approx(abs(d) / g, rel=1e-12)


# ---------------------------------------------------------------- thermal states

def test_thermal_mean_and_tail_rule():
    d = thermal_distribution(0.24, 40)
    assert d.mean() == pytest.approx(0.24, abs=1e-9)
    assert d.probabilities[0] == pytest.approx(1 / 1.24, rel=1e-9)
    assert thermal_distribution(15, 300).mean() == pytest.approx(15, abs=0.01)


def test_thermal_cutoff_too_small_names_minimum():
    with pytest.raises(CutoffError) as err:
        thermal_distribution(15, 200)
    assert err.value.minimum_cutoff == 214
    assert "214" in str(err.value)
    assert minimum_thermal_cutoff(15) == 214
    thermal_distribution(15, 214)


def test_thermal_cutoff_200_with_relaxed_tail():
    d = thermal_distribution(15, 200, tail_tolerance=1e-5)
    assert d.mean() == pytest.approx(15, abs=0.01)


def test_thermal_zero_is_ground_state():
    assert thermal_distribution(0, 5).probabilities.tolist() == [1, 0, 0, 0, 0, 0]
    with pytest.raises(PhysicsDomainError):
        thermal_distribution(-0.1, 5)


@given(st.floats(0, 50))
def test_thermal_distribution_is_normalised(nbar):
    d = thermal_distribution(nbar, minimum_thermal_cutoff(nbar) + 1)
    assert abs(d.probabilities.sum() - 1) < 1e-9
    assert np.all(d.probabilities >= 0)


# ---------------------------------------------------------------- matrix elements

def test_laguerre_matches_scipy():
    for n in range(12):
        for alpha in (0, 1, 3):
            for x in (0.0, 0.0441, 0.5, 2.0):
                assert laguerre(n, alpha, x) == pytest.approx(eval_genlaguerre(n, alpha, x), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("eta", [0.06, 0.21, 0.5])
def test_matrix_elements_match_displacement_operator(eta):
    d = displacement_oracle(eta)
    for n in range(20):
        for m in range(max(0, n - 3), n + 4):
            assert sideband_matrix_element(n, m, eta) == pytest.approx(abs(d[m, n]), abs=1e-10)


def test_blue_sideband_ground_state_value():
    eta = 0.21
    assert sideband_matrix_element(0, 1, eta) == pytest.approx(eta * math.exp(-eta ** 2 / 2), rel=1e-12)


def test_large_n_matrix_element_stays_finite():
    v = sideband_matrix_element(400, 401, 0.06)
    assert math.isfinite(v) and 0 <= v <= 1
    with pytest.raises(PhysicsDomainError):
        sideband_matrix_element(-1, 0, 0.1)


@settings(max_examples=60)
@given(st.integers(0, 20), st.floats(1e-5, 0.01))
def test_lamb_dicke_limit(n, eta):
    # first-order correction -eta^2 (n+1)/2; the remainder is O(eta^4 n^2) < 1e-6 on this domain
    ratio = sideband_matrix_element(n, n + 1, eta) / (eta * math.sqrt(n + 1))
    assert ratio == pytest.approx(1 - eta ** 2 * (n + 1) / 2, abs=1e-6)


@given(st.integers(0, 30), st.integers(0, 30), st.floats(0, 0.9))
def test_matrix_element_symmetry(n, m, eta):
    assert sideband_matrix_element(n, m, eta) == sideband_matrix_element(m, n, eta)


def test_transition_rabi_frequencies():
    tr = TransitionSpec(TWO_PI * 250e3, 0.21, "red_sideband")
    om = tr.rabi_frequencies([0, 1, 2])
    assert om[0] == 0
    assert om[1] == pytest.approx(TWO_PI * 250e3 * sideband_matrix_element(1, 0, 0.21))
    assert np.allclose(sideband_matrix_elements([1, 2], [0, 1], 0.21), om[1:] / (TWO_PI * 250e3))


# ---------------------------------------------------------------- Rabi transfer

def test_rabi_transfer_pi_pulse_and_detuned():
    om = TWO_PI * 50e3
    assert generalized_rabi_transfer(om, 0.0, math.pi / om) == pytest.approx(1.0)
    assert generalized_rabi_transfer(0.0, 0.0, 1.0) == 0.0
    assert generalized_rabi_transfer(om, om, 1e-3) <= 0.5 + 1e-15


@given(st.floats(0, 1e7), st.floats(-1e7, 1e7), st.floats(0, 1e-3))
def test_rabi_transfer_bounds_and_period(om, d, t):
    v = generalized_rabi_transfer(om, d, t)
    assert 0 <= v <= 1
    w = math.hypot(om, d)
    if w > 1:
        assert generalized_rabi_transfer(om, d, t + TWO_PI / w) == pytest.approx(v, abs=1e-6)
