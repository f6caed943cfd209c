import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionspin.dynamics import DecoherenceModel, flop_signal
from ionspin.physics import TWO_PI, PhononDistribution, TransitionSpec, thermal_distribution
from ionspin.tomography import (
    DeconvolutionError,
    RabiTrace,
    TomographyError,
    bootstrap_uncertainties,
    cosine_transform,
    deconvolve,
    default_frequency_grid,
    heating_rate_fit,
    mean_phonon,
    predict_line_positions,
    synthetic_trace,
    validate_round_trip,
)

BSB = TransitionSpec(TWO_PI * 250e3, 0.21, "blue_sideband")
DEC = DecoherenceModel(1 / 280e-6, 0.96)
TIMES = np.arange(0, 640e-6 + 1e-12, 0.5e-6)
LINES10 = predict_line_positions(BSB.base_rabi_frequency, 0.21, 10)


def test_trace_validation():
    with pytest.raises(TomographyError):
        RabiTrace([0, 2, 1], [0.5, 0.5, 0.5])
    with pytest.raises(TomographyError):
        RabiTrace([0, 1], [0.5, 1.5])
    with pytest.raises(TomographyError):
        RabiTrace([0, 1, 2], [0.5, 0.5])
    assert RabiTrace(TIMES, np.full(TIMES.size, 0.5)).is_uniform
    assert not RabiTrace([0, 1, 3], [0.5, 0.5, 0.5]).is_uniform


def test_line_positions_start_at_ground_state_value():
    assert LINES10[0] == pytest.approx(TWO_PI * 250e3 * 0.21 * math.exp(-0.21 ** 2 / 2))
    with pytest.raises(TomographyError):
        predict_line_positions(1.0, 0.1, -1)


@given(st.floats(1e-4, 0.2))
def test_line_positions_increase(eta):
    lines = predict_line_positions(1.0, eta, 20)
    assert np.all(np.diff(lines) > 0)


@pytest.mark.xfail(strict=True, reason="Omega_{n,n+1} turns over above eta ~ 0.2033 within n <= 20 "
                                       "(n = 9 at eta = 0.3); matrix elements match the displacement operator")
def test_line_positions_increase_up_to_eta_0_3():
    lines = predict_line_positions(1.0, 0.3, 20)
    assert np.all(np.diff(lines) > 0)


def test_cosine_transform_peaks_at_lines():
    dist = PhononDistribution.normalized([0.6, 0.4])
    trace = synthetic_trace(dist, BSB, DecoherenceModel(0.0, 1.0), TIMES, None)
    lines = LINES10[:2]
    grid = default_frequency_grid(lines, trace)
    spec = cosine_transform(trace, grid, lines)
    assert grid[-1] <= math.pi / trace.dt + 1e-9
    assert grid[-1] >= lines[-1]
    for w in lines:
        near = np.abs(grid - w) < 0.2 * (lines[1] - lines[0])
        assert spec.magnitudes[near].max() > 0.1
    with pytest.raises(TomographyError):
        cosine_transform(RabiTrace([0, 1, 3], [0.5, 0.5, 0.5]), grid)


@settings(max_examples=25)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2 ** 32 - 1))
def test_cosine_transform_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(64) * 1e-6
    x, y = rng.random(64), rng.random(64)
    scale = max(1.0, a + b)
    a, b = a / scale, b / scale
    grid = np.linspace(0, 3e6, 50)

    def tf(v):
        return cosine_transform(RabiTrace(t, v), grid).magnitudes

    assert np.max(np.abs(tf(a * x + b * y) - (a * tf(x) + b * tf(y)))) < 1e-10


def test_noiseless_round_trip_thermal_quarter():
    dist = thermal_distribution(0.24, 10, tail_tolerance=1e-5)
    trace = synthetic_trace(dist, BSB, DEC, TIMES, None)
    fit = deconvolve(trace, LINES10)
    assert np.max(np.abs(fit.populations - dist.probabilities)) < 0.01
    assert fit.mean_phonon == pytest.approx(0.24, abs=0.02)
    assert fit.contrast == pytest.approx(0.96, abs=1e-3)
    assert fit.decay_rate == pytest.approx(1 / 280e-6, rel=1e-2)
    assert not fit.model_mismatch


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 2.0))
def test_noiseless_round_trip_any_cold_thermal(nbar):
    dist = thermal_distribution(nbar, 10, tail_tolerance=0.2)
    trace = synthetic_trace(dist, BSB, DEC, TIMES, None)
    fit = deconvolve(trace, LINES10, contrast=0.9, decay_rate=1 / 400e-6)
    assert np.max(np.abs(fit.populations - dist.probabilities)) < 0.01


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([20, 100, 1000]))
def test_deconvolve_always_returns_a_distribution(seed, shots):
    rng = np.random.default_rng(seed)
    y = rng.binomial(shots, rng.random(TIMES.size)) / shots
    try:
        fit = deconvolve(RabiTrace(TIMES, y, shots), LINES10[:4])
    except DeconvolutionError as exc:
        fit = exc.best
    p = fit.populations
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9
    assert fit.residual_norm >= 0


def test_single_line_on_multi_line_trace_is_flagged():
    trace = synthetic_trace(thermal_distribution(1.5, 40), BSB, DEC, TIMES, 100, seed=5)
    fit = deconvolve(trace, LINES10[:1])
    assert fit.model_mismatch
    assert fit.reduced_chi2 > 2


def test_too_short_trace_is_rejected():
    with pytest.raises(TomographyError):
        deconvolve(RabiTrace(TIMES[:20], np.full(20, 0.5)), LINES10)


def test_non_convergence_carries_best_iterate():
    trace = synthetic_trace(thermal_distribution(0.24, 40), BSB, DEC, TIMES, 100, seed=1)
    with pytest.raises(DeconvolutionError) as err:
        deconvolve(trace, LINES10[:4], max_iterations=2)
    assert len(err.value.residual_history) == 3
    assert abs(err.value.best.populations.sum() - 1) < 1e-9


def test_bootstrap_uncertainties_are_finite():
    trace = synthetic_trace(thermal_distribution(0.24, 40), BSB, DEC, TIMES, 100, seed=2)
    lines = LINES10[:4]
    fit = deconvolve(trace, lines, n_bootstrap=10, rng=np.random.default_rng(0))
    assert fit.uncertainties.shape == (4,)
    assert np.all(fit.uncertainties >= 0) and fit.uncertainties[0] > 0
    assert 0 < fit.mean_phonon_error < 0.2
    assert np.all(np.isfinite(bootstrap_uncertainties(trace, lines, fit, 5)))


def test_mean_phonon_reports_truncation_bound():
    d = PhononDistribution.normalized([0.7, 0.2, 0.1])
    assert mean_phonon(d) == pytest.approx((0.4, 0.2))


def test_noisy_round_trip_is_unbiased():
    stats = validate_round_trip(thermal_distribution(0.24, 40), BSB, DEC, TIMES, 100, 12, seed=11, n_max=3)
    assert abs(stats.nbar_bias) < 0.03
    assert stats.fraction_within(0.05) >= 0.75
    assert stats.failures == 0


# ---------------------------------------------------------------- heating fits

def test_heating_fit_two_exact_points():
    fit = heating_rate_fit([(0.0, 0.24), (2.0, 0.84)])
    assert fit.slope == pytest.approx(0.3, rel=1e-12)
    assert fit.intercept == pytest.approx(0.24, rel=1e-12)
    assert fit.slope_error == 0


def test_heating_fit_with_sigmas_uses_absolute_errors():
    x = np.array([0, 1.5, 3, 6])
    pts = [(a, 0.24 + 0.3 * a, 0.05) for a in x]
    fit = heating_rate_fit(pts)
    expected = 0.05 / math.sqrt(np.sum((x - x.mean()) ** 2))
    assert fit.slope_error == pytest.approx(expected, rel=1e-9)


def test_heating_fit_rejects_degenerate_input():
    with pytest.raises(TomographyError):
        heating_rate_fit([(1.0, 0.5)])
    with pytest.raises(TomographyError):
        heating_rate_fit([(1.0, 0.5), (1.0, 0.7)])


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 5)), min_size=3, max_size=8, unique_by=lambda p: p[0]),
       st.floats(0.1, 10))
def test_heating_fit_equivariant_under_delay_scaling(pts, c):
    if np.ptp([p[0] for p in pts]) < 1e-3:
        return
    a = heating_rate_fit(pts)
    b = heating_rate_fit([(d * c, n) for d, n in pts])
    assert b.slope == pytest.approx(a.slope / c, rel=1e-9, abs=1e-12)
    assert np.all(np.asarray(a.slope_error) >= 0)


def test_flop_signal_used_by_synthetic_trace():
    dist = thermal_distribution(0.24, 40)
    tr = synthetic_trace(dist, BSB, DEC, TIMES[:50], None)
    assert np.allclose(tr.p_down, flop_signal(dist, BSB, DEC, TIMES[:50]))
    noisy = synthetic_trace(dist, BSB, DEC, TIMES[:50], 100, seed=3)
    again = synthetic_trace(dist, BSB, DEC, TIMES[:50], 100, seed=3)
    assert np.array_equal(noisy.p_down, again.p_down)
