"""Coherent dynamics: the blue-sideband flopping model, a fixed-step RK4
two-level integrator for shaped pulses, readout transfer curves and Ramsey
Stark-shift scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .physics import (
    TWO_PI,
    LaserBeamSpec,
    PhononDistribution,
    PhysicsDomainError,
    TransitionSpec,
    ac_stark_shift,
    sideband_matrix_elements,
)

ENVELOPES = ("square", "gaussian", "sine_squared")
READOUT_SCHEMES = ("gaussian_pi", "single_rap", "double_rap")


class IntegrationError(RuntimeError):
    def __init__(self, message: str, achieved_tolerance: float):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecoherenceModel:
    coherence_decay_rate: float = 0.0
    readout_contrast: float = 1.0

    def __post_init__(self):
        if self.coherence_decay_rate < 0:
            raise PhysicsDomainError("decay rate must be non-negative")
        if not 0 < self.readout_contrast <= 1:
            raise PhysicsDomainError("readout contrast must lie in (0, 1]")


@dataclass(frozen=True)
class ShapedPulse:
    """Amplitude-shaped, linearly chirped pulse.

    The detuning is ``center_detuning + chirp_rate * (t - duration / 2)``.
    For the gaussian envelope ``sigma`` is its rms width; the envelope is
    evaluated on [0, duration] around the pulse centre.
    """

    duration: float
    peak_rabi_frequency: float
    envelope: str = "square"
    sigma: Optional[float] = None
    center_detuning: float = 0.0
    chirp_rate: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise PhysicsDomainError("pulse duration must be positive")
        if self.peak_rabi_frequency < 0:
            raise PhysicsDomainError("envelope must be non-negative")
        if self.envelope not in ENVELOPES:
            raise PhysicsDomainError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "gaussian" and not (self.sigma and self.sigma > 0):
            raise PhysicsDomainError("gaussian envelope needs sigma > 0")
        if not math.isfinite(self.chirp_rate):
            raise PhysicsDomainError("chirp rate must be finite")

    def rabi(self, t):
        t = np.asarray(t, dtype=float)
        if self.envelope == "square":
            return np.full(t.shape, self.peak_rabi_frequency)
        if self.envelope == "gaussian":
            return self.peak_rabi_frequency * np.exp(-((t - self.duration / 2) ** 2) / (2 * self.sigma ** 2))
        return self.peak_rabi_frequency * np.sin(np.pi * t / self.duration) ** 2

    def detuning(self, t):
        return self.center_detuning + self.chirp_rate * (np.asarray(t, dtype=float) - self.duration / 2)

    def max_detuning(self) -> float:
        return abs(self.center_detuning) + abs(self.chirp_rate) * self.duration / 2

    def area(self, samples: int = 20001) -> float:
        t = np.linspace(0, self.duration, samples)
        return float(np.trapezoid(self.rabi(t), t))


def gaussian_pi_pulse(sigma: float, center_detuning: float = 0.0) -> ShapedPulse:
    """Gaussian pulse truncated at +-3 sigma, peak rescaled so the truncated area is pi."""
    duration = 6 * sigma
    # area of the truncated unit-peak gaussian
    area = sigma * math.sqrt(2 * math.pi) * math.erf(3 / math.sqrt(2))
    return ShapedPulse(duration, math.pi / area, "gaussian", sigma=sigma, center_detuning=center_detuning)


def rap_pulse(peak_rabi_frequency: float = TWO_PI * 150e3, sweep_half_range: float = TWO_PI * 300e3,
              duration: float = 200e-6, center_detuning: float = 0.0) -> ShapedPulse:
    """Sine-squared amplitude with a linear chirp across +-sweep_half_range."""
    return ShapedPulse(duration, peak_rabi_frequency, "sine_squared",
                       center_detuning=center_detuning, chirp_rate=2 * sweep_half_range / duration)


@dataclass
class SpinFockState:
    """Amplitudes over {down, up} x Fock states, shape (2, cutoff + 1)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 2 or a.shape[0] != 2:
            raise PhysicsDomainError("amplitudes must have shape (2, cutoff + 1)")
        if abs(np.vdot(a, a).real - 1) > 1e-9:
            raise PhysicsDomainError("state is not normalised")
        self.amplitudes = a

    @classmethod
    def down(cls, n: int, cutoff: int) -> "SpinFockState":
        a = np.zeros((2, cutoff + 1), dtype=complex)
        a[0, n] = 1
        return cls(a)

    @property
    def cutoff(self) -> int:
        return self.amplitudes.shape[1] - 1

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def p_down(self) -> float:
        return float(np.sum(np.abs(self.amplitudes[0]) ** 2))

    def evolve_resonant(self, transition: TransitionSpec, t: float) -> "SpinFockState":
        """Exact evolution under a resonant square pulse.

        The interaction couples |down, n> to |up, n + dn> only, so every pair
        rotates independently at its own Rabi frequency.
        """
        dn = transition.phonon_change
        a = self.amplitudes
        out = np.zeros_like(a)
        size = a.shape[1]
        coupled_up = set()
        for n in range(size):
            m = n + dn
            if not 0 <= m < size:
                out[0, n] += a[0, n]
                continue
            om = transition.rabi_frequencies([n])[0]
            c, s = math.cos(om * t / 2), math.sin(om * t / 2)
            out[0, n] += c * a[0, n] - 1j * s * a[1, m]
            out[1, m] += -1j * s * a[0, n] + c * a[1, m]
            coupled_up.add(m)
        for m in range(size):
            if m not in coupled_up:
                out[1, m] += a[1, m]
        return SpinFockState(out)


def flop_signal(dist: PhononDistribution, transition: TransitionSpec,
                decoherence: DecoherenceModel, times: Sequence[float]) -> np.ndarray:
    """Spin-down population sum_n P_n/2 (A cos(Omega_n t) e^{-gamma t} + 1)."""
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise PhysicsDomainError("times must be non-negative")
    omegas = transition.rabi_frequencies(dist.n)
    osc = np.cos(np.outer(t, omegas)) @ dist.probabilities
    a, g = decoherence.readout_contrast, decoherence.coherence_decay_rate
    return 0.5 * (a * osc * np.exp(-g * t) + dist.probabilities.sum())


def _step_size(pulse: ShapedPulse, max_offset: float, max_scale: float, steps_per_cycle: float,
               norm_tolerance: float) -> tuple[float, int]:
    w_max = max(pulse.peak_rabi_frequency * max_scale, pulse.max_detuning() + abs(max_offset))
    h = pulse.duration / 1000
    if w_max > 0:
        h = min(h, TWO_PI / (steps_per_cycle * w_max))
        # RK4 norm defect per step ~ (h lam)^6 / 72 with lam the largest
        # eigenvalue of H; keep the accumulated defect well under norm_tolerance
        lam = 0.5 * math.hypot(pulse.peak_rabi_frequency * max_scale, pulse.max_detuning() + abs(max_offset))
        h_norm = (72 * norm_tolerance / 100 / (pulse.duration * lam)) ** 0.2 / lam
        h = min(h, h_norm)
    n = max(1, math.ceil(pulse.duration / h))
    return pulse.duration / n, n


def _rk4_batch(pulse: ShapedPulse, c_g: np.ndarray, c_e: np.ndarray, offsets: np.ndarray,
               scales: np.ndarray, h: float, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Integrate i d/dt (c_g, c_e) = H (c_g, c_e) with
    H = 1/2 [[-delta, Omega e^{-i phi}], [Omega e^{i phi}, delta]] for a batch
    of detuning offsets and Rabi-frequency scale factors."""
    eph = np.exp(1j * pulse.phase)
    emph = np.conj(eph)

    def deriv(t, g, e):
        om = scales * float(pulse.rabi(t))
        de = float(pulse.detuning(t)) + offsets
        return (-0.5j * (-de * g + om * emph * e),
                -0.5j * (om * eph * g + de * e))

    g, e = c_g, c_e
    for k in range(n_steps):
        t = k * h
        k1g, k1e = deriv(t, g, e)
        k2g, k2e = deriv(t + h / 2, g + h / 2 * k1g, e + h / 2 * k1e)
        k3g, k3e = deriv(t + h / 2, g + h / 2 * k2g, e + h / 2 * k2e)
        k4g, k4e = deriv(t + h, g + h * k3g, e + h * k3e)
        g = g + h / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)
        e = e + h / 6 * (k1e + 2 * k2e + 2 * k3e + k4e)
    return g, e


def integrate_many(pulse: ShapedPulse, offsets, scales=1.0, initial=(1.0, 0.0),
                   steps_per_cycle: float = 50, norm_tolerance: float = 1e-8,
                   step_factor: float = 1.0) -> tuple[np.ndarray, np.ndarray, int]:
    """Batched :func:`integrate_two_level` over broadcast offsets and Rabi scales.

    Returns the final amplitude arrays (c_initial, c_target) and the step count.
    """
    offsets, scales = np.broadcast_arrays(np.asarray(offsets, dtype=float), np.asarray(scales, dtype=float))
    offsets, scales = offsets.astype(float), scales.astype(float)
    h, n = _step_size(pulse, float(np.max(np.abs(offsets))), float(np.max(np.abs(scales))),
                      steps_per_cycle, norm_tolerance)
    if step_factor != 1.0:
        n = max(1, math.ceil(n * step_factor))
        h = pulse.duration / n
    g0 = np.full(offsets.shape, initial[0], dtype=complex)
    e0 = np.full(offsets.shape, initial[1], dtype=complex)
    norm0 = np.abs(g0) ** 2 + np.abs(e0) ** 2
    g, e = _rk4_batch(pulse, g0, e0, offsets, scales, h, n)
    drift = float(np.max(np.abs(np.abs(g) ** 2 + np.abs(e) ** 2 - norm0))) if g.size else 0.0
    if drift > norm_tolerance:
        raise IntegrationError(f"norm drift {drift:.3g} exceeds tolerance {norm_tolerance:.3g}", drift)
    return g, e, n


@dataclass
class TwoLevelResult:
    amplitudes: np.ndarray
    transfer: float
    steps: int = field(default=0)


def integrate_two_level(pulse: ShapedPulse, initial=(1.0, 0.0), detuning_offset: float = 0.0,
                        rabi_scale: float = 1.0, norm_tolerance: float = 1e-8,
                        step_factor: float = 1.0) -> TwoLevelResult:
    """Fixed-step RK4 integration of the rotating-frame two-level equation.

    ``transfer`` is the final population of the second (target) level.
    ``step_factor`` > 1 refines the step, which is how convergence is checked.
    """
    initial = np.asarray(initial, dtype=complex)
    g, e, n = integrate_many(pulse, [detuning_offset], [rabi_scale], tuple(initial),
                             norm_tolerance=norm_tolerance, step_factor=step_factor)
    amps = np.array([g[0], e[0]])
    return TwoLevelResult(amps, float(abs(e[0]) ** 2), n)


def _phonon_groups(dist: PhononDistribution, eta: float, max_groups: int):
    """Collapse the distribution into at most ``max_groups`` carrier-coupling
    nodes of equal probability mass; exact when the support is smaller."""
    p = dist.probabilities
    keep = np.nonzero(p > 1e-12)[0]
    scales = sideband_matrix_elements(keep, keep, eta)
    w = p[keep]
    if keep.size <= max_groups:
        return scales, w / w.sum()
    edges = np.linspace(0, 1, max_groups + 1)
    cum = np.cumsum(w) / w.sum()
    idx = np.clip(np.searchsorted(edges[1:-1], cum - w / w.sum() / 2), 0, max_groups - 1)
    gw = np.bincount(idx, weights=w, minlength=max_groups)
    gs = np.bincount(idx, weights=w * scales, minlength=max_groups)
    ok = gw > 0
    return gs[ok] / gw[ok], gw[ok] / gw[ok].sum()


def readout_transfer_curve(scheme: str, detuning_grid, motional_spread: Optional[PhononDistribution] = None,
                           lamb_dicke: float = 0.06, pulse: Optional[ShapedPulse] = None,
                           second_pulse: Optional[ShapedPulse] = None, max_phonon_groups: int = 24,
                           norm_tolerance: float = 1e-6) -> np.ndarray:
    """Shelving efficiency versus central detuning.

    Each grid point averages the transfer over the phonon distribution, with
    the carrier Rabi frequency scaled by the n-dependent carrier matrix
    element. ``double_rap`` applies a second RAP (``second_pulse``, default
    the same pulse) to the population left behind: eff = T1 + (1 - T1) T2.
    """
    if scheme not in READOUT_SCHEMES:
        raise ValueError(f"unknown readout scheme {scheme!r}; expected one of {READOUT_SCHEMES}")
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("detuning grid is empty")
    if pulse is None:
        pulse = gaussian_pi_pulse(5e-6) if scheme == "gaussian_pi" else rap_pulse()
    if motional_spread is None:
        motional_spread = PhononDistribution.fock(0, 1)
    scales, weights = _phonon_groups(motional_spread, lamb_dicke, max_phonon_groups)

    def average_transfer(p: ShapedPulse) -> np.ndarray:
        off = grid[:, None] + np.zeros_like(scales)[None, :]
        _, e, _ = integrate_many(p, off, scales[None, :], norm_tolerance=norm_tolerance)
        return (np.abs(e) ** 2) @ weights

    t1 = average_transfer(pulse)
    if scheme != "double_rap":
        return t1
    t2 = t1 if second_pulse is None else average_transfer(second_pulse)
    return compose_double_rap(t1, t2)


def compose_double_rap(t1, t2):
    return np.asarray(t1) + (1 - np.asarray(t1)) * np.asarray(t2)


def curve_fwhm(grid, curve) -> float:
    """Full width at half maximum of a single-peaked curve, linear interpolation at the edges."""
    x, y = np.asarray(grid, dtype=float), np.asarray(curve, dtype=float)
    half = y.max() / 2
    above = np.nonzero(y >= half)[0]
    lo, hi = above[0], above[-1]

    def cross(i, j):
        if y[j] == y[i]:
            return x[i]
        return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])

    left = x[0] if lo == 0 else cross(lo - 1, lo)
    right = x[-1] if hi == len(x) - 1 else cross(hi, hi + 1)
    return float(right - left)


@dataclass
class RamseyResult:
    durations: np.ndarray
    signal: np.ndarray
    true_shift: float
    extracted_shift: float
    extraction_error: float
    fringe_period: Optional[float]
    no_fringe: bool = False


def ramsey_signal(stark_shift: float, durations) -> np.ndarray:
    return 0.5 * (1 + np.cos(stark_shift * np.asarray(durations, dtype=float)))


def fit_ramsey_fringe(durations, signal) -> tuple[float, float]:
    """Fit 1/2 (1 + c cos(w t)) + b to a fringe; returns (w, standard error of w)."""
    t = np.asarray(durations, dtype=float)
    y = np.asarray(signal, dtype=float)
    span = t[-1] - t[0]
    # coarse search over trial frequencies, then least squares refinement
    dt = np.min(np.diff(t))
    trial = np.linspace(TWO_PI / span, np.pi / dt, 4000)
    proj = np.abs(np.cos(np.outer(trial, t)) @ (y - y.mean()))
    w0 = trial[np.argmax(proj)]

    def model(tt, w, c, b):
        return 0.5 * (1 + c * np.cos(w * tt)) + b

    try:
        popt, pcov = curve_fit(model, t, y, p0=(w0, 1.0, 0.0))
    except RuntimeError as exc:
        raise FitError(f"fringe fit failed: {exc}") from exc
    err = float(np.sqrt(abs(pcov[0, 0]))) if np.all(np.isfinite(pcov)) else 0.0
    return abs(float(popt[0])), err


def ramsey_stark_scan(shift_beam: LaserBeamSpec, shift_pulse_durations, ramsey_gap: float = 50e-6,
                      signal=None) -> RamseyResult:
    """Ramsey fringe versus shift-pulse duration and the shift recovered from its period.

    The shift is Omega^2 / (4 Delta) of ``shift_beam``; pass ``signal`` to fit
    measured data instead of the ideal fringe.
    """
    t = np.asarray(shift_pulse_durations, dtype=float)
    if t.size < 4:
        raise FitError("need at least four shift-pulse durations")
    if np.any(t < 0) or np.any(t > ramsey_gap):
        raise PhysicsDomainError("shift-pulse durations must fit inside the Ramsey gap")
    shift = ac_stark_shift(shift_beam.resonant_rabi_frequency, shift_beam.detuning)
    y = ramsey_signal(shift, t) if signal is None else np.asarray(signal, dtype=float)
    span = t[-1] - t[0]
    if np.ptp(y) < 1e-9:
        return RamseyResult(t, y, shift, 0.0, 0.0, None, no_fringe=True)
    if abs(shift) * span / TWO_PI < 1:
        raise FitError(f"scan of {span * 1e6:.3g} us covers less than one fringe")
    w, err = fit_ramsey_fringe(t, y)
    period = TWO_PI / w
    return RamseyResult(t, y, shift, math.copysign(w, shift), err, period)
