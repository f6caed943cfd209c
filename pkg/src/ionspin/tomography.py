"""Phonon-number tomography from blue-sideband Rabi traces.

A trace is decomposed on the damped-cosine dictionary of the BSB lines
Omega_{n,n+1}: populations by non-negative least squares with the
normalisation enforced, contrast and decay rate by 1-D refinements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .dynamics import DecoherenceModel, flop_signal
from .physics import TWO_PI, PhononDistribution, TransitionSpec, sideband_matrix_elements
from .sequence import ReadoutModel, detect_many, point_rng


class TomographyError(RuntimeError):
    pass


class DeconvolutionError(TomographyError):
    """Raised when the alternating fit does not converge; carries the best iterate."""

    def __init__(self, message: str, best: "ReconstructionResult", residual_history: list[float]):
        super().__init__(message)
        self.best = best
        self.residual_history = residual_history


@dataclass
class RabiTrace:
    times: np.ndarray
    p_down: np.ndarray
    shots_per_point: Optional[int] = None  # None: noiseless

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p_down = np.asarray(self.p_down, dtype=float)
        if self.times.shape != self.p_down.shape or self.times.ndim != 1:
            raise TomographyError("times and probabilities must be 1-D arrays of equal length")
        if self.times.size < 2 or np.any(np.diff(self.times) <= 0):
            raise TomographyError("times must be strictly increasing")
        if np.any(self.p_down < 0) or np.any(self.p_down > 1):
            raise TomographyError("probabilities must lie in [0, 1]")

    @property
    def is_uniform(self) -> bool:
        d = np.diff(self.times)
        return bool(np.all(np.abs(d - d.mean()) <= 1e-9 * max(abs(self.times).max(), d.mean()) + 1e-9 * d.mean()))

    @property
    def dt(self) -> float:
        return float(np.diff(self.times).mean())


@dataclass
class SpectrumReport:
    frequencies: np.ndarray
    magnitudes: np.ndarray
    line_positions: np.ndarray = field(default_factory=lambda: np.array([]))


def predict_line_positions(base_rabi_frequency: float, eta: float, n_max: int) -> np.ndarray:
    """BSB flopping frequencies Omega_{n,n+1} for n = 0..n_max."""
    if n_max < 0:
        raise TomographyError("n_max must be non-negative")
    n = np.arange(n_max + 1)
    return base_rabi_frequency * sideband_matrix_elements(n, n + 1, eta)


def default_frequency_grid(line_positions, trace: RabiTrace, oversampling: int = 4) -> np.ndarray:
    """Uniform grid from 0 past the highest line, capped at Nyquist.

    The step is the finer of the line spacing and the Fourier resolution
    2 pi / T, divided by ``oversampling``.
    """
    lines = np.sort(np.asarray(line_positions, dtype=float))
    nyquist = math.pi / trace.dt
    top = min(nyquist, 1.25 * lines[-1] if lines.size else nyquist)
    resolution = TWO_PI / (trace.times[-1] - trace.times[0])
    spacing = np.min(np.diff(lines)) if lines.size > 1 else resolution
    step = max(min(spacing, resolution), top / 20000) / oversampling
    return np.arange(0.0, top + step / 2, step)


def cosine_transform(trace: RabiTrace, frequency_grid, line_positions=()) -> SpectrumReport:
    """(2/N) sum_k (p_k - mean p) cos(omega t_k) on a uniform-time trace."""
    if not trace.is_uniform:
        raise TomographyError("cosine transform needs a uniform time grid")
    w = np.asarray(frequency_grid, dtype=float)
    y = trace.p_down - trace.p_down.mean()
    mags = (2.0 / y.size) * (np.cos(np.outer(w, trace.times)) @ y)
    return SpectrumReport(w, mags, np.asarray(line_positions, dtype=float))


@dataclass
class ReconstructionResult:
    distribution: PhononDistribution
    contrast: float
    decay_rate: float
    mean_phonon: float
    residual_norm: float
    rms_residual: float
    reduced_chi2: float
    model_mismatch: bool
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    uncertainties: Optional[np.ndarray] = None
    mean_phonon_error: float = float("nan")

    @property
    def populations(self) -> np.ndarray:
        return self.distribution.probabilities


def _dictionary(times, lines, gamma):
    return 0.5 * np.exp(-gamma * times)[:, None] * np.cos(np.outer(times, lines))


def _solve_populations(basis, target, contrast, weight):
    """NNLS on contrast * basis with an appended heavy row enforcing sum(P) = 1."""
    a = np.vstack([contrast * basis, np.full((1, basis.shape[1]), weight)])
    b = np.concatenate([target, [weight]])
    p, _ = nnls(a, b, maxiter=50 * basis.shape[1])
    s = p.sum()
    if s <= 0:
        p = np.zeros_like(p)
        p[0] = 1.0
        return p
    return p / s


def _residual(basis, p, contrast, target):
    return float(np.linalg.norm(contrast * (basis @ p) - target))


def _shot_weights(trace: RabiTrace) -> np.ndarray:
    """Inverse binomial standard deviation per point (ones for noiseless traces).

    The variance uses a Laplace-smoothed estimate so points at exactly 0 or 1
    keep a finite weight.
    """
    if not trace.shots_per_point:
        return np.ones_like(trace.p_down)
    n = trace.shots_per_point
    q = (trace.p_down * n + 0.5) / (n + 1)
    w = 1.0 / np.sqrt(q * (1 - q) / n)
    return w / w.mean()


def _noise_sigma(trace: RabiTrace, floor: float = 5e-3) -> np.ndarray:
    p = trace.p_down
    if trace.shots_per_point:
        var = np.maximum(p * (1 - p), 1.0 / trace.shots_per_point) / trace.shots_per_point
    else:
        var = np.zeros_like(p)
    return np.sqrt(var + floor ** 2)


def deconvolve(trace: RabiTrace, line_positions, contrast: float = 0.96, decay_rate: float = 0.0,
               max_iterations: int = 200, tolerance: float = 1e-8, mismatch_chi2: float = 2.0,
               weighted: bool = True, n_bootstrap: int = 0,
               rng: Optional[np.random.Generator] = None) -> ReconstructionResult:
    """Fit P_n, contrast A and decay rate gamma of the damped sideband flopping model.

    Alternates: (1) populations by constrained NNLS for fixed (A, gamma);
    (2) A by exact 1-D least squares, accepted only if the residual drops;
    (3) gamma by +-step trials, accepted only if the residual drops,
    otherwise the step is halved. Stops after ``max_iterations`` or when the
    relative residual change falls below ``tolerance`` with the gamma step
    already resolved.

    With ``weighted`` and a known shot count, residuals are scaled by the
    inverse binomial standard deviation of each point.
    """
    lines = np.asarray(line_positions, dtype=float)
    t, y = trace.times, trace.p_down
    if t.size < 4 * lines.size:
        raise TomographyError(f"trace has {t.size} points; need at least {4 * lines.size} for {lines.size} lines")
    sw = _shot_weights(trace) if weighted else np.ones_like(y)
    target = sw * (y - 0.5)
    weight = 1e3 * math.sqrt(t.size) * float(sw.max())
    span = t[-1] - t[0] if t[-1] > t[0] else 1.0
    a = float(np.clip(contrast, 1e-3, 1.0))
    g = max(0.0, float(decay_rate))
    g_step = 0.25 * max(g, 1.0 / span)
    g_tol = 1e-7 * max(g, 1.0 / span)

    def dictionary(gamma):
        return sw[:, None] * _dictionary(t, lines, gamma)

    basis = dictionary(g)
    p = _solve_populations(basis, target, a, weight)
    res = _residual(basis, p, a, target)
    history = [res]
    floor = 1e-12 * max(1.0, float(np.linalg.norm(target)))
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        prev = res
        p = _solve_populations(basis, target, a, weight)
        res = _residual(basis, p, a, target)

        model = basis @ p
        denom = float(model @ model)
        if denom > 0:
            a_new = float(np.clip((model @ target) / denom, 1e-3, 1.0))
            r_new = _residual(basis, p, a_new, target)
            if r_new < res:
                a, res = a_new, r_new

        best = None
        for cand in (g + g_step, g - g_step):
            if cand < 0:
                continue
            b_c = dictionary(cand)
            r_c = _residual(b_c, p, a, target)
            if r_c < res and (best is None or r_c < best[1]):
                best = (cand, r_c, b_c)
        if best is not None:
            g, res, basis = best
        else:
            g_step /= 2

        history.append(res)
        rel = abs(prev - res) / max(prev, 1e-300)
        if rel < tolerance and g_step < g_tol:
            converged = True
            break
        if res <= floor:
            converged = True
            break

    result = _make_result(trace, lines, p, a, g, _dictionary(t, lines, g), y - 0.5, history, it,
                          mismatch_chi2)
    if not converged:
        raise DeconvolutionError(
            f"no convergence after {max_iterations} iterations (residual {res:.4g})", result, history)
    if n_bootstrap > 0:
        samples = bootstrap_samples(trace, lines, result, n_bootstrap, rng)
        result.uncertainties = np.std(samples, axis=0, ddof=1)
        result.mean_phonon_error = float(np.std(samples @ np.arange(samples.shape[1]), ddof=1))
    return result


def _make_result(trace, lines, p, a, g, basis, target, history, iterations, mismatch_chi2):
    resid = a * (basis @ p) - target
    sigma = _noise_sigma(trace)
    dof = max(1, resid.size - lines.size - 2)
    chi2 = float(np.sum((resid / sigma) ** 2) / dof)
    probs = p if p.size >= 2 else np.concatenate([p, [0.0]])
    dist = PhononDistribution.normalized(probs)
    return ReconstructionResult(
        distribution=dist,
        contrast=a,
        decay_rate=g,
        mean_phonon=dist.mean(),
        residual_norm=float(np.linalg.norm(resid)),
        rms_residual=float(np.sqrt(np.mean(resid ** 2))),
        reduced_chi2=chi2,
        model_mismatch=chi2 > mismatch_chi2,
        iterations=iterations,
        residual_history=list(history),
    )


def bootstrap_samples(trace: RabiTrace, lines, fit: ReconstructionResult, n_resamples: int = 200,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Populations refitted on binomial resamples of the shots, one row per resample."""
    shots = trace.shots_per_point
    size = fit.populations.size
    if not shots or n_resamples < 2:
        return np.tile(fit.populations, (2, 1))
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = np.empty((n_resamples, size))
    for i in range(n_resamples):
        y = rng.binomial(shots, trace.p_down) / shots
        try:
            r = deconvolve(RabiTrace(trace.times, y, shots), lines, fit.contrast, fit.decay_rate)
        except DeconvolutionError as exc:
            r = exc.best
        rows[i] = r.populations[:size]
    return rows


def bootstrap_uncertainties(trace: RabiTrace, lines, fit: ReconstructionResult, n_resamples: int = 200,
                            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Standard deviation of each P_n over binomial resamples of the shots."""
    return np.std(bootstrap_samples(trace, lines, fit, n_resamples, rng), axis=0, ddof=1)


def mean_phonon(dist: PhononDistribution) -> tuple[float, float]:
    """Mean phonon number and a truncation bound P_cutoff * cutoff."""
    return dist.mean(), float(dist.probabilities[-1] * dist.cutoff)


@dataclass
class HeatingFit:
    slope: float
    slope_error: float
    intercept: float
    intercept_error: float
    points: list[tuple[float, float, Optional[float]]] = field(default_factory=list)


def heating_rate_fit(points: Sequence[tuple]) -> HeatingFit:
    """Weighted straight-line fit of mean phonon number against delay.

    ``points`` holds (delay, nbar) or (delay, nbar, sigma). With sigmas the
    covariance is absolute; without, it is scaled by the residual variance.
    """
    pts = [tuple(p) + (None,) * (3 - len(p)) for p in points]
    if len(pts) < 2:
        raise TomographyError("need at least two points for a heating-rate fit")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    sig = [p[2] for p in pts]
    if np.ptp(x) == 0:
        raise TomographyError("all delays are equal; slope is undetermined")
    absolute = all(s is not None and s > 0 for s in sig)
    w = 1.0 / np.square(np.array(sig, dtype=float)) if absolute else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    xtwx = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(xtwx, X.T @ (w * y))
    cov = np.linalg.inv(xtwx)
    if not absolute:
        dof = x.size - 2
        rss = float(np.sum(w * (y - X @ coef) ** 2))
        cov = cov * (rss / dof if dof > 0 else 0.0)
    return HeatingFit(float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))),
                      float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0))), pts)


@dataclass
class RoundTripStats:
    populations_bias: np.ndarray
    populations_rmse: np.ndarray
    nbar_true: float
    nbar_bias: float
    nbar_rmse: float
    nbar_estimates: np.ndarray
    failures: int
    mismatches: int
    repetitions: int

    def fraction_within(self, tol: float) -> float:
        est = self.nbar_estimates
        ok = np.isfinite(est) & (np.abs(est - self.nbar_true) <= tol)
        return float(np.count_nonzero(ok) / self.repetitions)


def synthetic_trace(dist: PhononDistribution, transition: TransitionSpec, decoherence: DecoherenceModel,
                    times, shots: Optional[int], readout: Optional[ReadoutModel] = None,
                    seed: int = 0, repetition: int = 0) -> RabiTrace:
    """Flopping trace, optionally passed through the shot-noise detection model."""
    ideal = flop_signal(dist, transition, decoherence, times)
    if not shots:
        return RabiTrace(times, np.clip(ideal, 0, 1), None)
    readout = readout or ReadoutModel()
    succ = detect_many(ideal, shots, readout, point_rng(seed, repetition))
    return RabiTrace(times, succ / shots, shots)


def validate_round_trip(true_dist: PhononDistribution, transition: TransitionSpec, decoherence: DecoherenceModel,
                        times, shots: Optional[int], repetitions: int, seed: int = 0, n_max: int = 10,
                        readout: Optional[ReadoutModel] = None, weighted: bool = True) -> RoundTripStats:
    """Monte-Carlo check: simulate traces, reconstruct, aggregate errors."""
    if repetitions < 1:
        raise TomographyError("need at least one repetition")
    lines = predict_line_positions(transition.base_rabi_frequency, transition.lamb_dicke, n_max)
    size = n_max + 1
    truth = np.zeros(max(size, 2))
    k = min(size, true_dist.probabilities.size)
    truth[:k] = true_dist.probabilities[:k]
    errs, nbars = [], []
    failures = mismatches = 0
    for rep in range(repetitions):
        trace = synthetic_trace(true_dist, transition, decoherence, times, shots, readout, seed, rep)
        try:
            r = deconvolve(trace, lines, decoherence.readout_contrast, decoherence.coherence_decay_rate,
                           weighted=weighted)
        except DeconvolutionError as exc:
            failures += 1
            r = exc.best
        mismatches += int(r.model_mismatch)
        est = np.zeros_like(truth)
        est[: r.populations.size] = r.populations
        errs.append(est - truth)
        nbars.append(r.mean_phonon)
    errs = np.array(errs)
    nbars = np.array(nbars)
    nbar_true = true_dist.mean()
    return RoundTripStats(
        populations_bias=errs.mean(axis=0),
        populations_rmse=np.sqrt(np.mean(errs ** 2, axis=0)),
        nbar_true=nbar_true,
        nbar_bias=float(np.mean(nbars - nbar_true)),
        nbar_rmse=float(np.sqrt(np.mean((nbars - nbar_true) ** 2))),
        nbar_estimates=nbars,
        failures=failures,
        mismatches=mismatches,
        repetitions=repetitions,
    )
