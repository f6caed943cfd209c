"""Stochastic experiment engine.

Cooling, heating and pumping act on populations; the coherent step comes
from :mod:`ionspin.dynamics`; detection draws shelving and photon counts
per shot. Every scan point gets its own counter-based RNG stream derived
from (seed, scan index), so results do not depend on execution order.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply
from scipy.stats import poisson

from .dynamics import (
    DecoherenceModel,
    readout_transfer_curve,
    flop_signal,
)
from .physics import (
    TWO_PI,
    CutoffError,
    PhononDistribution,
    PhysicsDomainError,
    TransitionSpec,
    generalized_rabi_transfer,
    scattering_probability,
    sideband_matrix_elements,
    thermal_distribution,
)

REPUMP_STYLES = ("sigma_397", "pump_729")
PUMP_SCHEMES = ("pulsed", "cw")
SCAN_KINDS = ("pulse_duration", "detuning", "delay")

# ten cycles accumulate ~10 % in the wrong spin state
DEFAULT_WRONG_SPIN_PER_CYCLE = 1 - 0.9 ** (1 / 10)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# --------------------------------------------------------------------------
# heating

@dataclass(frozen=True)
class HeatingModel:
    heating_rate: float = 0.0  # phonons / s

    def __post_init__(self):
        if self.heating_rate < 0:
            raise PhysicsDomainError("heating rate must be non-negative")


def heating_generator(cutoff: int, heating_rate: float) -> sparse.csr_matrix:
    """Birth-death generator of dP_n/dt = r [n P_{n-1} + (n+1) P_{n+1} - (2n+1) P_n].

    The top state has no outgoing birth so the truncated generator conserves
    probability exactly.
    """
    n = np.arange(cutoff + 1, dtype=float)
    up = n + 1.0      # rate n -> n+1
    up[-1] = 0.0
    down = n.copy()   # rate n -> n-1
    diag = -(up + down)
    gen = sparse.diags([diag, up[:-1], down[1:]], [0, -1, 1], format="csr")
    return heating_rate * gen


def apply_heating(dist: PhononDistribution, heating: HeatingModel, t: float,
                  overflow_tolerance: float = 1e-6) -> PhononDistribution:
    """Evolve populations under the infinite-temperature birth-death master equation."""
    if t < 0:
        raise PhysicsDomainError("heating time must be non-negative")
    if t == 0 or heating.heating_rate == 0:
        return PhononDistribution(dist.probabilities.copy())
    gen = heating_generator(dist.cutoff, heating.heating_rate)
    p = expm_multiply(gen * t, dist.probabilities)
    return _checked(p, dist.cutoff, overflow_tolerance)


def _checked(p: np.ndarray, cutoff: int, overflow_tolerance: float) -> PhononDistribution:
    p = np.clip(p, 0.0, None)
    if p[-1] > overflow_tolerance:
        raise CutoffError(f"top Fock state {cutoff} holds {p[-1]:.3g} > {overflow_tolerance:g}; "
                          f"increase the cutoff", None)
    return PhononDistribution(p / p.sum())


@lru_cache(maxsize=64)
def _heating_propagator(cutoff: int, heating_rate: float, t: float) -> np.ndarray:
    return expm(heating_generator(cutoff, heating_rate).toarray() * t)


# --------------------------------------------------------------------------
# cooling

def doppler_cool(target_nbar: float, cutoff: int) -> PhononDistribution:
    """Thermal state left by Doppler cooling; the spin is left mixed and is
    re-prepared by the initialisation step."""
    return thermal_distribution(target_nbar, cutoff)


@dataclass(frozen=True)
class CoolingStage:
    rsb_pulse_duration: float
    quench_duration: float
    n_cycles: int
    repump_style: Optional[str] = None

    def __post_init__(self):
        if not (self.rsb_pulse_duration > 0 and self.quench_duration > 0):
            raise PhysicsDomainError("stage durations must be positive")
        if self.n_cycles <= 0:
            raise PhysicsDomainError("stage cycle count must be positive")
        if self.repump_style is not None and self.repump_style not in REPUMP_STYLES:
            raise PhysicsDomainError(f"unknown repump style {self.repump_style!r}")


@dataclass(frozen=True)
class CoolingSchedule:
    stages: tuple[CoolingStage, ...]
    cycles_per_repump: int = 10
    repump_style: str = "sigma_397"
    wrong_spin_per_cycle: float = DEFAULT_WRONG_SPIN_PER_CYCLE
    carrier_reheating: float = 1.0
    repump_durations: tuple[tuple[str, float], ...] = (("sigma_397", 5e-6), ("pump_729", 36e-6))

    def __post_init__(self):
        if not self.stages:
            raise PhysicsDomainError("schedule needs at least one stage")
        if self.cycles_per_repump <= 0:
            raise PhysicsDomainError("cycles_per_repump must be positive")
        if self.repump_style not in REPUMP_STYLES:
            raise PhysicsDomainError(f"unknown repump style {self.repump_style!r}")
        if not 0 <= self.wrong_spin_per_cycle < 1:
            raise PhysicsDomainError("wrong-spin branching must lie in [0, 1)")
        if self.carrier_reheating < 0:
            raise PhysicsDomainError("carrier reheating scale must be non-negative")

    def repump_duration(self, style: str) -> float:
        return dict(self.repump_durations)[style]


def reference_schedule() -> CoolingSchedule:
    """Two stages: 8 x 10 cycles of short pulses with sigma repumps, then
    longer pulses repumped by 729 nm optical pumping."""
    return CoolingSchedule(stages=(
        CoolingStage(10e-6, 2e-6, 80, "sigma_397"),
        CoolingStage(20e-6, 2e-6, 40, "pump_729"),
    ))


@dataclass
class CoolingResult:
    distribution: PhononDistribution
    wrong_spin_leakage: list[float] = field(default_factory=list)  # accumulated before each repump
    stage_mean_phonons: list[float] = field(default_factory=list)
    duration: float = 0.0


def sideband_cool(initial: PhononDistribution, schedule: CoolingSchedule, heating: HeatingModel,
                  transition: TransitionSpec, trap_frequency: float = TWO_PI * 1.35e6) -> CoolingResult:
    """Pulsed resolved-sideband cooling on populations.

    One cycle: a red-sideband pulse moves n -> n-1 with probability
    sin^2(Omega_{n,n-1} t / 2); the quench makes that transfer incoherent;
    off-resonant carrier excitation (detuned by the trap frequency) adds a
    phonon with probability Omega_{n,n}^2 / (2 omega^2); a fixed fraction
    leaks into the wrong spin state, which is not cooled until the next
    repump; heating acts over the cycle wall time.
    """
    cutoff = initial.cutoff
    n = np.arange(cutoff + 1)
    good = initial.probabilities.copy()
    wrong = np.zeros_like(good)
    eta, om0 = transition.lamb_dicke, transition.base_rabi_frequency
    rsb = om0 * np.concatenate([[0.0], sideband_matrix_elements(n[1:], n[1:] - 1, eta)])
    carrier = om0 * sideband_matrix_elements(n, n, eta)
    reheat = np.clip(schedule.carrier_reheating * scattering_probability(carrier, trap_frequency), 0.0, 1.0)
    reheat[-1] = 0.0
    b = schedule.wrong_spin_per_cycle
    result = CoolingResult(initial)
    elapsed = 0.0

    def heat(p, t):
        if heating.heating_rate == 0 or t == 0:
            return p
        return _heating_propagator(cutoff, heating.heating_rate, t) @ p

    for stage in schedule.stages:
        style = stage.repump_style or schedule.repump_style
        transfer = np.sin(rsb * stage.rsb_pulse_duration / 2) ** 2
        cycle_time = stage.rsb_pulse_duration + stage.quench_duration
        for k in range(stage.n_cycles):
            moved = transfer * good
            good = good - moved
            good[:-1] += moved[1:]
            up = reheat * good
            good = good - up
            good[1:] += up[:-1]
            leak = b * good
            good, wrong = good - leak, wrong + leak
            good, wrong = heat(good, cycle_time), heat(wrong, cycle_time)
            elapsed += cycle_time
            if (k + 1) % schedule.cycles_per_repump == 0 or k + 1 == stage.n_cycles:
                result.wrong_spin_leakage.append(float(wrong.sum()))
                good, wrong = good + wrong, np.zeros_like(wrong)
                t_rep = schedule.repump_duration(style)
                good = heat(good, t_rep)
                elapsed += t_rep
        result.stage_mean_phonons.append(float(n @ (good + wrong)))
    total = good + wrong
    result.distribution = PhononDistribution(np.clip(total, 0, None) / total.sum())
    result.duration = elapsed
    return result


# --------------------------------------------------------------------------
# optical pumping

@dataclass(frozen=True)
class PumpConfig:
    scheme: str = "pulsed"
    n_pulses: int = 3
    pulse_729_duration: float = 10e-6
    quench_duration: float = 2e-6
    parasitic_splitting: float = TWO_PI * 8e6
    pi_time: float = 10e-6
    parasitic_coupling: float = 1.0      # parasitic / target Rabi frequency
    parasitic_return_to_down: float = 1.0
    quench_rate: float = TWO_PI * 1e6    # cw: quench-induced coherence damping
    cw_suppression: float = 0.5          # cw: continuous-measurement suppression s
    cw_duration: float = 500e-6

    def __post_init__(self):
        if self.scheme not in PUMP_SCHEMES:
            raise PhysicsDomainError(f"unknown pump scheme {self.scheme!r}")
        if self.n_pulses < 0:
            raise PhysicsDomainError("n_pulses must be non-negative")
        if not (self.pulse_729_duration > 0 and self.quench_duration > 0 and self.pi_time > 0):
            raise PhysicsDomainError("pump durations must be positive")
        if not 0 < self.cw_suppression <= 1:
            raise PhysicsDomainError("cw suppression must lie in (0, 1]")

    @property
    def rabi_frequency(self) -> float:
        return math.pi / self.pi_time


@dataclass
class PumpResult:
    fidelity: float
    curve_x: np.ndarray     # pulse duration (pulsed) or pump time (cw), s
    curve_fidelity: np.ndarray


def _pulsed_pump(cfg: PumpConfig, up0: float, durations) -> np.ndarray:
    d = np.asarray(durations, dtype=float)
    om = cfg.rabi_frequency
    p_res = generalized_rabi_transfer(om, 0.0, d)
    p_par = cfg.parasitic_return_to_down * generalized_rabi_transfer(
        cfg.parasitic_coupling * om, cfg.parasitic_splitting, d)
    up = np.full(d.shape, float(up0))
    for _ in range(cfg.n_pulses):
        down = 1 - up
        up = up - up * p_par + down * p_res
    return up


def _cw_rates(cfg: PumpConfig) -> tuple[float, float]:
    om, g = cfg.rabi_frequency, cfg.quench_rate
    r_pump = cfg.cw_suppression * om ** 2 * g / (g ** 2 + 2 * om ** 2)
    om_p = cfg.parasitic_coupling * om
    r_par = cfg.parasitic_return_to_down * om_p ** 2 * g / (g ** 2 + 4 * cfg.parasitic_splitting ** 2 + 2 * om_p ** 2)
    return r_pump, r_par


def optical_pump(config: PumpConfig, initial_up: float = 0.0, curve_points: int = 201) -> PumpResult:
    """Pump population into the up state.

    Pulsed: each 729 nm pulse moves down -> D(+3/2) with the resonant Rabi
    transfer and the quench returns it to up; the same pulse excites the
    parasitic line 8 MHz away off resonantly, returning that fraction to
    down. cw: rate equations with a Lorentzian quench-broadened pump rate,
    scaled by the suppression factor s.
    """
    if not 0 <= initial_up <= 1:
        raise PhysicsDomainError("initial population must lie in [0, 1]")
    if config.scheme == "pulsed":
        fid = float(_pulsed_pump(config, initial_up, [config.pulse_729_duration])[0])
        x = np.linspace(0, 3 * config.pi_time, curve_points)
        return PumpResult(fid, x, _pulsed_pump(config, initial_up, x))
    r_pump, r_par = _cw_rates(config)
    x = np.linspace(0, config.cw_duration, curve_points)
    total = r_pump + r_par
    sat = r_pump / total
    curve = sat + (initial_up - sat) * np.exp(-total * x)
    fid = float(sat + (initial_up - sat) * math.exp(-total * config.cw_duration))
    return PumpResult(fid, x, curve)


def cw_saturation(config: PumpConfig) -> float:
    r_pump, r_par = _cw_rates(config)
    return r_pump / (r_pump + r_par)


# --------------------------------------------------------------------------
# detection

def misclassification(threshold: int, bright_mean: float, dark_mean: float) -> tuple[float, float]:
    """(P[bright read as dark], P[dark read as bright]) for a count threshold."""
    return float(poisson.cdf(threshold - 1, bright_mean)), float(poisson.sf(threshold - 1, dark_mean))


def optimal_threshold(bright_mean: float, dark_mean: float) -> int:
    """Integer threshold minimising the summed Poisson misclassification."""
    lo, hi = sorted((bright_mean, dark_mean))
    candidates = np.arange(int(math.floor(lo)) + 1, int(math.ceil(hi)) + 1)
    err = [sum(misclassification(int(t), max(bright_mean, dark_mean), min(bright_mean, dark_mean)))
           for t in candidates]
    return int(candidates[int(np.argmin(err))])


@dataclass(frozen=True)
class ReadoutModel:
    """Fluorescence detection: a shot is 'bright' (counted as spin down) when
    its photon count reaches ``threshold``.

    Up is shelved to the dark D state with ``shelving_efficiency``; unshelved
    up population fluoresces like down.
    """

    bright_mean: float = 55.0
    dark_mean: float = 5.0
    window: float = 3e-3
    threshold: Optional[int] = None
    shelving_efficiency: float = 1.0

    def __post_init__(self):
        if self.bright_mean < 0 or self.dark_mean < 0 or self.bright_mean == self.dark_mean:
            raise PhysicsDomainError("count means must be non-negative and distinct")
        if self.threshold is None:
            object.__setattr__(self, "threshold", optimal_threshold(self.bright_mean, self.dark_mean))
        lo, hi = sorted((self.bright_mean, self.dark_mean))
        if not lo < self.threshold <= hi:
            raise PhysicsDomainError("threshold must lie between the count means")
        if not 0 <= self.shelving_efficiency <= 1:
            raise PhysicsDomainError("shelving efficiency must lie in [0, 1]")

    def expected_success(self, p_down: float) -> float:
        """Exact success probability of one shot (Poisson-CDF oracle)."""
        q_bright = float(poisson.sf(self.threshold - 1, self.bright_mean))
        q_dark = float(poisson.sf(self.threshold - 1, self.dark_mean))
        p_bright = p_down + (1 - p_down) * (1 - self.shelving_efficiency)
        return p_bright * q_bright + (1 - p_bright) * q_dark

    @classmethod
    def with_shelving_from_curve(cls, scheme: str = "double_rap", detuning: float = 0.0,
                                 motional_spread: Optional[PhononDistribution] = None,
                                 lamb_dicke: float = 0.06, **kwargs) -> "ReadoutModel":
        eff = float(readout_transfer_curve(scheme, [detuning], motional_spread, lamb_dicke)[0])
        return cls(shelving_efficiency=min(1.0, eff), **kwargs)


@dataclass
class ExperimentPoint:
    shots: int
    successes: int

    @property
    def probability(self) -> float:
        return self.successes / self.shots

    @property
    def error(self) -> float:
        p = self.probability
        return math.sqrt(max(p * (1 - p), 1.0 / self.shots) / self.shots)


def detect(spin_down_probability: float, shots: int, model: ReadoutModel,
           rng: np.random.Generator) -> ExperimentPoint:
    """Per shot: project the spin, shelve up, draw photon counts, threshold."""
    if shots <= 0:
        raise PhysicsDomainError("shots must be positive")
    if not -1e-12 <= spin_down_probability <= 1 + 1e-12:
        raise PhysicsDomainError("probability must lie in [0, 1]")
    u = rng.random((shots, 3))
    down = u[:, 0] < spin_down_probability
    shelved = ~down & (u[:, 1] < model.shelving_efficiency)
    mean = np.where(shelved, model.dark_mean, model.bright_mean)
    counts = poisson.ppf(u[:, 2], mean)
    return ExperimentPoint(shots, int(np.count_nonzero(counts >= model.threshold)))


def detect_many(spin_down_probabilities, shots: int, model: ReadoutModel,
                rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`detect` over scan points sharing one stream; returns successes."""
    p = np.clip(np.asarray(spin_down_probabilities, dtype=float), 0.0, 1.0)
    if shots <= 0:
        raise PhysicsDomainError("shots must be positive")
    u = rng.random((p.size, shots, 3))
    down = u[..., 0] < p[:, None]
    shelved = ~down & (u[..., 1] < model.shelving_efficiency)
    mean = np.where(shelved, model.dark_mean, model.bright_mean)
    counts = poisson.ppf(u[..., 2], mean)
    return np.count_nonzero(counts >= model.threshold, axis=1)


def point_rng(seed: int, *index: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by the master seed and a scan index."""
    key = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *index]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# --------------------------------------------------------------------------
# full sequence

@dataclass
class SequenceConfig:
    """Complete description of one simulated experiment."""

    trap_frequency: float = TWO_PI * 1.35e6
    coherent: TransitionSpec = field(default_factory=lambda: TransitionSpec(TWO_PI * 250e3, 0.21, "blue_sideband"))
    decoherence: DecoherenceModel = field(default_factory=lambda: DecoherenceModel(1 / 280e-6, 0.96))
    cooling_mode: str = "sideband"           # or "thermal"
    doppler_nbar: float = 15.0
    thermal_nbar: float = 0.24
    cutoff: int = 300
    cooling_transition: TransitionSpec = field(
        default_factory=lambda: TransitionSpec(TWO_PI * 150e3, 0.06, "red_sideband"))
    schedule: CoolingSchedule = field(default_factory=reference_schedule)
    heating: HeatingModel = field(default_factory=lambda: HeatingModel(300.0))
    pump: PumpConfig = field(default_factory=PumpConfig)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    scan_kind: str = "pulse_duration"
    scan_values: np.ndarray = field(default_factory=lambda: np.linspace(0, 200e-6, 101))
    delays: tuple[float, ...] = (0.0,)
    probe_duration: float = 10e-6
    shots: int = 100
    seed: int = 0
    digest: str = ""

    def validate(self) -> None:
        if self.cooling_mode not in ("sideband", "thermal"):
            raise ConfigError("cooling.mode", f"unknown mode {self.cooling_mode!r}")
        if self.scan_kind not in SCAN_KINDS:
            raise ConfigError("scan.kind", f"unknown kind {self.scan_kind!r}; expected one of {SCAN_KINDS}")
        vals = np.asarray(self.scan_values, dtype=float)
        if vals.size == 0:
            raise ConfigError("scan", "scan range is empty")
        if np.any(np.diff(vals) <= 0):
            raise ConfigError("scan", "scan values must be strictly increasing")
        if self.scan_kind in ("pulse_duration", "delay") and vals[0] < 0:
            raise ConfigError("scan", "durations must be non-negative")
        if self.shots <= 0:
            raise ConfigError("scan.shots", "shots must be positive")
        if any(d < 0 for d in self.delays):
            raise ConfigError("scan.delays", "delays must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "seed must be a 64-bit unsigned integer")


@dataclass
class ExperimentResult:
    """One scan: probability estimates with binomial errors."""

    scan_kind: str
    scan_values: np.ndarray
    shots: np.ndarray
    successes: np.ndarray
    ideal_p_down: np.ndarray
    delay: float = 0.0
    seed: int = 0
    digest: str = ""
    mean_phonon: float = float("nan")

    @property
    def p_down(self) -> np.ndarray:
        return self.successes / self.shots

    @property
    def p_error(self) -> np.ndarray:
        p = self.p_down
        return np.sqrt(np.maximum(p * (1 - p), 1.0 / self.shots) / self.shots)


def prepare_motional_state(config: SequenceConfig) -> tuple[PhononDistribution, Optional[CoolingResult]]:
    """Steps (a)-(b): Doppler cooling then sideband cooling (or a thermal stand-in)."""
    if config.cooling_mode == "thermal":
        return thermal_distribution(config.thermal_nbar, config.cutoff), None
    dop = doppler_cool(config.doppler_nbar, config.cutoff)
    cooled = sideband_cool(dop, config.schedule, config.heating, config.cooling_transition,
                           config.trap_frequency)
    return cooled.distribution, cooled


def _shift_down(dist: PhononDistribution) -> tuple[np.ndarray, float]:
    p = dist.probabilities
    return np.concatenate([p[1:], [0.0]]), float(p[0])


def ideal_signal(config: SequenceConfig, dist: PhononDistribution, init_fidelity: float) -> np.ndarray:
    """Spin-down probability before detection for every scan value."""
    tr, dec = config.coherent, config.decoherence
    vals = np.asarray(config.scan_values, dtype=float)
    a, g = dec.readout_contrast, dec.coherence_decay_rate
    if config.scan_kind in ("pulse_duration", "delay"):
        times = vals if config.scan_kind == "pulse_duration" else np.full(vals.shape, config.probe_duration)
        main = flop_signal(dist, tr, dec, times)
        if init_fidelity >= 1:
            return main
        # population left in up flops on the n -> n-1 partner line
        dn = tr.phonon_change
        if dn == 0:
            wrong = 1 - main
        else:
            p = dist.probabilities
            n = dist.n
            partner = n - dn
            ok = (partner >= 0) & (partner <= dist.cutoff)
            om = np.zeros(n.shape)
            om[ok] = tr.base_rabi_frequency * sideband_matrix_elements(n[ok], partner[ok], tr.lamb_dicke)
            osc = (np.cos(np.outer(times, om[ok])) @ p[ok]) * np.exp(-g * times)
            stay = p[~ok].sum()
            p_up = 0.5 * (a * osc + p[ok].sum()) + stay * 0.5 * (1 + a)
            wrong = 1 - p_up
        return init_fidelity * main + (1 - init_fidelity) * wrong
    # detuning scan: carrier and first two sidebands, lines resolved
    n = dist.n
    transfer = np.zeros(vals.shape)
    for s in (-2, -1, 0, 1, 2):
        m = n + s
        ok = m >= 0
        om = np.zeros(n.shape)
        om[ok] = tr.base_rabi_frequency * sideband_matrix_elements(n[ok], m[ok], tr.lamb_dicke)
        det = vals[:, None] - s * config.trap_frequency
        transfer += generalized_rabi_transfer(om[None, :], det, config.probe_duration) @ dist.probabilities
    transfer = np.clip(transfer, 0, 1) * math.exp(-g * config.probe_duration)
    p_down = 0.5 * (1 + a) - a * transfer
    return init_fidelity * p_down + (1 - init_fidelity) * (1 - p_down)


def _detect_scan(p: np.ndarray, shots: int, model: ReadoutModel, seed: int, trace_index: int,
                 workers: int) -> np.ndarray:
    def one(i):
        return detect(float(np.clip(p[i], 0, 1)), shots, model, point_rng(seed, trace_index, i)).successes

    if workers <= 1:
        return np.array([one(i) for i in range(p.size)], dtype=int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(one, range(p.size))), dtype=int)


def run_sequence(config: SequenceConfig, workers: int = 1) -> list[ExperimentResult]:
    """Run steps (a)-(f) for every configured delay; one result per delay.

    (a) Doppler cool, (b) sideband cool, (c) initialise by optical pumping,
    (d) coherent pulse after an optional heating delay, (e) shelve,
    (f) fluorescence detection.
    """
    config.validate()
    dist, _ = prepare_motional_state(config)
    init = optical_pump(config.pump, initial_up=0.0).fidelity
    heating_model = config.heating
    out = []
    for k, delay in enumerate(config.delays):
        if config.scan_kind == "delay":
            p = np.empty(len(config.scan_values))
            for i, d in enumerate(config.scan_values):
                dd = apply_heating(dist, heating_model, float(d) + delay)
                p[i] = ideal_signal(replace(config, scan_values=np.array([0.0])), dd, init)[0]
            mean = float("nan")
        else:
            dd = apply_heating(dist, heating_model, delay)
            p = ideal_signal(config, dd, init)
            mean = dd.mean()
        succ = _detect_scan(p, config.shots, config.readout, config.seed, k, workers)
        out.append(ExperimentResult(config.scan_kind, np.asarray(config.scan_values, dtype=float),
                                    np.full(p.size, config.shots), succ, p, delay, config.seed,
                                    config.digest, mean))
    return out


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
