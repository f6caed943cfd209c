"""Closed-form physics of a single trapped-ion spin qubit.

All frequencies are angular frequencies in rad/s. Functions are pure and
accept plain floats; a few helpers are vectorised over phonon number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import constants as sc

AMU = sc.physical_constants["atomic mass constant"][0]
CA40_MASS = 40 * AMU
TWO_PI = 2 * math.pi

BEAM_LABELS = ("R1", "R2", "CC", "q729", "doppler397", "quench854")
TRANSITION_KINDS = ("carrier", "red_sideband", "blue_sideband")


class PhysicsDomainError(ValueError):
    """Raised when an input lies outside the domain of a physical formula."""


class CutoffError(PhysicsDomainError):
    """Raised when a Fock-space cutoff cannot hold a distribution."""

    def __init__(self, message: str, minimum_cutoff: Optional[int] = None):
        super().__init__(message)
        self.minimum_cutoff = minimum_cutoff


@dataclass(frozen=True)
class TrapConfig:
    axial_frequency: float
    radial_frequencies: tuple[float, float] = (TWO_PI * 2.0e6, TWO_PI * 3.5e6)
    rf_drive_frequency: float = TWO_PI * 24.8e6
    ion_mass: float = CA40_MASS

    def __post_init__(self):
        freqs = (self.axial_frequency, *self.radial_frequencies, self.rf_drive_frequency)
        if any(not f > 0 for f in freqs):
            raise PhysicsDomainError("trap frequencies must be strictly positive")
        if self.radial_frequencies[0] == self.radial_frequencies[1]:
            raise PhysicsDomainError("radial frequencies must be nondegenerate")
        if not self.ion_mass > 0:
            raise PhysicsDomainError("ion mass must be positive")


@dataclass(frozen=True)
class LaserBeamSpec:
    """One laser beam.

    ``direction`` is a unit vector in trap coordinates (x along the trap
    axis). When omitted it is built from ``propagation_axis_angle_to_trap_axis``
    in the x-y plane.
    """

    resonant_rabi_frequency: float
    detuning: float
    wavelength: float
    propagation_axis_angle_to_trap_axis: float
    label: str
    direction: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        if not self.wavelength > 0:
            raise PhysicsDomainError("wavelength must be positive")
        if self.resonant_rabi_frequency < 0:
            raise PhysicsDomainError("resonant Rabi frequency must be non-negative")
        if self.label not in BEAM_LABELS:
            raise PhysicsDomainError(f"unknown beam label {self.label!r}; expected one of {BEAM_LABELS}")

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength

    def unit_vector(self) -> np.ndarray:
        if self.direction is not None:
            v = np.asarray(self.direction, dtype=float)
            return v / np.linalg.norm(v)
        a = self.propagation_axis_angle_to_trap_axis
        return np.array([math.cos(a), math.sin(a), 0.0])

    def wavevector(self) -> np.ndarray:
        return self.wavenumber * self.unit_vector()


@dataclass(frozen=True)
class TransitionSpec:
    base_rabi_frequency: float
    lamb_dicke: float
    kind: str = "blue_sideband"
    detuning_from_resonance: float = 0.0

    def __post_init__(self):
        if not 0 <= self.lamb_dicke < 1:
            raise PhysicsDomainError("Lamb-Dicke factor must lie in [0, 1)")
        if self.base_rabi_frequency < 0:
            raise PhysicsDomainError("base Rabi frequency must be non-negative")
        if self.kind not in TRANSITION_KINDS:
            raise PhysicsDomainError(f"unknown transition kind {self.kind!r}")

    @property
    def phonon_change(self) -> int:
        return {"carrier": 0, "red_sideband": -1, "blue_sideband": 1}[self.kind]

    def rabi_frequencies(self, n: Sequence[int] | np.ndarray) -> np.ndarray:
        """Rabi frequency of the n -> n + dn line for every n (0 where n + dn < 0)."""
        n = np.asarray(n, dtype=int)
        m = n + self.phonon_change
        out = np.zeros(n.shape, dtype=float)
        ok = m >= 0
        out[ok] = self.base_rabi_frequency * sideband_matrix_elements(n[ok], m[ok], self.lamb_dicke)
        return out


@dataclass(frozen=True)
class AtomicConstants:
    dipole_linewidth: float = TWO_PI * 22e6
    clebsch_gordan_figure_factor: float = math.sqrt(18)

    def __post_init__(self):
        if not self.dipole_linewidth > 0:
            raise PhysicsDomainError("linewidth must be positive")
        if not self.clebsch_gordan_figure_factor > 0:
            raise PhysicsDomainError("figure factor must be positive")


@dataclass
class PhononDistribution:
    """Populations P_n of the motional Fock states n = 0..cutoff."""

    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise PhysicsDomainError("distribution needs cutoff >= 1")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise PhysicsDomainError("populations must lie in [0, 1]")
        if abs(p.sum() - 1) > 1e-9:
            raise PhysicsDomainError(f"populations sum to {p.sum():.12g}, not 1")
        self.probabilities = np.clip(p, 0.0, 1.0)

    @classmethod
    def fock(cls, n: int, cutoff: int) -> "PhononDistribution":
        p = np.zeros(cutoff + 1)
        p[n] = 1.0
        return cls(p)

    @classmethod
    def normalized(cls, weights) -> "PhononDistribution":
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        return cls(w / w.sum())

    @property
    def cutoff(self) -> int:
        return self.probabilities.size - 1

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.probabilities.size)

    def mean(self) -> float:
        return float(self.n @ self.probabilities)

    def resized(self, cutoff: int) -> "PhononDistribution":
        """Zero-pad, or truncate and renormalise, to a new cutoff."""
        p = np.zeros(cutoff + 1)
        k = min(cutoff, self.cutoff) + 1
        p[:k] = self.probabilities[:k]
        return PhononDistribution.normalized(p)


def lamb_dicke_factor(effective_wavevector_projection: float, mode_frequency: float,
                      ion_mass: float = CA40_MASS) -> float:
    """eta = k_eff * sqrt(hbar / (2 m omega))."""
    if effective_wavevector_projection < 0 or not mode_frequency > 0 or not ion_mass > 0:
        raise PhysicsDomainError("wavevector, mode frequency and mass must be positive")
    return effective_wavevector_projection * math.sqrt(sc.hbar / (2 * ion_mass * mode_frequency))


def effective_wavevector(beam_a: LaserBeamSpec, beam_b: Optional[LaserBeamSpec] = None,
                         axis=(1.0, 0.0, 0.0)) -> float:
    """Magnitude of the projection of the (difference) wavevector on ``axis``.

    A single beam drives with its own k; a Raman pair drives with k_a - k_b.
    Copropagating beams of equal wavelength therefore give zero, an
    orthogonal pair gives sqrt(2)|k| along the bisector.
    """
    k = beam_a.wavevector()
    if beam_b is not None:
        k = k - beam_b.wavevector()
    u = np.asarray(axis, dtype=float)
    return float(abs(k @ (u / np.linalg.norm(u))))


def raman_rabi_frequency(omega1: float, omega2: float, raman_detuning: float) -> float:
    if raman_detuning == 0:
        raise PhysicsDomainError("Raman detuning must be non-zero for adiabatic elimination")
    return abs(omega1 * omega2 / (2 * raman_detuning))


def scattering_probability(rabi: float, detuning: float) -> float:
    """Off-resonantly excited population Omega^2 / (2 Delta^2).

    Multiply by the dipole linewidth to get a scattering rate.
    """
    if detuning == 0:
        raise PhysicsDomainError("detuning must be non-zero")
    return rabi ** 2 / (2 * detuning ** 2)


def scattering_rate(rabi: float, detuning: float, constants: AtomicConstants = AtomicConstants()) -> float:
    return constants.dipole_linewidth * scattering_probability(rabi, detuning)


def rabi_per_scatter_figure_of_merit(raman_detuning: float,
                                     constants: AtomicConstants = AtomicConstants()) -> float:
    """Expected Rabi cycles per spontaneous scattering event, factor * |Delta| / Gamma."""
    return constants.clebsch_gordan_figure_factor * abs(raman_detuning) / constants.dipole_linewidth


def ac_stark_shift(rabi: float, detuning: float) -> float:
    if detuning == 0:
        raise PhysicsDomainError("detuning must be non-zero")
    return rabi ** 2 / (4 * detuning)


def thermal_tail_mass(nbar: float, cutoff: int) -> float:
    """Probability a thermal state puts above ``cutoff``."""
    if nbar == 0:
        return 0.0
    return (nbar / (nbar + 1)) ** (cutoff + 1)


def minimum_thermal_cutoff(nbar: float, tail_tolerance: float = 1e-6) -> int:
    if nbar == 0:
        return 1
    q = nbar / (nbar + 1)
    return max(1, math.ceil(math.log(tail_tolerance) / math.log(q)) - 1)


def thermal_distribution(nbar: float, cutoff: int, tail_tolerance: float = 1e-6) -> PhononDistribution:
    """Bose-Einstein populations nbar^n / (nbar + 1)^(n + 1), renormalised on [0, cutoff].

    Refuses cutoffs whose discarded tail exceeds ``tail_tolerance``.
    """
    if nbar < 0:
        raise PhysicsDomainError("mean phonon number must be non-negative")
    if cutoff < 1:
        raise CutoffError("cutoff must be at least 1", 1)
    if thermal_tail_mass(nbar, cutoff) > tail_tolerance:
        need = minimum_thermal_cutoff(nbar, tail_tolerance)
        raise CutoffError(
            f"cutoff {cutoff} too small for nbar={nbar:g}: tail mass "
            f"{thermal_tail_mass(nbar, cutoff):.3g} > {tail_tolerance:g}; need cutoff >= {need}", need)
    n = np.arange(cutoff + 1)
    if nbar == 0:
        p = (n == 0).astype(float)
    else:
        # log space keeps large n finite
        logp = n * math.log(nbar) - (n + 1) * math.log1p(nbar)
        p = np.exp(logp)
    return PhononDistribution(p / p.sum())


def laguerre(n: int, alpha: float, x: float) -> float:
    """Associated Laguerre polynomial L_n^alpha(x) by three-term recurrence."""
    if n < 0:
        raise PhysicsDomainError("Laguerre degree must be non-negative")
    if n == 0:
        return 1.0
    l_prev, l_cur = 1.0, 1.0 + alpha - x
    for k in range(2, n + 1):
        l_prev, l_cur = l_cur, ((2 * k - 1 + alpha - x) * l_cur - (k - 1 + alpha) * l_prev) / k
    return l_cur


def sideband_matrix_element(n: int, m: int, eta: float) -> float:
    """|<m| exp(i eta (a + a^dag)) |n>|, the n -> m Rabi frequency relative to the bare one.

    Reduces to eta * sqrt(max(n, m)) for |n - m| = 1 as eta -> 0.
    """
    if n < 0 or m < 0:
        raise PhysicsDomainError("phonon numbers must be non-negative")
    lo, hi = min(n, m), max(n, m)
    d = hi - lo
    x = eta * eta
    if eta == 0:
        return 1.0 if d == 0 else 0.0
    log_pref = -x / 2 + d * math.log(eta) + 0.5 * (math.lgamma(lo + 1) - math.lgamma(hi + 1))
    return abs(math.exp(log_pref) * laguerre(lo, d, x))


def sideband_matrix_elements(n, m, eta: float) -> np.ndarray:
    n = np.atleast_1d(np.asarray(n, dtype=int))
    m = np.broadcast_to(np.asarray(m, dtype=int), n.shape)
    return np.array([sideband_matrix_element(int(a), int(b), eta) for a, b in zip(n, m)])


def generalized_rabi_transfer(rabi: float, detuning: float, t: float):
    """Two-level transfer Omega^2/W^2 sin^2(W t / 2), W = sqrt(Omega^2 + delta^2)."""
    w2 = np.square(rabi) + np.square(detuning)
    w = np.sqrt(w2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(w2 > 0, np.square(rabi) / np.where(w2 > 0, w2, 1.0), 0.0) * np.sin(w * np.asarray(t) / 2) ** 2
    return float(out) if np.ndim(out) == 0 else out
