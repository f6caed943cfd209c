"""Spin-motion simulation and phonon tomography for a single trapped ion."""

from .physics import (
    LaserBeamSpec,
    PhononDistribution,
    TransitionSpec,
    TrapConfig,
    lamb_dicke_factor,
    sideband_matrix_element,
    thermal_distribution,
)
from .sequence import SequenceConfig, run_sequence
from .tomography import RabiTrace, deconvolve, heating_rate_fit

__all__ = [
    "LaserBeamSpec", "PhononDistribution", "TransitionSpec", "TrapConfig", "lamb_dicke_factor",
    "sideband_matrix_element", "thermal_distribution", "SequenceConfig", "run_sequence",
    "RabiTrace", "deconvolve", "heating_rate_fit",
]
