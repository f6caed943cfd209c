"""Figure-data scans: each writes plot-ready CSV curves into an output directory."""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import io
from .config import ParsedConfig, build_beam, duration, frequency
from .dynamics import compose_double_rap, curve_fwhm, ramsey_stark_scan, readout_transfer_curve
from .physics import (
    TWO_PI,
    AtomicConstants,
    rabi_per_scatter_figure_of_merit,
    raman_rabi_frequency,
    scattering_rate,
    thermal_distribution,
)
from .sequence import ConfigError, PumpConfig, optical_pump

SCAN_NAMES = ("readout_detuning", "pump_duration", "stark_ramsey", "scatter_fom")


def _axis(cfg: ParsedConfig, name: str, parse: Callable, start: float, stop: float, points: int) -> np.ndarray:
    """Scan axis from [scan] when its kind names this scan, else the defaults."""
    s = cfg.section("scan")
    if s.get("kind") != name:
        s = {}
    a = parse(s["start"], "[scan] start") if "start" in s else start
    b = parse(s["stop"], "[scan] stop") if "stop" in s else stop
    n = s.get("points", points)
    if n < 2 or b <= a:
        raise ConfigError("[scan]", f"empty scan range ({a:g} .. {b:g}, {n} points)")
    return np.linspace(a, b, n)


def readout_detuning(cfg: ParsedConfig, out: Path) -> dict:
    grid = _axis(cfg, "readout_detuning", frequency, -TWO_PI * 800e3, TWO_PI * 800e3, 81)
    c = cfg.section("cooling")
    spread = thermal_distribution(c.get("doppler_nbar", 15.0), max(c.get("cutoff", 300), 300))
    eta = c.get("lamb_dicke", 0.06)
    gauss = readout_transfer_curve("gaussian_pi", grid, spread, eta)
    single = readout_transfer_curve("single_rap", grid, spread, eta)
    double = compose_double_rap(single, single)
    khz = grid / TWO_PI / 1e3
    files = []
    for name, curve in (("gaussian_pi", gauss), ("single_rap", single), ("double_rap", double)):
        files.append(io.write_csv(out / f"readout_{name}.csv", ("detuning_khz", "efficiency"), zip(khz, curve)))
    fw_g = curve_fwhm(khz, gauss)
    fw_s = curve_fwhm(khz, single)
    return {"files": files, "fwhm_gaussian_khz": fw_g, "fwhm_single_rap_khz": fw_s,
            "fwhm_ratio": fw_s / fw_g, "double_rap_peak": float(double.max()),
            "single_rap_peak": float(single.max())}


def pump_duration(cfg: ParsedConfig, out: Path) -> dict:
    p = cfg.section("pumping")
    base = PumpConfig(
        pi_time=p.get("pi_time", 10e-6),
        quench_duration=p.get("quench_duration", 2e-6),
        parasitic_splitting=p.get("parasitic_splitting", TWO_PI * 8e6),
        quench_rate=p.get("quench_rate", TWO_PI * 1e6),
        cw_suppression=p.get("cw_suppression", 0.5),
        cw_duration=p.get("cw_duration", 500e-6),
    )
    files, summary = [], {}
    for k in range(1, p.get("n_pulses", 3) + 1):
        r = optical_pump(replace(base, scheme="pulsed", n_pulses=k))
        files.append(io.write_csv(out / f"pump_pulsed_{k}.csv", ("pulse_us", "fidelity"),
                                  zip(r.curve_x * 1e6, r.curve_fidelity)))
        summary[f"pulsed_{k}_fidelity"] = r.fidelity
    cw = optical_pump(replace(base, scheme="cw"))
    files.append(io.write_csv(out / "pump_cw.csv", ("time_us", "fidelity"), zip(cw.curve_x * 1e6, cw.curve_fidelity)))
    summary["cw_fidelity"] = cw.fidelity
    summary["files"] = files
    return summary


def stark_ramsey(cfg: ParsedConfig, out: Path) -> dict:
    s = cfg.section("scan")
    labels = s.get("beams", ["R1"])
    beam = build_beam(cfg, labels[0])
    gap = 50e-6
    t = _axis(cfg, "stark_ramsey", duration, 0.0, gap, 201)
    res = ramsey_stark_scan(beam, t, ramsey_gap=max(gap, float(t[-1])))
    files = [io.write_csv(out / "stark_ramsey.csv", ("shift_pulse_us", "p_down"), zip(t * 1e6, res.signal))]
    row = (res.true_shift / TWO_PI / 1e3, res.extracted_shift / TWO_PI / 1e3, res.extraction_error / TWO_PI / 1e3,
           (res.fringe_period or math.nan) * 1e6)
    files.append(io.write_csv(out / "stark_ramsey_fit.csv",
                              ("true_shift_khz", "extracted_shift_khz", "error_khz", "period_us"), [row]))
    return {"files": files, "true_shift_khz": row[0], "extracted_shift_khz": row[1], "period_us": row[3]}


def scatter_fom(cfg: ParsedConfig, out: Path, constants: Optional[AtomicConstants] = None) -> dict:
    constants = constants or AtomicConstants()
    r1, r2 = build_beam(cfg, "R1"), build_beam(cfg, "R2")
    mag = np.arange(10, 101) * 1e9 * TWO_PI
    deltas = np.concatenate([-mag[::-1], mag])
    rows, worst = [], 0.0
    for d in deltas:
        om = raman_rabi_frequency(r1.resonant_rabi_frequency, r2.resonant_rabi_frequency, d)
        rate1 = scattering_rate(r1.resonant_rabi_frequency, d, constants)
        rate2 = scattering_rate(r2.resonant_rabi_frequency, d, constants)
        sim = constants.clebsch_gordan_figure_factor * om / math.sqrt(rate1 * rate2)
        line = rabi_per_scatter_figure_of_merit(d, constants)
        dev = abs(sim - line) / line
        worst = max(worst, dev)
        rows.append((d / TWO_PI / 1e9, sim, line, dev))
    f = io.write_csv(out / "scatter_fom.csv",
                     ("detuning_ghz", "rabi_per_scatter", "figure_of_merit_line", "relative_deviation"), rows)
    return {"files": [f], "max_relative_deviation": worst}


SCANS = {
    "readout_detuning": readout_detuning,
    "pump_duration": pump_duration,
    "stark_ramsey": stark_ramsey,
    "scatter_fom": scatter_fom,
}


def run_scan(kind: str, cfg: ParsedConfig, out) -> dict:
    if kind not in SCANS:
        raise ConfigError("scan kind", f"unknown kind {kind!r}; expected one of {', '.join(SCAN_NAMES)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return SCANS[kind](cfg, out)
