"""Sectioned key-value experiment configuration with explicit units.

Frequencies are written in Hz/kHz/MHz/GHz (converted to rad/s) or rad/s;
times in s/ms/us/ns; lengths in m/um/nm; angles in deg/rad. Unknown
sections and keys are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .dynamics import DecoherenceModel
from .physics import (
    AMU,
    TWO_PI,
    LaserBeamSpec,
    PhysicsDomainError,
    TransitionSpec,
    TrapConfig,
    effective_wavevector,
    lamb_dicke_factor,
    raman_rabi_frequency,
)
from .sequence import (
    ConfigError,
    CoolingSchedule,
    CoolingStage,
    HeatingModel,
    PumpConfig,
    ReadoutModel,
    SequenceConfig,
    reference_schedule,
)

FREQ_UNITS = {"hz": TWO_PI, "khz": TWO_PI * 1e3, "mhz": TWO_PI * 1e6, "ghz": TWO_PI * 1e9, "rad/s": 1.0}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}
LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}
ANGLE_UNITS = {"deg": math.pi / 180, "rad": 1.0}
RATE_UNITS = {"/s": 1.0, "/ms": 1e3, "/us": 1e6}

_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def _quantity(text: str, units: dict[str, float], where: str, required_unit: bool = True) -> float:
    m = _NUM.match(text)
    if not m:
        raise ConfigError(where, f"cannot parse {text!r} as a number with unit")
    value, unit = float(m.group(1)), m.group(2)
    if not unit:
        if required_unit:
            raise ConfigError(where, f"missing unit suffix in {text!r}; expected one of {sorted(units)}")
        return value
    key = unit if unit in units else unit.lower()
    if key not in units:
        raise ConfigError(where, f"unknown unit {unit!r}; expected one of {sorted(units)}")
    return value * units[key]


def frequency(text, where):
    return _quantity(text, FREQ_UNITS, where)


def duration(text, where):
    return _quantity(text, TIME_UNITS, where)


def length(text, where):
    return _quantity(text, LENGTH_UNITS, where)


def angle(text, where):
    return _quantity(text, ANGLE_UNITS, where)


def rate(text, where):
    return _quantity(text, RATE_UNITS, where)


def number(text, where):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(where, f"expected a plain number, got {text!r}") from None


def integer(text, where):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(where, f"expected an integer, got {text!r}") from None


def word(text, where):
    return text.strip()


def _list(parse: Callable) -> Callable:
    def inner(text, where):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return [parse(p, where) for p in parts]
    return inner


# allowed keys per section and their parsers
SCHEMA: dict[str, dict[str, Callable]] = {
    "trap": {"axial_frequency": frequency, "radial_frequencies": _list(frequency),
             "rf_drive_frequency": frequency, "ion_mass_u": number},
    "beams.*": {"rabi_frequency": frequency, "detuning": frequency, "wavelength": length,
                "angle": angle, "label": word},
    "cooling": {"mode": word, "doppler_nbar": number, "thermal_nbar": number, "cutoff": integer,
                "beam": word, "rabi_frequency": frequency, "lamb_dicke": number, "heating_rate": rate,
                "stages": word, "cycles_per_repump": integer, "repump_style": word,
                "wrong_spin_per_cycle": number, "carrier_reheating": number},
    "pumping": {"scheme": word, "n_pulses": integer, "pulse_duration": duration, "quench_duration": duration,
                "parasitic_splitting": frequency, "pi_time": duration, "cw_suppression": number,
                "quench_rate": frequency, "cw_duration": duration},
    "readout": {"bright_mean": number, "dark_mean": number, "window": duration, "threshold": integer,
                "shelving": word, "shelving_scheme": word},
    "scan": {"kind": word, "start": word, "stop": word, "points": integer, "shots": integer,
             "transition": word, "beams": _list(word), "lamb_dicke": number, "delays": _list(duration),
             "probe_duration": duration, "rabi_frequency": frequency},
    "noise": {"contrast": number, "coherence_time": duration, "decay_rate": rate},
    "seed": {"value": integer},
}
REQUIRED = {"trap": ("axial_frequency",)}


class ParsedConfig(dict):
    """Section -> {key: parsed value}; ``digest`` hashes the canonical content."""

    digest: str = ""
    raw: dict[str, dict[str, str]]

    def section(self, name: str) -> dict[str, Any]:
        return self.get(name, {})

    def beams(self) -> dict[str, dict[str, Any]]:
        return {k.split(".", 1)[1]: v for k, v in self.items() if k.startswith("beams.")}


def _schema_for(section: str) -> Optional[dict[str, Callable]]:
    if section.startswith("beams."):
        return SCHEMA["beams.*"]
    return SCHEMA.get(section)


def parse_config_text(text: str) -> ParsedConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None,
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    out = ParsedConfig()
    raw: dict[str, dict[str, str]] = {}
    for sec in cp.sections():
        schema = _schema_for(sec)
        if schema is None:
            raise ConfigError(f"[{sec}]", "unknown section")
        parsed = {}
        raw[sec] = {}
        for key, val in cp.items(sec):
            if key not in schema:
                raise ConfigError(f"[{sec}] {key}", f"unknown key; allowed: {', '.join(sorted(schema))}")
            parsed[key] = schema[key](val, f"[{sec}] {key}")
            raw[sec][key] = val.strip()
        out[sec] = parsed
    for sec, keys in REQUIRED.items():
        for key in keys:
            if key not in out.get(sec, {}):
                raise ConfigError(f"[{sec}] {key}", "required key is missing")
    out.raw = raw
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    out.digest = hashlib.sha256(canon.encode("utf-8")).hexdigest()
    return out


def load_config(path: str | Path) -> ParsedConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text)


# --------------------------------------------------------------------------
# building domain objects

DEFAULT_BEAMS = {
    # Raman pair: R1 and R2 orthogonal, difference vector along the trap axis;
    # CC copropagates with R1
    "R1": dict(rabi_frequency=TWO_PI * 141.4e6, detuning=TWO_PI * 40e9, wavelength=397e-9, angle=math.radians(45)),
    "R2": dict(rabi_frequency=TWO_PI * 141.4e6, detuning=TWO_PI * 40e9, wavelength=397e-9, angle=math.radians(135)),
    "CC": dict(rabi_frequency=TWO_PI * 141.4e6, detuning=TWO_PI * 40e9, wavelength=397e-9, angle=math.radians(45)),
    "q729": dict(rabi_frequency=TWO_PI * 150e3, detuning=0.0, wavelength=729e-9, angle=math.radians(45)),
}


def build_trap(cfg: ParsedConfig) -> TrapConfig:
    t = cfg.section("trap")
    kwargs = {"axial_frequency": t["axial_frequency"]}
    if "radial_frequencies" in t:
        if len(t["radial_frequencies"]) != 2:
            raise ConfigError("[trap] radial_frequencies", "expected two frequencies")
        kwargs["radial_frequencies"] = tuple(t["radial_frequencies"])
    if "rf_drive_frequency" in t:
        kwargs["rf_drive_frequency"] = t["rf_drive_frequency"]
    if "ion_mass_u" in t:
        kwargs["ion_mass"] = t["ion_mass_u"] * AMU
    try:
        return TrapConfig(**kwargs)
    except PhysicsDomainError as exc:
        raise ConfigError("[trap]", str(exc)) from None


def build_beam(cfg: ParsedConfig, label: str) -> LaserBeamSpec:
    spec = dict(DEFAULT_BEAMS.get(label, {}))
    spec.update(cfg.beams().get(label, {}))
    missing = [k for k in ("rabi_frequency", "detuning", "wavelength", "angle") if k not in spec]
    if missing:
        raise ConfigError(f"[beams.{label}]", f"missing keys: {', '.join(missing)}")
    try:
        return LaserBeamSpec(spec["rabi_frequency"], spec["detuning"], spec["wavelength"], spec["angle"],
                             spec.get("label", label))
    except PhysicsDomainError as exc:
        raise ConfigError(f"[beams.{label}]", str(exc)) from None


def build_coherent_transition(cfg: ParsedConfig, trap: TrapConfig) -> TransitionSpec:
    s = cfg.section("scan")
    labels = s.get("beams", ["R1", "R2"])
    kind = s.get("transition", "blue_sideband")
    beams = [build_beam(cfg, b) for b in labels]
    if len(beams) == 2:
        a, b = beams
        if "rabi_frequency" in s:
            om0 = s["rabi_frequency"]
        else:
            try:
                om0 = raman_rabi_frequency(a.resonant_rabi_frequency, b.resonant_rabi_frequency, a.detuning)
            except PhysicsDomainError as exc:
                raise ConfigError("[scan] beams", str(exc)) from None
        k = effective_wavevector(a, b)
    elif len(beams) == 1:
        om0 = s.get("rabi_frequency", beams[0].resonant_rabi_frequency)
        k = effective_wavevector(beams[0])
    else:
        raise ConfigError("[scan] beams", "expected one beam or a Raman pair")
    eta = s.get("lamb_dicke", lamb_dicke_factor(k, trap.axial_frequency, trap.ion_mass))
    try:
        return TransitionSpec(om0, eta, kind)
    except PhysicsDomainError as exc:
        raise ConfigError("[scan] transition", str(exc)) from None


def parse_stages(text: str) -> tuple[CoolingStage, ...]:
    """``10 us 2 us 80 sigma_397; 20 us 2 us 40 pump_729``"""
    stages = []
    for i, chunk in enumerate(p.strip() for p in text.split("|") if p.strip()):
        where = f"[cooling] stages #{i + 1}"
        tok = chunk.split()
        if len(tok) not in (5, 6):
            raise ConfigError(where, "expected '<pulse> <unit> <quench> <unit> <cycles> [repump_style]'")
        try:
            stages.append(CoolingStage(duration(" ".join(tok[0:2]), where), duration(" ".join(tok[2:4]), where),
                                       integer(tok[4], where), tok[5] if len(tok) == 6 else None))
        except PhysicsDomainError as exc:
            raise ConfigError(where, str(exc)) from None
    if not stages:
        raise ConfigError("[cooling] stages", "no stages given")
    return tuple(stages)


def _scan_axis(s: dict, kind: str) -> np.ndarray:
    for key in ("start", "stop", "points"):
        if key not in s:
            raise ConfigError(f"[scan] {key}", "required key is missing")
    parse = frequency if kind == "detuning" else duration
    start = parse(s["start"], "[scan] start")
    stop = parse(s["stop"], "[scan] stop")
    points = s["points"]
    if points < 1 or (points > 1 and stop <= start) or (points == 1 and stop < start):
        raise ConfigError("[scan]", f"empty scan range (start={s['start']}, stop={s['stop']}, points={points})")
    return np.linspace(start, stop, points)


def build_sequence_config(cfg: ParsedConfig, seed: Optional[int] = None) -> SequenceConfig:
    trap = build_trap(cfg)
    c, p, r, s, nz = (cfg.section(k) for k in ("cooling", "pumping", "readout", "scan", "noise"))
    if "kind" not in s:
        raise ConfigError("[scan] kind", "required key is missing")
    kind = s["kind"]
    if kind not in ("pulse_duration", "detuning", "delay"):
        raise ConfigError("[scan] kind", f"simulate needs pulse_duration, detuning or delay, not {kind!r}")
    coherent = build_coherent_transition(cfg, trap)

    contrast = nz.get("contrast", 0.96)
    if "decay_rate" in nz:
        gamma = nz["decay_rate"]
    elif "coherence_time" in nz:
        gamma = 1.0 / nz["coherence_time"]
    else:
        gamma = 1.0 / 280e-6
    try:
        decoherence = DecoherenceModel(gamma, contrast)
    except PhysicsDomainError as exc:
        raise ConfigError("[noise]", str(exc)) from None

    cool_beam = build_beam(cfg, c.get("beam", "q729"))
    cool_eta = c.get("lamb_dicke", lamb_dicke_factor(effective_wavevector(cool_beam), trap.axial_frequency,
                                                      trap.ion_mass))
    cool_tr = TransitionSpec(c.get("rabi_frequency", cool_beam.resonant_rabi_frequency), cool_eta, "red_sideband")
    try:
        base = reference_schedule()
        schedule = CoolingSchedule(
            stages=parse_stages(c["stages"]) if "stages" in c else base.stages,
            cycles_per_repump=c.get("cycles_per_repump", base.cycles_per_repump),
            repump_style=c.get("repump_style", base.repump_style),
            wrong_spin_per_cycle=c.get("wrong_spin_per_cycle", base.wrong_spin_per_cycle),
            carrier_reheating=c.get("carrier_reheating", base.carrier_reheating),
        )
        heating = HeatingModel(c.get("heating_rate", 300.0))
        pump_defaults = PumpConfig()
        pump = PumpConfig(
            scheme=p.get("scheme", pump_defaults.scheme),
            n_pulses=p.get("n_pulses", pump_defaults.n_pulses),
            pulse_729_duration=p.get("pulse_duration", pump_defaults.pulse_729_duration),
            quench_duration=p.get("quench_duration", pump_defaults.quench_duration),
            parasitic_splitting=p.get("parasitic_splitting", pump_defaults.parasitic_splitting),
            pi_time=p.get("pi_time", pump_defaults.pi_time),
            cw_suppression=p.get("cw_suppression", pump_defaults.cw_suppression),
            quench_rate=p.get("quench_rate", pump_defaults.quench_rate),
            cw_duration=p.get("cw_duration", pump_defaults.cw_duration),
        )
    except PhysicsDomainError as exc:
        raise ConfigError("[cooling]/[pumping]", str(exc)) from None

    shelving = r.get("shelving", "1.0")
    readout_kwargs = dict(bright_mean=r.get("bright_mean", 55.0), dark_mean=r.get("dark_mean", 5.0),
                          window=r.get("window", 3e-3), threshold=r.get("threshold"))
    try:
        if shelving == "auto":
            readout = ReadoutModel.with_shelving_from_curve(r.get("shelving_scheme", "double_rap"), 0.0, None,
                                                           cool_eta, **readout_kwargs)
        else:
            readout = ReadoutModel(shelving_efficiency=number(shelving, "[readout] shelving"), **readout_kwargs)
    except PhysicsDomainError as exc:
        raise ConfigError("[readout]", str(exc)) from None

    if seed is None:
        seed = cfg.section("seed").get("value", 0)
    mode = c.get("mode", "sideband")
    sc = SequenceConfig(
        trap_frequency=trap.axial_frequency,
        coherent=coherent,
        decoherence=decoherence,
        cooling_mode=mode,
        doppler_nbar=c.get("doppler_nbar", 15.0),
        thermal_nbar=c.get("thermal_nbar", 0.24),
        cutoff=c.get("cutoff", 300 if mode == "sideband" else 60),
        cooling_transition=cool_tr,
        schedule=schedule,
        heating=heating,
        pump=pump,
        readout=readout,
        scan_kind=kind,
        scan_values=_scan_axis(s, kind),
        delays=tuple(s.get("delays", [0.0])),
        probe_duration=s.get("probe_duration", 10e-6),
        shots=s.get("shots", 100),
        seed=seed,
        digest=cfg.digest,
    )
    sc.validate()
    return sc
