"""Command-line entry point: simulate, reconstruct, fit-heating, scan.

Exit codes: 0 success, 2 validation error, 3 numerical failure. Errors are
printed to stderr as single lines starting with ``error:``.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import io
from .config import ConfigError, build_sequence_config, frequency, load_config
from .dynamics import FitError, IntegrationError
from .physics import TWO_PI, CutoffError, PhysicsDomainError
from .scans import SCAN_NAMES, run_scan
from .sequence import run_sequence
from .tomography import (
    DeconvolutionError,
    RabiTrace,
    ReconstructionResult,
    TomographyError,
    cosine_transform,
    deconvolve,
    default_frequency_grid,
    heating_rate_fit,
    predict_line_positions,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


def versions() -> dict[str, str]:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"artifact": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# ---------------------------------------------------------------- simulate

def trace_name(index: int, delay: float) -> str:
    return f"trace_{index:02d}_delay_{io.fmt(round(delay * 1e3, 9))}ms.csv"


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seq = build_sequence_config(cfg, seed=args.seed)
    out = Path(args.out)
    results = run_sequence(seq, workers=args.workers)
    files = []
    for k, r in enumerate(results):
        name = trace_name(k, r.delay)
        if r.scan_kind == "detuning":
            x = r.scan_values / TWO_PI / 1e3
            io.write_csv(out / name, ("detuning_khz", "p_down", "shots", "successes"),
                         ((io.fmt(a), io.fmt(p), int(n), int(s))
                          for a, p, n, s in zip(x, r.p_down, r.shots, r.successes)))
        else:
            io.TraceFile(r.scan_values, r.shots, r.successes).write(out / name)
        files.append({"file": name, "delay_ms": r.delay * 1e3, "true_mean_phonon": r.mean_phonon})
    manifest = {
        "command": "simulate",
        "config": Path(args.config).name,
        "config_digest": cfg.digest,
        "seed": seq.seed,
        "scan_kind": seq.scan_kind,
        "rabi_frequency_khz": seq.coherent.base_rabi_frequency / TWO_PI / 1e3,
        "lamb_dicke": seq.coherent.lamb_dicke,
        "shots": seq.shots,
        "traces": files,
        "versions": versions(),
    }
    io.atomic_write_text(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True, allow_nan=True) + "\n")
    print(f"wrote {len(files)} trace(s) and {MANIFEST} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- reconstruct

def _manifest_entry(trace_path: Path):
    man = trace_path.parent / MANIFEST
    if not man.exists():
        return None, None
    data = json.loads(man.read_text(encoding="utf-8"))
    for entry in data.get("traces", []):
        if entry.get("file") == trace_path.name:
            return data, entry
    return data, None


def _rabi_arg(text: str) -> float:
    try:
        return float(text) * TWO_PI * 1e3       # bare numbers are kHz
    except ValueError:
        return frequency(text, "--omega0")


def format_report(trace_path, result: ReconstructionResult, omega0: float, eta: float, nmax: int,
                  delay_ms: float, lines) -> str:
    g = result.decay_rate
    head = [
        "# phonon distribution reconstruction",
        f"trace: {trace_path}",
        f"delay_ms: {io.fmt(delay_ms)}",
        f"omega0_khz: {io.fmt(omega0 / TWO_PI / 1e3)}",
        f"eta: {io.fmt(eta)}",
        f"nmax: {nmax}",
        f"contrast: {result.contrast:.6f}",
        f"decay_rate_per_ms: {g * 1e-3:.6f}",
        f"coherence_time_us: {(1e6 / g) if g > 0 else math.inf:.4f}",
        f"mean_phonon: {result.mean_phonon:.6f}",
        f"mean_phonon_error: {result.mean_phonon_error:.6f}",
        f"residual_norm: {result.residual_norm:.6g}",
        f"rms_residual: {result.rms_residual:.6g}",
        f"reduced_chi2: {result.reduced_chi2:.6g}",
        f"model_mismatch: {'yes' if result.model_mismatch else 'no'}",
        f"iterations: {result.iterations}",
        "",
        "n,P_n,sigma,line_khz",
    ]
    sig = result.uncertainties if result.uncertainties is not None else np.full(result.populations.size, math.nan)
    rows = [f"{n},{p:.6f},{s:.6f},{(lines[n] / TWO_PI / 1e3) if n < len(lines) else math.nan:.4f}"
            for n, (p, s) in enumerate(zip(result.populations, sig))]
    return "\n".join(head + rows) + "\n"


def cmd_reconstruct(args) -> int:
    trace_path = Path(args.trace)
    tf = io.read_trace(trace_path)
    shots = int(tf.shots[0]) if np.all(tf.shots == tf.shots[0]) else None
    trace = RabiTrace(tf.times, tf.p_down, shots)
    _, entry = _manifest_entry(trace_path)
    delay_ms = args.delay if args.delay is not None else (entry or {}).get("delay_ms", 0.0)
    omega0 = _rabi_arg(args.omega0)
    if args.nmax < 0:
        raise UsageError("--nmax must be non-negative")
    lines = predict_line_positions(omega0, args.eta, args.nmax)
    out = Path(args.out) if args.out else trace_path.with_suffix("")
    rng = np.random.default_rng(args.seed)
    try:
        result = deconvolve(trace, lines, contrast=args.contrast, decay_rate=1.0 / args.coherence_time_us * 1e6,
                            n_bootstrap=args.bootstrap, rng=rng)
    except DeconvolutionError as exc:
        hist = io.write_csv(out.with_name(out.name + ".residuals.csv"), ("iteration", "residual"),
                            enumerate(exc.residual_history))
        raise DeconvolutionError(f"{exc} (residual history: {hist})", exc.best, exc.residual_history) from None
    report = out.with_name(out.name + ".report.txt")
    io.atomic_write_text(report, format_report(trace_path, result, omega0, args.eta, args.nmax, delay_ms, lines))
    spec = cosine_transform(trace, default_frequency_grid(lines, trace), lines)
    spectrum = io.write_spectrum(out.with_name(out.name + ".spectrum.csv"), spec.frequencies, spec.magnitudes)
    flag = " (model mismatch)" if result.model_mismatch else ""
    print(f"mean_phonon {result.mean_phonon:.4f}{flag}; wrote {report} and {spectrum}")
    return EXIT_OK


# ---------------------------------------------------------------- fit-heating

def _heating_points(path: Path) -> list[tuple]:
    if path.is_dir():
        reports = sorted(path.glob("*.report.txt"))
        pts = []
        for rp in reports:
            kv = io.read_report(rp)
            try:
                d, m = float(kv["delay_ms"]), float(kv["mean_phonon"])
            except (KeyError, ValueError):
                raise io.FileFormatError(rp, "report lacks delay_ms / mean_phonon") from None
            s = float(kv.get("mean_phonon_error", "nan"))
            pts.append((d, m, s))
    else:
        header, data = io.read_csv_table(path)
        if header[:2] != ["delay_ms", "mean_phonon"]:
            raise io.FileFormatError(path, "header must start with delay_ms,mean_phonon", 1)
        pts = [(r[0], r[1], r[2] if len(r) > 2 else math.nan) for r in data]
    if len(pts) < 2:
        raise UsageError(f"need at least two heating points, found {len(pts)} in {path}")
    if all(math.isfinite(p[2]) and p[2] > 0 for p in pts):
        return pts
    return [(d, m) for d, m, _ in pts]


def cmd_fit_heating(args) -> int:
    pts = _heating_points(Path(args.points))
    fit = heating_rate_fit(pts)
    lines = [
        "# heating rate fit",
        f"slope_per_ms: {fit.slope:.6f}",
        f"slope_error_per_ms: {fit.slope_error:.6f}",
        f"intercept: {fit.intercept:.6f}",
        f"intercept_error: {fit.intercept_error:.6f}",
        f"points: {len(pts)}",
        "",
        "delay_ms,mean_phonon,sigma",
    ] + [f"{io.fmt(p[0])},{p[1]:.6f},{(p[2] if len(p) > 2 else math.nan):.6f}" for p in sorted(pts)]
    text = "\n".join(lines) + "\n"
    if args.out:
        io.atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- scan

def cmd_scan(args) -> int:
    if args.kind not in SCAN_NAMES:
        raise UsageError(f"unknown scan kind {args.kind!r}; expected one of {', '.join(SCAN_NAMES)}")
    cfg = load_config(args.config)
    summary = run_scan(args.kind, cfg, args.out)
    for f in summary.pop("files"):
        print(f"wrote {f}")
    for k, v in summary.items():
        print(f"{k}: {v:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ionspin", description="Trapped-ion spin/motion simulator and tomography.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run the experiment sequence and write trace CSVs")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int, default=None, help="overrides [seed] value")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("reconstruct", help="recover the phonon distribution from a sideband trace")
    rp.add_argument("trace")
    rp.add_argument("--omega0", required=True, help="base Rabi frequency, kHz or with unit (e.g. '250 kHz')")
    rp.add_argument("--eta", type=float, required=True)
    rp.add_argument("--nmax", type=int, default=3)
    rp.add_argument("--out", default=None, help="output prefix (default: trace path without suffix)")
    rp.add_argument("--delay", type=float, default=None, help="heating delay in ms (default: from manifest)")
    rp.add_argument("--contrast", type=float, default=0.96, help="initial contrast guess")
    rp.add_argument("--coherence-time-us", type=float, default=280.0, help="initial coherence-time guess")
    rp.add_argument("--bootstrap", type=int, default=0, help="binomial resamples for uncertainties")
    rp.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    rp.set_defaults(func=cmd_reconstruct)

    hp = sub.add_parser("fit-heating", help="fit mean phonon number against delay")
    hp.add_argument("points", help="CSV delay_ms,mean_phonon[,sigma] or a directory of *.report.txt")
    hp.add_argument("--out", default=None)
    hp.set_defaults(func=cmd_fit_heating)

    cp = sub.add_parser("scan", help="write figure-data curves")
    cp.add_argument("kind", help=", ".join(SCAN_NAMES))
    cp.add_argument("config")
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_scan)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IntegrationError, DeconvolutionError, FitError, CutoffError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, io.FileFormatError, UsageError, PhysicsDomainError, TomographyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
