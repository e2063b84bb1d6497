"""Command line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import rng as rngmod
from .config import default_config, parse_config
from .errors import ConfigError
from .measurement import spectrometer_mode
from .optics import sample_epr_pairs
from .security import keyrate_gain, qber_curve, threshold_jitter, write_curve_csv
from .session import report_json, run_session
from .units import parse_quantity

EXIT_USAGE = 2
EXIT_IO = 3


def _quantity(default_unit: str):
    """argparse type: bare numbers are read in ``default_unit``."""

    def conv(text: str) -> float:
        try:
            float(text)
        except ValueError:
            return parse_quantity(text)
        return parse_quantity(f"{text} {default_unit}")

    conv.__name__ = f"quantity[{default_unit}]"
    return conv


def _load(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<file>: invalid JSON: {exc}") from None
    for key in ("pulses", "seed", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def cmd_simulate(args) -> int:
    raw = _load(args)
    if args.protocol == "pm":
        raw["mode"] = "pm"
    elif not str(raw.get("mode", "epr")).startswith("epr"):
        raw["mode"] = "epr"
    cfg = parse_config(raw)
    report = run_session(cfg, transcript_path=args.transcript)
    text = report_json(report, include_runtime=not args.no_runtime)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"report written to {args.out}", file=sys.stderr)
    else:
        print(text)
    return 0


def cmd_keyrate(args) -> int:
    try:
        r = keyrate_gain(args.gain, args.qber, args.f)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{r:.6f}")
    return 0


def cmd_qber_curve(args) -> int:
    try:
        rows = qber_curve(args.jitter_min, args.jitter_max, args.steps, args.dispersion, args.wavelength)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_curve_csv(rows, args.out or sys.stdout)
    crossing = threshold_jitter(0.11, args.dispersion, args.wavelength)
    below = [r for r in rows if r.qber <= 0.11]
    last = f"{below[-1].jitter * 1e12:.6f} ps" if below else "none"
    print(f"11% bound crossed at jitter {crossing * 1e12:.3f} ps; last row within bound: {last}",
          file=sys.stderr)
    return 0


def cmd_spectrometer(args) -> int:
    cfg = parse_config(_load(args))
    if np.sign(cfg.disp_A.D_lambda) != np.sign(cfg.disp_B.D_lambda) or cfg.disp_A.D_lambda == 0:
        print("error: spectrometer needs same-sign dispersion (D_B = +D_A); with D_B = -D_A the "
              "spectral information cancels in T_A - T_B. Set dispersion.bob to the same value "
              "as dispersion.alice.", file=sys.stderr)
        return EXIT_USAGE
    parts = []
    n_batches = -(-cfg.pulses // cfg.batch_size)
    for b in range(n_batches):
        first = b * cfg.batch_size
        n = min(cfg.batch_size, cfg.pulses - first)
        parts.append(sample_epr_pairs(rngmod.stream(cfg.seed, "source", b), cfg.spdc, n, first))
    cat = {f: np.concatenate([getattr(p, f) for p in parts]) for f in ("nu_A", "t_A", "nu_B", "t_B")}
    res = spectrometer_mode(cat["nu_A"], cat["t_A"], cat["nu_B"], cat["t_B"], cfg.disp_A, cfg.disp_B,
                            cfg.det_A, cfg.det_B, cfg.phys,
                            rngmod.stream(cfg.seed, "detector_a", 0), rngmod.stream(cfg.seed, "detector_b", 0),
                            spdc=cfg.spdc, n_bins=args.bins)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_center_s", "count"))
        for c, k in zip(res.bin_centers, res.counts):
            w.writerow((f"{c:.9e}", int(k)))
    flag = " (resolution limited: jitter floor)" if res.resolution_limited else ""
    print(f"recovered bandwidth: {res.recovered_bandwidth / 1e9:.4f} GHz RMS{flag}")
    print(f"raw: {res.raw_bandwidth / 1e9:.4f} GHz, noise floor: {res.floor_bandwidth / 1e9:.4f} GHz, "
          f"coincidences: {int(res.counts.sum())}")
    return 0


def cmd_print_config(args) -> int:
    print(json.dumps(default_config(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ftqkd", description="Frequency-time coding QKD simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="run a full protocol session")
    s.add_argument("protocol", choices=("pm", "epr"))
    s.add_argument("--config", help="JSON config; missing fields take the print-config defaults")
    s.add_argument("--pulses", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", help="report JSON path (default: stdout)")
    s.add_argument("--transcript", help="write the public transcript as JSON lines")
    s.add_argument("--no-runtime", action="store_true", help="omit the wall-clock field")
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("keyrate", help="key rate per pulse from QBER and gain")
    k.add_argument("--qber", type=float, required=True)
    k.add_argument("--gain", type=float, default=1.0)
    k.add_argument("--f", type=float, default=1.0, help="error-correction efficiency")
    k.set_defaults(func=cmd_keyrate)

    c = sub.add_parser("qber-curve", help="intrinsic QBER versus detector jitter")
    c.add_argument("--jitter-min", type=_quantity("ps"), default=10e-12)
    c.add_argument("--jitter-max", type=_quantity("ps"), default=200e-12)
    c.add_argument("--steps", type=int, default=191)
    c.add_argument("--dispersion", type=_quantity("ps/nm"), default=7e3 * 1e-3)
    c.add_argument("--wavelength", type=_quantity("nm"), default=1550e-9)
    c.add_argument("--out", help="CSV path (default: stdout)")
    c.set_defaults(func=cmd_qber_curve)

    sp = sub.add_parser("spectrometer", help="measure the SPDC spectrum with D_B = +D_A")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True, help="histogram CSV path")
    sp.add_argument("--pulses", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--bins", type=int, default=200)
    sp.set_defaults(func=cmd_spectrometer)

    pc = sub.add_parser("print-config", help="print the default session config")
    pc.set_defaults(func=cmd_print_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
