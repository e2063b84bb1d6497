"""Analytic security math: binary entropy, key rates, the QBER bound and
the detector-limited conditional-variance chain."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import entr, erfc

from .units import C, PhysParams, dispersion_to_freq_slope, fwhm_to_rms

SQRT_PI = math.sqrt(math.pi)


def h2(x):
    """Binary entropy in bits, with h2(0) = h2(1) = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError(f"binary entropy argument outside [0, 1]: {x}")
    out = (entr(arr) + entr(1.0 - arr)) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


def _check_rate_inputs(e, f, gain=1.0):
    if not 0.0 <= e <= 0.5:
        raise ValueError(f"QBER must lie in [0, 0.5], got {e}")
    if not f >= 1.0:
        raise ValueError(f"error-correction efficiency must be >= 1, got {f}")
    if not 0.0 <= gain <= 1.0:
        raise ValueError(f"gain must lie in [0, 1], got {gain}")


def keyrate_ideal(e: float, f: float = 1.0) -> float:
    """Secure bits per sifted-or-not signal for a single-photon source.

    The raw formula value is returned, negative when no key can be made;
    callers clip with ``max(R, 0)`` if they want the usable rate.
    """
    _check_rate_inputs(e, f)
    he = h2(e)
    return 0.5 * (1.0 - f * he - he)


def keyrate_gain(Q1: float, e1: float, f: float = 1.0) -> float:
    """Key rate per pulse sent when only a fraction ``Q1`` is detected."""
    _check_rate_inputs(e1, f, Q1)
    he = h2(e1)
    return 0.5 * Q1 * (1.0 - f * he - he)


def qber_bound(delta_sq):
    """Upper bound on the bit error rate of mod-sqrt(pi) distillation when
    q_A - q_B has density exp(-x^2/Delta^2) / sqrt(pi Delta^2)."""
    d2 = np.asarray(delta_sq, dtype=float)
    if np.any(d2 <= 0):
        raise ValueError("conditional variance must be positive")
    out = 2.0 * np.sqrt(d2) / math.pi * np.exp(-math.pi / (4.0 * d2))
    return float(out) if out.ndim == 0 else out


def parity_error_exact(delta_sq: float) -> float:
    """Exact bit error rate of the distillation for Gaussian pairwise noise
    of variance Delta^2/2: total mass in the odd sqrt(pi) windows.

    Sums ``P(|x| > (j - 1/2) sqrt(pi))`` with alternating sign until the
    terms underflow.
    """
    if not delta_sq > 0:
        raise ValueError("conditional variance must be positive")
    delta = math.sqrt(delta_sq)
    total = 0.0
    j = 1
    while True:
        # P(|x| > a) for x ~ N(0, delta^2/2) is erfc(a / delta)
        term = erfc((j - 0.5) * SQRT_PI / delta)
        if term == 0.0 or term < 1e-18 * max(total, 1e-300):
            break
        total += term if j % 2 == 1 else -term
        j += 1
    return total


@dataclass(frozen=True)
class VarianceBudget:
    delta_X: float  # m
    delta_K: float  # rad/m
    delta_sq: float
    delta_t: float  # s, width after FWHM conversion

    @property
    def scale(self) -> float:
        """Length (m) that makes q = X/s and p = s K share the same spread."""
        return math.sqrt(self.delta_X / self.delta_K)


def scale_length(D_lambda: float, lambda0: float, n: float, c: float = C) -> float:
    """sqrt(Delta_X / Delta_K); the jitter cancels in the ratio."""
    return math.sqrt(c * lambda0**2 * abs(D_lambda) / (2.0 * math.pi * n**2))


def delta_sq_closed_form(jitter_fwhm: float, D_lambda: float, lambda0: float, c: float = C) -> float:
    return math.pi * c / (math.log(2.0) * lambda0**2 * D_lambda) * jitter_fwhm**2


def variance_chain(jitter_fwhm: float, D_lambda: float, lambda0: float, n: float) -> VarianceBudget:
    """Conditional variance of the dispersive entanglement scheme, limited by
    detector timing jitter.

    ``D_lambda`` is the magnitude of the dispersion in s/m. The product
    route 2 Delta_X Delta_K is checked against the n-free closed form.
    """
    if not D_lambda > 0:
        raise ValueError("dispersion magnitude must be positive")
    if not lambda0 > 0:
        raise ValueError("wavelength must be positive")
    if not jitter_fwhm > 0:
        raise ValueError("jitter must be positive")
    p = PhysParams(n=n, lambda0=lambda0)
    dt = fwhm_to_rms(jitter_fwhm)
    dX = p.c / p.n * dt
    # dK = (2 pi n / c) d(nu) with d(nu) = dt / slope
    dK = 2.0 * math.pi * p.n / p.c * dt / dispersion_to_freq_slope(D_lambda, p)
    d2 = 2.0 * dX * dK
    closed = delta_sq_closed_form(jitter_fwhm, D_lambda, lambda0, p.c)
    if abs(d2 - closed) > 1e-12 * closed:
        raise ArithmeticError(f"variance chain mismatch: {d2} vs {closed}")
    return VarianceBudget(delta_X=dX, delta_K=dK, delta_sq=d2, delta_t=dt)


@dataclass(frozen=True)
class CurveRow:
    jitter: float
    delta_sq: float
    qber: float
    keyrate: float


def qber_curve(jitter_min: float, jitter_max: float, steps: int, D_lambda: float,
               lambda0: float, n: float = 1.468) -> list[CurveRow]:
    if not jitter_min > 0 or jitter_max < jitter_min:
        raise ValueError("need 0 < jitter_min <= jitter_max")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    rows = []
    for dt in np.linspace(jitter_min, jitter_max, steps):
        d2 = variance_chain(float(dt), D_lambda, lambda0, n).delta_sq
        e = qber_bound(d2)
        rows.append(CurveRow(float(dt), d2, e, keyrate_ideal(min(e, 0.5), 1.0)))
    return rows


def threshold_jitter(target_qber: float, D_lambda: float, lambda0: float) -> float:
    """Jitter FWHM (s) at which the QBER bound reaches ``target_qber``."""
    # qber_bound is monotone in Delta^2, which is quadratic in jitter
    d2 = brentq(lambda x: qber_bound(x) - target_qber, 1e-6, 50.0, xtol=1e-15)
    unit = delta_sq_closed_form(1.0, D_lambda, lambda0)
    return math.sqrt(d2 / unit)


CURVE_HEADER = ("jitter_ps", "delta_sq", "qber", "keyrate")


def write_curve_csv(rows: list[CurveRow], path) -> None:
    """Write the curve to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_curve(rows, path)
        return
    with open(Path(path), "w", newline="") as fh:
        _write_curve(rows, fh)


def _write_curve(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for r in rows:
        w.writerow([f"{r.jitter * 1e12:.6f}", f"{r.delta_sq:.10e}",
                    f"{r.qber:.10e}", f"{r.keyrate:.10e}"])


def security_threshold(f: float = 1.0) -> float:
    """QBER at which the ideal key rate crosses zero."""
    if not f >= 1.0:
        raise ValueError("f must be >= 1")
    if keyrate_ideal(1e-15, f) <= 0:
        return 0.0
    return brentq(lambda e: keyrate_ideal(e, f), 1e-15, 0.5, xtol=1e-12)


def binary_scheme_constraint(nu1: float, nu2: float, t1: float, t2: float) -> dict:
    """Time-bandwidth product of a binary frequency/time modulation.

    Advisory only: no security statement is attached to the verdict.
    """
    product = abs(nu2 - nu1) * abs(t2 - t1)
    # 1 GHz x 1 ns must land on the boundary despite rounding
    return {"product": product, "satisfied": product <= 1.0 + 1e-12}
