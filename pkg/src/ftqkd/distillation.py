"""Sifting, conversion of detections into dimensionless key elements,
mod-sqrt(pi) distillation and QBER estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from .errors import ConfigError
from .optics import Basis
from .units import PhysParams

SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class ScaleMap:
    """q = (X - X_origin)/s in the time basis, p = s (K - K_origin) in the
    frequency basis."""

    s: float  # m
    origin_time: float = 0.0
    origin_freq: float = 0.0  # Hz

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("scale length must be positive")


@dataclass
class SiftResult:
    keep: np.ndarray  # per slot: usable key element
    coincident: np.ndarray
    same_basis: np.ndarray
    window_rejected: np.ndarray
    counts: dict
    q1_bob: float
    q1_coincidence: float

    def gain(self, mode: str) -> float:
        return self.q1_bob if mode == "pm" else self.q1_coincidence


def sift(clicked_A, T_A, basis_A, clicked_B, T_B, basis_B, window: float | None) -> SiftResult:
    """Keep slots where both parties clicked, used the same basis, and (when
    both sides carry a timestamp) the timestamps agree within ``window``.

    In prepare-and-measure mode Alice "clicks" on every slot and has no
    timestamp (NaN), so the window does not apply.
    """
    n = len(clicked_A)
    if not (len(T_A) == len(basis_A) == len(clicked_B) == len(T_B) == len(basis_B) == n):
        raise ConfigError("sift: Alice and Bob event lists are not slot-aligned")
    clicked_A = np.asarray(clicked_A, dtype=bool)
    clicked_B = np.asarray(clicked_B, dtype=bool)
    coincident = clicked_A & clicked_B
    same = coincident & (np.asarray(basis_A) == np.asarray(basis_B))
    rejected = np.zeros(n, dtype=bool)
    if window is not None:
        with np.errstate(invalid="ignore"):
            dT = np.abs(np.asarray(T_A) - np.asarray(T_B))
        timed = same & np.isfinite(dT)
        rejected = timed & (dT > window)
    keep = same & ~rejected
    counts = {
        "sent": int(n),
        "clicks_A": int(clicked_A.sum()),
        "clicks_B": int(clicked_B.sum()),
        "coincidences": int(coincident.sum()),
        "same_basis": int(same.sum()),
        "window_rejected": int(rejected.sum()),
        "key_elements": int(keep.sum()),
    }
    q1_bob = counts["clicks_B"] / n if n else 0.0
    q1_coinc = counts["coincidences"] / n if n else 0.0
    return SiftResult(keep, coincident, same, rejected, counts, q1_bob, q1_coinc)


def q_from_time(T, scale: ScaleMap, phys: PhysParams):
    return (phys.c / phys.n) * (np.asarray(T) - scale.origin_time) / scale.s


def q_from_freq(nu, scale: ScaleMap, phys: PhysParams):
    # difference before scaling keeps precision at ~1e14 Hz carriers
    return scale.s * 2.0 * math.pi * phys.n * (np.asarray(nu) - scale.origin_freq) / phys.c


def to_dimensionless(value, basis, scale: ScaleMap, phys: PhysParams, slope: float | None = None,
                     reflect: bool = False):
    """Map measured values to dimensionless key elements.

    Time basis: ``value`` is an arrival time. Frequency basis: ``value`` is a
    frequency, or an arrival time behind a dispersive element when
    ``slope`` (s/Hz) is given, in which case nu = origin_freq + T/slope.
    ``reflect`` mirrors frequency-basis values about the origin, which is
    how the second photon of an energy-conserving pair is read.
    """
    value = np.asarray(value, dtype=float)
    basis = np.broadcast_to(np.asarray(basis), value.shape)
    q_t = q_from_time(value, scale, phys)
    if slope is not None:
        nu = scale.origin_freq + (value - scale.origin_time) / slope
    else:
        nu = value
    q_f = q_from_freq(nu, scale, phys)
    if reflect:
        q_f = -q_f
    return np.where(basis == Basis.FREQUENCY, q_f, q_t)


def gp_encode(q_A):
    """Alice's side: broadcast remainder m in [0, sqrt(pi)) and the parity
    of the lattice index of q_A - m."""
    q = np.asarray(q_A, dtype=float)
    m = np.mod(q, SQRT_PI)
    # np.mod can round up to the divisor for tiny negative inputs
    m = np.where(m >= SQRT_PI, 0.0, m)
    k = np.rint((q - m) / SQRT_PI)
    bit = np.mod(k, 2).astype(np.int8)
    if m.ndim == 0:
        return float(m), int(bit)
    return m, bit


def gp_decode(q_B, m):
    """Bob's side: nearest lattice index of q_B - m, reduced to a parity."""
    k = np.rint((np.asarray(q_B, dtype=float) - np.asarray(m)) / SQRT_PI)
    bit = np.mod(k, 2).astype(np.int8)
    return int(bit) if bit.ndim == 0 else bit


def lattice_index(q, m):
    return np.rint((np.asarray(q, dtype=float) - np.asarray(m)) / SQRT_PI).astype(np.int64)


@dataclass
class QberEstimate:
    e_hat: float
    ci_95: tuple[float, float]
    n_test: int
    n_errors: int
    test_mask: np.ndarray

    @property
    def key_length(self) -> int:
        return int((~self.test_mask).sum())


def estimate_qber(bit_A, bit_B, test_fraction: float, rng: np.random.Generator) -> QberEstimate:
    """Disclose a uniformly chosen fraction of the bits, count disagreements
    and drop the disclosed bits from the key."""
    bit_A = np.asarray(bit_A)
    bit_B = np.asarray(bit_B)
    N = len(bit_A)
    if N == 0:
        raise ValueError("no bits to estimate the QBER from")
    if not 0.0 < test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in (0, 1]")
    n_test = min(N, math.ceil(round(test_fraction * N, 9)))
    idx = rng.permutation(N)[:n_test]
    mask = np.zeros(N, dtype=bool)
    mask[idx] = True
    errors = int((bit_A[mask] != bit_B[mask]).sum())
    ci = binomtest(errors, n_test).proportion_ci(confidence_level=0.95, method="wilson")
    return QberEstimate(errors / n_test, (float(ci.low), float(ci.high)), n_test, errors, mask)
