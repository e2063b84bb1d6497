"""Gaussian wavepackets, the Gaussian-modulated prepare-and-measure sources
and the SPDC energy-time entangled pair source.

Widths follow the intensity convention exp[-(w - w_c)^2 / sigma^2], so the
RMS width of any profile is sigma / sqrt(2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Basis(IntEnum):
    TIME = 0
    FREQUENCY = 1


@dataclass(frozen=True)
class GaussianPulse:
    center_freq: float  # rad/s
    center_time: float  # s
    sigma_omega: float  # rad/s
    sigma_t: float  # s

    def __post_init__(self):
        if not (self.sigma_omega > 0 and self.sigma_t > 0):
            raise ValueError("pulse widths must be positive")

    @classmethod
    def transform_limited(cls, center_freq: float, center_time: float, sigma_omega: float):
        return cls(center_freq, center_time, sigma_omega, 1.0 / sigma_omega)

    @property
    def rms_omega(self) -> float:
        return self.sigma_omega / math.sqrt(2.0)

    @property
    def rms_t(self) -> float:
        return self.sigma_t / math.sqrt(2.0)


@dataclass(frozen=True)
class PmSourceParams:
    omega0: float
    sigma_omega1: float  # S1 linewidth, narrow
    sigma_omega2: float  # S2 bandwidth, broad

    def __post_init__(self):
        if not self.sigma_omega1 > 0 or not self.sigma_omega2 > 0:
            raise ValueError("source widths must be positive")
        if not self.sigma_omega1 < self.sigma_omega2:
            warnings.warn(
                "sigma_omega1 should be much smaller than sigma_omega2; "
                "the two coding ensembles will be distinguishable",
                stacklevel=2,
            )


@dataclass
class PmBatch:
    """Vectorised prepare-and-measure states, one entry per slot."""

    basis: np.ndarray  # Basis values as int8
    encoded: np.ndarray  # b: rad/s (frequency basis) or s (time basis)
    center_freq: np.ndarray
    center_time: np.ndarray
    sigma_omega: np.ndarray

    def __len__(self):
        return len(self.basis)


def sample_pm_states(rng: np.random.Generator, params: PmSourceParams, count: int) -> PmBatch:
    basis = rng.integers(0, 2, size=count, dtype=np.int8)
    freq = basis == Basis.FREQUENCY
    # f1: std sigma_omega2/sqrt2 about omega0; f2: std 1/(sqrt2 sigma_omega1) about 0
    b_freq = rng.normal(params.omega0, params.sigma_omega2 / math.sqrt(2.0), size=count)
    b_time = rng.normal(0.0, 1.0 / (math.sqrt(2.0) * params.sigma_omega1), size=count)
    encoded = np.where(freq, b_freq, b_time)
    return PmBatch(
        basis=basis,
        encoded=encoded,
        center_freq=np.where(freq, b_freq, params.omega0),
        center_time=np.where(freq, 0.0, b_time),
        sigma_omega=np.where(freq, params.sigma_omega1, params.sigma_omega2),
    )


def sample_pm_state(rng: np.random.Generator, params: PmSourceParams):
    """Draw one state: (basis, encoded value, transform-limited pulse)."""
    s = sample_pm_states(rng, params, 1)
    pulse = GaussianPulse.transform_limited(
        float(s.center_freq[0]), float(s.center_time[0]), float(s.sigma_omega[0])
    )
    return Basis(int(s.basis[0])), float(s.encoded[0]), pulse


def emit_photons(rng: np.random.Generator, batch: PmBatch):
    """Draw each photon's (nu in Hz, t in s) from its pulse's intensity
    profiles. Transform-limited, so sigma_t = 1/sigma_omega."""
    n = len(batch)
    omega = batch.center_freq + rng.normal(0.0, 1.0, size=n) * batch.sigma_omega / math.sqrt(2.0)
    t = batch.center_time + rng.normal(0.0, 1.0, size=n) / (math.sqrt(2.0) * batch.sigma_omega)
    return omega / (2.0 * math.pi), t


def ensemble_covariance(params: PmSourceParams, basis: Basis) -> np.ndarray:
    """Covariance over (t, omega) of the photons a coding ensemble emits."""
    s1, s2 = params.sigma_omega1, params.sigma_omega2
    if basis == Basis.FREQUENCY:
        var_w = (s1**2 + s2**2) / 2.0
        var_t = 1.0 / (2.0 * s1**2)
    else:
        var_w = s2**2 / 2.0
        var_t = 1.0 / (2.0 * s1**2) + 1.0 / (2.0 * s2**2)
    return np.array([[var_t, 0.0], [0.0, var_w]])


# --- SPDC --------------------------------------------------------------------


@dataclass(frozen=True)
class SpdcParams:
    nu_P0: float  # Hz
    delta_nu_P: float  # pump linewidth RMS, Hz
    delta_t_P: float  # pump temporal width RMS, s
    delta_nu_A: float  # daughter bandwidth RMS, Hz
    delta_nu_B: float | None = None
    mean_pairs_per_pulse: float = 1.0
    poisson: bool = False
    tau_corr: float | None = None  # override for the t_A - t_B spread

    def __post_init__(self):
        if not self.nu_P0 > 0:
            raise ValueError("pump frequency must be positive")
        for name in ("delta_nu_P", "delta_t_P", "delta_nu_A", "mean_pairs_per_pulse"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.delta_nu_B is not None and self.delta_nu_B < 0:
            raise ValueError("delta_nu_B must be non-negative")
        if self.delta_nu_P > 0.01 * self.delta_nu_A:
            warnings.warn("pump linewidth is not much narrower than the daughter bandwidth", stacklevel=2)

    @property
    def pair_time_spread(self) -> float:
        if self.tau_corr is not None:
            return self.tau_corr
        if self.delta_nu_A == 0:
            return 0.0
        return 1.0 / (2.0 * math.pi * self.delta_nu_A)


@dataclass
class EprBatch:
    """Vectorised pairs. ``slot`` is the pump-pulse index; a slot can hold
    zero, one or several pairs in Poisson mode."""

    slot: np.ndarray
    pair_id: np.ndarray
    nu_P: np.ndarray
    t_pair: np.ndarray
    nu_A: np.ndarray
    t_A: np.ndarray
    nu_B: np.ndarray
    t_B: np.ndarray
    pairs_in_slot: np.ndarray  # per slot, length = number of pulses

    def __len__(self):
        return len(self.slot)


def sample_epr_pairs(rng: np.random.Generator, params: SpdcParams, count: int,
                     first_slot: int = 0) -> EprBatch:
    """Generate the pairs emitted by ``count`` pump pulses.

    Times are relative to each slot's own reference, so the slot centre is 0.
    Energy conservation is exact: nu_B is computed as nu_P - nu_A.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if params.poisson:
        per_slot = rng.poisson(params.mean_pairs_per_pulse, size=count)
    else:
        per_slot = np.ones(count, dtype=np.int64)
    slot = np.repeat(np.arange(first_slot, first_slot + count, dtype=np.int64), per_slot)
    n = len(slot)
    nu_P = params.nu_P0 + params.delta_nu_P * rng.normal(size=n)
    t_pair = params.delta_t_P * rng.normal(size=n)
    nu_A = params.nu_P0 / 2.0 + params.delta_nu_A * rng.normal(size=n)
    nu_B = nu_P - nu_A
    # re-derive nu_P so the sum holds bitwise even where the subtraction rounded
    nu_P = nu_A + nu_B
    t_B = t_pair + params.pair_time_spread * rng.normal(size=n)
    return EprBatch(
        slot=slot,
        pair_id=np.arange(n, dtype=np.int64),
        nu_P=nu_P,
        t_pair=t_pair,
        nu_A=nu_A,
        t_A=t_pair.copy(),
        nu_B=nu_B,
        t_B=t_B,
        pairs_in_slot=per_slot,
    )
