"""Lossy fiber channel and the entrance filters.

There is deliberately no polarization or phase model: frequency-time
coding does not care about either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelSpec:
    length_km: float = 0.0
    attenuation_db_km: float = 0.2
    extra_loss_db: float = 0.0
    fixed_delay: float = 0.0  # s
    residual_broadening_rms: float = 0.0  # s

    def __post_init__(self):
        for name in ("length_km", "attenuation_db_km", "extra_loss_db", "residual_broadening_rms"):
            if getattr(self, name) < 0:
                raise ValueError(f"channel {name} must be non-negative")

    @property
    def loss_db(self) -> float:
        return self.attenuation_db_km * self.length_km + self.extra_loss_db


def transmittance(ch: ChannelSpec) -> float:
    return 10.0 ** (-ch.loss_db / 10.0)


def concatenate(first: ChannelSpec, second: ChannelSpec) -> ChannelSpec:
    """Two fiber spans back to back."""
    length = first.length_km + second.length_km
    if length > 0:
        att = (first.attenuation_db_km * first.length_km + second.attenuation_db_km * second.length_km) / length
    else:
        att = first.attenuation_db_km
    return ChannelSpec(
        length_km=length,
        attenuation_db_km=att,
        extra_loss_db=first.extra_loss_db + second.extra_loss_db,
        fixed_delay=first.fixed_delay + second.fixed_delay,
        residual_broadening_rms=math.hypot(first.residual_broadening_rms, second.residual_broadening_rms),
    )


def split(ch: ChannelSpec, fraction: float = 0.5) -> tuple[ChannelSpec, ChannelSpec]:
    """Cut a channel into two spans carrying ``fraction`` and the rest of
    the length, extra loss and delay."""
    parts = []
    for w in (fraction, 1.0 - fraction):
        parts.append(ChannelSpec(
            length_km=ch.length_km * w,
            attenuation_db_km=ch.attenuation_db_km,
            extra_loss_db=ch.extra_loss_db * w,
            fixed_delay=ch.fixed_delay * w,
            residual_broadening_rms=ch.residual_broadening_rms * math.sqrt(w),
        ))
    return parts[0], parts[1]


def transmit(nu, t, ch: ChannelSpec, rng: np.random.Generator):
    """Send photons through the channel.

    Returns ``(t_out, survived)``; frequencies are unchanged so ``nu`` only
    fixes the batch size. Lost photons keep a meaningless ``t_out``.
    """
    t = np.asarray(t, dtype=float)
    n = t.shape[0]
    survived = rng.random(n) < transmittance(ch)
    t_out = t + ch.fixed_delay
    if ch.residual_broadening_rms > 0:
        t_out = t_out + ch.residual_broadening_rms * rng.normal(size=n)
    return t_out, survived


@dataclass(frozen=True)
class FilterSpec:
    time_window: tuple[float, float] = (-math.inf, math.inf)
    freq_window: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        if not self.time_window[0] < self.time_window[1]:
            raise ValueError("filter time window must have t_min < t_max")
        if not self.freq_window[0] < self.freq_window[1]:
            raise ValueError("filter frequency window must have nu_min < nu_max")

    def shifted(self, delay: float) -> "FilterSpec":
        return FilterSpec((self.time_window[0] + delay, self.time_window[1] + delay), self.freq_window)


def apply_filter(nu, t, f: FilterSpec):
    """Mask of photons inside both windows, plus the spectral-rejection mask
    so rejections can be attributed."""
    nu = np.asarray(nu)
    t = np.asarray(t)
    spectral_ok = (nu >= f.freq_window[0]) & (nu <= f.freq_window[1])
    temporal_ok = (t >= f.time_window[0]) & (t <= f.time_window[1])
    return spectral_ok & temporal_ok, ~spectral_ok
