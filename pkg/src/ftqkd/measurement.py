"""Detector models and the three measurement schemes: direct arrival time,
grating spectrometer onto a detector array, and dispersive element plus a
time-resolving detector.

All functions work on whole batches of photons. Random draws are taken for
every photon in the batch whether or not it arrived, so the position of a
draw in the stream depends only on the photon index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .optics import Basis, SpdcParams
from .units import PhysParams, dispersion_to_freq_slope, fwhm_to_rms


@dataclass(frozen=True)
class DetectorSpec:
    jitter_fwhm: float = 70e-12
    efficiency: float = 1.0
    dark_count_prob: float = 0.0
    gate_window: tuple[float, float] = (-50e-9, 50e-9)

    def __post_init__(self):
        if self.jitter_fwhm < 0:
            raise ValueError("jitter must be non-negative")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_count_prob <= 1.0:
            raise ValueError("dark count probability must lie in [0, 1]")
        if not self.gate_window[0] < self.gate_window[1]:
            raise ValueError("gate window must have t_min < t_max")

    @property
    def jitter_rms(self) -> float:
        return fwhm_to_rms(self.jitter_fwhm)


@dataclass(frozen=True)
class DispersiveElement:
    D_lambda: float  # s/m, signed
    nu_0: float  # Hz
    insertion_loss_db: float = 0.0

    def __post_init__(self):
        if not self.nu_0 > 0:
            raise ValueError("dispersive element centre frequency must be positive")
        if self.insertion_loss_db < 0:
            raise ValueError("insertion loss must be non-negative")

    def slope(self, phys: PhysParams) -> float:
        return dispersion_to_freq_slope(self.D_lambda, phys)


@dataclass(frozen=True)
class GratingSpec:
    nu_start: float  # Hz, lower edge of bin 0
    bin_width: float  # Hz
    n_bins: int
    resolution: float = 0.0  # Hz, Gaussian RMS before binning

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("a detector array needs at least two bins")
        if not self.bin_width > 0:
            raise ValueError("bin width must be positive")

    def centers(self, idx):
        return self.nu_start + (np.asarray(idx) + 0.5) * self.bin_width


@dataclass
class Detections:
    """One party's outcome per slot. ``value`` is the measured quantity:
    arrival time for time and dispersive measurements, bin-centre frequency
    for the grating."""

    clicked: np.ndarray
    T: np.ndarray
    value: np.ndarray
    is_dark: np.ndarray
    out_of_gate: np.ndarray  # real clicks dropped by the gate
    out_of_range: np.ndarray = field(default=None)  # grating only
    spda_bin: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.clicked)


def choose_basis(rng: np.random.Generator, n: int) -> np.ndarray:
    """Passive 50/50 basis choice, as int8 Basis codes."""
    return rng.integers(0, 2, size=n, dtype=np.int8)


def _detect(T_real, present, thin, det: DetectorSpec, rng: np.random.Generator):
    n = len(T_real)
    u_click = rng.random(n)
    noise = rng.normal(size=n)
    u_dark = rng.random(n)
    u_dark_t = rng.random(n)
    real = present & (u_click < det.efficiency * thin)
    T = T_real + det.jitter_rms * noise if det.jitter_fwhm > 0 else T_real.copy()
    g0, g1 = det.gate_window
    in_gate = (T >= g0) & (T <= g1)
    out_of_gate = real & ~in_gate
    real &= in_gate
    dark = u_dark < det.dark_count_prob
    T_dark = g0 + (g1 - g0) * u_dark_t
    use_dark = dark & (~real | (T_dark < T))
    T_out = np.where(use_dark, T_dark, np.where(real, T, np.nan))
    return real | dark, T_out, use_dark, out_of_gate


def measure_time(nu, t, det: DetectorSpec, rng: np.random.Generator, present=None) -> Detections:
    """Time-of-arrival measurement with a jittery, lossy, noisy detector.

    A slot that has both a real and a dark click reports the earlier one.
    """
    t = np.asarray(t, dtype=float)
    if present is None:
        present = np.ones(t.shape, dtype=bool)
    clicked, T, dark, oog = _detect(t, present, 1.0, det, rng)
    return Detections(clicked, T, T.copy(), dark, oog)


def measure_freq_dispersive(nu, t, det: DetectorSpec, disp: DispersiveElement, phys: PhysParams,
                            rng: np.random.Generator, present=None) -> Detections:
    """Frequency measurement by mapping nu onto arrival time through a
    dispersive element: T = t + slope (nu - nu_0) + jitter.

    With ``D_lambda == 0`` and no insertion loss this consumes the stream
    exactly like :func:`measure_time` and returns identical results.
    """
    t = np.asarray(t, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if present is None:
        present = np.ones(t.shape, dtype=bool)
    slope = disp.slope(phys)
    T_real = t + slope * (nu - disp.nu_0) if slope != 0 else t
    thin = 10.0 ** (-disp.insertion_loss_db / 10.0)
    clicked, T, dark, oog = _detect(T_real, present, thin, det, rng)
    return Detections(clicked, T, T.copy(), dark, oog)


def measure_per_basis(nu, t, basis, det: DetectorSpec, disp: DispersiveElement, phys: PhysParams,
                      rng: np.random.Generator, present=None) -> Detections:
    """Each slot measured in its own basis: time-basis slots see a bare
    detector, frequency-basis slots see the dispersive element first.

    One pass over the stream for the whole batch, so slot ``i`` always uses
    the same draws whichever basis it picked.
    """
    t = np.asarray(t, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if present is None:
        present = np.ones(t.shape, dtype=bool)
    freq = np.asarray(basis) == Basis.FREQUENCY
    slope = disp.slope(phys)
    T_real = t + np.where(freq, slope * (nu - disp.nu_0), 0.0)
    thin = np.where(freq, 10.0 ** (-disp.insertion_loss_db / 10.0), 1.0)
    clicked, T, dark, oog = _detect(T_real, present, thin, det, rng)
    return Detections(clicked, T, T.copy(), dark, oog)


def measure_freq_grating(nu, t, det: DetectorSpec, bins: GratingSpec, rng: np.random.Generator,
                         present=None) -> Detections:
    """Grating plus detector array. The reported value is the centre of the
    bin that fired; photons that fall off the array do not click."""
    t = np.asarray(t, dtype=float)
    nu = np.asarray(nu, dtype=float)
    n = len(t)
    if present is None:
        present = np.ones(n, dtype=bool)
    res_noise = rng.normal(size=n)
    dark_bin = rng.integers(0, bins.n_bins, size=n)
    idx = np.floor((nu + bins.resolution * res_noise - bins.nu_start) / bins.bin_width)
    on_array = (idx >= 0) & (idx < bins.n_bins)
    out_of_range = present & ~on_array
    clicked, T, dark, oog = _detect(t, present & on_array, 1.0, det, rng)
    spda_bin = np.where(dark, dark_bin, np.where(clicked, idx, -1)).astype(np.int64)
    value = np.where(clicked, bins.centers(spda_bin), np.nan)
    return Detections(clicked, T, value, dark, oog, out_of_range, spda_bin)


@dataclass
class SpectrometerResult:
    delta_T: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    slope: float
    recovered_bandwidth: float  # Hz, RMS of nu_A
    raw_bandwidth: float  # Hz, before removing the known noise floor
    floor_bandwidth: float  # Hz equivalent of the noise floor
    resolution_limited: bool

    @property
    def bin_centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def spectrometer_mode(nu_A, t_A, nu_B, t_B, disp_A: DispersiveElement, disp_B: DispersiveElement,
                      det_A: DetectorSpec, det_B: DetectorSpec, phys: PhysParams,
                      rng_A: np.random.Generator, rng_B: np.random.Generator,
                      spdc: SpdcParams | None = None, n_bins: int = 200) -> SpectrometerResult:
    """Measure the daughter spectrum with same-sign dispersion on both arms.

    T_A - T_B = slope (2 nu_A - nu_P) + (t_A - t_B) + jitter, so the RMS of
    the difference over 2 slope estimates the bandwidth of nu_A once the
    known jitter, pair-time and pump-linewidth terms are removed.
    """
    if np.sign(disp_A.D_lambda) != np.sign(disp_B.D_lambda) or disp_A.D_lambda == 0:
        raise ValueError(
            "spectrometer mode needs D_B = +D_A; opposite signs cancel the "
            "spectral information (that is the key-distribution configuration)"
        )
    a = measure_freq_dispersive(nu_A, t_A, det_A, disp_A, phys, rng_A)
    b = measure_freq_dispersive(nu_B, t_B, det_B, disp_B, phys, rng_B)
    both = a.clicked & b.clicked
    dT = a.T[both] - b.T[both]
    slope = disp_A.slope(phys)
    if len(dT) >= 2:
        var = float(np.var(dT, ddof=1))
    else:
        var = 0.0
    floor = det_A.jitter_rms**2 + det_B.jitter_rms**2
    if spdc is not None:
        floor += spdc.pair_time_spread**2 + (slope * spdc.delta_nu_P) ** 2
    scale = 2.0 * abs(slope)
    raw = math.sqrt(var) / scale
    floor_bw = math.sqrt(floor) / scale
    # within ~3 standard errors of the floor nothing is resolved
    se = var * math.sqrt(2.0 / max(len(dT) - 1, 1))
    limited = var - floor <= 3.0 * se
    recovered = floor_bw if limited else math.sqrt(var - floor) / scale
    if len(dT):
        lo, hi = float(dT.min()), float(dT.max())
        if lo == hi:
            lo, hi = lo - 0.5e-12, hi + 0.5e-12
    else:
        lo, hi = -0.5e-12, 0.5e-12
    counts, edges = np.histogram(dT, bins=n_bins, range=(lo, hi))
    return SpectrometerResult(dT, counts, edges, slope, recovered, raw, floor_bw, bool(limited))


__all__ = [
    "Basis",
    "DetectorSpec",
    "DispersiveElement",
    "GratingSpec",
    "Detections",
    "choose_basis",
    "measure_time",
    "measure_freq_dispersive",
    "measure_freq_grating",
    "measure_per_basis",
    "spectrometer_mode",
    "SpectrometerResult",
]
