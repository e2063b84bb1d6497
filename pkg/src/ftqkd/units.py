"""Physical constants, unit conversions and the time/frequency to
position/wave-vector mapping.

Everything inside the package is SI (s, m, Hz, rad/m). Engineering units
such as ps/nm only appear when parsing configuration strings.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

C = 2.99792458e8  # m/s
DEFAULT_N = 1.468  # SMF-28 group index near 1550 nm
DEFAULT_WAVELENGTH = 1550e-9

_FWHM_FACTOR = 2.0 * math.sqrt(math.log(2.0))


@dataclass(frozen=True)
class PhysParams:
    n: float = DEFAULT_N
    lambda0: float = DEFAULT_WAVELENGTH
    c: float = C

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError(f"refractive index must be positive, got {self.n}")
        if not self.lambda0 > 0:
            raise ValueError(f"wavelength must be positive, got {self.lambda0}")

    @property
    def nu0(self) -> float:
        return self.c / self.lambda0


def time_to_position(t, p: PhysParams):
    """X = (c/n) t. Works elementwise on arrays."""
    return (p.c / p.n) * t


def position_to_time(x, p: PhysParams):
    return x * p.n / p.c


def freq_to_wavevector(nu, p: PhysParams):
    """K_X = 2 pi n nu / c for nu > 0."""
    nu_arr = np.asarray(nu)
    if np.any(nu_arr <= 0):
        raise ValueError("frequency must be positive")
    return 2.0 * np.pi * p.n * nu / p.c


def fwhm_to_rms(delta_fwhm):
    """Convert a full-width-half-amplitude spread to the width used in
    the variance chain, delta / (2 sqrt(ln 2))."""
    if np.any(np.asarray(delta_fwhm) < 0):
        raise ValueError("width must be non-negative")
    return delta_fwhm / _FWHM_FACTOR


def dispersion_to_freq_slope(D_lambda, p: PhysParams):
    """Group-delay slope dT/dnu (s/Hz) of an element with dispersion
    ``D_lambda`` (s/m), using d(lambda) = (lambda^2 / c) d(nu).

    The sign follows ``D_lambda`` so that a positive element delays the
    blue side of the spectrum.
    """
    return p.lambda0**2 * D_lambda / p.c


def wavelength_width_to_freq(d_lambda, p: PhysParams):
    """Small-bandwidth conversion of a wavelength span (m) to Hz."""
    return d_lambda * p.c / p.lambda0**2


# --- config-boundary quantity parsing ---------------------------------------

_UNITS = {
    "": 1.0,
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
    "ps": 1e-12,
    "fs": 1e-15,
    "m": 1.0,
    "km": 1e3,
    "um": 1e-6,
    "nm": 1e-9,
    "pm": 1e-12,
    "hz": 1.0,
    "khz": 1e3,
    "mhz": 1e6,
    "ghz": 1e9,
    "thz": 1e12,
    "ps/nm": 1e-12 / 1e-9,
    "ns/nm": 1e-9 / 1e-9,
    "s/m": 1.0,
    "db": 1.0,
    "db/km": 1.0,
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?(?:inf|\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?))\s*([A-Za-z/]*)\s*$")


def parse_quantity(value, expect: str | None = None) -> float:
    """Parse ``"70 ps"``, ``"7000 ps/nm"``, ``"0.2 dB/km"`` or a bare number
    into an SI float.

    ``expect`` optionally names the unit family ("time", "length",
    "frequency", "dispersion", "db", "db/km") and rejects mismatches.
    """
    if value is None:
        raise ValueError("missing quantity")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = _QUANTITY_RE.match(str(value))
    if m is None:
        raise ValueError(f"cannot parse quantity {value!r}")
    number, unit = m.groups()
    key = unit.lower()
    if key not in _UNITS:
        raise ValueError(f"unknown unit {unit!r} in {value!r}")
    if expect is not None and key and _family(key) != expect:
        raise ValueError(f"{value!r} is not a {expect} quantity")
    return float(number) * _UNITS[key]


def _family(unit: str) -> str:
    if unit in ("db", "db/km"):
        return unit
    if "/" in unit:
        return "dispersion"
    if unit.endswith("hz"):
        return "frequency"
    if unit.endswith("s"):
        return "time"
    return "length"
