"""Frequency-time coding quantum key distribution: simulator and security
calculator."""

from .optics import Basis
from .security import (
    h2,
    keyrate_gain,
    keyrate_ideal,
    parity_error_exact,
    qber_bound,
    qber_curve,
    security_threshold,
    variance_chain,
)
from .units import PhysParams

__version__ = "0.1.0"
