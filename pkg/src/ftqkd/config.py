"""Session configuration: JSON with unit-suffixed strings, merged over the
defaults printed by ``ftqkd print-config``."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .channel import ChannelSpec, FilterSpec
from .errors import ConfigError
from .measurement import DetectorSpec, DispersiveElement, GratingSpec
from .optics import PmSourceParams, SpdcParams
from .units import PhysParams, parse_quantity, wavelength_width_to_freq

MODES = ("pm", "epr", "epr-source-at-alice", "epr-midpoint")
NOISE_MODES = ("pairwise", "microscopic")

DEFAULTS = {
    "mode": "epr",
    "pulses": 100000,
    "seed": 20101017,
    "batch_size": 65536,
    "workers": 1,
    "noise_mode": "pairwise",
    "pairwise_delta_sq": None,
    "test_fraction": 0.5,
    "f_ec": 1.0,
    "coincidence_window": None,
    "physics": {"wavelength": "1550 nm", "refractive_index": 1.468},
    "pm_source": {"linewidth": "1 GHz", "bandwidth": "100 GHz"},
    "pm_receiver": "grating",
    "spdc": {
        "pump_linewidth": "10 MHz",
        "pump_width": "100 ps",
        "bandwidth_A": "100 GHz",
        "bandwidth_B": "100 GHz",
        "mean_pairs_per_pulse": 1.0,
        "poisson": False,
        "tau_corr": None,
    },
    "channel": {
        "length": "0 km",
        "attenuation": "0.2 dB/km",
        "extra_loss": "0 dB",
        "fixed_delay": "0 ps",
        "residual_broadening": "0 ps",
    },
    "filter": None,
    "detectors": {
        "alice": {"jitter": "70 ps", "efficiency": 1.0, "dark_count_prob": 0.0, "gate_window": ["-50 ns", "50 ns"]},
        "bob": {"jitter": "70 ps", "efficiency": 1.0, "dark_count_prob": 0.0, "gate_window": ["-50 ns", "50 ns"]},
    },
    "dispersion": {"alice": "7000 ps/nm", "bob": "-7000 ps/nm", "insertion_loss": "0 dB"},
    "grating": {"resolution": "10 pm", "bin_width": "10 pm", "n_bins": None},
}


@dataclass(frozen=True)
class SessionConfig:
    mode: str
    pulses: int
    seed: int
    batch_size: int
    workers: int
    noise_mode: str
    pairwise_delta_sq: float | None
    test_fraction: float
    f_ec: float
    coincidence_window: float | None
    phys: PhysParams
    pm_source: PmSourceParams
    pm_receiver: str
    spdc: SpdcParams
    channel: ChannelSpec
    filter: FilterSpec | None
    det_A: DetectorSpec
    det_B: DetectorSpec
    disp_A: DispersiveElement
    disp_B: DispersiveElement
    grating: GratingSpec
    raw: dict

    @property
    def is_epr(self) -> bool:
        return self.mode != "pm"


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(base: dict, override: dict, path: str) -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _q(raw: dict, path: str, expect: str | None = None) -> float:
    node = raw
    for part in path.split("."):
        node = node[part]
    try:
        return parse_quantity(node, expect)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _window(raw: dict, path: str) -> tuple[float, float]:
    node = raw
    for part in path.split("."):
        node = node[part]
    if not isinstance(node, (list, tuple)) or len(node) != 2:
        raise ConfigError(f"{path}: expected a [min, max] pair")
    try:
        lo, hi = (parse_quantity(v) for v in node)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not lo < hi:
        raise ConfigError(f"{path}: min must be below max")
    return lo, hi


def _build(path: str, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _detector(raw: dict, who: str) -> DetectorSpec:
    base = f"detectors.{who}"
    d = raw["detectors"][who]
    return _build(
        base, DetectorSpec,
        jitter_fwhm=_q(raw, f"{base}.jitter", "time"),
        efficiency=float(d["efficiency"]),
        dark_count_prob=float(d["dark_count_prob"]),
        gate_window=_window(raw, f"{base}.gate_window"),
    )


def parse_config(user: dict | None = None) -> SessionConfig:
    """Validate a (partial) config dict and build the typed session config."""
    raw = _merge(DEFAULTS, user or {}, "")
    if raw["mode"] not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}")
    if raw["noise_mode"] not in NOISE_MODES:
        raise ConfigError(f"noise_mode: must be one of {', '.join(NOISE_MODES)}")
    if raw["pm_receiver"] not in ("grating", "dispersive"):
        raise ConfigError("pm_receiver: must be 'grating' or 'dispersive'")
    for key in ("pulses", "batch_size", "workers"):
        if not isinstance(raw[key], int) or raw[key] < (0 if key == "pulses" else 1):
            raise ConfigError(f"{key}: must be a {'non-negative' if key == 'pulses' else 'positive'} integer")
    if not isinstance(raw["seed"], int):
        raise ConfigError("seed: must be an integer")
    tf = raw["test_fraction"]
    if not isinstance(tf, (int, float)) or not 0 < tf <= 1:
        raise ConfigError("test_fraction: must lie in (0, 1]")
    if not isinstance(raw["f_ec"], (int, float)) or raw["f_ec"] < 1:
        raise ConfigError("f_ec: must be >= 1")
    d2 = raw["pairwise_delta_sq"]
    if d2 is not None and (not isinstance(d2, (int, float)) or d2 <= 0):
        raise ConfigError("pairwise_delta_sq: must be a positive number or null")

    phys = _build("physics", PhysParams,
                  n=float(raw["physics"]["refractive_index"]),
                  lambda0=_q(raw, "physics.wavelength", "length"))
    omega0 = 2.0 * math.pi * phys.nu0
    pm_source = _build("pm_source", PmSourceParams, omega0,
                       2.0 * math.pi * _q(raw, "pm_source.linewidth", "frequency"),
                       2.0 * math.pi * _q(raw, "pm_source.bandwidth", "frequency"))
    sp = raw["spdc"]
    spdc = _build(
        "spdc", SpdcParams,
        nu_P0=2.0 * phys.nu0,
        delta_nu_P=_q(raw, "spdc.pump_linewidth", "frequency"),
        delta_t_P=_q(raw, "spdc.pump_width", "time"),
        delta_nu_A=_q(raw, "spdc.bandwidth_A", "frequency"),
        delta_nu_B=_q(raw, "spdc.bandwidth_B", "frequency"),
        mean_pairs_per_pulse=float(sp["mean_pairs_per_pulse"]),
        poisson=bool(sp["poisson"]),
        tau_corr=None if sp["tau_corr"] is None else _q(raw, "spdc.tau_corr", "time"),
    )
    channel = _build(
        "channel", ChannelSpec,
        length_km=_q(raw, "channel.length", "length") / 1e3,
        attenuation_db_km=_q(raw, "channel.attenuation", "db/km"),
        extra_loss_db=_q(raw, "channel.extra_loss", "db"),
        fixed_delay=_q(raw, "channel.fixed_delay", "time"),
        residual_broadening_rms=_q(raw, "channel.residual_broadening", "time"),
    )
    filt = None
    if raw["filter"] is not None:
        if not isinstance(raw["filter"], dict):
            raise ConfigError("filter: expected an object or null")
        raw["filter"] = _merge({"time_window": ["-inf s", "inf s"], "freq_window": ["-inf Hz", "inf Hz"]},
                               raw["filter"], "filter")
        filt = _build("filter", FilterSpec, _window(raw, "filter.time_window"), _window(raw, "filter.freq_window"))
    il = _q(raw, "dispersion.insertion_loss", "db")
    disp_A = _build("dispersion.alice", DispersiveElement, _q(raw, "dispersion.alice", "dispersion"), phys.nu0, il)
    disp_B = _build("dispersion.bob", DispersiveElement, _q(raw, "dispersion.bob", "dispersion"), phys.nu0, il)

    bin_width = wavelength_width_to_freq(_q(raw, "grating.bin_width", "length"), phys)
    resolution = wavelength_width_to_freq(_q(raw, "grating.resolution", "length"), phys)
    n_bins = raw["grating"]["n_bins"]
    if n_bins is None:
        # cover +-8 ensemble standard deviations of the frequency-coding photons
        std = math.sqrt((pm_source.sigma_omega1**2 + pm_source.sigma_omega2**2) / 2.0) / (2.0 * math.pi)
        n_bins = 2 * math.ceil(8.0 * std / bin_width)
    grating = _build("grating", GratingSpec, phys.nu0 - n_bins / 2 * bin_width, bin_width, int(n_bins), resolution)

    window = raw["coincidence_window"]
    window = None if window is None else _q(raw, "coincidence_window", "time")

    return SessionConfig(
        mode=raw["mode"],
        pulses=raw["pulses"],
        seed=raw["seed"],
        batch_size=raw["batch_size"],
        workers=raw["workers"],
        noise_mode=raw["noise_mode"],
        pairwise_delta_sq=None if d2 is None else float(d2),
        test_fraction=float(tf),
        f_ec=float(raw["f_ec"]),
        coincidence_window=window,
        phys=phys,
        pm_source=pm_source,
        pm_receiver=raw["pm_receiver"],
        spdc=spdc,
        channel=channel,
        filter=filt,
        det_A=_detector(raw, "alice"),
        det_B=_detector(raw, "bob"),
        disp_A=disp_A,
        disp_B=disp_B,
        grating=grating,
        raw=raw,
    )


def load_config(path) -> SessionConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<file>: top level must be an object")
    return parse_config(data)
