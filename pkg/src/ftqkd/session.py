"""Session orchestration: generate, transmit, filter, measure, sift,
distill, estimate, rate.

Pulses are processed in fixed-size batches. Every batch draws from its own
(seed, role, batch) streams, so the report does not depend on how many
workers ran the batches or in what order they finished.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .channel import ChannelSpec, apply_filter, split, transmit
from .config import SessionConfig
from .distillation import (
    ScaleMap,
    estimate_qber,
    gp_decode,
    gp_encode,
    q_from_freq,
    q_from_time,
    sift,
    to_dimensionless,
)
from .measurement import measure_freq_grating, measure_per_basis, measure_time
from .optics import Basis, emit_photons, sample_epr_pairs, sample_pm_states
from .security import keyrate_gain, keyrate_ideal, parity_error_exact, qber_bound, scale_length, variance_chain

# terminal category of every pulse slot; each slot lands in exactly one
CATEGORIES = (
    "empty",
    "multipair",
    "lost",
    "filtered",
    "out_of_gate",
    "no_click",
    "basis_mismatch",
    "window_rejected",
    "test_bit",
    "key_bit",
)
_CAT = {name: i for i, name in enumerate(CATEGORIES)}

_NO_CHANNEL = ChannelSpec(length_km=0.0, extra_loss_db=0.0)


def channels_for(cfg: SessionConfig) -> tuple[ChannelSpec, ChannelSpec]:
    """(Alice's, Bob's) channel. Prepare-and-measure and source-at-Alice put
    the whole fiber on Bob's side; midpoint splits it in half."""
    if cfg.mode == "epr-midpoint":
        return split(cfg.channel, 0.5)
    return _NO_CHANNEL, cfg.channel


def reference_dispersion(cfg: SessionConfig) -> float:
    disp = cfg.disp_B if cfg.mode == "pm" else cfg.disp_A
    return abs(disp.D_lambda)


def analytic_delta_sq(cfg: SessionConfig) -> float:
    if cfg.pairwise_delta_sq is not None:
        return cfg.pairwise_delta_sq
    det = cfg.det_B if cfg.mode == "pm" else cfg.det_A
    return variance_chain(det.jitter_fwhm, reference_dispersion(cfg), cfg.phys.lambda0, cfg.phys.n).delta_sq


def scale_map(cfg: SessionConfig) -> ScaleMap:
    s = scale_length(reference_dispersion(cfg), cfg.phys.lambda0, cfg.phys.n)
    return ScaleMap(s=s, origin_time=0.0, origin_freq=cfg.phys.nu0)


def coincidence_window(cfg: SessionConfig) -> float | None:
    """Default: three standard deviations of T_A - T_B."""
    if cfg.mode == "pm":
        return None
    if cfg.coincidence_window is not None:
        return cfg.coincidence_window
    slope = cfg.disp_A.slope(cfg.phys)
    var = (cfg.det_A.jitter_rms**2 + cfg.det_B.jitter_rms**2 + cfg.spdc.pair_time_spread**2
           + (slope * cfg.spdc.delta_nu_P) ** 2)
    a, b = channels_for(cfg)
    var += a.residual_broadening_rms**2 + b.residual_broadening_rms**2
    return 3.0 * math.sqrt(var) if var > 0 else None


@dataclass
class BatchResult:
    categories: np.ndarray  # per-category counts before test/key split
    counts: dict
    slot: np.ndarray  # of sifted key elements
    basis: np.ndarray
    q_A: np.ndarray
    q_B: np.ndarray
    m: np.ndarray
    bit_A: np.ndarray
    bit_B: np.ndarray
    dark: np.ndarray
    transcript: dict | None


def _failure_category(reasons):
    """Category code for a party that did not click."""
    lost, filtered, oog = reasons
    return np.where(lost, _CAT["lost"], np.where(filtered, _CAT["filtered"],
                    np.where(oog, _CAT["out_of_gate"], _CAT["no_click"])))


def _run_batch(cfg: SessionConfig, batch: int, want_transcript: bool) -> BatchResult:
    first = batch * cfg.batch_size
    n = min(cfg.batch_size, cfg.pulses - first)
    seed = cfg.seed
    phys = cfg.phys
    scale = scale_map(cfg)
    ch_A, ch_B = channels_for(cfg)
    pairwise = cfg.noise_mode == "pairwise"
    # in pairwise mode timing noise is drawn once per pair, not per detector
    det_A = dataclasses.replace(cfg.det_A, jitter_fwhm=0.0) if pairwise else cfg.det_A
    det_B = dataclasses.replace(cfg.det_B, jitter_fwhm=0.0) if pairwise else cfg.det_B

    rng_src = rngmod.stream(seed, "source", batch)
    basis_B = rngmod.stream(seed, "basis_b", batch).integers(0, 2, size=n, dtype=np.int8)
    slot_ids = np.arange(first, first + n, dtype=np.int64)
    empty = np.zeros(n, dtype=bool)
    multi = np.zeros(n, dtype=bool)

    if cfg.mode == "pm":
        states = sample_pm_states(rng_src, cfg.pm_source, n)
        nu_B, t_B = emit_photons(rng_src, states)
        basis_A = states.basis
        clicked_A = np.ones(n, dtype=bool)
        T_A = np.full(n, np.nan)
        dark_A = np.zeros(n, dtype=bool)
        fail_A = (empty, empty, empty)
    else:
        pairs = sample_epr_pairs(rng_src, cfg.spdc, n, first_slot=first)
        per_slot = pairs.pairs_in_slot
        empty = per_slot == 0
        multi = per_slot > 1
        # first pair of each non-empty slot carries the slot's photons
        starts = np.concatenate(([0], np.cumsum(per_slot)[:-1]))
        take = np.where(empty, 0, starts)
        if len(pairs) == 0:
            take = np.zeros(n, dtype=np.int64)
            nu_A = np.full(n, phys.nu0)
            t_A = np.zeros(n)
            nu_B = np.full(n, phys.nu0)
            t_B = np.zeros(n)
        else:
            nu_A, t_A = pairs.nu_A[take], pairs.t_A[take]
            nu_B, t_B = pairs.nu_B[take], pairs.t_B[take]
        basis_A = rngmod.stream(seed, "basis_a", batch).integers(0, 2, size=n, dtype=np.int8)
        tA_arr, surv_A = transmit(nu_A, t_A, ch_A, rngmod.stream(seed, "channel_a", batch))
        tA_rel = tA_arr - ch_A.fixed_delay
        pass_A = np.ones(n, dtype=bool)
        if cfg.filter is not None:
            pass_A, _ = apply_filter(nu_A, tA_rel, cfg.filter)
        present_A = ~empty & surv_A & pass_A
        meas_A = measure_per_basis(nu_A, tA_rel, basis_A, det_A, cfg.disp_A, phys,
                                   rngmod.stream(seed, "detector_a", batch), present_A)
        clicked_A, T_A, dark_A = meas_A.clicked, meas_A.T, meas_A.is_dark
        fail_A = (~surv_A, surv_A & ~pass_A, meas_A.out_of_gate)

    tB_arr, surv_B = transmit(nu_B, t_B, ch_B, rngmod.stream(seed, "channel_b", batch))
    tB_rel = tB_arr - ch_B.fixed_delay
    pass_B = np.ones(n, dtype=bool)
    if cfg.filter is not None:
        pass_B, _ = apply_filter(nu_B, tB_rel, cfg.filter)
    present_B = ~empty & surv_B & pass_B
    rng_det_B = rngmod.stream(seed, "detector_b", batch)
    freq_B = basis_B == Basis.FREQUENCY
    grating = cfg.mode == "pm" and cfg.pm_receiver == "grating"
    if grating:
        tm = measure_time(nu_B, tB_rel, det_B, rng_det_B, present_B & ~freq_B)
        gr = measure_freq_grating(nu_B, tB_rel, det_B, cfg.grating, rng_det_B, present_B & freq_B)
        clicked_B = np.where(freq_B, gr.clicked, tm.clicked)
        T_B = np.where(freq_B, gr.T, tm.T)
        value_B = np.where(freq_B, gr.value, tm.value)
        dark_B = np.where(freq_B, gr.is_dark, tm.is_dark)
        oog_B = np.where(freq_B, gr.out_of_gate, tm.out_of_gate)
    else:
        disp_B = cfg.disp_B
        mb = measure_per_basis(nu_B, tB_rel, basis_B, det_B, disp_B, phys, rng_det_B, present_B)
        clicked_B, T_B, value_B, dark_B, oog_B = mb.clicked, mb.T, mb.value, mb.is_dark, mb.out_of_gate
    fail_B = (~surv_B, surv_B & ~pass_B, oog_B)

    window = coincidence_window(cfg)
    sr = sift(clicked_A, T_A, basis_A, clicked_B, T_B, basis_B, window)
    keep = sr.keep & ~multi

    # key elements
    if cfg.mode == "pm":
        q_A = np.where(basis_A == Basis.FREQUENCY,
                       q_from_freq(states.encoded / (2.0 * math.pi), scale, phys),
                       q_from_time(states.encoded, scale, phys))
        if grating:
            q_B = to_dimensionless(value_B, basis_B, scale, phys)
        else:
            q_B = to_dimensionless(value_B, basis_B, scale, phys, slope=cfg.disp_B.slope(phys))
    else:
        with np.errstate(invalid="ignore"):
            q_A = to_dimensionless(T_A, basis_A, scale, phys, slope=cfg.disp_A.slope(phys))
            q_B = to_dimensionless(T_B, basis_B, scale, phys, slope=cfg.disp_B.slope(phys), reflect=True)
    dark_any = dark_A | dark_B
    if pairwise:
        delta = math.sqrt(analytic_delta_sq(cfg) / 2.0)
        noise = rngmod.stream(seed, "pairwise", batch).normal(size=n)
        q_B = np.where(dark_any, q_B, q_A + delta * noise)

    qa, qb = q_A[keep], q_B[keep]
    m, bit_A = gp_encode(qa)
    bit_B = gp_decode(qb, m)

    cat = np.full(n, _CAT["key_bit"], dtype=np.int64)
    cat[~sr.same_basis] = _CAT["basis_mismatch"]
    cat[sr.window_rejected] = _CAT["window_rejected"]
    no_coinc = ~sr.coincident
    fail = np.where(~clicked_A, _failure_category(fail_A), _failure_category(fail_B))
    cat = np.where(no_coinc, fail, cat)
    cat[multi] = _CAT["multipair"]
    cat[empty] = _CAT["empty"]
    categories = np.bincount(cat, minlength=len(CATEGORIES))

    counts = dict(sr.counts)
    counts["filtered"] = int((fail_A[1] & ~empty).sum() + (fail_B[1] & ~empty).sum())
    counts["dark_clicks"] = int(dark_A.sum()) + int(dark_B.sum())
    counts["multipair_slots"] = int(multi.sum())
    counts["empty_slots"] = int(empty.sum())
    counts["key_elements"] = int(keep.sum())

    transcript = None
    if want_transcript:
        transcript = {
            "slot": slot_ids,
            "basis_A": np.where(clicked_A, basis_A, -1),
            "basis_B": np.where(clicked_B, basis_B, -1),
            "keep": keep,
        }
    return BatchResult(categories, counts, slot_ids[keep], basis_A[keep], qa, qb, m, bit_A, bit_B,
                       dark_any[keep], transcript)


_COUNT_KEYS = ("sent", "clicks_A", "clicks_B", "coincidences", "same_basis", "window_rejected",
               "key_elements", "filtered", "dark_clicks", "multipair_slots", "empty_slots")


def _merge(results: list[BatchResult]):
    counts = dict.fromkeys(_COUNT_KEYS, 0)
    for r in results:
        for k, v in r.counts.items():
            counts[k] = counts.get(k, 0) + v
    cats = np.sum([r.categories for r in results], axis=0) if results else np.zeros(len(CATEGORIES), dtype=int)
    cat_fields = ("slot", "basis", "q_A", "q_B", "m", "bit_A", "bit_B", "dark")
    arrays = {f: np.concatenate([getattr(r, f) for r in results]) if results else np.array([])
              for f in cat_fields}
    return counts, cats, arrays


def _batch_worker(args):
    cfg, b, want = args
    return _run_batch(cfg, b, want)


def _none_if_nan(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def run_session(cfg: SessionConfig, transcript_path=None, workers: int | None = None) -> dict:
    """Run a full session and return the report as a plain dict.

    ``workers`` overrides ``cfg.workers``; the report is identical for any
    worker count.
    """
    t0 = time.perf_counter()
    workers = cfg.workers if workers is None else workers
    n_batches = -(-cfg.pulses // cfg.batch_size) if cfg.pulses else 0
    want = transcript_path is not None
    jobs = [(cfg, b, want) for b in range(n_batches)]
    if workers > 1 and n_batches > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_worker, jobs))
    else:
        results = [_batch_worker(j) for j in jobs]
    counts, cats, arr = _merge(results)

    sent = cfg.pulses
    n_key = len(arr["bit_A"])
    empty_key = n_key == 0
    qber = {"time_basis": None, "freq_basis": None, "pooled": None, "ci_95": None, "n_test": 0}
    test_bits = 0
    if not empty_key:
        est = estimate_qber(arr["bit_A"], arr["bit_B"], cfg.test_fraction,
                            rngmod.stream(cfg.seed, "estimate", 0))
        test_bits = est.n_test
        err = arr["bit_A"] != arr["bit_B"]
        for name, code in (("time_basis", Basis.TIME), ("freq_basis", Basis.FREQUENCY)):
            sel = est.test_mask & (arr["basis"] == code)
            qber[name] = float(err[sel].mean()) if sel.any() else None
        qber.update(pooled=est.e_hat, ci_95=list(est.ci_95), n_test=est.n_test)
    cats = cats.copy()
    cats[_CAT["key_bit"]] -= test_bits
    cats[_CAT["test_bit"]] += test_bits

    # empirical conditional variance from noise-only (non-dark) elements
    d2_emp = None
    diff = arr["q_A"] - arr["q_B"]
    clean = ~arr["dark"].astype(bool)
    v = []
    for code in (Basis.TIME, Basis.FREQUENCY):
        sel = clean & (arr["basis"] == code)
        v.append(float(np.var(diff[sel], ddof=1)) if sel.sum() > 1 else None)
    if all(x is not None and x > 0 for x in v):
        d2_emp = 2.0 * math.sqrt(v[0] * v[1])
    d2_an = analytic_delta_sq(cfg)

    q1_bob = counts["clicks_B"] / sent if sent else 0.0
    q1_coinc = counts["coincidences"] / sent if sent else 0.0
    q1 = q1_bob if cfg.mode == "pm" else q1_coinc
    unfiltered = sent - counts["filtered"]
    q1_excl = (counts["clicks_B"] if cfg.mode == "pm" else counts["coincidences"]) / unfiltered if unfiltered > 0 else 0.0

    rates = {"ideal": 0.0, "ideal_raw": None, "gain_corrected": 0.0, "gain_corrected_raw": None, "f_ec": cfg.f_ec}
    if not empty_key:
        e = min(qber["pooled"], 0.5)
        r = keyrate_ideal(e, cfg.f_ec)
        rg = keyrate_gain(q1, e, cfg.f_ec)
        rates.update(ideal=max(r, 0.0), ideal_raw=r, gain_corrected=max(rg, 0.0), gain_corrected_raw=rg)

    clicks = counts["clicks_B"] + (counts["clicks_A"] if cfg.mode != "pm" else 0)
    report = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "pulses": sent,
        "empty_key": empty_key,
        "counts": {
            "sent": sent,
            "clicks_A": counts["clicks_A"],
            "clicks_B": counts["clicks_B"],
            "coincidences": counts["coincidences"],
            "same_basis": counts["same_basis"],
            "window_rejected": counts["window_rejected"],
            "key_elements": n_key,
            "test_bits": test_bits,
            "key_bits": n_key - test_bits,
            "filtered": counts["filtered"],
            "dark_fraction": counts["dark_clicks"] / clicks if clicks else 0.0,
            "multipair_fraction": counts["multipair_slots"] / sent if sent else 0.0,
        },
        "terminal": {name: int(c) for name, c in zip(CATEGORIES, cats)},
        "Q1": {"used": q1, "bob_clicks": q1_bob, "coincidences": q1_coinc, "filter_excluded": q1_excl},
        "qber": qber,
        "delta_sq": {"noise_mode": cfg.noise_mode, "analytic": d2_an, "empirical": d2_emp},
        "qber_model": {
            "bound_analytic": qber_bound(d2_an),
            "exact_analytic": parity_error_exact(d2_an),
            "bound_empirical": qber_bound(d2_emp) if d2_emp else None,
            "exact_empirical": parity_error_exact(d2_emp) if d2_emp else None,
        },
        "keyrate": rates,
        # worker count is an execution detail and does not change results
        "config": {k: v for k, v in cfg.raw.items() if k != "workers"},
        "runtime_s": None,
    }
    if transcript_path is not None:
        write_transcript(results, arr, transcript_path)
    report["runtime_s"] = time.perf_counter() - t0
    return report


_BASIS_NAME = {-1: "null", 0: '"time"', 1: '"frequency"'}


def write_transcript(results: list[BatchResult], arr: dict, path) -> None:
    """One JSON object per slot carrying only what the protocol announces:
    bases, Alice's remainder m for kept elements, and whether the slot
    was kept."""
    m_iter = iter(arr["m"].tolist())
    with open(path, "w") as fh:
        for r in results:
            tr = r.transcript
            for slot, ba, bb, kept in zip(tr["slot"].tolist(), tr["basis_A"].tolist(),
                                          tr["basis_B"].tolist(), tr["keep"].tolist()):
                m = repr(next(m_iter)) if kept else "null"
                fh.write(f'{{"slot_id": {slot}, "basis_A": {_BASIS_NAME[ba]}, "basis_B": {_BASIS_NAME[bb]}, '
                         f'"m": {m}, "kept": {"true" if kept else "false"}}}\n')


def report_json(report: dict, include_runtime: bool = True) -> str:
    r = dict(report)
    if not include_runtime:
        r.pop("runtime_s", None)
    return json.dumps(r, indent=2, sort_keys=False)
