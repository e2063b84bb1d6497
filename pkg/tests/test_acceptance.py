"""Acceptance criteria, one test each, at their stated tolerances and runtime
limits. Each test records a PASS/FAIL line shown in the terminal summary."""

import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.special import erfc

from ftqkd.cli import main
from ftqkd.config import parse_config
from ftqkd.distillation import gp_decode, gp_encode
from ftqkd.measurement import DetectorSpec, DispersiveElement, measure_freq_dispersive, spectrometer_mode
from ftqkd.optics import Basis, PmSourceParams, SpdcParams, emit_photons, ensemble_covariance, sample_epr_pairs, sample_pm_states
from ftqkd.security import (
    delta_sq_closed_form,
    keyrate_gain,
    qber_bound,
    qber_curve,
    security_threshold,
    variance_chain,
)
from ftqkd.session import run_session
from ftqkd.units import C, PhysParams, fwhm_to_rms

D_FIG = 7.0  # 7000 ps/nm in s/m
LAMBDA = 1550e-9
PHYS = PhysParams()


def gen(seed):
    return np.random.Generator(np.random.Philox(seed))


def wrapped_parity_error(d2):
    """Mass of N(0, d2/2) in the odd sqrt(pi)-shells, alternating erfc sum
    continued until terms drop below machine precision."""
    sigma = math.sqrt(d2 / 2)
    total, j = 0.0, 1
    while True:
        term = erfc((j - 0.5) * math.sqrt(math.pi) / (sigma * math.sqrt(2)))
        total += term if j % 2 else -term
        if term < 1e-17:
            return total
        j += 1


def test_criterion_1_qber_curve(record_criterion, tmp_path, capsys):
    t0 = time.perf_counter()
    out = tmp_path / "curve.csv"
    assert main(["qber-curve", "--out", str(out)]) == 0
    capsys.readouterr()
    rows = {line.split(",")[0]: line.split(",") for line in out.read_text().splitlines()[1:]}
    e70 = float(rows["70.000000"][2])
    e40 = float(rows["40.000000"][2])
    elapsed = time.perf_counter() - t0
    ok = abs(e70 - 0.0552) <= 0.005 and 3e-4 <= e40 <= 8e-4 and elapsed < 1.0
    record_criterion(1, "qber-curve", ok, f"QBER(70 ps)={e70:.5f} (0.0552±0.005), QBER(40 ps)={e40:.2e} "
                     f"in [3e-4, 8e-4], {elapsed:.3f} s")
    assert ok


def test_criterion_2_threshold(record_criterion):
    t0 = time.perf_counter()
    e = security_threshold(1.0)
    elapsed = time.perf_counter() - t0
    ok = abs(e - 0.1100) <= 0.0005 and elapsed < 1.0
    record_criterion(2, "threshold", ok, f"security_threshold(1)={e:.6f} (0.1100±0.0005), {elapsed:.3f} s")
    assert ok


def test_criterion_3_variance_chain(record_criterion):
    t0 = time.perf_counter()
    grid = list(itertools.product([20e-12, 70e-12, 150e-12, 400e-12, 1e-9],
                                  [0.5, 7.0, 70.0, -7.0],
                                  [1310e-9, 1550e-9, 800e-9, 2000e-9, 1064e-9],
                                  [1.0]))
    grid = grid[:100]
    worst = worst_n = 0.0
    for dt, D, lam, _ in grid:
        ref = None
        for n in (1.0, 1.468, 2.0):
            # product route computed here from its factors, independently of the library
            sig = fwhm_to_rms(dt)
            dX = (C / n) * sig
            dK = 2 * math.pi * n * sig / (lam**2 * abs(D))
            product = 2 * dX * dK
            closed = delta_sq_closed_form(dt, D, lam)
            worst = max(worst, abs(product - closed) / closed)
            lib = variance_chain(dt, abs(D), lam, n).delta_sq
            worst = max(worst, abs(lib - closed) / closed)
            if ref is None:
                ref = lib
            worst_n = max(worst_n, abs(lib - ref) / ref)
    elapsed = time.perf_counter() - t0
    ok = len(grid) == 100 and worst <= 1e-12 and worst_n <= 1e-12 and elapsed < 1.0
    record_criterion(3, "variance chain", ok, f"100 grid points, max rel diff {worst:.1e}, "
                     f"max n-dependence {worst_n:.1e}, {elapsed:.3f} s")
    assert ok


def test_criterion_4_distillation_oracle(record_criterion):
    t0 = time.perf_counter()
    n = 10**6
    details, ok = [], True
    for i, d2 in enumerate((0.05, 0.1, 0.2, 0.3962)):
        r = gen(400 + i)
        qa = r.uniform(-100, 100, size=n)
        qb = qa + math.sqrt(d2 / 2) * r.normal(size=n)
        m, ba = gp_encode(qa)
        mc = float((gp_decode(qb, m) != ba).mean())
        exact = wrapped_parity_error(d2)
        se = math.sqrt(exact * (1 - exact) / n)
        bound = qber_bound(d2)
        # the exact value must sit under the bound; the sampled rate gets the
        # same 3-SE allowance, since at small Δ² bound and exact differ by < 1 SE
        good = abs(mc - exact) <= 3 * se and mc <= bound + 3 * se and exact <= bound
        ok &= good
        details.append(f"Δ²={d2}: MC {mc:.3e} exact {exact:.3e} bound {bound:.3e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    record_criterion(4, "distillation oracle", ok, "; ".join(details) + f"; {elapsed:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def session_report():
    t0 = time.perf_counter()
    report = run_session(parse_config({"mode": "epr", "pulses": 10**6, "noise_mode": "pairwise"}))
    return report, time.perf_counter() - t0


def test_criterion_5_end_to_end_session(record_criterion, session_report):
    """Pooled QBER is compared with the criterion-1 curve value at 70 ps,
    which is the upper bound on the parity error rather than its exact
    value, so this comparison fails by design of the bound (see the
    companion test below for the exact-value comparison)."""
    report, elapsed = session_report
    e = report["qber"]["pooled"]
    n = report["qber"]["n_test"]
    target = qber_curve(70e-12, 71e-12, 2, D_FIG, LAMBDA)[0].qber
    sigma = math.sqrt(target * (1 - target) / n)
    qber_ok = abs(e - target) <= 3 * sigma
    q1 = report["Q1"]["used"]
    rate_ok = report["keyrate"]["gain_corrected_raw"] == pytest.approx(keyrate_gain(q1, e, 1.0), rel=1e-12)
    ok = qber_ok and rate_ok and elapsed < 60
    record_criterion(5, "end-to-end session", ok,
                     f"pooled QBER {e:.5f} vs analytic {target:.5f} ± 3σ ({3 * sigma:.5f}): "
                     f"{'ok' if qber_ok else f'off by {abs(e - target) / sigma:.0f}σ'}; "
                     f"keyrate_gain consistent: {rate_ok}; Q1={q1:.4f}; {elapsed:.1f} s")
    assert ok


def test_criterion_5_companion_exact_parity_error(session_report):
    """Same session against the exact wrapped-Gaussian parity error at the
    same Δ², which is what the sampled noise model predicts."""
    report, _ = session_report
    e = report["qber"]["pooled"]
    n = report["qber"]["n_test"]
    exact = wrapped_parity_error(report["delta_sq"]["analytic"])
    assert abs(e - exact) <= 3 * math.sqrt(exact * (1 - exact) / n)
    assert e <= report["qber_model"]["bound_analytic"]


def test_criterion_6_dispersion_cancellation(record_criterion):
    t0 = time.perf_counter()
    n = 10**6
    p = SpdcParams(nu_P0=2 * PHYS.nu0, delta_nu_P=10e6, delta_t_P=100e-12, delta_nu_A=100e9)
    off = DetectorSpec(jitter_fwhm=0.0)
    da, db = DispersiveElement(D_FIG, PHYS.nu0), DispersiveElement(-D_FIG, PHYS.nu0)
    pairs = sample_epr_pairs(gen(60), p, n)
    a = measure_freq_dispersive(pairs.nu_A, pairs.t_A, off, da, PHYS, gen(61))
    b = measure_freq_dispersive(pairs.nu_B, pairs.t_B, off, db, PHYS, gen(62))
    ratio = float(np.var(a.T - b.T) / np.var(a.T))

    det = DetectorSpec(jitter_fwhm=70e-12)
    pairs = sample_epr_pairs(gen(63), p, n)
    res = spectrometer_mode(pairs.nu_A, pairs.t_A, pairs.nu_B, pairs.t_B, da, da, det, det, PHYS,
                            gen(64), gen(65), spdc=p)
    rel = abs(res.recovered_bandwidth - 100e9) / 100e9
    elapsed = time.perf_counter() - t0
    ok = ratio < 1e-3 and rel < 0.02 and elapsed < 60
    record_criterion(6, "dispersion cancellation", ok,
                     f"Var(T_A-T_B)/Var(T_A)={ratio:.2e} (<1e-3); spectrometer "
                     f"{res.recovered_bandwidth / 1e9:.3f} GHz ({rel * 100:.2f}% off, <2%); {elapsed:.1f} s")
    assert ok


def test_criterion_7_indistinguishability(record_criterion):
    t0 = time.perf_counter()
    s2 = 2 * math.pi * 100e9
    p = PmSourceParams(2 * math.pi * PHYS.nu0, 0.1 * s2, s2)
    cf = ensemble_covariance(p, Basis.FREQUENCY)
    ct = ensemble_covariance(p, Basis.TIME)
    denom = np.maximum(np.abs(cf), np.abs(ct))
    rel = np.where(denom > 0, np.abs(cf - ct) / np.where(denom > 0, denom, 1), 0.0)
    tol = 0.1**2 + 1e-12
    analytic_ok = bool(np.all(rel <= tol))

    n = 10**6
    r = gen(70)
    states = sample_pm_states(r, p, 2 * n)
    nu, t = emit_photons(r, states)
    worst = 0.0
    for basis in (Basis.TIME, Basis.FREQUENCY):
        sel = states.basis == basis
        x = t[sel] - t[sel].mean()
        y = 2 * math.pi * nu[sel] - p.omega0
        y = y - y.mean()
        ref = ensemble_covariance(p, basis)
        m = len(x)
        for est, samples, target in ((np.mean(x * x), x * x, ref[0, 0]),
                                     (np.mean(y * y), y * y, ref[1, 1]),
                                     (np.mean(x * y), x * y, ref[0, 1])):
            se = math.sqrt(np.var(samples) / m)
            worst = max(worst, abs(est - target) / se)
    elapsed = time.perf_counter() - t0
    ok = analytic_ok and worst <= 5 and elapsed < 30
    record_criterion(7, "indistinguishability", ok,
                     f"max entrywise rel diff {rel.max():.4f} (<= {tol:.4f}); worst MC deviation "
                     f"{worst:.2f} SE (<= 5); {elapsed:.1f} s")
    assert ok


def _run_cli(argv, capsys):
    code = main(argv)
    out, _ = capsys.readouterr()
    return code, out


def test_criterion_8_determinism(record_criterion, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pulses": 50000, "batch_size": 8192}))
    spec_cfg = tmp_path / "spec.json"
    spec_cfg.write_text(json.dumps({"dispersion": {"bob": "7000 ps/nm"}, "pulses": 50000}))
    checks = {}

    def twice(name, argv_fn, files):
        outs = []
        for i in range(2):
            argv, paths = argv_fn(i)
            code, out = _run_cli(argv, capsys)
            assert code == 0
            outs.append((out, *[p.read_bytes() for p in paths]))
        checks[name] = outs[0] == outs[1]

    def sim(workers):
        def fn(i):
            r, t = tmp_path / f"r{workers}_{i}.json", tmp_path / f"t{workers}_{i}.jsonl"
            return (["simulate", "epr", "--config", str(cfg), "--workers", str(workers), "--no-runtime",
                     "--out", str(r), "--transcript", str(t)], [r, t])
        return fn

    twice("simulate epr (serial)", sim(1), None)
    twice("simulate epr (4 workers)", sim(4), None)
    checks["serial == parallel"] = ((tmp_path / "r1_0.json").read_bytes() == (tmp_path / "r4_0.json").read_bytes()
                                    and (tmp_path / "t1_0.jsonl").read_bytes() == (tmp_path / "t4_0.jsonl").read_bytes())
    twice("simulate pm", lambda i: (["simulate", "pm", "--pulses", "30000", "--workers", "2", "--no-runtime"], []), None)
    twice("qber-curve", lambda i: (["qber-curve", "--out", str(tmp_path / f"c{i}.csv")], [tmp_path / f"c{i}.csv"]), None)
    twice("keyrate", lambda i: (["keyrate", "--qber", "0.05", "--gain", "0.1", "--f", "1.16"], []), None)
    twice("spectrometer", lambda i: (["spectrometer", "--config", str(spec_cfg), "--out", str(tmp_path / f"h{i}.csv")],
                                     [tmp_path / f"h{i}.csv"]), None)
    twice("print-config", lambda i: (["print-config"], []), None)
    ok = all(checks.values())
    bad = [k for k, v in checks.items() if not v]
    record_criterion(8, "determinism", ok, f"{len(checks)} byte-identical checks" + (f"; failed: {bad}" if bad else ""))
    assert ok
