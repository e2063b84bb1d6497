import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftqkd.security import (
    CURVE_HEADER,
    binary_scheme_constraint,
    delta_sq_closed_form,
    h2,
    keyrate_gain,
    keyrate_ideal,
    parity_error_exact,
    qber_bound,
    qber_curve,
    scale_length,
    security_threshold,
    threshold_jitter,
    variance_chain,
    write_curve_csv,
)

D_REF = 7.0  # 7000 ps/nm in s/m
LAM = 1550e-9


def test_h2_values():
    assert h2(0.5) == pytest.approx(1.0, abs=1e-15)
    assert h2(0.0) == 0.0
    assert h2(1.0) == 0.0
    assert h2(0.11) == pytest.approx(0.49992, abs=5e-6)
    # direct evaluation
    x = 0.11
    assert h2(x) == pytest.approx(-x * math.log2(x) - (1 - x) * math.log2(1 - x), rel=1e-14)


@pytest.mark.parametrize("x", [-0.1, 1.1, float("nan")])
def test_h2_domain(x):
    with pytest.raises(ValueError):
        h2(x)


def test_keyrate_ideal_examples():
    assert keyrate_ideal(0.0, 1.0) == 0.5
    assert keyrate_ideal(0.0, 1.7) == 0.5
    assert keyrate_ideal(0.11, 1.0) == pytest.approx(8e-5, abs=1e-5)
    assert keyrate_ideal(0.05, 1.0) == pytest.approx(0.5 * (1 - 2 * h2(0.05)), rel=1e-14)
    assert keyrate_ideal(0.05, 1.0) == pytest.approx(0.2137, abs=1e-4)
    # negative raw rates are returned, not clipped
    assert keyrate_ideal(0.2, 1.0) < 0


def test_keyrate_gain_examples():
    for e in (0.0, 0.03, 0.11):
        assert keyrate_gain(1.0, e, 1.2) == keyrate_ideal(e, 1.2)
    assert keyrate_gain(0.1, 0.0, 1.0) == pytest.approx(0.05)
    assert h2(0.05) == pytest.approx(0.28640, abs=5e-6)
    # 0.5 * 0.1 * (1 - 1.16*0.28640 - 0.28640)
    assert keyrate_gain(0.1, 0.05, 1.16) == pytest.approx(0.019069, abs=2e-6)


@pytest.mark.parametrize("args", [(0.6, 1.0), (0.1, 0.9), (-0.01, 1.0)])
def test_keyrate_rejects_bad_inputs(args):
    with pytest.raises(ValueError):
        keyrate_ideal(*args)
    with pytest.raises(ValueError):
        keyrate_gain(1.5, 0.05, 1.0)


@given(st.floats(0.0, 0.109), st.floats(0.0, 0.109), st.floats(1.0, 1.5))
def test_keyrate_decreasing_in_e(e1, e2, f):
    lo, hi = sorted((e1, e2))
    if hi - lo > 1e-9:
        assert keyrate_ideal(lo, f) > keyrate_ideal(hi, f)


@given(st.floats(1e-4, 0.109), st.floats(1.0, 2.0), st.floats(1.0, 2.0))
def test_keyrate_decreasing_in_f(e, f1, f2):
    lo, hi = sorted((f1, f2))
    if hi - lo > 1e-9:
        assert keyrate_ideal(e, lo) > keyrate_ideal(e, hi)


def test_qber_bound_examples():
    assert qber_bound(0.3962) == pytest.approx(0.0552, abs=1e-4)
    assert qber_bound(0.12935) == pytest.approx(5.3e-4, abs=0.1e-4)
    assert qber_bound(1e-3) < 1e-300 or qber_bound(1e-3) == 0.0
    with pytest.raises(ValueError):
        qber_bound(0.0)


def test_qber_bound_strictly_increasing():
    grid = np.logspace(-3, 0, 400)
    vals = qber_bound(grid)
    # below ~0.0035 the bound underflows to zero; strictness is checked where representable
    nz = vals > 0
    assert np.all(np.diff(vals[nz]) > 0)
    assert np.all(np.diff(vals) >= 0)


def _parity_error_quadrature(delta_sq):
    """Independent route: integrate the Gaussian density over each odd
    sqrt(pi) window with mpmath quadrature."""
    mpmath.mp.dps = 30
    sig = mpmath.sqrt(mpmath.mpf(delta_sq) / 2)
    sp = mpmath.sqrt(mpmath.pi)
    pdf = lambda x: mpmath.npdf(x, 0, sig)
    total = mpmath.mpf(0)
    for j in range(1, 40, 2):
        a, b = (j - mpmath.mpf(1) / 2) * sp, (j + mpmath.mpf(1) / 2) * sp
        total += 2 * mpmath.quad(pdf, [a, b])
    return float(total)


@pytest.mark.parametrize("d2", [0.05, 0.1, 0.2, 0.3962, 0.6, 2.0])
def test_parity_error_exact_matches_quadrature(d2):
    assert parity_error_exact(d2) == pytest.approx(_parity_error_quadrature(d2), rel=1e-10, abs=1e-300)
    assert parity_error_exact(d2) <= qber_bound(d2)


def test_parity_error_tends_to_half():
    assert parity_error_exact(500.0) == pytest.approx(0.5, abs=1e-6)


def test_variance_chain_examples():
    b70 = variance_chain(70e-12, D_REF, LAM, 1.468)
    assert b70.delta_sq == pytest.approx(0.3962, rel=1e-3)
    assert variance_chain(40e-12, D_REF, LAM, 1.468).delta_sq == pytest.approx(0.1294, rel=1e-3)
    assert b70.delta_sq == pytest.approx(2 * b70.delta_X * b70.delta_K, rel=1e-12)
    ref = b70.delta_sq
    for n in (1.0, 1.468, 2.0):
        assert variance_chain(70e-12, D_REF, LAM, n).delta_sq == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("args", [(70e-12, 0.0, LAM, 1.5), (70e-12, -7.0, LAM, 1.5), (70e-12, 7.0, 0.0, 1.5),
                                  (0.0, 7.0, LAM, 1.5)])
def test_variance_chain_rejects(args):
    with pytest.raises(ValueError):
        variance_chain(*args)


@settings(max_examples=200)
@given(st.floats(5e-12, 500e-12), st.floats(0.1, 50.0), st.floats(400e-9, 2000e-9), st.floats(1.0, 3.0))
def test_variance_chain_routes_agree(dt, D, lam, n):
    b = variance_chain(dt, D, lam, n)
    assert b.delta_sq == pytest.approx(delta_sq_closed_form(dt, D, lam), rel=1e-12)
    assert b.scale == pytest.approx(scale_length(D, lam, n), rel=1e-12)


def test_security_threshold():
    e1 = security_threshold(1.0)
    assert e1 == pytest.approx(0.1100, abs=5e-4)
    assert keyrate_ideal(e1, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert security_threshold(1.2) < e1
    assert security_threshold(1e6) < 1e-5


def test_qber_curve_rows():
    rows = qber_curve(10e-12, 200e-12, 191, D_REF, LAM)
    by_ps = {round(r.jitter * 1e12): r for r in rows}
    assert 0.050 <= by_ps[70].qber <= 0.060
    assert 3e-4 <= by_ps[40].qber <= 8e-4
    qb = [r.qber for r in rows]
    assert all(b >= a for a, b in zip(qb, qb[1:]))
    crossing = threshold_jitter(0.11, D_REF, LAM)
    assert 80e-12 < crossing < 95e-12
    assert qber_bound(variance_chain(crossing, D_REF, LAM, 1.468).delta_sq) == pytest.approx(0.11, rel=1e-9)
    assert len(qber_curve(10e-12, 200e-12, 2, D_REF, LAM)) == 2


def test_curve_csv_format(tmp_path):
    rows = qber_curve(10e-12, 200e-12, 3, D_REF, LAM)
    out = tmp_path / "c.csv"
    write_curve_csv(rows, out)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CURVE_HEADER)
    assert lines[1].startswith("10.000000,")
    assert len(lines) == 4


@pytest.mark.parametrize(
    "dnu,dt,product,ok",
    [(1e9, 1e-9, 1.0, True), (10e9, 1e-9, 10.0, False), (0.0, 1e-9, 0.0, True)],
)
def test_binary_scheme_constraint(dnu, dt, product, ok):
    res = binary_scheme_constraint(193e12, 193e12 + dnu, 0.0, dt)
    assert res["product"] == pytest.approx(product, rel=1e-3, abs=1e-12)
    assert res["satisfied"] is ok
