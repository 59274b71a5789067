import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrsense.calibration import (DeviceModel, ResonanceFit, eigenmode_k0, eigenmode_residual,
                                   extract_g, flux_resonance, kerr_from_mode, meanfield_n,
                                   s21_fit, s21_model)
from kerrsense.errors import (DegenerateFit, FitDiverged, FluxSingularity, InsufficientSpan,
                              RootNotBracketed)
from kerrsense.fock import PhysicalParams
from kerrsense.metrology import critical_detuning
from kerrsense.reference import load_table

TWO_PI = 2 * math.pi
KHZ = TWO_PI * 1e3
FITTED = DeviceModel(gamma0=3.1e-2, omega_bare=TWO_PI * 4.5068e9)
# plausible circuit values for a 4.5 GHz quarter-wave resonator
L_CAV, D = 2.77e-9, 6.6e-3
DEVICE = DeviceModel(omega_bare=TWO_PI * 4.5068e9, l_cav=L_CAV, c_cav=1.0e-12, c_j=5e-15,
                     l_j0=3.1e-2 * L_CAV, d=D)
X_TAN_X_ROOT = 0.8603335890193797  # root of x tan x = 1 from an arbitrary-precision solver


def test_device_model_consistency():
    assert DeviceModel(l_cav=2.0, l_j0=0.1).gamma0 == pytest.approx(0.05)
    with pytest.raises(ValueError):
        DeviceModel(gamma0=0.1, l_cav=2.0, l_j0=0.1)
    with pytest.raises(ValueError):
        DeviceModel(gamma0=-0.1)


def test_flux_resonance_examples():
    assert flux_resonance(FITTED, 0.0) / TWO_PI == pytest.approx(4.5068e9 / 1.031, rel=1e-12)
    assert flux_resonance(FITTED, 0.0) / TWO_PI / 1e9 == pytest.approx(4.3713, abs=5e-5)
    w = flux_resonance(FITTED, 0.66) / TWO_PI
    assert abs(w - 4.334886e9) / 4.334886e9 < 1e-3
    assert flux_resonance(DeviceModel(gamma0=0.0, omega_bare=5.0), 0.4) == 5.0
    with pytest.raises(FluxSingularity):
        flux_resonance(FITTED, math.pi / 2)


def test_flux_resonance_all_table_rows():
    for row in load_table("table1"):
        w = flux_resonance(FITTED, row.F) / TWO_PI
        assert abs(w / (row.omega_r_ghz * 1e9) - 1) < 1e-3


@given(st.floats(0.0, 1.5), st.floats(1e-4, 0.06), st.floats(1e-5, 0.05))
def test_flux_resonance_decreasing(F, g0, dF):
    dm = DeviceModel(gamma0=g0, omega_bare=1.0)
    assert flux_resonance(dm, F + dF) < flux_resonance(dm, F)


def test_eigenmode_unit_ratio():
    dm = DeviceModel(l_cav=1.0, c_cav=1.0, c_j=0.0, l_j0=1.0, d=1.0)
    assert eigenmode_k0(dm) == pytest.approx(X_TAN_X_ROOT, abs=1e-12)


def test_eigenmode_limits():
    # a vanishing SQUID inductance shorts the end: the bare quarter-wave mode
    short = DeviceModel(l_cav=1.0, c_cav=1.0, c_j=0.0, l_j0=1e-9, d=2.0)
    assert eigenmode_k0(short) * 2.0 == pytest.approx(math.pi / 2, abs=1e-6)
    # a large one opens the end and pushes the root toward zero
    open_ = DeviceModel(l_cav=1.0, c_cav=1.0, c_j=0.0, l_j0=1e6, d=1.0)
    assert eigenmode_k0(open_) < 2e-3


def test_eigenmode_extreme_ratios_still_bracketed():
    dm = DeviceModel(l_cav=1.0, c_cav=1.0, c_j=1e-3, l_j0=1e30, d=1.0)
    assert eigenmode_residual(dm, eigenmode_k0(dm)) < 1e-10
    # root within ~1e-12 of pi/2: only float resolution of x limits the residual
    dm = DeviceModel(l_cav=1.0, c_cav=1.0, c_j=1e-3, l_j0=1e-12, d=1.0)
    x = eigenmode_k0(dm)
    lo, hi = x - 4 * np.spacing(x), x + 4 * np.spacing(x)
    assert eigenmode_residual(dm, lo) < 1e-2 and eigenmode_residual(dm, hi) < 1e-2
    ratio = 1e12
    sign = [np.sign(ratio - 1e-3 * t * t - t * math.tan(t)) for t in (lo, hi)]
    assert sign[0] > 0 > sign[1]


def test_eigenmode_shorted_end_not_bracketed():
    with pytest.raises(RootNotBracketed):
        eigenmode_k0(DeviceModel(l_cav=1.0, c_cav=1.0, c_j=0.0, l_j0=0.0, d=1.0))


@settings(max_examples=100)
@given(st.floats(1e-10, 1e-8), st.floats(1e-13, 1e-11), st.floats(0, 1e-13),
       st.floats(1e-3, 2.0), st.floats(1e-3, 0.1), st.floats(0.0, 1.4))
def test_eigenmode_residual_random(l_cav, c_cav, c_j, gamma, d, F):
    dm = DeviceModel(l_cav=l_cav, c_cav=c_cav, c_j=c_j, l_j0=gamma * l_cav, d=d)
    k0 = eigenmode_k0(dm, F)
    assert 0 < k0 * d < math.pi / 2
    assert eigenmode_residual(dm, k0, F) < 1e-10


def test_eigenmode_agrees_with_small_participation_law():
    for F in (0.0, 0.35, 0.66, 0.82):
        x = eigenmode_k0(DEVICE, F) * D
        w_mode = DEVICE.omega_bare * x / (math.pi / 2)
        g = DEVICE.gamma(F)
        assert w_mode == pytest.approx(flux_resonance(DEVICE, F), rel=2 * g * g + 0.01 * g)


def _kerr(F):
    k0 = eigenmode_k0(DEVICE, F)
    return kerr_from_mode(DEVICE, k0, DEVICE.omega_bare * k0 * D / (math.pi / 2), F)


def test_kerr_negative_and_growing_with_flux():
    values = [_kerr(F) for F in np.linspace(0.0, 0.82, 30)]
    assert all(u < 0 for u in values)
    assert all(abs(b) > abs(a) for a, b in zip(values, values[1:]))


def test_kerr_vanishes_at_quarter_wave_limit():
    dm = DeviceModel(l_cav=L_CAV, c_cav=1e-12, c_j=0.0, l_j0=1e-12 * L_CAV, d=D)
    k0 = eigenmode_k0(dm)
    assert abs(kerr_from_mode(dm, k0, 2e10)) < 1e-12 * abs(_kerr(0.0))


def test_resonance_fit_validation():
    with pytest.raises(ValueError):
        ResonanceFit(1e9, -1.0, 1e4)
    fit = ResonanceFit(5e9, 1e4, 2e4)
    assert fit.kappa == pytest.approx(TWO_PI * 5e9 / 1e4)


def test_s21_model_examples():
    fit = ResonanceFit(5e9, 1e4, 2e4, 0.0, 0.7, 0.2, 3e-9)
    far = s21_model(np.array([1e3, 1e14]), fit)
    np.testing.assert_allclose(np.abs(far), 0.7, rtol=1e-8)
    plain = ResonanceFit(5e9, 1e4, 2.5e4)
    assert s21_model(5e9, plain) == pytest.approx(1 - 1e4 / 2.5e4)
    half = s21_model(np.array([5e9 * (1 - 0.5e-4), 5e9 * (1 + 0.5e-4)]), plain)
    np.testing.assert_allclose(np.abs(1 - half), (1e4 / 2.5e4) / math.sqrt(2), rtol=1e-9)


TRUE = ResonanceFit(4.3349e9, 6.0e4, 6.6e4, 0.1, 0.8, 0.3, 50e-9)


def _freqs(n=401, span=10):
    lw = TRUE.f_r / TRUE.q_l
    return np.linspace(TRUE.f_r - span / 2 * lw, TRUE.f_r + span / 2 * lw, n)


def test_s21_fit_noiseless_round_trip():
    f = _freqs()
    fit = s21_fit(f, s21_model(f, TRUE))
    assert fit.f_r == pytest.approx(TRUE.f_r, rel=1e-6)
    assert fit.q_l == pytest.approx(TRUE.q_l, rel=1e-2)
    assert fit.q_c_abs == pytest.approx(TRUE.q_c_abs, rel=1e-2)
    assert fit.kappa == pytest.approx(TWO_PI * fit.f_r / fit.q_l)


@pytest.mark.parametrize("seed", range(5))
def test_s21_fit_snr_100(seed):
    # SNR = baseline amplitude over the per-quadrature noise standard deviation
    rng = np.random.default_rng(seed)
    f = _freqs()
    sigma = TRUE.a / 100
    z = s21_model(f, TRUE) + sigma * (rng.normal(size=f.size) + 1j * rng.normal(size=f.size))
    fit = s21_fit(f, z)
    assert fit.f_r == pytest.approx(TRUE.f_r, rel=1e-5)
    assert fit.q_l == pytest.approx(TRUE.q_l, rel=1e-2)


def test_s21_fit_rejects_delay_line_and_short_data():
    f = _freqs()
    with pytest.raises(FitDiverged):
        s21_fit(f, 0.8 * np.exp(-2j * np.pi * f * 50e-9))
    with pytest.raises(InsufficientSpan):
        s21_fit(f[:19], s21_model(f[:19], TRUE))
    narrow = _freqs(60, span=1.0)
    with pytest.raises((InsufficientSpan, FitDiverged)):
        s21_fit(narrow, s21_model(narrow, TRUE))


def test_meanfield_examples():
    assert meanfield_n(PhysicalParams(0.0, 300 * KHZ, -9.14 * KHZ, 72 * KHZ)) == \
        pytest.approx(31.86344271206546, rel=1e-12)
    dc = critical_detuning(300 * KHZ, 72 * KHZ)
    assert meanfield_n(PhysicalParams(dc, 300 * KHZ, -9.14 * KHZ, 72 * KHZ)) == \
        pytest.approx(0.0, abs=1e-9)
    assert meanfield_n(PhysicalParams(-KHZ, 0.0, -9.14 * KHZ, 72 * KHZ)) == 0.0
    assert meanfield_n(PhysicalParams(-KHZ, 50 * KHZ, -9.14 * KHZ, 72 * KHZ)) == 0.0


def test_extract_g_exact_line():
    d0 = -291.2318663882783 * KHZ
    x = np.linspace(-200, 0, 9) * KHZ
    G, delta0 = extract_g(x, 0.1 / KHZ * (x - d0), 72 * KHZ)
    assert G / KHZ == pytest.approx(300.0, rel=1e-10)
    assert delta0 == pytest.approx(d0, rel=1e-12)


@given(st.floats(2.0, 20.0), st.floats(20.0, 200.0))
def test_extract_g_meanfield_round_trip(ratio, kappa_khz):
    kappa = kappa_khz * KHZ
    G = ratio * kappa
    U = -9.14 * KHZ
    dc = critical_detuning(G, kappa)
    x = np.linspace(dc + 0.2 * abs(dc), 0.0, 12)
    n = [meanfield_n(PhysicalParams(d, G, U, kappa)) for d in x]
    G_fit, d0 = extract_g(x, n, kappa)
    assert G_fit == pytest.approx(G, rel=5e-3)
    # the recovered pump predicts the same critical point as the fitted intercept
    assert critical_detuning(G_fit, kappa) == pytest.approx(d0, rel=1e-9)


def test_extract_g_degenerate():
    with pytest.raises(DegenerateFit):
        extract_g([1.0, 1.0], [2.0, 2.0], 1.0)
    with pytest.raises(DegenerateFit):
        extract_g([1.0, 2.0, 3.0], [2.0, 2.0, 2.0], 1.0)
