import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kerrsense.classical import (ClassicalSetup, classical_beta, classical_precision,
                                 classical_precision_curve, classical_precision_timed,
                                 homodyne_slope, phase_quadrature, quantum_classical_gap,
                                 reflection)
from kerrsense.metrology import BetaFit


def test_setup_validation():
    with pytest.raises(ValueError):
        ClassicalSetup(0.0)
    with pytest.raises(ValueError):
        ClassicalSetup(1.0, alpha2=-1)
    with pytest.raises(ValueError):
        ClassicalSetup(1.0, bandwidth=-1.0, time=1.0)


def test_reflection_examples():
    assert reflection(0.0, 2.0) == 1
    assert reflection(1.0, 2.0) == pytest.approx(1j, abs=1e-15)


@given(st.floats(-1e7, 1e7), st.floats(1e-3, 1e7))
def test_reflection_unimodular(d, k):
    assert abs(abs(reflection(d, k)) - 1) < 1e-12


def test_homodyne_slope_examples():
    assert homodyne_slope(ClassicalSetup(2.0, 0.0, 9.0)) == pytest.approx(-4 * 3 / 2.0)
    assert abs(homodyne_slope(ClassicalSetup(2.0, 1e12, 9.0))) < 1e-20


@given(st.floats(0.1, 10), st.floats(-10, 10), st.floats(0.01, 100))
def test_homodyne_slope_matches_finite_difference(k, dp, a2):
    s = ClassicalSetup(k, dp, a2)
    h = 1e-5 * k
    fd = (phase_quadrature(s, h) - phase_quadrature(s, -h)) / (2 * h)
    assert fd == pytest.approx(homodyne_slope(s), rel=1e-6)


def test_classical_precision_examples():
    assert classical_precision(ClassicalSetup(1.0, 0.0, 1.0)) == 64.0
    s = ClassicalSetup(3.0, 0.7, 2.0)
    assert classical_precision(ClassicalSetup(3.0, 0.7, 4.0)) == 2 * classical_precision(s)
    assert classical_precision(ClassicalSetup(3.0, 1.5, 2.0)) == pytest.approx(16 * 2.0 / 9.0)


@given(st.floats(0.1, 10), st.floats(-10, 10), st.floats(0.01, 100))
def test_precision_is_slope_squared_over_vacuum(k, dp, a2):
    s = ClassicalSetup(k, dp, a2)
    assert classical_precision(s) == pytest.approx(homodyne_slope(s) ** 2 / 0.25, rel=1e-12)


@given(st.floats(0.1, 10), st.floats(0.01, 100))
def test_argmax_at_zero_detuning(k, a2):
    dp = np.linspace(-5 * k, 5 * k, 1001)
    p = classical_precision_curve(k, dp, a2)
    assert dp[np.argmax(p)] == 0.0


def test_timed_precision():
    s = ClassicalSetup(2.0, 0.3, 5.0, bandwidth=2 * math.pi, time=1.0)
    assert classical_precision_timed(s) == pytest.approx(classical_precision(s))
    s2 = ClassicalSetup(2.0, 0.3, 5.0, bandwidth=2 * math.pi, time=2.0)
    assert classical_precision_timed(s2) == pytest.approx(2 * classical_precision_timed(s))
    s0 = ClassicalSetup(2.0, 0.0, 5.0, bandwidth=1e3, time=1e-2)
    assert classical_precision_timed(s0) == pytest.approx(64 * s0.n_out / 4.0)


def test_classical_beta_is_one():
    L = [0.66, 0.8, 1.0, 1.31, 1.64]
    fit = classical_beta(L, 2.0)
    assert fit.beta == pytest.approx(1.0, abs=1e-12)
    n_out = np.geomspace(1, 1e4, 9)
    p = [classical_precision_timed(ClassicalSetup(1.0, 0.0, x, 2 * math.pi, 1.0)) for x in n_out]
    assert np.polyfit(np.log(n_out), np.log(p), 1)[0] == pytest.approx(1.0, abs=1e-12)
    gap = quantum_classical_gap(BetaFit(2.0, 0.0, 0.0), L, 2.0)
    assert gap.gap == pytest.approx(1.0, abs=1e-12)
