"""Classical reference protocol: a coherent drive reflected off a lossless
linear resonator, with the detuning read out in the phase quadrature.

Quadrature variances are in units where the vacuum gives 1/4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

QUADRATURE_VACUUM = 0.25


@dataclass(frozen=True)
class ClassicalSetup:
    """Drive and readout of the linear-resonator benchmark.

    ``delta_p`` is the drive detuning from the prior estimate of the
    resonance, ``alpha2`` the number of drive photons in one mode,
    ``bandwidth`` (rad/s) and ``time`` set the number of modes used.
    """

    kappa_ext: float
    delta_p: float = 0.0
    alpha2: float = 1.0
    bandwidth: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if not self.kappa_ext > 0:
            raise ValueError("kappa_ext must be positive")
        if self.alpha2 < 0:
            raise ValueError("alpha2 must be non-negative")
        if self.bandwidth * self.time < 0:
            raise ValueError("bandwidth * time must be non-negative")

    @property
    def n_out(self) -> float:
        """Detected photons ``B T alpha2 / 2 pi``."""
        return self.bandwidth * self.time * self.alpha2 / (2.0 * math.pi)


def reflection(delta_p, kappa_ext: float):
    """Reflection coefficient ``(k/2 + i D) / (k/2 - i D)``, unimodular."""
    if not kappa_ext > 0:
        raise ValueError("kappa_ext must be positive")
    d = np.asarray(delta_p, dtype=float)
    g = (0.5 * kappa_ext + 1j * d) / (0.5 * kappa_ext - 1j * d)
    return complex(g) if g.ndim == 0 else g


def phase_quadrature(setup: ClassicalSetup, delta):
    """Mean phase-quadrature output when the resonance shifts by ``delta``.

    The reference phase is locked to the reflection at ``delta = 0``, so the
    signal vanishes there and its slope is :func:`homodyne_slope`.
    """
    alpha = math.sqrt(setup.alpha2)
    shifted = reflection(setup.delta_p - np.asarray(delta, dtype=float), setup.kappa_ext)
    ref = reflection(setup.delta_p, setup.kappa_ext)
    return alpha * np.imag(shifted * np.conj(ref))


def homodyne_slope(setup: ClassicalSetup) -> float:
    """``d<p_out>/d delta = -4 kappa_ext alpha / (kappa_ext^2 + 4 delta_p^2)``."""
    k = setup.kappa_ext
    return -4.0 * k * math.sqrt(setup.alpha2) / (k * k + 4.0 * setup.delta_p ** 2)


def _gain_factor(kappa_ext, delta_p):
    k2 = kappa_ext * kappa_ext
    return 64.0 * k2 / (k2 + 4.0 * np.asarray(delta_p, dtype=float) ** 2) ** 2


def classical_precision(setup: ClassicalSetup) -> float:
    """Single-mode precision ``64 kappa_ext^2 alpha2 / (kappa_ext^2 + 4 delta_p^2)^2``."""
    return float(_gain_factor(setup.kappa_ext, setup.delta_p) * setup.alpha2)


def classical_precision_timed(setup: ClassicalSetup) -> float:
    """Precision accumulated over ``B T / 2 pi`` independent modes."""
    return float(_gain_factor(setup.kappa_ext, setup.delta_p) * setup.n_out)


def classical_precision_curve(kappa_ext: float, delta_p, alpha2: float):
    """Vectorized single-mode precision over a grid of drive detunings."""
    return _gain_factor(kappa_ext, delta_p) * alpha2


@dataclass(frozen=True)
class ScalingGap:
    beta_quantum: float
    beta_classical: float

    @property
    def gap(self) -> float:
        return self.beta_quantum - self.beta_classical


def classical_beta(l_values, kappa_ext: float, alpha2_per_l: float = 1.0):
    """Scaling exponent of the optimal classical precision when the photon
    number grows in proportion to the system size."""
    from .metrology import fit_beta
    l_values = np.asarray(l_values, dtype=float)
    p_max = [classical_precision(ClassicalSetup(kappa_ext, 0.0, alpha2_per_l * L))
             for L in l_values]
    return fit_beta(l_values, p_max)


def quantum_classical_gap(quantum_fit, l_values, kappa_ext: float) -> ScalingGap:
    """Compare a fitted quantum exponent with the classical one on the same sizes."""
    return ScalingGap(float(quantum_fit.beta), classical_beta(l_values, kappa_ext).beta)
