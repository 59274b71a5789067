"""Device model of the SQUID-terminated quarter-wave resonator.

Flux-tunable resonance, eigenmode and Kerr coefficient, hanger-geometry S21
model and fit, and extraction of the two-photon pump amplitude from a
measured photon-number curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.optimize import brentq, least_squares, minimize_scalar

from .errors import (DegenerateFit, FitDiverged, FluxSingularity, InsufficientSpan,
                     RootNotBracketed)
from .fock import PhysicalParams, meanfield_photons

HBAR = constants.hbar
PHI0_REDUCED = constants.hbar / (2.0 * constants.e)


@dataclass(frozen=True)
class DeviceModel:
    """Lumped description of the resonator and its SQUID.

    Only ``gamma0`` and ``omega_bare`` are needed for the flux response; the
    eigenmode and Kerr calculations also need the circuit elements.
    ``gamma0`` is computed from ``l_j0 / l_cav`` when omitted.
    """

    gamma0: float | None = None
    omega_bare: float | None = None
    l_cav: float | None = None
    c_cav: float | None = None
    c_j: float | None = None
    l_j0: float | None = None
    d: float | None = None

    def __post_init__(self):
        if self.gamma0 is None and self.l_j0 is not None and self.l_cav is not None:
            object.__setattr__(self, "gamma0", self.l_j0 / self.l_cav)
        for name in ("gamma0", "omega_bare", "l_cav", "c_cav", "l_j0", "d"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.c_j is not None and self.c_j < 0:
            raise ValueError("c_j must be non-negative")
        if None not in (self.gamma0, self.l_j0, self.l_cav):
            if abs(self.gamma0 - self.l_j0 / self.l_cav) > 1e-9 * max(self.gamma0, 1e-300):
                raise ValueError("gamma0 is inconsistent with l_j0 / l_cav")

    def _need(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"device model lacks {', '.join(missing)}")

    def gamma(self, F: float) -> float:
        """Participation ratio at reduced flux ``F = pi Phi / Phi0``."""
        c = abs(math.cos(F))
        if c <= 1e-6:
            raise FluxSingularity(f"|cos F| = {c:.2e}: SQUID inductance diverges near F = pi/2")
        self._need("gamma0")
        return self.gamma0 / c

    def l_j(self, F: float) -> float:
        self._need("l_j0")
        c = abs(math.cos(F))
        if c <= 1e-6:
            raise FluxSingularity(f"|cos F| = {c:.2e}: SQUID inductance diverges near F = pi/2")
        return self.l_j0 / c


def flux_resonance(dm: DeviceModel, F: float) -> float:
    """Small-participation resonance ``omega_bare / (1 + gamma(F))`` in rad/s."""
    dm._need("omega_bare")
    return dm.omega_bare / (1.0 + dm.gamma(F))


def _eigen_terms(dm: DeviceModel, F: float):
    l_j = dm.l_j(F)
    ratio = math.inf if l_j == 0 else dm.l_cav / l_j
    cap = dm.c_j / dm.c_cav

    # multiplied through by cos x > 0, which keeps the equation smooth near pi/2
    def g(x):
        c = math.cos(x)
        return (ratio - cap * x * x) * c - x * math.sin(x)

    def scale(x):
        c = math.cos(x)
        return ratio * c + cap * x * x * c + abs(x * math.sin(x))

    def slope(x):
        c, s = math.cos(x), math.sin(x)
        return -2 * cap * x * c - (ratio - cap * x * x + 1.0) * s - x * c

    return g, scale, slope


def eigenmode_k0(dm: DeviceModel, F: float = 0.0) -> float:
    """Fundamental wavevector ``k0`` (1/m) from the transcendental mode equation.

    Scans ``k0 d`` over (0, pi/2) for a sign change and polishes with Brent's
    method.  Roots outside the scan grid (very small or very large SQUID
    inductance) are bracketed against the interval ends, where the sign of
    the mode function is known.
    """
    dm._need("l_cav", "c_cav", "c_j", "l_j0", "d")
    g, scale, slope = _eigen_terms(dm, F)
    grid = np.linspace(0.0, math.pi / 2 - 1e-6, 10_001)[1:]
    if dm.l_j(F) == 0:
        raise RootNotBracketed("zero SQUID inductance puts the root at pi/2")
    values = np.array([g(x) for x in grid])
    change = np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]
    top = math.nextafter(math.pi / 2, 0.0)
    if values[0] == 0:
        lo = hi = grid[0]
    elif values[0] < 0:
        lo, hi = 0.0, grid[0]  # g(0) = L_cav / L_J > 0
    elif change.size:
        lo, hi = grid[change[0]], grid[change[0] + 1]
    elif g(top) < 0:
        lo, hi = grid[-1], top
    else:
        raise RootNotBracketed("mode equation has no sign change on (0, pi/2)")
    x = lo if lo == hi else brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                   maxiter=2000)
    # near pi/2 one ulp of x can move the residual by more than 1e-10 relative
    tol = max(1e-10 * scale(x), 4.0 * abs(slope(x)) * np.spacing(x))
    if not 0 < x < math.pi / 2 or abs(g(x)) > tol:
        raise RootNotBracketed(f"root residual {abs(g(x)):.2e} too large")
    return x / dm.d


def eigenmode_residual(dm: DeviceModel, k0: float, F: float = 0.0) -> float:
    """Relative residual of the mode equation at ``k0``."""
    g, scale, _ = _eigen_terms(dm, F)
    x = k0 * dm.d
    return abs(g(x)) / scale(x)


def kerr_from_mode(dm: DeviceModel, k0: float, omega0: float, F: float = 0.0) -> float:
    """Kerr coefficient ``U`` (rad/s, negative) of the fundamental mode."""
    dm._need("l_cav", "c_cav", "c_j", "d")
    x = k0 * dm.d
    c2 = math.cos(x) ** 2
    m0 = 1.0 + math.sin(2 * x) / (2 * x) + 2.0 * dm.c_j / dm.c_cav * c2
    bracket = c2 / (x * x * m0)
    gamma = dm.l_j(F) / dm.l_cav
    return -(HBAR * omega0 ** 2 * dm.l_cav) / (2.0 * gamma * PHI0_REDUCED ** 2) * bracket ** 2


# -- hanger S21 -------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceFit:
    f_r: float
    q_l: float
    q_c_abs: float
    phi: float = 0.0
    a: float = 1.0
    alpha: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if not (self.f_r > 0 and self.q_l > 0 and self.q_c_abs > 0):
            raise ValueError("f_r, q_l and q_c_abs must be positive")

    @property
    def kappa(self) -> float:
        """Loaded linewidth ``omega_r / Q_l`` in rad/s."""
        return 2.0 * math.pi * self.f_r / self.q_l

    @property
    def q_i(self) -> float:
        """Internal quality factor from ``1/Q_l = 1/Q_i + Re(1/Q_c)``."""
        inv = 1.0 / self.q_l - math.cos(self.phi) / self.q_c_abs
        return math.inf if inv <= 0 else 1.0 / inv


def s21_model(f, fit: ResonanceFit):
    f = np.asarray(f, dtype=float)
    env = fit.a * np.exp(1j * fit.alpha) * np.exp(-2j * np.pi * f * fit.tau)
    dip = (fit.q_l / fit.q_c_abs) * np.exp(1j * fit.phi) / (1.0 + 2j * fit.q_l * (f / fit.f_r - 1.0))
    return env * (1.0 - dip)


def _circle_fit(z: np.ndarray) -> tuple[complex, float]:
    """Algebraic (Kasa) circle fit refined by geometric least squares."""
    x, y = z.real, z.imag
    A = np.column_stack([x, y, np.ones_like(x)])
    sol, *_ = np.linalg.lstsq(A, x * x + y * y, rcond=None)
    xc, yc = sol[0] / 2, sol[1] / 2
    r0 = math.sqrt(max(sol[2] + xc * xc + yc * yc, 0.0))

    def resid(p):
        return np.hypot(x - p[0], y - p[1]) - p[2]

    res = least_squares(resid, [xc, yc, max(r0, 1e-12)], method="lm")
    xc, yc, r = res.x
    return complex(xc, yc), abs(r)


def _phase_fit(f, z_centered, f0, q0):
    theta = np.unwrap(np.angle(z_centered))

    def resid(p):
        th0, ql, fr = p
        return theta - (th0 + 2.0 * np.arctan(2.0 * ql * (1.0 - f / fr)))

    th_guess = float(np.mean(theta))
    res = least_squares(resid, [th_guess, q0, f0], x_scale=[1.0, q0, f0 / q0], method="lm")
    return res.x


def _initial_guess(f, z):
    mag = np.abs(z)
    k = int(np.argmin(mag))
    f0 = f[k]
    base = 0.5 * (mag[:5].mean() + mag[-5:].mean())
    depth = base - mag[k]
    half = mag[k] + depth * (1 - 1 / math.sqrt(2))
    below = np.nonzero(mag <= half)[0]
    if below.size >= 2:
        width = f[below[-1]] - f[below[0]]
    else:
        width = (f[-1] - f[0]) / 10.0
    width = max(width, (f[1] - f[0]))
    return f0, f0 / width


def _estimate_delay(f, z):
    ends = np.r_[0:max(3, f.size // 10), f.size - max(3, f.size // 10):f.size]
    ph = np.unwrap(np.angle(z))
    slope = np.polyfit(f[ends], ph[ends], 1)[0]
    tau0 = -slope / (2 * np.pi)

    def circle_err(tau):
        zz = z * np.exp(2j * np.pi * f * tau)
        c, r = _circle_fit(zz)
        return float(np.sum((np.abs(zz - c) - r) ** 2))

    step = 0.01 / (f[-1] - f[0])
    taus = tau0 + step * np.arange(-20, 21)
    errs = [circle_err(t) for t in taus]
    k = int(np.argmin(errs))
    res = minimize_scalar(circle_err, bounds=(taus[k] - step, taus[k] + step),
                          method="bounded", options={"xatol": step * 1e-6})
    return float(res.x) if res.fun <= errs[k] else float(taus[k])


def s21_fit(freqs, s21) -> ResonanceFit:
    """Fit the hanger model to complex transmission data.

    Circle fit for the initial estimate (delay removal, circle fit, phase
    fit, off-resonant point, normalized circle), then a full complex
    least-squares refinement of all seven parameters.
    """
    f = np.asarray(freqs, dtype=float)
    z = np.asarray(s21, dtype=complex)
    if f.size != z.size:
        raise ValueError("freqs and s21 differ in length")
    if f.size < 20:
        raise InsufficientSpan(f"need at least 20 points, got {f.size}")
    order = np.argsort(f)
    f, z = f[order], z[order]

    tau = _estimate_delay(f, z)
    z1 = z * np.exp(2j * np.pi * f * tau)
    spread = np.std(np.abs(z1 - z1.mean()))
    if spread <= 1e-9 * np.mean(np.abs(z1)):
        raise FitDiverged("no resonance feature: data is a pure delay line")

    center, radius = _circle_fit(z1)
    f0, q0 = _initial_guess(f, z1)
    th0, ql, fr = _phase_fit(f, z1 - center, f0, q0)
    off = center + radius * np.exp(1j * (th0 + np.pi))
    a, alpha = abs(off), float(np.angle(off))
    zn = z1 / off
    c_n, r_n = _circle_fit(zn)
    ratio = 2.0 * r_n
    phi = float(np.angle(1.0 - c_n))
    ql = abs(ql)
    if not (ratio > 0 and ql > 0 and np.isfinite(ratio)):
        raise FitDiverged("circle fit produced a degenerate resonance")

    # Fit with the delay phase referenced to the band centre; this removes
    # the strong correlation between alpha and tau.
    fc = 0.5 * (f[0] + f[-1])
    alpha_c = alpha - 2.0 * np.pi * fc * tau
    p0 = np.array([fr, ql, ql / ratio, phi, a, alpha_c, tau])
    scale = np.array([fr / ql, ql, ql / ratio, 1.0, a, 1.0, 1.0 / (f[-1] - f[0])])

    def unpack(p):
        p = [float(v) for v in p]
        return ResonanceFit(p[0], p[1], p[2], p[3], p[4], p[5] + 2.0 * math.pi * fc * p[6], p[6])

    def resid(p):
        try:
            model = s21_model(f, unpack(p))
        except ValueError:
            return np.full(2 * f.size, 1e6)
        d = model - z
        return np.concatenate([d.real, d.imag])

    res = least_squares(resid, p0, x_scale=scale, method="trf", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=5000)
    if res.status <= 0:
        raise FitDiverged(f"least squares did not converge: {res.message}")
    fit = unpack(res.x)
    fit = ResonanceFit(fit.f_r, fit.q_l, fit.q_c_abs, float(np.angle(np.exp(1j * fit.phi))),
                       fit.a, float(np.angle(np.exp(1j * fit.alpha))), fit.tau)

    noise = math.sqrt(np.mean(res.fun ** 2))
    depth = fit.a * fit.q_l / fit.q_c_abs
    if not (f[0] <= fit.f_r <= f[-1]) or depth <= 5 * noise:
        raise FitDiverged("fitted resonance is not supported by the data")
    if f[-1] - f[0] < 3 * fit.f_r / fit.q_l:
        raise InsufficientSpan("data span is below 3 linewidths")
    return fit


# -- pump calibration -------------------------------------------------------

def meanfield_n(pp: PhysicalParams) -> float:
    """Stable bright-branch photon number ``(delta + sqrt(G^2 - kappa^2)) / |U|``."""
    return meanfield_photons(pp)


def extract_g(detunings, n_mean, kappa: float) -> tuple[float, float]:
    """Pump amplitude from the x-intercept of a linear fit to bright-phase data.

    Returns ``(G, delta0)`` with ``G = sqrt(delta0^2 + kappa^2)``.
    """
    x = np.asarray(detunings, dtype=float)
    y = np.asarray(n_mean, dtype=float)
    if x.size != y.size:
        raise ValueError("detunings and n_mean differ in length")
    if x.size < 3 or np.ptp(x) == 0:
        raise DegenerateFit("need at least 3 points with distinct detunings")
    slope, intercept = np.polyfit(x, y, 1)
    if slope == 0 or abs(slope) * np.ptp(x) <= 1e-12 * max(np.abs(y).max(), 1e-300):
        raise DegenerateFit("photon number does not vary with detuning")
    delta0 = -intercept / slope
    return math.hypot(delta0, kappa), float(delta0)
