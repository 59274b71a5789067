"""Detuning sweeps toward the thermodynamic limit and precision scaling."""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import LEAK_TOL, ObservableRecord, observables, steady_state
from .errors import DegenerateFit, KerrSenseError, NoTransition, TruncationLeak
from .fock import PhysicalParams, liouvillian, truncation_dim
from .measurement import (MeasurementModel, PowerMoments, autocorr_scale_factor,
                          output_moments, pair_precision, precision_error)

logger = logging.getLogger(__name__)

DEFAULT_DIM_CAP = 320


class Scaling(str, enum.Enum):
    I = "I"
    II = "II"


@dataclass(frozen=True)
class ReducedParams:
    """Reduced (tilde) rates in rad/s plus the system size ``L``."""

    tilde_delta: float
    tilde_G: float
    tilde_U: float
    tilde_kappa: float
    L: float = 1.0
    scaling: Scaling = Scaling.I

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if not self.tilde_kappa > 0:
            raise ValueError("tilde_kappa must be positive")
        object.__setattr__(self, "scaling", Scaling(self.scaling))

    def at(self, tilde_delta: float) -> "ReducedParams":
        return replace(self, tilde_delta=tilde_delta)


def to_physical(rp: ReducedParams) -> PhysicalParams:
    """Scaling I divides U by L; Scaling II multiplies delta, G and kappa by L."""
    if rp.scaling is Scaling.I:
        return PhysicalParams(rp.tilde_delta, rp.tilde_G, rp.tilde_U / rp.L, rp.tilde_kappa)
    L = rp.L
    return PhysicalParams(rp.tilde_delta * L, rp.tilde_G * L, rp.tilde_U, rp.tilde_kappa * L)


def from_physical(pp: PhysicalParams, L: float, scaling=Scaling.I) -> ReducedParams:
    """Reduced parameters of an operating point realised at size ``L``."""
    scaling = Scaling(scaling)
    if scaling is Scaling.I:
        return ReducedParams(pp.delta, pp.G, pp.U * L, pp.kappa, L, scaling)
    return ReducedParams(pp.delta / L, pp.G / L, pp.U, pp.kappa / L, L, scaling)


def critical_detuning(G: float, kappa: float) -> float:
    """``-sqrt(G^2 - kappa^2)``, the onset of the bright phase."""
    if G <= kappa:
        raise NoTransition(f"no second-order transition for G={G:g} <= kappa={kappa:g}")
    return -math.sqrt(G * G - kappa * kappa)


@dataclass
class PrecisionCurve:
    """Steady-state statistics and precision along a detuning grid.

    ``detunings`` are the reduced detunings (equal to the physical ones under
    Scaling I).  Precision is for estimating the reduced detuning, in
    (rad/s)^-2.  Points that failed to solve hold NaN and are listed in
    ``errors``.
    """

    detunings: np.ndarray
    n_mean: np.ndarray
    n_var: np.ndarray
    d2n: np.ndarray
    precision: np.ndarray
    precision_err: np.ndarray
    delta_max: float
    p_max: float
    n_out_mean: np.ndarray = None
    n_out_var: np.ndarray = None
    autocorr_scale: np.ndarray = None
    dims: np.ndarray = None
    L: float = 1.0
    scaling: Scaling = Scaling.I
    errors: list = field(default_factory=list)

    @property
    def epsilon(self) -> float:
        return float(self.detunings[1] - self.detunings[0])


@dataclass(frozen=True)
class _PointResult:
    n_mean: float
    n_var: float
    scale: float
    dim: int
    error: str | None = None


def _solve_point(pp: PhysicalParams, dim: int, leak_tol: float, model: MeasurementModel,
                 autocorrelation: bool, dim_cap: int | None = None) -> _PointResult:
    """Solve one grid point, enlarging the truncation on leaks up to ``dim_cap``."""
    while True:
        try:
            liou = liouvillian(pp, dim)
            rho = steady_state(liou, leak_tol=leak_tol)
            obs = observables(rho)
            s = autocorr_scale_factor(liou, rho, model, obs.n_var) if autocorrelation else 1.0
            return _PointResult(obs.n_mean, obs.n_var, s, dim)
        except TruncationLeak as exc:
            if dim_cap is None or dim >= dim_cap:
                return _PointResult(math.nan, math.nan, math.nan, dim,
                                    f"TruncationLeak: {exc}")
            dim = min(dim_cap, int(math.ceil(1.5 * dim)))
        except KerrSenseError as exc:
            return _PointResult(math.nan, math.nan, math.nan, dim,
                                f"{type(exc).__name__}: {exc}")


@dataclass
class PointSolutions:
    """Steady-state statistics and modelled output moments on a set of detunings."""

    detunings: np.ndarray
    n_mean: np.ndarray
    n_var: np.ndarray
    autocorr_scale: np.ndarray
    dims: np.ndarray
    moments: PowerMoments
    errors: list


def solve_points(rp: ReducedParams, tilde_deltas, model: MeasurementModel, *,
                 dim: int | None = None, dim_cap: int | None = None,
                 leak_tol: float = LEAK_TOL, autocorrelation: bool = False,
                 workers: int = 1) -> PointSolutions:
    """Solve independent steady states at each reduced detuning.

    ``dim`` fixes the truncation; otherwise it is chosen per point from the
    mean-field photon number and a leaking point is retried with a 1.5x
    larger basis up to ``dim_cap``.  Failed points hold NaN and are listed in
    ``errors``.  Results are assembled in input order whatever ``workers`` is.
    """
    deltas = np.asarray(tilde_deltas, dtype=float).reshape(-1)
    points = [to_physical(rp.at(d)) for d in deltas]
    if dim is not None:
        dims, cap = [int(dim)] * len(points), None
    else:
        cap = dim_cap if dim_cap is not None else DEFAULT_DIM_CAP
        dims = [truncation_dim(pp, cap) for pp in points]
    args = [(pp, d, leak_tol, model, autocorrelation, cap) for pp, d in zip(points, dims)]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_point, *zip(*args)))
    else:
        results = [_solve_point(*a) for a in args]

    errors = [(float(deltas[k]), r.error) for k, r in enumerate(results) if r.error]
    for d, msg in errors:
        logger.warning("point %.6g rad/s failed: %s", d, msg)

    mean = np.full(deltas.size, np.nan)
    var = np.full(deltas.size, np.nan)
    for k, r in enumerate(results):
        if r.error is None:
            pm = output_moments(ObservableRecord(r.n_mean, r.n_var + r.n_mean ** 2, r.n_var),
                                r.scale, model, kappa_ext=points[k].kappa_ext)
            mean[k], var[k] = pm.n_out_mean, pm.n_out_var
    return PointSolutions(deltas, np.array([r.n_mean for r in results]),
                          np.array([r.n_var for r in results]),
                          np.array([r.scale for r in results]),
                          np.array([r.dim for r in results]), PowerMoments(mean, var), errors)


def model_precision(rp: ReducedParams, tilde_deltas, epsilon: float, model: MeasurementModel,
                    err_form: str = "printed", **solve_kw):
    """Modelled precision of the pair ``(delta, delta + epsilon)`` at each detuning.

    Returns ``(precision, precision_err, pm_lo, pm_hi)``; the error bar is
    for ``model.repetitions`` traces averaged over the steady-state bins.
    """
    deltas = np.asarray(tilde_deltas, dtype=float).reshape(-1)
    both = np.concatenate([deltas, deltas + epsilon])
    pts = solve_points(rp, both, model, **solve_kw)
    k = deltas.size
    mean, var = pts.moments.n_out_mean, pts.moments.n_out_var
    lo, hi = PowerMoments(mean[:k], var[:k]), PowerMoments(mean[k:], var[k:])
    prec = np.atleast_1d(pair_precision(lo, hi, epsilon))
    err = np.atleast_1d(precision_error(prec, lo, hi, epsilon, model.repetitions,
                                        model.epsilon_err, err_form))
    err = err / math.sqrt(max(1, model.bins - model.j_ss))
    return prec, err, lo, hi


def _check_grid(grid: np.ndarray) -> float:
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("detuning grid needs at least 3 points")
    steps = np.diff(grid)
    if np.any(steps <= 0):
        raise ValueError("detuning grid must be ascending")
    eps = float(steps.mean())
    if np.max(np.abs(steps - eps)) > 1e-6 * abs(eps):
        raise ValueError("detuning grid must be uniformly spaced")
    return eps


def sweep(rp: ReducedParams, tilde_delta_grid, model: MeasurementModel, *,
          dim: int | None = None, dim_cap: int | None = None, leak_tol: float = LEAK_TOL,
          autocorrelation: bool = False, err_form: str = "printed",
          workers: int = 1) -> PrecisionCurve:
    """Solve the steady state along the grid and build the precision curve.

    The precision at grid point k uses the pair (k, k+1); the last point
    reuses the pair (k-1, k).  ``dim`` fixes the truncation; otherwise it is
    chosen per point from the mean-field photon number (optionally capped).
    A leaking point is retried with a 1.5x larger basis up to ``dim_cap``.
    ``workers > 1`` solves points in separate processes; assembly order is the
    grid order, so results do not depend on ``workers``.
    """
    grid = np.asarray(tilde_delta_grid, dtype=float)
    eps = _check_grid(grid)
    pts = solve_points(rp, grid, model, dim=dim, dim_cap=dim_cap, leak_tol=leak_tol,
                       autocorrelation=autocorrelation, workers=workers)
    n, v, s, errors = pts.n_mean, pts.n_var, pts.autocorr_scale, pts.errors
    mean, var = pts.moments.n_out_mean, pts.moments.n_out_var

    pm_lo = PowerMoments(mean[:-1], var[:-1])
    pm_hi = PowerMoments(mean[1:], var[1:])
    pair = pair_precision(pm_lo, pm_hi, eps)
    pair_err = precision_error(pair, pm_lo, pm_hi, eps, model.repetitions,
                               model.epsilon_err, err_form)
    n_ss = max(1, model.bins - model.j_ss)
    pair_err = pair_err / math.sqrt(n_ss)
    prec = np.append(pair, pair[-1])
    prec_err = np.append(pair_err, pair_err[-1])
    bad = ~np.isfinite(mean)
    prec[np.append(bad[:-1] | bad[1:], bad[-2] | bad[-1])] = np.nan

    d2n = np.full(n.size, np.nan)
    d2n[1:-1] = (n[2:] - 2.0 * n[1:-1] + n[:-2]) / eps ** 2

    if np.all(np.isnan(prec)):
        k_max, p_max = 0, math.nan
    else:
        k_max = int(np.nanargmax(prec))
        p_max = float(prec[k_max])
    return PrecisionCurve(grid, n, v, d2n, prec, prec_err, float(grid[k_max]), p_max,
                          n_out_mean=mean, n_out_var=var, autocorr_scale=s,
                          dims=pts.dims, L=rp.L, scaling=rp.scaling, errors=errors)


@dataclass(frozen=True)
class BetaFit:
    beta: float
    stderr: float
    log_prefactor: float

    def __iter__(self):
        return iter((self.beta, self.stderr))


def fit_beta(l_values, p_max_values) -> BetaFit:
    """Least-squares slope of ``log p_max`` against ``log L``."""
    x = np.log(np.asarray(l_values, dtype=float))
    y = np.asarray(p_max_values, dtype=float)
    if x.size != y.size:
        raise ValueError("l_values and p_max_values differ in length")
    if x.size < 3:
        raise DegenerateFit("need at least 3 (L, p_max) pairs")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise DegenerateFit("p_max values must be positive and finite")
    y = np.log(y)
    xm = x - x.mean()
    sxx = float(xm @ xm)
    if sxx <= 1e-300:
        raise DegenerateFit("L values have no spread")
    beta = float(xm @ (y - y.mean())) / sxx
    intercept = float(y.mean() - beta * x.mean())
    resid = y - (intercept + beta * x)
    dof = x.size - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return BetaFit(beta, stderr, intercept)


def delta_max_gap(curves, rps) -> list[tuple[float, float, float]]:
    """``(L, reduced delta_max, reduced delta_c)`` for each curve."""
    if len(curves) != len(rps):
        raise ValueError("curves and rps must be aligned")
    out = []
    for curve, rp in zip(curves, rps):
        out.append((rp.L, curve.delta_max, critical_detuning(rp.tilde_G, rp.tilde_kappa)))
    return out
