"""Amplified output-field statistics, synthetic IQ traces and the moment and
precision estimators applied to measured (or synthetic) trace ensembles.

Units: ``p = kappa_ext * dt * <n>`` is the mean number of photons leaving the
cavity into the measured port during one integration bin.  Quadrature noise
``sigma2`` is in units where the vacuum variance is 1/4.  ``sigma2 = 0``
selects an ideal detector that adds neither vacuum nor amplifier noise.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dynamics import DensityMatrix, ObservableRecord, triangular_correlation_integral
from .errors import (InvalidNoise, MomentInfeasible, ParseError, ShapeError)
from .fock import Liouvillian

VACUUM_VARIANCE = 0.25
_BLOCK_ROWS = 8192


@dataclass(frozen=True)
class MeasurementModel:
    """Detection chain and acquisition timing.

    Defaults follow the steady-state acquisitions: 1.5 us bins over 69 us,
    steady state from 15 us, 4e5 repetitions.  ``kappa_ext=None`` means "use
    the coupling of the operating point being measured".  ``epsilon_err`` is
    the uncertainty of the detuning step (rad/s) used in error bars.
    """

    gain: float = 1.0
    sigma2: float = VACUUM_VARIANCE
    kappa_ext: float | None = None
    delta_t: float = 1.5e-6
    total_time: float = 69e-6
    j_ss_time: float = 15e-6
    repetitions: int = 400_000
    epsilon_err: float = 0.0

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.sigma2 != 0 and self.sigma2 < VACUUM_VARIANCE:
            raise InvalidNoise(
                f"sigma2={self.sigma2} is below the vacuum variance 1/4 "
                "(use 0 for an ideal detector)")
        if not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        if self.total_time < self.delta_t:
            raise ValueError("total_time must be at least one bin")
        if not self.j_ss_time < self.total_time:
            raise ValueError("j_ss_time must lie inside the trace")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")

    @classmethod
    def noiseless(cls, **kw) -> "MeasurementModel":
        return cls(gain=kw.pop("gain", 1.0), sigma2=0.0, **kw)

    @property
    def ideal(self) -> bool:
        return self.sigma2 == 0

    @property
    def bins(self) -> int:
        return max(1, int(round(self.total_time / self.delta_t)))

    @property
    def j_ss(self) -> int:
        """Index of the first bin that starts inside the steady-state window."""
        return int(math.ceil(self.j_ss_time / self.delta_t - 1e-9))

    @property
    def n_amp(self) -> float:
        """Amplifier background expressed in intracavity photons (needs kappa_ext)."""
        if self.kappa_ext is None:
            raise ValueError("n_amp needs kappa_ext")
        return 2.0 * self.sigma2 / (self.kappa_ext * self.delta_t)

    def with_(self, **changes) -> "MeasurementModel":
        return replace(self, **changes)


@dataclass(frozen=True)
class PowerMoments:
    """Mean and variance of the per-bin output power ``N = I^2 + Q^2``.

    Fields may be scalars or per-bin arrays.
    """

    n_out_mean: float | np.ndarray
    n_out_var: float | np.ndarray

    @property
    def n_out_std(self):
        return np.sqrt(self.n_out_var)


@dataclass(frozen=True, eq=False)
class TraceEnsemble:
    i_samples: np.ndarray
    q_samples: np.ndarray
    model: MeasurementModel
    seed: int | str

    def __post_init__(self):
        if self.i_samples.ndim != 2 or self.i_samples.shape != self.q_samples.shape:
            raise ShapeError("I and Q sample arrays must be equal m x j arrays")
        if min(self.i_samples.shape) < 1:
            raise ShapeError("ensemble needs m >= 1 and j >= 1")

    @property
    def m(self) -> int:
        return self.i_samples.shape[0]

    @property
    def j(self) -> int:
        return self.i_samples.shape[1]

    def power(self) -> np.ndarray:
        return self.i_samples ** 2 + self.q_samples ** 2

    def scaled(self, c: float) -> "TraceEnsemble":
        """Ensemble with all powers multiplied by ``c`` (amplitudes by sqrt(c))."""
        r = math.sqrt(c)
        return TraceEnsemble(self.i_samples * r, self.q_samples * r,
                             self.model.with_(gain=self.model.gain * c), self.seed)


def output_moments(obs: ObservableRecord, autocorr_scale: float,
                   model: MeasurementModel, kappa_ext: float | None = None) -> PowerMoments:
    """Output-power moments for one bin of a steady-state trace.

    ``<N> = G (p + 2 sigma2)`` and
    ``Var N = G^2 (Var p + 4 sigma2 p + 4 sigma2^2 - 1/4)``; an ideal
    detector (``sigma2 = 0``) keeps only ``Var p``.
    """
    if not 0 < autocorr_scale <= 1:
        raise ValueError("autocorr_scale must lie in (0, 1]")
    ke = model.kappa_ext if model.kappa_ext is not None else kappa_ext
    if ke is None:
        raise ValueError("kappa_ext must be given by the model or the caller")
    c = ke * model.delta_t
    p = c * obs.n_mean
    var_p = autocorr_scale * c * c * obs.n_var
    s2 = model.sigma2
    if model.ideal:
        mean, var = p, var_p
    else:
        mean = p + 2.0 * s2
        var = var_p + 4.0 * s2 * p + 4.0 * s2 * s2 - VACUUM_VARIANCE
    g = model.gain
    return PowerMoments(g * mean, g * g * max(var, 0.0))


def noise_factor(p: float, var_p: float, sigma2: float) -> float:
    """Ratio of the amplified-to-intrinsic output noise, ``Delta N / (G Delta p)``.

    Shows how added quadrature noise degrades precision at fixed signal.
    """
    if sigma2 == 0:
        return 1.0
    return math.sqrt(1.0 + (4.0 * sigma2 * p + 4.0 * sigma2 ** 2 - VACUUM_VARIANCE) / var_p)


def autocorr_scale_factor(liou: Liouvillian, rho_ss: DensityMatrix,
                          model: MeasurementModel, n_var: float | None = None) -> float:
    """Variance reduction of photon-number fluctuations by boxcar averaging.

    ``s = 2 / dt^2 * int_0^dt (dt - tau) C(tau) / C(0) dtau``, clamped to (0, 1].
    """
    if n_var is None:
        from .dynamics import observables
        n_var = observables(rho_ss).n_var
    if n_var <= 1e-14:
        return 1.0
    dt = model.delta_t
    s = 2.0 * triangular_correlation_integral(liou, rho_ss, dt) / (dt * dt * n_var)
    return float(min(1.0, max(s, np.finfo(float).tiny)))


def gaussian_parameters(mean: float, var: float) -> tuple[float, float]:
    """``(|mu|^2, v)`` of a displaced Gaussian field with the given power moments.

    For independent ``I ~ N(mu, v)``, ``Q ~ N(0, v)`` the power has mean
    ``|mu|^2 + 2v`` and variance ``4 v (|mu|^2 + v)``.
    """
    if mean < 0 or var < 0 or var > mean * mean * (1 + 1e-12):
        raise MomentInfeasible(
            f"(mean={mean:.6g}, var={var:.6g}) cannot be produced by a displaced "
            "Gaussian field (need 0 <= var <= mean^2)")
    disc = max(mean * mean - var, 0.0)
    v = 0.5 * (mean - math.sqrt(disc))
    mu2 = max(mean - 2.0 * v, 0.0)
    return mu2, v


def synthesize_traces(pm: PowerMoments, model: MeasurementModel, m: int, seed: int,
                      j: int | None = None) -> TraceEnsemble:
    """Draw an ``m x j`` ensemble of integrated quadratures matching ``pm``.

    Bins are independent.  Rows are generated in fixed blocks, each from a
    Philox stream keyed by ``(seed, block)``, so output is reproducible, the
    first rows do not depend on ``m`` and blocks can be generated in any order.
    """
    j = model.bins if j is None else int(j)
    means = np.broadcast_to(np.asarray(pm.n_out_mean, dtype=float), (j,))
    vars_ = np.broadcast_to(np.asarray(pm.n_out_var, dtype=float), (j,))
    params = [gaussian_parameters(float(a), float(b)) for a, b in zip(means, vars_)]
    mu = np.sqrt([p[0] for p in params])
    sd = np.sqrt([p[1] for p in params])

    i_s = np.empty((m, j))
    q_s = np.empty((m, j))
    for block, start in enumerate(range(0, m, _BLOCK_ROWS)):
        stop = min(start + _BLOCK_ROWS, m)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), block])))
        # row-major draw: a row's samples do not depend on how many rows follow
        z = rng.standard_normal((stop - start, 2, j))
        i_s[start:stop] = mu + sd * z[:, 0]
        q_s[start:stop] = sd * z[:, 1]
    return TraceEnsemble(i_s, q_s, model, int(seed))


def estimate_moments(te: TraceEnsemble) -> PowerMoments:
    """Per-bin sample mean and (biased) variance of ``N = I^2 + Q^2``."""
    if te.m < 2:
        raise ValueError("need at least two repetitions")
    N = te.power()
    mean = N.mean(axis=0)
    second = (N * N).mean(axis=0)
    return PowerMoments(mean, np.clip(second - mean * mean, 0.0, None))


def pair_precision(pm_a: PowerMoments, pm_b: PowerMoments, epsilon: float):
    """``(2 |<N_a> - <N_b>| / ((Delta N_a + Delta N_b) epsilon))^2``.

    A flat signal yields zero precision rather than a division error.
    """
    diff = np.abs(np.asarray(pm_a.n_out_mean) - np.asarray(pm_b.n_out_mean))
    spread = (np.sqrt(pm_a.n_out_var) + np.sqrt(pm_b.n_out_var)) * abs(epsilon)
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(diff > 0, (2.0 * diff / spread) ** 2, 0.0)
    return prec if np.ndim(prec) else float(prec)


def precision_error(prec, pm_a: PowerMoments, pm_b: PowerMoments, epsilon: float,
                    m: int, epsilon_err: float = 0.0, err_form: str = "printed"):
    """Propagated standard error of a pair precision.

    ``err_form="printed"`` uses ``(Delta N_a - Delta N_b)^2`` in the
    standard-deviation term; ``"sum"`` uses ``(Delta N_a + Delta N_b)^2``,
    which is what propagating the pair estimator itself gives.
    """
    if err_form not in ("printed", "sum"):
        raise ValueError("err_form must be 'printed' or 'sum'")
    va, vb = np.asarray(pm_a.n_out_var), np.asarray(pm_b.n_out_var)
    sa, sb = np.sqrt(va), np.sqrt(vb)
    diff = np.asarray(pm_a.n_out_mean) - np.asarray(pm_b.n_out_mean)
    sd_den = (sa - sb) if err_form == "printed" else (sa + sb)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_mean = (va / m + vb / m) / diff ** 2
        t_std = (va / (2 * m) + vb / (2 * m)) / sd_den ** 2
        t_std = np.where((va + vb) == 0, 0.0, t_std)
        rel = t_mean + t_std + (epsilon_err / epsilon) ** 2
        err = np.where(np.asarray(prec) > 0, 2.0 * np.asarray(prec) * np.sqrt(rel), 0.0)
    return err if np.ndim(err) else float(err)


@dataclass(frozen=True)
class PrecisionEstimate:
    precision: np.ndarray
    precision_err: np.ndarray
    aggregate: float
    aggregate_err: float
    zero_signal: np.ndarray
    j_ss: int

    @property
    def flagged(self) -> bool:
        return bool(self.zero_signal[self.j_ss:].any())


def estimate_precision_pair(te_a: TraceEnsemble, te_b: TraceEnsemble, epsilon: float,
                            err_form: str = "printed",
                            epsilon_err: float | None = None) -> PrecisionEstimate:
    """Per-bin and steady-state precision from ensembles at ``delta`` and ``delta + epsilon``.

    Bins with identical mean power are reported with zero precision and
    flagged in ``zero_signal``.
    """
    if epsilon == 0:
        raise ValueError("epsilon must be non-zero")
    if te_a.i_samples.shape[1] != te_b.i_samples.shape[1]:
        raise ShapeError("ensembles have different bin counts")
    pm_a, pm_b = estimate_moments(te_a), estimate_moments(te_b)
    prec = pair_precision(pm_a, pm_b, epsilon)
    zero = np.asarray(pm_a.n_out_mean) == np.asarray(pm_b.n_out_mean)
    m = min(te_a.m, te_b.m)
    e_err = te_a.model.epsilon_err if epsilon_err is None else epsilon_err
    err = precision_error(prec, pm_a, pm_b, epsilon, m, e_err, err_form)

    j_ss = min(te_a.model.j_ss, te_a.j - 1)
    n_ss = te_a.j - j_ss
    agg = float(np.mean(prec[j_ss:]))
    agg_err = float(np.mean(err[j_ss:]) / math.sqrt(n_ss))
    return PrecisionEstimate(np.asarray(prec), np.asarray(err), agg, agg_err, zero, j_ss)


# -- trace files -----------------------------------------------------------

_HEADER = re.compile(
    r"^#\s*m=(?P<m>\S+)\s+j=(?P<j>\S+)\s+dt=(?P<dt>\S+)\s+gain=(?P<gain>\S+)"
    r"\s+sigma2=(?P<sigma2>\S+)\s*$")


def export_traces(te: TraceEnsemble, path) -> None:
    """Write the ensemble as ``# m= j= dt= gain= sigma2=`` header plus m rows."""
    md = te.model
    lines = [f"# m={te.m} j={te.j} dt={float(md.delta_t)!r} "
             f"gain={float(md.gain)!r} sigma2={float(md.sigma2)!r}"]
    inter = np.empty((te.m, 2 * te.j))
    inter[:, 0::2] = te.i_samples
    inter[:, 1::2] = te.q_samples
    for row in inter.tolist():
        lines.append(",".join(repr(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def ingest_traces(path, model: MeasurementModel | None = None) -> TraceEnsemble:
    """Read a trace file.

    Gain, noise and bin width come from the header; the remaining timing
    fields (``j_ss_time``, ``epsilon_err``, ...) come from ``model`` when given.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty trace file", 1)
    mt = _HEADER.match(lines[0])
    if not mt:
        raise ParseError("expected header '# m=<int> j=<int> dt=<float> gain=<float> "
                         "sigma2=<float>'", 1)
    try:
        m, j = int(mt["m"]), int(mt["j"])
        dt, gain, sigma2 = float(mt["dt"]), float(mt["gain"]), float(mt["sigma2"])
    except ValueError as exc:
        raise ParseError(f"bad header value: {exc}", 1) from None
    if m < 1 or j < 1:
        raise ShapeError("header must declare m >= 1 and j >= 1")

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 2 * j:
            raise ShapeError(f"line {lineno}: expected {2 * j} values, found {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if len(rows) != m:
        raise ShapeError(f"header declares m={m} rows, found {len(rows)}")

    data = np.array(rows, dtype=float).reshape(m, 2 * j)
    base = model or MeasurementModel()
    j_ss_time = base.j_ss_time if base.j_ss_time < j * dt else 0.0
    md = replace(base, gain=gain, sigma2=sigma2, delta_t=dt, total_time=j * dt,
                 j_ss_time=j_ss_time)
    return TraceEnsemble(data[:, 0::2].copy(), data[:, 1::2].copy(), md, "ingested")
