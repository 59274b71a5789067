"""Steady states, time evolution and photon-number statistics."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import NegativeEigenvalue, NoConvergence, StepFailure, TruncationLeak
from .fock import FockSpace, Liouvillian, as_space, unvec, vec

logger = logging.getLogger(__name__)

LEAK_TOL = 1e-6
HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-9
NEG_EIG_TOL = 1e-8
RESIDUAL_TOL = 1e-9


def top_population(rho: np.ndarray) -> float:
    """Population of the top 10% of Fock levels (at least one level)."""
    dim = rho.shape[0]
    k = max(1, int(np.ceil(0.1 * dim)))
    return float(np.real(np.diag(rho)[-k:]).sum())


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix in a truncated Fock basis.

    Construction does not validate; call :meth:`validate` where the physical
    invariants must hold (solver outputs do so automatically).
    """

    space: FockSpace
    data: np.ndarray

    @classmethod
    def from_array(cls, rho) -> "DensityMatrix":
        rho = np.array(rho, dtype=complex)
        return cls(FockSpace(rho.shape[0]), rho)

    @classmethod
    def fock(cls, dim: int, n: int) -> "DensityMatrix":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[n, n] = 1.0
        return cls(FockSpace(dim), rho)

    @property
    def dim(self) -> int:
        return self.space.dim

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))[0])

    def validate(self, leak_tol: float = LEAK_TOL) -> "DensityMatrix":
        rho = self.data
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > HERMITIAN_TOL:
            raise NoConvergence(f"density matrix not Hermitian (deviation {herm:.2e})")
        tr = np.trace(rho)
        if abs(tr - 1.0) > TRACE_TOL:
            raise NoConvergence(f"density matrix trace {tr.real:.12f} != 1")
        lam = self.min_eigenvalue()
        if lam < -NEG_EIG_TOL:
            raise NegativeEigenvalue(
                f"minimum eigenvalue {lam:.3e} below -{NEG_EIG_TOL:g}; "
                "likely truncation or solver error")
        leak = top_population(rho)
        if leak > leak_tol:
            raise TruncationLeak(leak, leak_tol, self.dim)
        return self

    def trace_distance(self, other: "DensityMatrix") -> float:
        return 0.5 * float(np.abs(np.linalg.eigvalsh(self.data - other.data)).sum())

    def fidelity(self, other: "DensityMatrix") -> float:
        """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
        w, v = np.linalg.eigh(self.data)
        sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
        inner = np.linalg.eigvalsh(sq @ other.data @ sq)
        return float(np.sum(np.sqrt(np.clip(inner, 0, None))) ** 2)


@dataclass(frozen=True)
class ObservableRecord:
    n_mean: float
    n2_mean: float
    n_var: float


def _hermitize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def _bordered_system(liou: Liouvillian):
    """Replace the equation for rho[0, 0] by the trace condition."""
    dim = liou.dim
    A = liou.matrix.tolil(copy=True)
    trace_row = np.zeros(dim * dim, dtype=complex)
    trace_row[:: dim + 1] = 1.0
    A[0, :] = trace_row
    b = np.zeros(dim * dim, dtype=complex)
    b[0] = 1.0
    return A.tocsc(), b


def _residual(liou: Liouvillian, rho: np.ndarray) -> float:
    return float(np.max(np.abs(liou.matrix @ vec(rho))))


def _scale(liou: Liouvillian) -> float:
    return float(spla.norm(liou.matrix, np.inf))


def steady_state(liou: Liouvillian, leak_tol: float = LEAK_TOL,
                 tol: float = RESIDUAL_TOL) -> DensityMatrix:
    """Unique steady state of ``liou``.

    Solves the linear system with the trace condition substituted for one
    row.  Falls back to preconditioned GMRES and finally to long-time
    integration from vacuum if the direct residual is too large.
    """
    dim = liou.dim
    A, b = _bordered_system(liou)
    bound = tol * _scale(liou)
    attempts = []

    try:
        x = spla.splu(A, permc_spec="COLAMD").solve(b)
        rho = _hermitize(unvec(x, dim))
        res = _residual(liou, rho)
        if res <= bound:
            return _finish(rho, leak_tol)
        attempts.append(f"direct residual {res:.2e}")
    except RuntimeError as exc:  # singular factor
        attempts.append(f"direct failed: {exc}")

    diag = A.diagonal()
    diag[diag == 0] = 1.0
    precond = spla.LinearOperator(A.shape, matvec=lambda v: v / diag, dtype=complex)
    x, info = spla.gmres(A, b, M=precond, rtol=1e-13, atol=0.0, restart=200, maxiter=200)
    rho = _hermitize(unvec(x, dim))
    res = _residual(liou, rho)
    if info == 0 and res <= bound:
        return _finish(rho, leak_tol)
    attempts.append(f"gmres info={info} residual {res:.2e}")

    logger.warning("steady_state: falling back to time integration (%s)", "; ".join(attempts))
    t_end = 60.0 / liou.params.kappa
    try:
        rho = evolve(liou, DensityMatrix.fock(dim, 0), [0.0, t_end], leak_tol=np.inf)[-1].data
    except StepFailure as exc:
        attempts.append(str(exc))
        raise NoConvergence("; ".join(attempts)) from exc
    rho = _hermitize(rho)
    res = _residual(liou, rho)
    if res > bound * 1e3:
        attempts.append(f"integration residual {res:.2e}")
        raise NoConvergence("; ".join(attempts))
    return _finish(rho, leak_tol)


def _finish(rho: np.ndarray, leak_tol: float) -> DensityMatrix:
    return DensityMatrix(FockSpace(rho.shape[0]), rho).validate(leak_tol)


def dense_steady_state(liou: Liouvillian) -> DensityMatrix:
    """Null vector of the dense superoperator via SVD; small dims only."""
    dim = liou.dim
    _, s, vh = np.linalg.svd(liou.matrix.toarray())
    rho = unvec(vh[-1].conj(), dim)
    rho = rho / np.trace(rho)
    return DensityMatrix(FockSpace(dim), _hermitize(rho))


def evolve(liou: Liouvillian, rho0: DensityMatrix, times, rtol: float = 1e-8,
           atol: float = 1e-10, leak_tol: float = LEAK_TOL,
           renormalize: bool = False) -> list[DensityMatrix]:
    """Integrate the master equation and return the state at each time.

    Uses an embedded Dormand-Prince 5(4) pair with adaptive steps.  Time is
    integrated in units of ``1/kappa`` for conditioning.  The trace is only
    monitored unless ``renormalize`` is set.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D sequence")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending and non-negative")
    kappa = liou.params.kappa
    M = (liou.matrix / kappa).tocsr()
    y0 = vec(rho0.data).astype(complex)

    out = []
    if np.all(times == 0):
        return [DensityMatrix(rho0.space, rho0.data.copy()) for _ in times]
    tau = times * kappa
    sol = solve_ivp(lambda t, y: M @ y, (0.0, tau[-1]), y0, method="RK45",
                    t_eval=tau, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StepFailure(f"integration failed: {sol.message}")
    for k in range(tau.size):
        rho = unvec(sol.y[:, k], liou.dim).copy()
        drift = abs(np.trace(rho) - 1.0)
        if drift > 1e-6:
            logger.warning("evolve: trace drift %.2e at t=%.3e s", drift, times[k])
        if renormalize:
            rho = rho / np.trace(rho)
        state = DensityMatrix(rho0.space, rho)
        if np.isfinite(leak_tol):
            leak = top_population(rho)
            if leak > leak_tol:
                raise TruncationLeak(leak, leak_tol, liou.dim)
        out.append(state)
    return out


def observables(rho: DensityMatrix) -> ObservableRecord:
    diag = np.diag(rho.data)
    n = np.arange(rho.dim, dtype=float)
    n1 = complex(np.sum(n * diag))
    n2 = complex(np.sum(n * n * diag))
    if abs(n1.imag) > 1e-10 or abs(n2.imag) > 1e-10:
        raise ValueError("photon-number moments have an imaginary part; rho not Hermitian")
    var = n2.real - n1.real ** 2
    if var < -1e-10 * max(1.0, n2.real):
        raise ValueError(f"negative photon-number variance {var:.3e}")
    return ObservableRecord(n1.real, n2.real, max(var, 0.0))


def field_expectation(rho: DensityMatrix) -> complex:
    """``<a>``; zero for any parity-symmetric state."""
    return complex(np.sum(np.sqrt(np.arange(1, rho.dim)) * np.diag(rho.data, 1)))


def _number_fluctuation(rho_ss: DensityMatrix) -> tuple[np.ndarray, float]:
    """``vec(n rho_ss - <n> rho_ss)``, a traceless seed for correlations."""
    n = np.arange(rho_ss.dim, dtype=float)
    mean = float(np.real(np.sum(n * np.diag(rho_ss.data))))
    x = (n[:, None] - mean) * rho_ss.data
    return vec(x).astype(complex), mean


def _number_trace(v: np.ndarray, dim: int) -> float:
    n = np.arange(dim, dtype=float)
    return float(np.real(np.sum(n * np.diag(unvec(v, dim)))))


def number_autocorrelation(liou: Liouvillian, rho_ss: DensityMatrix, taus) -> np.ndarray:
    """Connected correlation ``<n(tau) n(0)> - <n>^2`` by quantum regression.

    Propagates ``n rho_ss - <n> rho_ss`` rather than ``n rho_ss`` so the
    constant part never has to be subtracted.
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0) or np.any(np.diff(taus) < 0):
        raise ValueError("taus must be ascending and non-negative")
    x, _ = _number_fluctuation(rho_ss)
    out = np.empty(taus.size)
    t_prev = 0.0
    for k, tau in enumerate(taus):
        if tau > t_prev:
            x = spla.expm_multiply(liou.matrix * (tau - t_prev), x)
            t_prev = tau
        out[k] = _number_trace(x, liou.dim)
    return out


def triangular_correlation_integral(liou: Liouvillian, rho_ss: DensityMatrix,
                                    window: float) -> float:
    """``int_0^T (T - tau) C(tau) dtau`` for ``T = window``.

    Evaluated exactly with one exponential of the augmented generator
    ``[[L, x, 0], [0, 0, 1], [0, 0, 0]]`` acting on ``(0, 0, 1)``.
    """
    x, _ = _number_fluctuation(rho_ss)
    D = liou.matrix.shape[0]
    col = sp.csr_matrix(x.reshape(-1, 1))
    top = sp.hstack([liou.matrix, col, sp.csr_matrix((D, 1), dtype=complex)])
    mid = sp.csr_matrix(([1.0], ([0], [D + 1])), shape=(1, D + 2), dtype=complex)
    bottom = sp.csr_matrix((1, D + 2), dtype=complex)
    B = sp.vstack([top, mid, bottom]).tocsr()
    e = np.zeros(D + 2, dtype=complex)
    e[-1] = 1.0
    y = spla.expm_multiply(B * window, e)
    return _number_trace(y[:D], liou.dim)
