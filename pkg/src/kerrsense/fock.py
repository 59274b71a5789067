"""Truncated Fock-space operators, the two-photon-driven Kerr Hamiltonian and
its Lindblad superoperator.

All rates are angular frequencies (rad/s) and hbar is set to one, so the
Hamiltonian is returned as ``H / hbar``.

Vectorization convention
------------------------
Density matrices are vectorized by **row stacking** (C order),
``vec(rho)[i * dim + j] = rho[i, j]``.  Under this convention
``vec(A @ rho @ B) = kron(A, B.T) @ vec(rho)``.  Use :func:`vec` and
:func:`unvec` rather than relying on the layout directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FockSpace:
    """Photon-number basis ``|0>, ..., |dim-1>``."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"Fock dimension must be an integer >= 2, got {self.dim}")


@dataclass(frozen=True, eq=False)
class ComplexOperator:
    """Sparse square operator on a :class:`FockSpace`."""

    space: FockSpace
    matrix: sp.csr_matrix
    label: str = ""

    def __post_init__(self):
        shape = self.matrix.shape
        if shape != (self.space.dim, self.space.dim):
            raise ValueError(f"operator shape {shape} does not match dim={self.space.dim}")

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def H(self) -> "ComplexOperator":
        return ComplexOperator(self.space, self.matrix.conj().T.tocsr(), self.label + "^dag")

    def __matmul__(self, other: "ComplexOperator") -> "ComplexOperator":
        return ComplexOperator(self.space, _clean(self.matrix @ other.matrix),
                               f"{self.label}{other.label}")


@dataclass(frozen=True)
class PhysicalParams:
    """One operating point: detuning, two-photon drive, Kerr and losses (rad/s).

    ``kappa_ext`` is the coupling to *each* direction of the feedline, so
    ``kappa = kappa_int + 2 * kappa_ext``.  When neither coupling is given the
    resonator is taken as fully overcoupled (``kappa_ext = kappa / 2``).
    """

    delta: float
    G: float
    U: float
    kappa: float
    kappa_ext: float | None = None
    kappa_int: float | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.G < 0:
            raise ValueError("G must be non-negative")
        ext, internal = self.kappa_ext, self.kappa_int
        if ext is None and internal is None:
            ext, internal = self.kappa / 2.0, 0.0
        elif ext is None:
            ext = (self.kappa - internal) / 2.0
        elif internal is None:
            internal = self.kappa - 2.0 * ext
        object.__setattr__(self, "kappa_ext", float(ext))
        object.__setattr__(self, "kappa_int", float(internal))
        if abs(internal + 2.0 * ext - self.kappa) > 1e-12 * self.kappa:
            raise ValueError("kappa must equal kappa_int + 2 * kappa_ext")
        if ext < 0 or internal < -1e-12 * self.kappa:
            raise ValueError("loss rates must be non-negative")

    @classmethod
    def from_hz(cls, delta, G, U, kappa, kappa_ext=None) -> "PhysicalParams":
        """Build from values quoted as ``rate / 2 pi`` in Hz."""
        ext = None if kappa_ext is None else TWO_PI * kappa_ext
        return cls(TWO_PI * delta, TWO_PI * G, TWO_PI * U, TWO_PI * kappa, kappa_ext=ext)

    def replace(self, **changes) -> "PhysicalParams":
        values = dict(delta=self.delta, G=self.G, U=self.U, kappa=self.kappa,
                      kappa_ext=self.kappa_ext)
        if "kappa" in changes and "kappa_ext" not in changes:
            # keep the coupling ratio
            values["kappa_ext"] = self.kappa_ext * changes["kappa"] / self.kappa
        values.update(changes)
        return PhysicalParams(**values)


@dataclass(frozen=True, eq=False)
class Liouvillian:
    space: FockSpace
    matrix: sp.csr_matrix
    params: PhysicalParams
    hamiltonian: ComplexOperator = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.space.dim

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Return ``d rho / dt`` as a matrix."""
        return unvec(self.matrix @ vec(rho), self.dim)


def _clean(m) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=complex)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def vec(rho: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(rho).reshape(-1)


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim)


def as_space(space) -> FockSpace:
    return space if isinstance(space, FockSpace) else FockSpace(int(space))


def annihilation(space) -> ComplexOperator:
    space = as_space(space)
    m = sp.diags(np.sqrt(np.arange(1, space.dim, dtype=float)), 1,
                 shape=(space.dim, space.dim))
    return ComplexOperator(space, _clean(m), "a")


def number(space) -> ComplexOperator:
    space = as_space(space)
    m = sp.diags(np.arange(space.dim, dtype=float), 0)
    return ComplexOperator(space, _clean(m), "n")


def hamiltonian(params: PhysicalParams, space) -> ComplexOperator:
    """``delta n + (U/2) a+ a+ a a + (G/2)(a+ a+ + a a)`` in the number basis."""
    space = as_space(space)
    n = np.arange(space.dim, dtype=float)
    diag = params.delta * n + 0.5 * params.U * n * (n - 1.0)
    # <m+2| a+ a+ |m> = sqrt((m+1)(m+2))
    pair = 0.5 * params.G * np.sqrt((n[:-2] + 1.0) * (n[:-2] + 2.0))
    m = sp.diags([pair, diag, pair], [-2, 0, 2], shape=(space.dim, space.dim))
    return ComplexOperator(space, _clean(m), "H")


def liouvillian(params: PhysicalParams, space) -> Liouvillian:
    """Row-stacked superoperator of ``-i[H, rho] + kappa D[a] rho``."""
    space = as_space(space)
    H = hamiltonian(params, space).matrix
    a = annihilation(space).matrix
    n = number(space).matrix
    eye = sp.identity(space.dim, dtype=complex, format="csr")
    L = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    L = L + params.kappa * (sp.kron(a, a.conj())
                            - 0.5 * sp.kron(n, eye) - 0.5 * sp.kron(eye, n.T))
    return Liouvillian(space, _clean(L), params, ComplexOperator(space, H, "H"))


def lindblad_rhs(params: PhysicalParams, rho: np.ndarray) -> np.ndarray:
    """Dense right-hand side of the master equation, evaluated directly."""
    dim = rho.shape[0]
    H = hamiltonian(params, dim).toarray()
    a = annihilation(dim).toarray()
    ad = a.conj().T
    nop = ad @ a
    comm = H @ rho - rho @ H
    diss = 2.0 * a @ rho @ ad - (nop @ rho + rho @ nop)
    return -1j * comm + 0.5 * params.kappa * diss


def meanfield_photons(params: PhysicalParams) -> float:
    """Bright-branch mean-field photon number, clipped at zero."""
    if params.U == 0:
        raise ValueError("mean-field photon number needs U != 0")
    root = math.sqrt(max(params.G ** 2 - params.kappa ** 2, 0.0))
    return max(0.0, (params.delta + root) / abs(params.U))


def truncation_dim(params: PhysicalParams, cap: int | None = None) -> int:
    """Default Fock truncation ``max(20, ceil(4 n_mf + 20))``, optionally capped."""
    dim = max(20, math.ceil(4.0 * meanfield_photons(params) + 20.0))
    if cap is not None:
        dim = min(dim, int(cap))
    return dim
