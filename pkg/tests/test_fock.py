import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from kerrsense.fock import (ComplexOperator, FockSpace, PhysicalParams, annihilation,
                            hamiltonian, lindblad_rhs, liouvillian, meanfield_photons, number,
                            truncation_dim, unvec, vec)

TWO_PI = 2 * np.pi

rates = st.floats(-3.0, 3.0, allow_nan=False)
pos_rates = st.floats(0.05, 3.0)
dims = st.integers(2, 8)


def test_fock_space_rejects_small_dim():
    with pytest.raises(ValueError):
        FockSpace(1)
    with pytest.raises(ValueError):
        FockSpace(2.5)


def test_annihilation_examples():
    assert np.array_equal(annihilation(2).toarray(), [[0, 1], [0, 0]])
    assert annihilation(5).toarray()[3, 4] == pytest.approx(2.0, abs=0)
    a = annihilation(4)
    np.testing.assert_allclose((a.H @ a).toarray(), np.diag([0, 1, 2, 3]), atol=1e-14)
    np.testing.assert_array_equal(number(4).toarray(), np.diag([0, 1, 2, 3]))


def test_annihilation_entries():
    a = annihilation(7).toarray()
    np.testing.assert_allclose(a, oracles.ladder(7), atol=0)


def test_operator_shape_checked():
    with pytest.raises(ValueError):
        ComplexOperator(FockSpace(3), annihilation(4).matrix)


def test_params_defaults_and_validation():
    p = PhysicalParams(0.0, 1.0, -0.1, 2.0)
    assert p.kappa_ext == 1.0 and p.kappa_int == 0.0
    p = PhysicalParams(0.0, 1.0, -0.1, 2.0, kappa_int=0.5)
    assert p.kappa_ext == pytest.approx(0.75)
    with pytest.raises(ValueError):
        PhysicalParams(0.0, 1.0, -0.1, 2.0, kappa_ext=0.5, kappa_int=0.5)
    with pytest.raises(ValueError):
        PhysicalParams(0.0, 1.0, -0.1, 0.0)
    with pytest.raises(ValueError):
        PhysicalParams(0.0, -1.0, -0.1, 1.0)


def test_from_hz_and_replace():
    p = PhysicalParams.from_hz(0.0, 300e3, -9.14e3, 72e3)
    assert p.G == pytest.approx(TWO_PI * 300e3)
    q = p.replace(kappa=2 * p.kappa)
    assert q.kappa_ext == pytest.approx(q.kappa / 2)


def test_hamiltonian_elements():
    p = PhysicalParams(0.7, 1.3, -0.4, 1.0)
    H = hamiltonian(p, 9).toarray()
    for n in range(9):
        assert H[n, n] == pytest.approx(0.7 * n + 0.2 * -n * (n - 1) * 1.0)
    for n in range(7):
        assert H[n + 2, n] == pytest.approx(0.65 * np.sqrt((n + 1) * (n + 2)))
    np.testing.assert_allclose(H, oracles.kerr_hamiltonian(0.7, 1.3, -0.4, 9), atol=1e-13)
    assert hamiltonian(PhysicalParams(0, 0, 0, 1.0), 5).matrix.nnz == 0


@given(rates, st.floats(0, 3), rates, dims)
def test_hamiltonian_hermitian(delta, G, U, dim):
    H = hamiltonian(PhysicalParams(delta, G, U, 1.0), dim).toarray()
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12 * max(1.0, np.abs(H).max())


def test_vacuum_dark_without_drive():
    L = liouvillian(PhysicalParams(-0.3, 0.0, -0.2, 1.0), 6)
    rho = np.zeros((6, 6), complex)
    rho[0, 0] = 1
    assert np.max(np.abs(L.matrix @ vec(rho))) == 0


def test_single_photon_decay():
    L = liouvillian(PhysicalParams(0.4, 0.0, -0.2, 1.7), 5)
    rho = np.zeros((5, 5), complex)
    rho[1, 1] = 1
    expect = np.zeros((5, 5))
    expect[0, 0], expect[1, 1] = 1.7, -1.7
    np.testing.assert_allclose(L.apply(rho), expect, atol=1e-14)


def test_liouvillian_matches_dense_oracle_dim6():
    rng = np.random.default_rng(3)
    p = PhysicalParams(-0.8, 1.1, -0.35, 0.9)
    L = liouvillian(p, 6)
    rho = oracles.random_hermitian(6, rng)
    np.testing.assert_allclose(L.apply(rho), oracles.master_rhs(-0.8, 1.1, -0.35, 0.9, rho),
                               atol=1e-10)


def test_dense_superoperator_equal():
    p = PhysicalParams(0.3, 0.8, -0.5, 0.6)
    np.testing.assert_allclose(liouvillian(p, 5).matrix.toarray(),
                               oracles.superoperator(0.3, 0.8, -0.5, 0.6, 5), atol=1e-12)


def test_in_package_direct_rhs_agrees():
    rng = np.random.default_rng(9)
    p = PhysicalParams(0.2, 0.9, -0.1, 1.3)
    rho = oracles.random_density(7, rng)
    np.testing.assert_allclose(lindblad_rhs(p, rho), oracles.master_rhs(0.2, 0.9, -0.1, 1.3, rho),
                               atol=1e-12)


@given(rates, st.floats(0, 3), rates, pos_rates, dims, st.integers(0, 2**32 - 1))
def test_trace_and_hermiticity_preserved(delta, G, U, kappa, dim, seed):
    rng = np.random.default_rng(seed)
    L = liouvillian(PhysicalParams(delta, G, U, kappa), dim)
    rho = oracles.random_hermitian(dim, rng)
    d = L.apply(rho)
    scale = max(1.0, np.abs(rho).max())
    assert abs(np.trace(d)) <= 1e-10 * scale * (1 + abs(delta) + G + abs(U) + kappa) * dim
    assert np.max(np.abs(d - d.conj().T)) <= 1e-10 * scale * 10


@given(rates, st.floats(0, 3), rates, pos_rates, dims, st.integers(0, 2**32 - 1))
def test_superoperator_direct_equivalence(delta, G, U, kappa, dim, seed):
    rng = np.random.default_rng(seed)
    rho = oracles.random_density(dim, rng)
    L = liouvillian(PhysicalParams(delta, G, U, kappa), dim)
    np.testing.assert_allclose(L.apply(rho), oracles.master_rhs(delta, G, U, kappa, rho),
                               atol=1e-10)


def test_trace_preservation_100_random():
    rng = np.random.default_rng(11)
    L = liouvillian(PhysicalParams(-0.4, 1.5, -0.2, 0.7), 8)
    for _ in range(100):
        rho = oracles.random_hermitian(8, rng)
        assert abs(np.trace(L.apply(rho))) < 1e-10


def test_vec_roundtrip_row_major():
    rho = np.arange(9.0).reshape(3, 3)
    assert vec(rho)[1 * 3 + 2] == rho[1, 2]
    np.testing.assert_array_equal(unvec(vec(rho), 3), rho)


def test_meanfield_and_truncation():
    p = PhysicalParams.from_hz(0.0, 300e3, -9.14e3, 72e3)
    assert meanfield_photons(p) == pytest.approx(31.86344271206546, rel=1e-12)
    assert truncation_dim(p) == int(np.ceil(4 * 31.86344271206546 + 20))
    assert truncation_dim(p, cap=100) == 100
    assert truncation_dim(PhysicalParams(-5.0, 0.0, -1.0, 1.0)) == 20
    with pytest.raises(ValueError):
        meanfield_photons(PhysicalParams(0.0, 1.0, 0.0, 1.0))
