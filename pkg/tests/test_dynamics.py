import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from polaronscatter.errors import AccuracyError, ParameterError, ResourceError
from polaronscatter.linres import scatter1, sigma_discrete
from polaronscatter.model import gaussian_wavepacket, uniform_grid
from polaronscatter.oracle import FockSpace, FockTruncation, polaron_fock_state, polaron_rwa_hamiltonian
from polaronscatter.polaron import solve_polaron
from polaronscatter.dynamics import (
    HamiltonianOperator,
    TwoExcBasis,
    TwoExcState,
    assemble_hamiltonian,
    chebyshev_step,
    dense_expm_propagate,
    enumerate_basis,
    free_evolution,
    initial_state,
    observables,
    run_dynamics,
)


def _setup(n, alpha, wmax=2.0):
    g = uniform_grid(n, wmax, alpha)
    p = solve_polaron(g)
    b = enumerate_basis(g)
    return g, p, b, assemble_hamiltonian(b, p, g)


def _random_state(basis, rng):
    v = rng.standard_normal(basis.dimension) + 1j * rng.standard_normal(basis.dimension)
    return TwoExcState.from_vector(v / np.linalg.norm(v), basis)


# -- basis

@pytest.mark.parametrize("n,dim", [(1, 5), (2, 9), (16, 1 + 17 + 16 + 136)])
def test_dimension(n, dim):
    assert TwoExcBasis(n).dimension == dim


def test_basis_order_and_roundtrip():
    b = TwoExcBasis(1)
    assert b.labels() == [("g", ()), ("e", ()), ("g", (0,)), ("e", (0,)), ("g", (0, 0))]
    b16 = TwoExcBasis(16)
    for i in range(b16.dimension):
        assert b16.encode(b16.decode(i)) == i
    assert b16.encode(("g", (5, 2))) == b16.encode(("g", (2, 5)))


def test_basis_rejects_outside_sector():
    b = TwoExcBasis(4)
    with pytest.raises(ParameterError):
        b.encode(("e", (0, 1)))
    with pytest.raises(ParameterError):
        b.decode(b.dimension)


def test_vector_roundtrip_preserves_norm():
    rng = np.random.default_rng(0)
    b = TwoExcBasis(7)
    s = _random_state(b, rng)
    np.testing.assert_allclose(s.psi2, s.psi2.T)
    assert s.norm() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(TwoExcState.from_vector(s.to_vector(), b).psi2, s.psi2, rtol=1e-15)


# -- Hamiltonian

def test_uncoupled_hamiltonian_is_diagonal():
    g, p, b, h = _setup(3, 0.0)
    m = h.to_dense()
    assert np.count_nonzero(m - np.diag(np.diag(m))) == 0
    expected = []
    for q, modes in b.labels():
        expected.append((0.5 if q == "e" else -0.5) + sum(g.omegas[k] for k in modes))
    np.testing.assert_allclose(np.diag(m).real, expected, rtol=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_matches_term_by_term_fock_operator(n):
    """Dense matrix equals the Fock-space operator built from each printed term,
    projected on the hardcore two-excitation sector."""
    g, p, b, h = _setup(n, 0.1)
    trunc = FockTruncation(n, 2)
    sp = FockSpace(trunc)
    hf = polaron_rwa_hamiltonian(p, g, trunc, sp)
    eye = np.eye(b.dimension)
    iso = np.column_stack([polaron_fock_state(TwoExcState.from_vector(eye[:, i], b), trunc, sp)
                           for i in range(b.dimension)])
    np.testing.assert_allclose(iso.conj().T @ hf @ iso, h.to_dense(), atol=1e-14)
    # the sector is invariant, so nothing leaks out of it
    assert np.max(np.abs(hf @ iso - iso @ (iso.conj().T @ hf @ iso))) < 1e-14


def test_hermitian_on_random_pairs():
    g, p, b, h = _setup(24, 0.12, 4.0)
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.standard_normal(b.dimension) + 1j * rng.standard_normal(b.dimension)
        y = rng.standard_normal(b.dimension) + 1j * rng.standard_normal(b.dimension)
        lhs = np.vdot(x, h.matvec(y))
        rhs = np.conj(np.vdot(y, h.matvec(x)))
        assert abs(lhs - rhs) < 1e-12 * np.linalg.norm(x) * np.linalg.norm(y)


def test_single_excitation_eigenvalues_are_zeros_of_h():
    g, p, b, h = _setup(12, 0.05, 3.0)
    sec = b.sectors
    block = h.to_dense()[1 : sec["g1"].stop, 1 : sec["g1"].stop]
    ev = np.linalg.eigvalsh(block) + 0.5 * p.delta_tilde  # energies relative to the vacuum
    d = p.delta_tilde

    def hd(w):
        s = sigma_discrete(w, p, g).real
        return (w - d) - (w + d) / (2 * d) * s

    # each eigenvalue lies between consecutive poles; bracket and solve
    poles = np.concatenate([[-1e3], g.omegas, [1e3]])
    roots = []
    for a, c in zip(poles[:-1], poles[1:]):
        lo, hi = a + 1e-9, c - 1e-9
        if hd(lo) * hd(hi) < 0:
            roots.append(brentq(hd, lo, hi, xtol=1e-14))
    np.testing.assert_allclose(np.sort(ev), np.sort(roots), atol=1e-10)


def test_memory_guard():
    g = uniform_grid(4096, 4.0, 0.1)
    p = solve_polaron(g)
    with pytest.raises(ResourceError):
        HamiltonianOperator(p, g, memory_budget=1024**2)
    g128 = uniform_grid(128, 4.0, 0.1)
    with pytest.raises(ResourceError):
        HamiltonianOperator(solve_polaron(g128), g128).to_dense()


def test_bounds_enclose_spectrum():
    g, p, b, h = _setup(30, 0.12, 4.0)
    ev = np.linalg.eigvalsh(h.to_dense())
    lo, hi = h.bounds()
    assert lo < ev[0] and hi > ev[-1]


# -- initial states and observables

def test_one_packet_state():
    g, p, b, h = _setup(16, 0.1)
    s = initial_state(b, p, gaussian_wavepacket(g, 1.0, 0.05, -3.0))
    o = observables(s)
    assert o.norm == pytest.approx(1, abs=1e-14)
    assert o.p_e == 0 and o.n_excit == pytest.approx(1, abs=1e-14)


def test_two_identical_packets():
    g, p, b, h = _setup(16, 0.1)
    wp = gaussian_wavepacket(g, 1.0, 0.05, -3.0)
    s = initial_state(b, p, [wp, wp])
    np.testing.assert_allclose(s.psi2, s.psi2.T)
    np.testing.assert_allclose(s.psi2, math.sqrt(2) * np.outer(wp.amplitudes, wp.amplitudes), rtol=1e-14)
    o = observables(s)
    assert o.norm == pytest.approx(1, abs=1e-14) and o.n_excit == pytest.approx(2, abs=1e-13)


def test_disjoint_packets_marginal():
    g, p, b, h = _setup(64, 0.1, 4.0)
    a = gaussian_wavepacket(g, 0.8, 1e-3, 0.0)
    c = gaussian_wavepacket(g, 3.0, 1e-3, 0.0)
    s = initial_state(b, p, [a, c])
    o = observables(s)
    np.testing.assert_allclose(o.f_marginal, np.abs(a.amplitudes) ** 2 + np.abs(c.amplitudes) ** 2, atol=1e-12)


def test_initial_state_errors():
    g, p, b, h = _setup(8, 0.1)
    wp = gaussian_wavepacket(g, 1.0, 0.05, 0.0)
    bad = type(wp)(wp.mu, wp.s, wp.x, 2 * wp.amplitudes)
    with pytest.raises(ParameterError):
        initial_state(b, p, bad)
    with pytest.raises(ParameterError):
        initial_state(b, p, [wp, wp, wp])


def test_basis_ket_observables():
    b = TwoExcBasis(5)
    e = np.zeros(b.dimension, complex)
    e[b.encode(("e", ()))] = 1
    o = observables(TwoExcState.from_vector(e, b))
    assert o.p_e == 1 and o.n_excit == 1
    e = np.zeros(b.dimension, complex)
    e[b.encode(("g", (1, 3)))] = 1
    o = observables(TwoExcState.from_vector(e, b))
    assert o.p_e == 0 and o.n_excit == pytest.approx(2)
    assert np.flatnonzero(o.f_marginal).tolist() == [1, 3]


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1))
def test_number_from_dense_contraction(seed):
    b = TwoExcBasis(5)
    s = _random_state(b, np.random.default_rng(seed))
    weights = np.array([len(m) + (q == "e") for q, m in b.labels()], dtype=float)
    dense = float(np.sum(weights * np.abs(s.to_vector()) ** 2))
    assert observables(s).n_excit == pytest.approx(dense, rel=1e-13)
    assert np.sum(observables(s).f_marginal) <= observables(s).n_excit + 1e-12


# -- propagation

def test_chebyshev_matches_dense_expm():
    g, p, b, h = _setup(6, 0.12)
    s = _random_state(b, np.random.default_rng(2))
    ref = dense_expm_propagate(s, h, 3.7).to_vector()
    out = chebyshev_step(h, s.to_vector(), 3.7, 1e-12)
    np.testing.assert_allclose(out, ref, atol=1e-10)
    fin, _ = run_dynamics(s, h, 3.7, 0.5, method="chebyshev")
    np.testing.assert_allclose(fin.to_vector(), ref, atol=1e-10)
    fin, _ = run_dynamics(s, h, 3.7, 0.5, method="expm")
    np.testing.assert_allclose(fin.to_vector(), ref, atol=1e-10)


def test_bad_bounds_detected():
    g, p, b, h = _setup(6, 0.12)
    h._bounds = (-0.1, 0.1)
    s = _random_state(b, np.random.default_rng(4))
    with pytest.raises(AccuracyError):
        chebyshev_step(h, s.to_vector(), 5.0, 1e-10)


def test_uncoupled_free_evolution():
    g, p, b, h = _setup(40, 0.0, 4.0)
    s = initial_state(b, p, gaussian_wavepacket(g, 1.0, 0.05, -5.0))
    fin, recs = run_dynamics(s, h, 10.0, 1.0, method="chebyshev")
    assert all(r.p_e == 0 for r in recs)
    np.testing.assert_allclose(np.abs(recs[-1].psi1), np.abs(s.c1), atol=1e-12)
    np.testing.assert_allclose(fin.c1, free_evolution(s, p, g, 10.0).c1, atol=1e-11)


def test_report_times_and_zero_duration():
    g, p, b, h = _setup(8, 0.1)
    s = initial_state(b, p, gaussian_wavepacket(g, 1.0, 0.05, -5.0))
    _, recs = run_dynamics(s, h, 1.1, 0.25)
    assert [r.time for r in recs] == pytest.approx([0, 0.25, 0.5, 0.75, 1.0, 1.1])
    fin, recs = run_dynamics(s, h, 0.0)
    assert len(recs) == 1
    np.testing.assert_array_equal(recs[0].psi1, observables(s).psi1)


def test_propagation_argument_errors():
    g, p, b, h = _setup(4, 0.1)
    s = initial_state(b, p, gaussian_wavepacket(g, 1.0, 0.05, 0.0))
    for kw in (dict(tol=0.0), dict(t_final=-1.0), dict(dt_report=0.0), dict(method="rk4")):
        args = dict(t_final=1.0) | kw
        with pytest.raises(ParameterError):
            run_dynamics(s, h, **args)


def test_exchange_symmetry_preserved(grid64, params64):
    b = enumerate_basis(grid64)
    h = assemble_hamiltonian(b, params64, grid64)
    a = gaussian_wavepacket(grid64, params64.delta_tilde, 0.02, -8.0)
    c = gaussian_wavepacket(grid64, 1.3, 0.02, -6.0)
    s = initial_state(b, params64, [a, c])
    _, recs = run_dynamics(s, h, 12.0, 2.0, keep_psi2=True)
    for r in recs:
        assert np.max(np.abs(r.psi2 - r.psi2.T)) < 1e-10
        assert abs(r.n_excit - 2) < 1e-8


def test_norm_conservation_long_run(grid128, params128):
    b = enumerate_basis(grid128)
    h = assemble_hamiltonian(b, params128, grid128)
    s = initial_state(b, params128, gaussian_wavepacket(grid128, params128.delta_tilde, 0.04, -20.0))
    _, recs = run_dynamics(s, h, 60.0, 0.25, tol=1e-10)
    assert max(abs(r.norm - 1) for r in recs) < 1e-8
    assert max(abs(r.n_excit - 1) for r in recs) < 1e-8
