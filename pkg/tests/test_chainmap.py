import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaronscatter.chainmap import chain_coefficients, lanczos
from polaronscatter.errors import DegenerateInputError
from polaronscatter.model import uniform_grid
from polaronscatter.polaron import solve_polaron


def test_single_mode():
    g = uniform_grid(1, 1.0, 0.1)
    c = chain_coefficients(solve_polaron(g), g)
    assert c.alphas.tolist() == [1.0] and c.betas.size == 0


def test_two_by_two_by_hand():
    a, b, q = lanczos(np.array([1.0, 2.0]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(a, [1.5, 1.5], rtol=1e-15)
    np.testing.assert_allclose(b, [0.5], rtol=1e-15)


def test_spectrum_and_constants():
    g = uniform_grid(64, 4.0, 0.1)
    p = solve_polaron(g)
    c = chain_coefficients(p, g)
    assert c.length == 64
    np.testing.assert_allclose(np.sort(c.eigenvalues()), g.omegas, rtol=0, atol=1e-10)
    assert c.beta0 == p.delta_tilde * p.theta
    assert c.alphas[0] == pytest.approx(np.sum(p.f * g.omegas * p.f) / p.theta**2, rel=1e-14)
    assert c.orthogonality_error() < 1e-10
    t = c.tridiagonal()
    np.testing.assert_array_equal(t, t.T)
    assert np.all(c.betas > 0)


def test_rejects_uncoupled_bath():
    g = uniform_grid(8, 1.0, 0.0)
    with pytest.raises(DegenerateInputError, match="no bath"):
        chain_coefficients(solve_polaron(g), g)


def test_invariant_subspace_stops_early():
    # seed touching only two distinct frequencies spans a two-dimensional Krylov space
    w = np.array([1.0, 1.0, 2.0, 2.0])
    a, b, q = lanczos(w, np.array([1.0, 1.0, 1.0, 1.0]))
    assert len(a) == 2
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(np.diag(a) + np.diag(b, 1) + np.diag(b, -1))),
                               [1.0, 2.0], rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 200), seed=st.integers(0, 1000))
def test_random_seed_reproduces_support(n, seed):
    rng = np.random.default_rng(seed)
    w = np.sort(rng.uniform(0.1, 5.0, n))
    v = rng.uniform(0.1, 1.0, n)
    a, b, q = lanczos(w, v)
    assert np.max(np.abs(q.T @ q - np.eye(q.shape[1]))) < 1e-10
    t = np.diag(a) + np.diag(b, 1) + np.diag(b, -1)
    # Lanczos identity: Q^T diag(w) Q = T
    np.testing.assert_allclose(q.T @ (w[:, None] * q), t, atol=1e-10)
