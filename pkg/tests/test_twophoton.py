import math
import threading

import numpy as np
import pytest

from polaronscatter.errors import DomainError
from polaronscatter.linres import ContinuumSigma, scatter1, sigma_closed
from polaronscatter.model import uniform_grid
from polaronscatter.polaron import solve_polaron
from polaronscatter.twophoton import (
    Pi2Cache,
    QuadratureSpec,
    boundary_vector,
    boundary_vector_freq,
    boundary_vectors,
    continuum_kernel,
    correlated_output,
    pi2_matrix,
    s_correlated,
    s_uncorrelated,
    scatter2,
    standard_kernel,
    t_matrix_2,
    u2_inverse,
    u2_matrix,
)

from helpers import lamb_free_grid


@pytest.fixture(scope="module")
def free():
    g = uniform_grid(32, 4.0, 0.0)
    return g, solve_polaron(g)


@pytest.fixture(scope="module")
def weak():
    return lamb_free_grid(1e-3)


@pytest.mark.parametrize("z", [2.3 + 0.1j, 0.7 + 0.5j, 3.1, 2.0 + 1e-3j])
def test_free_bubble(free, z):
    g, p = free
    pi = pi2_matrix(z, p, g, "closed")
    assert pi.matrix[0, 0] == pytest.approx(2 / (pi.z - 2 * p.delta_tilde), rel=1e-8)
    assert np.all(pi.matrix.ravel()[1:] == 0)


def test_bubble_symmetry(params64, grid64):
    pi = pi2_matrix(2.2 * params64.delta_tilde, params64, grid64, "closed")
    scale = np.max(np.abs(pi.matrix))
    assert np.max(np.abs(pi.matrix - pi.matrix.T)) < max(pi.error, 1e-12 * scale)


def test_quadrature_convergence(params64, grid64):
    z = 1.9 * params64.delta_tilde + 0.05j
    coarse = pi2_matrix(z, params64, grid64, "closed", QuadratureSpec(epsabs=1e-8, epsrel=1e-8))
    fine = pi2_matrix(z, params64, grid64, "closed", QuadratureSpec(epsabs=5e-9, epsrel=5e-9))
    assert np.max(np.abs(coarse.matrix - fine.matrix)) < coarse.error
    assert coarse.evaluations > 0


def test_bubble_domain_errors(free):
    g, p = free
    with pytest.raises(DomainError):
        pi2_matrix(2.0 - 0.1j, p, g)
    strong = uniform_grid(16, 4.0, 0.49)
    with pytest.warns(UserWarning):
        ps = solve_polaron(strong)
    g5 = uniform_grid(16, 4.0, 0.5)
    with pytest.raises(DomainError):
        pi2_matrix(2.0, ps, g5)


def test_u2_limit(params64, grid64):
    d0 = params64.delta0
    block = np.linalg.inv(u2_matrix(params64, 1.0)[1:, 1:])
    np.testing.assert_allclose(u2_inverse(params64)[1:, 1:], block, rtol=1e-14)
    assert np.all(u2_inverse(params64)[0] == 0) and np.all(u2_inverse(params64)[:, 0] == 0)
    pi = pi2_matrix(2 * params64.delta_tilde, params64, grid64, "closed")
    hard = t_matrix_2(pi, params64).matrix
    soft = t_matrix_2(pi, params64, u0=1e6 * params64.delta_tilde).matrix
    assert np.max(np.abs(hard - soft)) / np.max(np.abs(hard)) < 1e-4
    assert d0 > 0


def test_scalar_limit_of_middle_part(weak):
    """Only Pi11 kept: v^T T v = 4 T11 = -2 (z - 2 D~ + i G) for the reduced vector (2, 0, 0)."""
    g, p = weak
    d = p.delta_tilde
    gamma = math.pi * g.alpha * d
    for x in (-2.0, 0.0, 1.5):
        z = 2 * d + x * gamma
        pi11 = pi2_matrix(z, p, g, "continuum").matrix[0, 0]
        assert 4 * (-1 / pi11) == pytest.approx(-2 * (z - 2 * d + 1j * gamma), rel=0.03)


# -- boundary vectors

def test_boundary_vector_forms_agree(params64, grid64):
    rng = np.random.default_rng(3)
    k1, k2 = rng.integers(0, 64, (2, 1000))
    sig = ContinuumSigma(params64, grid64)
    for a, b in zip(k1, k2):
        bv = boundary_vector(a, b, params64, grid64, sigma=sig)
        assert bv.mismatch < 1e-12
    vec = boundary_vectors(k1, k2, params64, grid64, sig)
    ref = np.array([boundary_vector(a, b, params64, grid64, sigma=sig).v for a, b in zip(k1[:50], k2[:50])])
    np.testing.assert_allclose(vec[:50], ref, rtol=1e-13)


def test_degenerate_and_resonant_pairs(params64, grid64):
    sig = ContinuumSigma(params64, grid64)
    bv = boundary_vector(10, 10, params64, grid64, sigma=sig)
    d, d0 = params64.delta_tilde, params64.delta0
    b1, b2 = bv.betas
    assert bv.split == 0
    assert bv.v[2] == pytest.approx((bv.energy - 2 * d) ** 2 / (2 * d0**2) * b1 * b2, rel=1e-13)
    res = boundary_vector_freq(d, d, 0.1, 0.1, params64, sig)
    assert abs(res.v[1]) < 1e-15 and abs(res.v[2]) < 1e-15 and abs(res.v[0]) > 0


# -- kernels

def test_bose_symmetry(params64, grid64):
    cache = Pi2Cache(params64, grid64, "closed")
    m = s_correlated(20, 9, 14, 15, params64, grid64, cache)
    assert s_correlated(9, 20, 14, 15, params64, grid64, cache) == m
    assert s_correlated(20, 9, 15, 14, params64, grid64, cache) == m
    assert len(cache) == 1


def test_weak_coupling_kernel_moderate_alpha():
    g, p = lamb_free_grid(1e-2)
    cache = Pi2Cache(p, g, "continuum")
    d = p.delta_tilde
    gamma = math.pi * g.alpha * d
    worst = 0.0
    for x in np.linspace(-5, 5, 6):
        wk1, wk2 = d + x * gamma, d - 0.4 * x * gamma
        wp1 = d + 0.7 * gamma
        wp2 = wk1 + wk2 - wp1
        m = continuum_kernel(wp1, wp2, wk1, wk2, p, g, cache)
        ref = standard_kernel(wp1, wp2, wk1, wk2, d, gamma)
        worst = max(worst, abs(m - ref) / abs(ref))
    assert worst < 0.15


def test_off_shell_smoothness(params128, grid128):
    cache = Pi2Cache(params128, grid128, "continuum")
    d = params128.delta_tilde
    w = np.linspace(0.3 * d, 1.7 * d, 41)
    mag = np.array([[abs(continuum_kernel(a, b, d, d, params128, grid128, cache)) for b in w] for a in w])
    assert np.all(np.isfinite(mag))
    inner = mag[1:-1, 1:-1]
    neigh = np.maximum.reduce([mag[:-2, 1:-1], mag[2:, 1:-1], mag[1:-1, :-2], mag[1:-1, 2:]])
    assert np.all(inner < 10 * neigh)
    np.testing.assert_allclose(mag, mag.T, rtol=1e-12)
    assert len(cache) == 1


def test_uncorrelated(params64, grid64):
    r1 = scatter1(params64, grid64)
    s = r1.s
    assert s_uncorrelated(3, 5, 3, 5, r1) == s[3] * s[5]
    assert s_uncorrelated(5, 3, 3, 5, r1) == s[3] * s[5]
    assert s_uncorrelated(4, 4, 4, 4, r1) == 2 * s[4] ** 2
    assert s_uncorrelated(1, 2, 3, 5, r1) == 0


def test_scatter2_shell(params64, grid64):
    cache = Pi2Cache(params64, grid64, "continuum")
    res = scatter2(12, 20, params64, grid64, cache, scatter1(params64, grid64))
    assert np.all(res.p1 + res.p2 == 32)
    np.testing.assert_allclose(res.kernel, res.kernel[::-1], rtol=1e-13)
    i = int(np.flatnonzero(res.p1 == 12)[0])
    assert res.uncorrelated[i] != 0
    assert res.diagnostics and res.diagnostics[0]["error"] >= 0


def test_correlated_output_matches_direct_sum():
    g = uniform_grid(16, 2.0, 0.1)
    p = solve_polaron(g)
    cache = Pi2Cache(p, g, "continuum")
    rng = np.random.default_rng(5)
    psi = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    psi = psi + psi.T
    out = correlated_output(psi, p, g, cache)
    np.testing.assert_allclose(out, out.T, rtol=1e-12, atol=1e-15)
    dw = g.spacing[0]
    for p1, p2 in [(3, 9), (0, 0), (15, 7)]:
        tot = p1 + p2
        direct = sum(
            s_correlated(p1, p2, k, tot - k, p, g, cache) * psi[k, tot - k]
            for k in range(16) if 0 <= tot - k < 16
        )
        assert out[p1, p2] == pytest.approx(-1j * math.pi / dw * direct, rel=1e-11)


def test_cache_thread_safe(params64, grid64):
    cache = Pi2Cache(params64, grid64, "closed")
    zs = [1.8, 2.0, 2.2] * 4
    results = [None] * len(zs)

    def work(i):
        results[i] = cache.t2(zs[i])

    threads = [threading.Thread(target=work, args=(i,)) for i in range(len(zs))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(cache) == 3
    for i, z in enumerate(zs):
        np.testing.assert_array_equal(results[i], cache.t2(z))


def test_standard_kernel_at_resonance():
    # all photons on resonance: r = -1, so M = (4 i / (pi^2 G)) * (-1) * (-1) * (-2)
    assert standard_kernel(1, 1, 1, 1, 1.0, 0.1) == pytest.approx(-8j / (math.pi**2 * 0.1))


def test_closed_sigma_feeds_bubble(params64, grid64):
    z = 2.1 + 0.2j
    a = pi2_matrix(z, params64, grid64, "closed").matrix
    b = pi2_matrix(z, params64, grid64, sigma=lambda w: sigma_closed(w, grid64.alpha, params64.delta_tilde)).matrix
    np.testing.assert_array_equal(a, b)
