"""Two-photon scattering through the hardcore two-excitation T-matrix.

The interaction vertex in the two-excitation sector acts on the operator
vector O2 = (bb, bF, FF). Its bare bubble Pi2(z) is a table of frequency
convolutions of single-excitation Green's functions, and

    T2(z) = [u2^-1 - Pi2(z)]^-1,

with u2 = block-diag(u0, [[-2 d0, -d0], [-d0, -d0]]) and the hardcore limit
u0 -> infinity taken analytically (u2^-1 then has a vanishing first row and
column).

Correlated amplitudes are returned as a kernel M with the energy delta
function stripped off:

    S_corr = -2 pi i delta(E_f - E_i) M(p1, p2; k1, k2),
    M = v(p1, p2)^T T2(E_i) v(k1, k2),

where v(k1, k2) = (2 b1 b2, a1 b2 + b1 a2, 2 a1 a2), b = d0 f / h(w) and
a = (w - Delta~) f / h(w). Both boundary vectors use the retarded h(w + i0);
no complex conjugate is taken on the outgoing side.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from .errors import AccuracyError, DomainError, ParameterError, SingularityError
from .linres import ScatterResult1, green_bb_bf_ff, h_denominator, make_sigma
from .model import ModeGrid
from .polaron import PolaronParams

PI2_ALPHA_LIMIT = 0.5


@dataclass(frozen=True)
class QuadratureSpec:
    """Adaptive quadrature settings for the Pi2 convolutions.

    ``eta`` is the contour offset used when z is real: each propagator is
    evaluated at w + i eta, so the bubble is Pi2(z + 2 i eta).
    """

    epsabs: float = 1e-11
    epsrel: float = 1e-10
    limit: int = 2000
    eta: float = 1e-7

    def __post_init__(self):
        if not (self.epsabs > 0 and self.epsrel > 0 and self.eta > 0):
            raise ParameterError("quadrature tolerances and eta must be positive")
        if self.limit < 10:
            raise ParameterError("quadrature limit must be at least 10")

    def to_dict(self) -> dict:
        return {"epsabs": self.epsabs, "epsrel": self.epsrel, "limit": self.limit, "eta": self.eta}


@dataclass(frozen=True)
class Pi2Matrix:
    z: complex
    matrix: np.ndarray
    error: float
    evaluations: int

    def to_dict(self) -> dict:
        return {
            "z": [self.z.real, self.z.imag],
            "error": self.error,
            "evaluations": self.evaluations,
        }


@dataclass(frozen=True)
class TMatrix2:
    z: complex
    matrix: np.ndarray
    det: float


# ordered (left, right) propagator pairs, each convolved as int dw/2pi L(w) R(z - w)
_PRODUCTS = (
    ("bb", "bb"),
    ("bb", "bF"),
    ("bF", "bb"),
    ("bF", "bF"),
    ("bb", "FF"),
    ("bF", "FF"),
    ("FF", "bF"),
    ("FF", "FF"),
)
_SLOT = {"bb": 0, "bF": 1, "FF": 2}


def _assemble(c: dict) -> np.ndarray:
    """Build the 3x3 table; lower entries use the swapped argument order."""
    return 1j * np.array(
        [
            [2 * c["bb", "bb"], 2 * c["bb", "bF"], 2 * c["bF", "bF"]],
            [2 * c["bF", "bb"], c["bb", "FF"] + c["bF", "bF"], 2 * c["bF", "FF"]],
            [2 * c["bF", "bF"], 2 * c["FF", "bF"], 2 * c["FF", "FF"]],
        ]
    )


class _Propagators:
    def __init__(self, params: PolaronParams, sigma):
        self.sigma = sigma
        self.d = params.delta_tilde
        self.d0 = params.delta0

    def __call__(self, w):
        return green_bb_bf_ff(w, self.sigma(w), self.d, self.d0)


def _breakpoints(z: complex, params: PolaronParams, grid: ModeGrid | None) -> list[float]:
    d = params.delta_tilde
    zr = z.real
    pts = {0.0, zr, d, zr - d, -d, zr + d}
    if grid is not None:
        lo, hi = grid.k_bounds
        for w in (float(grid.dispersion.omega(max(lo, 0.0))), float(grid.dispersion.omega(hi))):
            pts.update({w, zr - w})
    return sorted(pts)


def pi2_matrix(z, params: PolaronParams, grid: ModeGrid | None = None, source: str = "closed",
               quad: QuadratureSpec | None = None, sigma=None) -> Pi2Matrix:
    """Evaluate the 3x3 bubble at total energy ``z`` (Im z >= 0).

    For Im z > 0 the convolution runs along Im w = Im z / 2, so both
    propagators sit the same distance above the real axis; for real z the
    offset ``quad.eta`` is used. Infinite tails are integrated explicitly.

    Raises:
        DomainError: alpha >= 0.5 or Im z < 0.
        AccuracyError: the adaptive quadrature did not converge.
    """
    quad = quad or QuadratureSpec()
    alpha = grid.alpha if grid is not None else None
    if alpha is not None and alpha >= PI2_ALPHA_LIMIT:
        raise DomainError("Pi2 is only pole-free for alpha < 0.5")
    z = complex(z)
    if z.imag < 0:
        raise DomainError("Pi2 is evaluated in the upper half plane only")
    if sigma is None:
        if grid is None:
            raise ParameterError("a grid is required to build the self-energy")
        sigma = make_sigma(params, grid, source)
    prop = _Propagators(params, sigma)
    half = 0.5 * z.imag if z.imag > 0 else quad.eta
    zr = z.real

    def integrand(w):
        left = prop(w + 1j * half)
        right = prop(zr - w + 1j * half)
        vals = np.array([left[_SLOT[a]] * right[_SLOT[b]] for a, b in _PRODUCTS]) / (2 * math.pi)
        return np.concatenate([vals.real, vals.imag])

    pts = _breakpoints(z, params, grid)
    lo, hi = pts[0] - 1.0, pts[-1] + 1.0
    opts = dict(epsabs=quad.epsabs, epsrel=quad.epsrel, full_output=True)
    total = np.zeros(2 * len(_PRODUCTS))
    err = 0.0
    nev = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        for a, b, kw in (
            (lo, hi, {"points": pts, "limit": quad.limit}),
            (-np.inf, lo, {"limit": quad.limit}),
            (hi, np.inf, {"limit": quad.limit}),
        ):
            res, e, info = quad_vec(integrand, a, b, **opts, **kw)
            if info.status != 0 or not np.all(np.isfinite(res)):
                raise AccuracyError(
                    f"Pi2 quadrature failed at z={z} ({info.message})",
                    {"z": [z.real, z.imag], "error": float(e), "interval": [a, b]},
                )
            total += res
            err += float(e)
            nev += int(info.neval)
    n = len(_PRODUCTS)
    vals = total[:n] + 1j * total[n:]
    table = dict(zip(_PRODUCTS, vals))
    return Pi2Matrix(z=zr + 2j * half, matrix=_assemble(table), error=err, evaluations=nev)


def u2_inverse(params: PolaronParams, u0: float | None = None) -> np.ndarray:
    """Inverse interaction matrix; ``u0=None`` is the hardcore limit."""
    d0 = params.delta0
    out = np.zeros((3, 3), dtype=complex)
    out[1:, 1:] = np.array([[-1.0, 1.0], [1.0, -2.0]]) / d0
    if u0 is not None:
        if u0 == 0:
            raise ParameterError("u0 must be nonzero")
        out[0, 0] = 1.0 / u0
    return out


def u2_matrix(params: PolaronParams, u0: float) -> np.ndarray:
    d0 = params.delta0
    u = np.zeros((3, 3), dtype=complex)
    u[0, 0] = u0
    u[1:, 1:] = np.array([[-2 * d0, -d0], [-d0, -d0]])
    return u


def t_matrix_2(pi2: Pi2Matrix, params: PolaronParams, u0: float | None = None) -> TMatrix2:
    a = u2_inverse(params, u0) - pi2.matrix
    det = abs(np.linalg.det(a))
    scale = np.linalg.norm(a) ** 3
    if not det > 1e-14 * scale:
        raise SingularityError(f"u2^-1 - Pi2 is singular at z={pi2.z}", {"det": det})
    return TMatrix2(pi2.z, np.linalg.inv(a), det)


class Pi2Cache:
    """Thread-safe memo of Pi2 (and T2) keyed by total energy.

    Entries are computed outside the lock; concurrent misses on the same key
    may compute twice but always store identical values.
    """

    def __init__(self, params: PolaronParams, grid: ModeGrid, source: str = "closed",
                 quad: QuadratureSpec | None = None, u0: float | None = None):
        self.params = params
        self.grid = grid
        self.source = source
        self.quad = quad or QuadratureSpec()
        self.u0 = u0
        self.sigma = make_sigma(params, grid, source)
        self._store: dict[complex, tuple[Pi2Matrix, TMatrix2]] = {}
        self._lock = threading.Lock()

    def _key(self, z) -> complex:
        z = complex(z)
        return complex(round(z.real, 13), round(z.imag, 13))

    def get(self, z) -> tuple[Pi2Matrix, TMatrix2]:
        key = self._key(z)
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        pi2 = pi2_matrix(key, self.params, self.grid, self.source, self.quad, sigma=self.sigma)
        val = (pi2, t_matrix_2(pi2, self.params, self.u0))
        with self._lock:
            return self._store.setdefault(key, val)

    def t2(self, z) -> np.ndarray:
        return self.get(z)[1].matrix

    def __len__(self):
        with self._lock:
            return len(self._store)

    def diagnostics(self) -> list[dict]:
        with self._lock:
            items = sorted(self._store.items(), key=lambda kv: (kv[0].real, kv[0].imag))
        return [pi.to_dict() | {"det": t.det} for _, (pi, t) in items]


# ---------------------------------------------------------- boundary vectors

@dataclass(frozen=True)
class BoundaryVector:
    v: np.ndarray
    closed_form: np.ndarray
    alphas: tuple[complex, complex]
    betas: tuple[complex, complex]
    energy: float
    split: float

    @property
    def mismatch(self) -> float:
        return float(np.max(np.abs(self.v - self.closed_form)) / max(np.max(np.abs(self.v)), 1e-300))


def boundary_vector_freq(w1: float, w2: float, f1: float, f2: float, params: PolaronParams,
                         sigma) -> BoundaryVector:
    """Boundary vector for photons at frequencies (w1, w2) with legs (f1, f2)."""
    d, d0 = params.delta_tilde, params.delta0
    s1, s2 = complex(sigma(complex(w1))), complex(sigma(complex(w2)))
    h1 = complex(h_denominator(w1, s1, d))
    h2 = complex(h_denominator(w2, s2, d))
    for h, w in ((h1, w1), (h2, w2)):
        if abs(h) < 1e-14 * max(1.0, abs(w)):
            raise SingularityError(f"h vanishes at w={w}")
    b1, b2 = d0 * f1 / h1, d0 * f2 / h2
    a1, a2 = (w1 - d) * f1 / h1, (w2 - d) * f2 / h2
    v = np.array([2 * b1 * b2, a1 * b2 + b1 * a2, 2 * a1 * a2])
    e, eps = w1 + w2, w1 - w2
    closed = b1 * b2 * np.array([2.0, (e - 2 * d) / d0, ((e - 2 * d) ** 2 - eps**2) / (2 * d0**2)])
    return BoundaryVector(v, closed, (a1, a2), (b1, b2), float(e), float(eps))


def boundary_vector(k1: int, k2: int, params: PolaronParams, grid: ModeGrid,
                    source: str = "closed", sigma=None) -> BoundaryVector:
    sigma = sigma or make_sigma(params, grid, source)
    w, f = grid.omegas, params.f
    return boundary_vector_freq(float(w[k1]), float(w[k2]), float(f[k1]), float(f[k2]), params, sigma)


def boundary_vectors(k1, k2, params: PolaronParams, grid: ModeGrid, sigma) -> np.ndarray:
    """Vectorized component form over index arrays; shape (n, 3)."""
    k1, k2 = np.asarray(k1), np.asarray(k2)
    d, d0 = params.delta_tilde, params.delta0
    w = grid.omegas
    h = h_denominator(w + 0j, np.asarray(sigma(w.astype(float))), d)
    beta = d0 * params.f / h
    alph = (w - d) * params.f / h
    b1, b2, a1, a2 = beta[k1], beta[k2], alph[k1], alph[k2]
    return np.stack([2 * b1 * b2, a1 * b2 + b1 * a2, 2 * a1 * a2], axis=-1)


# ------------------------------------------------------------- S-matrices

def s_correlated(p1: int, p2: int, k1: int, k2: int, params: PolaronParams, grid: ModeGrid,
                 cache: Pi2Cache) -> complex:
    """Kernel M(p1, p2; k1, k2) on the discrete grid, evaluated at E_i = w_k1 + w_k2.

    Legs carry the grid displacements f_k. The energy shell is not enforced.
    """
    vi = boundary_vector(k1, k2, params, grid, sigma=cache.sigma).v
    vf = boundary_vector(p1, p2, params, grid, sigma=cache.sigma).v
    e = float(grid.omegas[k1] + grid.omegas[k2])
    return complex(vf @ cache.t2(e) @ vi)


def continuum_leg(omega, params: PolaronParams, grid: ModeGrid):
    """Continuum displacement density f(w) with f(w)^2 dw = sum of f_k^2 over dw."""
    omega = np.asarray(omega, dtype=float)
    return np.sqrt(grid.spectral_density(omega) / (2 * math.pi)) / (omega + params.delta_tilde)


def continuum_kernel(wp1: float, wp2: float, wk1: float, wk2: float, params: PolaronParams,
                     grid: ModeGrid, cache: Pi2Cache) -> complex:
    """Kernel with continuum-normalized legs, so that
    S_corr = -2 pi i delta(E_f - E_i) M_c for delta-normalized photons."""
    legs = continuum_leg(np.array([wp1, wp2, wk1, wk2]), params, grid)
    vf = boundary_vector_freq(wp1, wp2, legs[0], legs[1], params, cache.sigma).v
    vi = boundary_vector_freq(wk1, wk2, legs[2], legs[3], params, cache.sigma).v
    return complex(vf @ cache.t2(wk1 + wk2) @ vi)


def standard_kernel(wp1, wp2, wk1, wk2, delta_tilde: float, gamma: float) -> complex:
    """Weak-coupling two-level kernel: (4 i / (pi^2 G)) r_p1 r_p2 (r_k1 + r_k2),
    i.e. the correlated part -2 pi i delta(E_f - E_i) M_c equals
    (4 / (pi G)) ... in the usual normalization with r = -i(G/2)/(w - D + iG/2)."""
    def r(w):
        return -0.5j * gamma / ((w - delta_tilde) + 0.5j * gamma)

    return 4j / (math.pi**2 * gamma) * r(wp1) * r(wp2) * (r(wk1) + r(wk2))


def s_uncorrelated(p1: int, p2: int, k1: int, k2: int, scatter1: ScatterResult1) -> complex:
    s = scatter1.s
    val = 0.0
    if p1 == k1 and p2 == k2:
        val += 1.0
    if p2 == k1 and p1 == k2:
        val += 1.0
    return complex(s[k1] * s[k2] * val)


# ------------------------------------------------------ wavepacket contraction

def _require_uniform(grid: ModeGrid) -> float:
    if not grid.is_uniform:
        raise ParameterError("energy-shell contraction needs a linear (uniformly spaced) grid")
    return float(grid.spacing[0])


def correlated_output(psi_in: np.ndarray, params: PolaronParams, grid: ModeGrid, cache: Pi2Cache,
                      energy_window: tuple[float, float] | None = None) -> np.ndarray:
    """Correlated outgoing two-photon amplitude for a symmetric input.

    ``psi_in[k1, k2]`` is the (symmetric) product-basis amplitude. On the
    discrete energy shell w_k1 + w_k2 = w_p1 + w_p2 the continuum
    delta function becomes 1/dw, so

        psi_corr(p1, p2) = (-i pi / dw) sum_{k1} M(p1, p2; k1, E - k1) psi_in(k1, E - k1).

    The sum runs over ordered pairs; the factor pi (not 2 pi) compensates
    for counting each unordered pair twice. Shells whose total energy lies
    outside ``energy_window`` are skipped (left zero).
    """
    dw = _require_uniform(grid)
    n = grid.n_modes
    psi_in = np.asarray(psi_in)
    if psi_in.shape != (n, n):
        raise ParameterError(f"psi_in must have shape ({n}, {n})")
    w0 = float(grid.omegas[0])
    out = np.zeros((n, n), dtype=complex)
    for total in range(0, 2 * n - 1):
        e = 2 * w0 + total * dw
        if energy_window is not None and not energy_window[0] <= e <= energy_window[1]:
            continue
        i = np.arange(max(0, total - n + 1), min(n, total + 1))
        j = total - i
        amp = psi_in[i, j]
        if not np.any(amp):
            continue
        v = boundary_vectors(i, j, params, grid, cache.sigma)
        contr = v.T @ amp
        out[i, j] = (-1j * math.pi / dw) * (v @ (cache.t2(e) @ contr))
    return out


@dataclass(frozen=True)
class ScatterResult2:
    """On-shell kernel for a fixed incoming pair (k1, k2) over outgoing splits."""

    k1: int
    k2: int
    energy: float
    p1: np.ndarray
    p2: np.ndarray
    kernel: np.ndarray
    uncorrelated: np.ndarray
    diagnostics: list = field(default_factory=list)


def scatter2(k1: int, k2: int, params: PolaronParams, grid: ModeGrid, cache: Pi2Cache | None = None,
             scatter1: ScatterResult1 | None = None) -> ScatterResult2:
    """Kernel M(p1, E - p1; k1, k2) for every on-shell outgoing split."""
    _require_uniform(grid)
    n = grid.n_modes
    if not (0 <= k1 < n and 0 <= k2 < n):
        raise ParameterError("incoming mode index out of range")
    cache = cache or Pi2Cache(params, grid)
    total = k1 + k2
    p1 = np.arange(max(0, total - n + 1), min(n, total + 1))
    p2 = total - p1
    vi = boundary_vector(k1, k2, params, grid, sigma=cache.sigma).v
    vf = boundary_vectors(p1, p2, params, grid, cache.sigma)
    e = float(grid.omegas[k1] + grid.omegas[k2])
    kern = vf @ (cache.t2(e) @ vi)
    if scatter1 is not None:
        unco = np.array([s_uncorrelated(a, b, k1, k2, scatter1) for a, b in zip(p1, p2)])
    else:
        unco = np.zeros(len(p1), dtype=complex)
    return ScatterResult2(k1, k2, e, p1, p2, kern, unco, cache.diagnostics())
