"""Single-excitation linear response.

Self-energy Sigma(w), denominator h(z) = (z - Delta~) - chi(z) Sigma(z),
the 2x2 T-matrix in the operator basis (b, F), single-excitation Green's
functions, and the chiral phase s_k = h(w_k)* / h(w_k).

Three self-energy sources are available:

``closed``
    infinite-cutoff Ohmic closed form (linear dispersion), analytically
    continued into the upper half plane.
``continuum``
    the continuum limit of the actual grid (its dispersion, cutoff and
    momentum range), used to compare with finite-grid dynamics.
``discrete``
    direct sum over grid modes with a finite broadening eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import ParameterError, SingularityError
from .model import ModeGrid
from .polaron import PolaronParams

SIGMA_SOURCES = ("closed", "continuum", "discrete")


@dataclass(frozen=True)
class SelfEnergyValue:
    sigma: complex | np.ndarray

    @property
    def lamb_shift(self):
        return np.real(self.sigma)

    @property
    def gamma(self):
        return -2.0 * np.imag(self.sigma)


def chi(z, delta_tilde):
    return (z + delta_tilde) / (2.0 * delta_tilde)


# ---------------------------------------------------------------- closed form

def sigma_closed(z, alpha: float, delta_tilde: float):
    """Infinite-cutoff self-energy at complex or real ``z`` (vectorized).

    Real arguments follow the two printed real-axis branches (the w > 0
    branch is the retarded boundary value). Complex arguments with
    Im z > 0 use the continuation 2 a D^2 (z ln(-z/D) - z - D)/(z + D)^2.
    The removable points z = 0 and z = -D are handled exactly.
    """
    z = np.asarray(z)
    scalar = z.ndim == 0
    z = np.atleast_1d(z).astype(complex)
    d = float(delta_tilde)
    out = np.empty_like(z)

    lower = z.imag < 0
    zz = np.where(lower, np.conj(z), z)
    x = (zz + d) / d
    near = np.abs(x) < 1e-3
    zero = zz == 0

    # z ln(-z/D) with the retarded branch on the positive real axis
    real_axis = zz.imag == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(
            real_axis & (zz.real > 0),
            np.log(np.abs(zz.real) / d) - 1j * math.pi,
            np.log(-zz / d),
        )
        general = 2 * alpha * d * d / (zz + d) ** 2 * (zz * log_term - zz - d)
    # series about z = -D: Sigma = -2 a D sum_{n>=2} x^{n-2} / (n (n-1))
    ser = np.zeros_like(x)
    for n in range(2, 9):
        ser = ser + x ** (n - 2) / (n * (n - 1))
    series = -2 * alpha * d * ser

    out = np.where(near, series, general)
    out = np.where(zero, -2 * alpha * d + 0j, out)
    out = np.where(lower, np.conj(out), out)
    return out[0] if scalar else out


def self_energy_closed(omega, alpha: float, delta_tilde: float) -> SelfEnergyValue:
    """Closed-form Sigma on the real axis.

    Sigma(0) = -2 alpha Delta~ and Sigma(-Delta~) = -alpha Delta~ are exact.
    """
    if not delta_tilde > 0:
        raise ParameterError("delta_tilde must be positive")
    omega = np.asarray(omega, dtype=float)
    return SelfEnergyValue(sigma_closed(omega, alpha, delta_tilde))


# -------------------------------------------------------------- discrete sum

def default_eta(grid: ModeGrid, omega=None) -> float:
    """Four times the local mode spacing (at ``omega`` if given)."""
    sp = grid.spacing
    if omega is None or grid.is_uniform:
        return 4.0 * float(np.median(sp))
    i = int(np.argmin(np.abs(grid.omegas - omega)))
    return 4.0 * float(sp[i])


def sigma_discrete(z, params: PolaronParams, grid: ModeGrid, eta: float = 0.0):
    """4 Delta~^2 sum_k f_k^2 / (z - w_k + i eta), vectorized over z."""
    z = np.asarray(z)
    scalar = z.ndim == 0
    z = np.atleast_1d(z).astype(complex) + 1j * eta
    w2 = 4.0 * params.delta_tilde**2 * params.f**2
    out = np.empty(z.shape, dtype=complex)
    # chunk to bound memory for large grids
    flat = z.ravel()
    res = np.empty(flat.shape, dtype=complex)
    step = max(1, 2_000_000 // max(1, grid.n_modes))
    for i in range(0, flat.size, step):
        zi = flat[i : i + step, None]
        res[i : i + step] = np.sum(w2[None, :] / (zi - grid.omegas[None, :]), axis=1)
    out = res.reshape(z.shape)
    return out[0] if scalar else out


def self_energy_discrete(omega, params: PolaronParams, grid: ModeGrid, eta: float | None = None) -> SelfEnergyValue:
    if eta is None:
        eta = default_eta(grid, None if np.ndim(omega) else float(omega))
    if not eta > 0:
        raise ParameterError("eta must be positive")
    return SelfEnergyValue(sigma_discrete(np.asarray(omega, dtype=float), params, grid, eta))


# ------------------------------------------------------ grid continuum limit

class ContinuumSigma:
    """Continuum limit of the grid sum, Sigma(z) = 2 alpha D^2 int dk
    w(k) c(w)^2 / ((w(k) + D)^2 (z - w(k))) over the momentum range covered
    by the grid's midpoint cells.

    Linear dispersion with a hard cutoff has an elementary antiderivative;
    other grids are integrated numerically in k.
    """

    def __init__(self, params: PolaronParams, grid: ModeGrid):
        self.alpha = grid.alpha
        self.d = params.delta_tilde
        self.grid = grid
        self.k_lo, self.k_hi = grid.k_bounds
        self.k_lo = max(self.k_lo, 0.0)
        disp = grid.dispersion
        self.w_lo = float(disp.omega(self.k_lo))
        self.w_hi = float(disp.omega(self.k_hi))
        self.analytic = disp.kind == "linear" and grid.cutoff.kind == "hard"

    def _density(self, k):
        w = self.grid.dispersion.omega(k)
        return 2 * self.alpha * self.d**2 * w * self.grid.cutoff.factor(w) ** 2 / (w + self.d) ** 2

    def _analytic(self, z):
        d, a, W = self.d, self.w_lo, self.w_hi
        c = self.grid.dispersion.c
        A = z / (z + d) ** 2
        B = -d / (z + d)
        val = (
            A * math.log((W + d) / (a + d))
            + B * (1.0 / (a + d) - 1.0 / (W + d))
            - A * (np.log(z - W + 0j) - np.log(z - a + 0j))
        )
        return 2 * self.alpha * d * d * val / c

    def _numeric_one(self, z: complex) -> complex:
        disp = self.grid.dispersion
        k_lo, k_hi = self.k_lo, self.k_hi
        opts = dict(limit=400, epsabs=1e-13, epsrel=1e-11)
        if z.imag == 0 and self.w_lo < z.real < self.w_hi:
            w0 = z.real
            if disp.kind == "linear":
                k0 = w0 / disp.c

                def smooth(k):
                    return -self._density(k) / disp.c
            else:
                bt = disp.band_top
                u0 = math.asin(w0 / bt)
                k0 = u0 * bt / disp.c

                def smooth(k):
                    u = disp.c * k / bt
                    # (k - k0)/(w0 - w(k)) without cancellation
                    ratio = -1.0 / (disp.c * math.cos(0.5 * (u + u0)) * np.sinc((u0 - u) / (2 * math.pi)))
                    return self._density(k) * ratio

            pv = quad(smooth, k_lo, k_hi, weight="cauchy", wvar=k0, **opts)[0]
            vel = float(disp.velocity(k0))
            return pv - 1j * math.pi * float(self._density(k0)) / vel
        re = quad(lambda k: (self._density(k) / (z - disp.omega(k))).real, k_lo, k_hi, **opts)[0]
        im = quad(lambda k: (self._density(k) / (z - disp.omega(k))).imag, k_lo, k_hi, **opts)[0]
        return re + 1j * im

    def __call__(self, z):
        z = np.asarray(z)
        scalar = z.ndim == 0
        z = np.atleast_1d(z).astype(complex)
        lower = z.imag < 0
        zz = np.where(lower, np.conj(z), z)
        if self.analytic:
            near = np.abs(zz + self.d) < 1e-2 * self.d
            out = np.empty_like(zz)
            with np.errstate(divide="ignore", invalid="ignore"):
                out[~near] = self._analytic(zz[~near])
            for i in np.flatnonzero(near):
                out[i] = self._numeric_one(complex(zz[i]))
        else:
            out = np.array([self._numeric_one(complex(v)) for v in zz])
        out = np.where(lower, np.conj(out), out)
        return out[0] if scalar else out


def self_energy_continuum(omega, params: PolaronParams, grid: ModeGrid) -> SelfEnergyValue:
    return SelfEnergyValue(ContinuumSigma(params, grid)(np.asarray(omega, dtype=float)))


def make_sigma(params: PolaronParams, grid: ModeGrid, source: str = "continuum",
               eta: float | None = None) -> Callable:
    """Vectorized z -> Sigma(z) for the chosen source."""
    if source == "closed":
        a, d = grid.alpha, params.delta_tilde
        return lambda z: sigma_closed(z, a, d)
    if source == "continuum":
        return ContinuumSigma(params, grid)
    if source == "discrete":
        e = default_eta(grid) if eta is None else eta
        return lambda z: sigma_discrete(z, params, grid, e)
    raise ParameterError(f"unknown self-energy source {source!r}; expected one of {SIGMA_SOURCES}")


# ------------------------------------------------------------ h and T^(1)

def h_denominator(z, sigma, delta_tilde: float):
    """h(z) = (z - Delta~) - chi(z) Sigma."""
    if isinstance(sigma, SelfEnergyValue):
        sigma = sigma.sigma
    return (z - delta_tilde) - chi(z, delta_tilde) * sigma


def _resolve_sigma(sigma, params, grid):
    if callable(sigma):
        return sigma
    if grid is None:
        raise ParameterError("a grid is required to build a self-energy source")
    return make_sigma(params, grid, sigma)


def _check_h(h, z):
    if abs(h) < 1e-14 * max(1.0, abs(z)):
        raise SingularityError(f"h(z) vanishes at z={z}", {"h": abs(h)})


@dataclass(frozen=True)
class TMatrix1:
    z: complex
    matrix: np.ndarray


def u1_matrix(params: PolaronParams) -> np.ndarray:
    d0 = params.delta0
    return np.array([[0.0, d0], [d0, d0]], dtype=complex)


def pi1_matrix(z, sigma_value, params: PolaronParams) -> np.ndarray:
    return np.diag([1.0 / (z - params.delta_tilde), sigma_value / params.delta0**2]).astype(complex)


def t_matrix_1(z, params: PolaronParams, sigma_source="closed", grid: ModeGrid | None = None) -> TMatrix1:
    """Closed-form T^(1)(z) = (1/h) [[(z-D)S, d0(z-D)], [d0(z-D), d0^2 chi]]."""
    sig = complex(_resolve_sigma(sigma_source, params, grid)(complex(z)))
    d, d0 = params.delta_tilde, params.delta0
    h = h_denominator(z, sig, d)
    _check_h(h, z)
    m = np.array(
        [[(z - d) * sig, d0 * (z - d)], [d0 * (z - d), d0**2 * chi(z, d)]], dtype=complex
    ) / h
    return TMatrix1(complex(z), m)


def t_matrix_1_inverse(z, params: PolaronParams, sigma_source="closed", grid=None) -> np.ndarray:
    """[u1^-1 - Pi1(z)]^-1 by explicit 2x2 inversion."""
    sig = complex(_resolve_sigma(sigma_source, params, grid)(complex(z)))
    return np.linalg.inv(np.linalg.inv(u1_matrix(params)) - pi1_matrix(z, sig, params))


def dyson_series_t1(z, params: PolaronParams, n_terms: int, sigma_source="closed", grid=None) -> np.ndarray:
    """Truncated sum u1 sum_{n<n_terms} (Pi1 u1)^n."""
    sig = complex(_resolve_sigma(sigma_source, params, grid)(complex(z)))
    u = u1_matrix(params)
    pu = pi1_matrix(z, sig, params) @ u
    term = u.copy()
    total = np.zeros_like(u)
    for _ in range(n_terms):
        total += term
        term = term @ pu
    return total


# ------------------------------------------------------- Green's functions

GREEN_ELEMENTS = ("bb", "bA", "AA", "bF", "FF")


def green_bb_bf_ff(z, sigma, delta_tilde: float, delta0: float):
    """(G_bb, G_bF, G_FF) evaluated from Sigma values (vectorized)."""
    h = h_denominator(z, sigma, delta_tilde)
    return (1.0 - sigma / delta0) / h, (sigma / delta0) / h, (z - delta_tilde) * sigma / delta0**2 / h


def green1(element: str, omega, params: PolaronParams, grid: ModeGrid, k: int | None = None,
           p: int | None = None, sigma_source="closed") -> complex:
    """One element of G^(1) = G^(0) + G^(0) T^(1) G^(0).

    ``omega`` may be complex (e.g. w + i eta). Mode indices are 0-based.
    """
    if element not in GREEN_ELEMENTS:
        raise ParameterError(f"unknown Green's function element {element!r}")
    z = complex(omega)
    sig = complex(_resolve_sigma(sigma_source, params, grid)(z))
    d, d0 = params.delta_tilde, params.delta0
    h = h_denominator(z, sig, d)
    _check_h(h, z)
    if element == "bb":
        return (1.0 - sig / d0) / h
    if element == "bF":
        return (sig / d0) / h
    if element == "FF":
        return (z - d) * sig / d0**2 / h
    if k is None:
        raise ParameterError(f"element {element} needs a mode index k")
    wk, fk = grid.omegas[k], params.f[k]
    if element == "bA":
        return d0 * fk / ((z - wk) * h)
    if p is None:
        raise ParameterError("element AA needs mode indices k and p")
    wp, fp = grid.omegas[p], params.f[p]
    free = 1.0 / (z - wk) if p == k else 0.0
    return free + (d0 * fp / (z - wp)) * chi(z, d) / h * (d0 * fk / (z - wk))


# -------------------------------------------------------------- scattering

@dataclass(frozen=True)
class ScatterResult1:
    omegas: np.ndarray
    s: np.ndarray
    sigma: np.ndarray
    source: str

    @property
    def t(self):
        return 0.5 * (self.s + 1.0)

    @property
    def r(self):
        return 0.5 * (self.s - 1.0)

    @property
    def lamb_shift(self):
        return self.sigma.real

    @property
    def gamma(self):
        return -2.0 * self.sigma.imag


def chiral_phase_from_sigma(omega, sigma, delta_tilde: float):
    h = h_denominator(omega, sigma, delta_tilde)
    if np.any(np.abs(h) < 1e-14 * np.maximum(1.0, np.abs(omega))):
        raise SingularityError("h vanishes on a scattering energy")
    # conj(h)/h evaluated as a pure phase
    return np.exp(-2j * np.angle(h))


def chiral_phase(k, params: PolaronParams, grid: ModeGrid, source: str = "continuum",
                 eta: float | None = None):
    """s_k = h(w_k)* / h(w_k) for one mode index or an index array."""
    idx = np.asarray(k)
    w = grid.omegas[idx]
    sig = make_sigma(params, grid, source, eta)(w.astype(float))
    return chiral_phase_from_sigma(w, sig, params.delta_tilde)


def scatter1(params: PolaronParams, grid: ModeGrid, source: str = "continuum",
             eta: float | None = None) -> ScatterResult1:
    w = grid.omegas.astype(float)
    sig = np.asarray(make_sigma(params, grid, source, eta)(w))
    s = chiral_phase_from_sigma(w, sig, params.delta_tilde)
    return ScatterResult1(omegas=w.copy(), s=s, sigma=sig, source=source)


def transmission_reflection(s):
    """(t, r) = ((s + 1)/2, (s - 1)/2); accepts an array or ScatterResult1."""
    if isinstance(s, ScatterResult1):
        s = s.s
    s = np.asarray(s)
    return 0.5 * (s + 1.0), 0.5 * (s - 1.0)


def lorentzian_reflection(omega, omega0: float, gamma: float):
    """Two-level reflection -i(G/2) / ((w - w0) + i G/2)."""
    omega = np.asarray(omega)
    return -0.5j * gamma / ((omega - omega0) + 0.5j * gamma)
