"""Discretized chiral waveguide: modes, dispersion, couplings, wavepackets.

Units: hbar = 1 and the bare qubit gap sets the energy scale (Delta = 1 by
convention). Mode momenta are k_n = 2 pi n / L, n = 1..N, so the level
spacing of a linear waveguide is 2 pi c / L and the discrete spectral
function 2 pi sum_k g_k^2 delta(w - w_k) approaches pi alpha w for
couplings g_k = sqrt(pi alpha w_k / L).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ParameterError


@dataclass(frozen=True)
class DispersionKind:
    """Mode dispersion. ``kind`` is ``"linear"`` (w = c k) or ``"sine"``
    (w = band_top * sin(c k / band_top))."""

    kind: str = "linear"
    c: float = 1.0
    band_top: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "sine"):
            raise ParameterError(f"unknown dispersion kind {self.kind!r}")
        if not self.c > 0:
            raise ParameterError("dispersion velocity c must be positive")
        if self.band_top is not None and not self.band_top > 0:
            raise ParameterError("band_top must be positive")

    def omega(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "linear":
            return self.c * k
        return self.band_top * np.sin(self.c * k / self.band_top)

    def velocity(self, k):
        """Group velocity dw/dk."""
        k = np.asarray(k, dtype=float)
        if self.kind == "linear":
            return np.full_like(k, self.c)
        return self.c * np.cos(self.c * k / self.band_top)

    @property
    def band_edge_k(self) -> float:
        if self.kind == "linear":
            return math.inf
        return 0.5 * math.pi * self.band_top / self.c

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "band_top": self.band_top}


@dataclass(frozen=True)
class CutoffKind:
    """High-frequency cutoff: ``"exponential"`` multiplies g_k by
    exp(-w/(2 w_c)); ``"hard"`` drops every mode above w_c."""

    kind: str
    omega_c: float

    def __post_init__(self):
        if self.kind not in ("exponential", "hard"):
            raise ParameterError(f"unknown cutoff kind {self.kind!r}")
        if not self.omega_c > 0:
            raise ParameterError("cutoff frequency must be positive")

    def factor(self, omega):
        """Amplitude factor applied to g_k."""
        omega = np.asarray(omega, dtype=float)
        if self.kind == "exponential":
            return np.exp(-omega / (2.0 * self.omega_c))
        return np.ones_like(omega)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "omega_c": self.omega_c}


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModeGrid:
    n_modes: int
    length: float
    dispersion: DispersionKind
    cutoff: CutoffKind
    alpha: float
    k: np.ndarray = field(repr=False)
    omegas: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / self.length

    @property
    def spacing(self) -> np.ndarray:
        """Local level spacing dw_k = v(k) * dk for every mode."""
        return self.dispersion.velocity(self.k) * self.dk

    @property
    def k_bounds(self) -> tuple[float, float]:
        """Momentum interval covered by the midpoint cells of the grid."""
        return float(self.k[0] - 0.5 * self.dk), float(self.k[-1] + 0.5 * self.dk)

    @property
    def is_uniform(self) -> bool:
        return self.dispersion.kind == "linear"

    def spectral_density(self, omega):
        """Continuum limit J(w) = pi alpha w * cutoff(w)^2 / v(w) of the grid."""
        omega = np.asarray(omega, dtype=float)
        kmax = self.k_bounds[1]
        wmax = float(self.dispersion.omega(kmax))
        if self.dispersion.kind == "linear":
            v = self.dispersion.c
            inside = (omega > 0) & (omega <= wmax)
            vel = np.full_like(omega, v)
        else:
            bt = self.dispersion.band_top
            x = np.clip(omega / bt, 0.0, 1.0)
            vel = self.dispersion.c * np.sqrt(1.0 - x * x)
            inside = (omega > 0) & (omega < min(wmax, bt))
        with np.errstate(divide="ignore", invalid="ignore"):
            val = math.pi * self.alpha * omega * self.cutoff.factor(omega) ** 2 / vel
        return np.where(inside, val, 0.0)

    def binned_spectral_density(self, edges):
        """Histogram estimate of 2 pi sum_k g_k^2 delta(w - w_k) on ``edges``."""
        edges = np.asarray(edges, dtype=float)
        weights, _ = np.histogram(self.omegas, bins=edges, weights=self.g**2)
        return 2.0 * math.pi * weights / np.diff(edges)

    def to_dict(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "length": self.length,
            "dispersion": self.dispersion.to_dict(),
            "cutoff": self.cutoff.to_dict(),
            "alpha": self.alpha,
            "omegas": self.omegas.tolist(),
            "g": self.g.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModeGrid":
        grid = build_mode_grid(
            d["n_modes"],
            d["length"],
            DispersionKind(**d["dispersion"]),
            CutoffKind(**d["cutoff"]),
            d["alpha"],
        )
        if "omegas" in d and not np.allclose(grid.omegas, d["omegas"], rtol=1e-14, atol=0):
            raise ParameterError("serialized omegas disagree with the grid parameters")
        return grid


def build_mode_grid(
    n_modes: int,
    length: float,
    dispersion: DispersionKind,
    cutoff: CutoffKind,
    alpha: float,
) -> ModeGrid:
    """Discretize the even-sector waveguide.

    Momenta are k_n = 2 pi n / L for n = 1..n_modes and the couplings are
    g_k = sqrt(pi alpha w_k / L) times the cutoff factor. With a hard
    cutoff, modes above w_c are removed (with a warning), so the returned
    ``n_modes`` may be smaller than requested.

    Raises:
        ParameterError: nonpositive length or cutoff, negative alpha, or a
            sine band whose edge lies below the requested momenta.
    """
    if int(n_modes) != n_modes or n_modes < 1:
        raise ParameterError("n_modes must be a positive integer")
    if not length > 0:
        raise ParameterError("length must be positive")
    if not alpha >= 0:
        raise ParameterError("alpha must be nonnegative")
    n_modes = int(n_modes)

    if dispersion.kind == "sine" and dispersion.band_top is None:
        dispersion = DispersionKind("sine", dispersion.c, cutoff.omega_c)

    k = 2.0 * math.pi * np.arange(1, n_modes + 1) / length
    if k[-1] > dispersion.band_edge_k * (1 + 1e-12):
        raise ParameterError(
            f"requested momenta extend beyond the sine band edge "
            f"k = {dispersion.band_edge_k:.6g} (max k = {k[-1]:.6g})"
        )
    omegas = dispersion.omega(k)

    if cutoff.kind == "hard":
        keep = omegas <= cutoff.omega_c * (1 + 1e-12)
        if not keep.any():
            raise ParameterError("hard cutoff removes every mode")
        if not keep.all():
            warnings.warn(
                f"hard cutoff w_c={cutoff.omega_c} drops {int((~keep).sum())} of "
                f"{n_modes} modes",
                stacklevel=2,
            )
        k, omegas = k[keep], omegas[keep]

    g = np.sqrt(math.pi * alpha * omegas / length) * cutoff.factor(omegas)
    return ModeGrid(
        n_modes=len(k),
        length=float(length),
        dispersion=dispersion,
        cutoff=cutoff,
        alpha=float(alpha),
        k=_frozen(k),
        omegas=_frozen(omegas),
        g=_frozen(g),
    )


def uniform_grid(n_modes: int, omega_max: float, alpha: float, cutoff: str = "hard",
                 omega_c: float | None = None) -> ModeGrid:
    """Linear grid whose top mode sits exactly at ``omega_max``."""
    length = 2.0 * math.pi * n_modes / omega_max
    if omega_c is None:
        omega_c = omega_max
    return build_mode_grid(n_modes, length, DispersionKind("linear"), CutoffKind(cutoff, omega_c), alpha)


@dataclass(frozen=True)
class Wavepacket:
    mu: float
    s: float
    x: float
    amplitudes: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "s": self.s,
            "x": self.x,
            "re": self.amplitudes.real.tolist(),
            "im": self.amplitudes.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Wavepacket":
        amps = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
        return cls(d["mu"], d["s"], d["x"], _frozen(amps))


def gaussian_wavepacket(grid: ModeGrid, mu: float, s: float, x: float) -> Wavepacket:
    """phi_k ~ exp(-(w_k - mu)^2 / (2 s) - i w_k x), unit 2-norm.

    ``s`` is a variance in energy^2. With this phase convention a packet
    with x < 0 reaches the emitter at time t = -x.
    """
    if not s > 0:
        raise ParameterError("wavepacket variance s must be positive")
    expo = -((grid.omegas - mu) ** 2) / (2.0 * s)
    if expo.max() < math.log(np.finfo(float).tiny):
        raise DegenerateInputError(
            f"wavepacket centred at mu={mu} has no support on the grid (all amplitudes underflow)"
        )
    mod = np.exp(expo - expo.max())
    mod /= np.linalg.norm(mod)
    return Wavepacket(float(mu), float(s), float(x), _frozen(mod * np.exp(-1j * grid.omegas * x)))
