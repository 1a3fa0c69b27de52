"""Wavepacket propagation under the number-conserving polaron Hamiltonian.

The state lives in the hardcore sector with at most two excitations:

    |g;0>,  |e;0>, |g;1_k>,  |e;1_k>, |g;1_k 1_p> (k <= p).

Internally the two-photon block is stored as a symmetric matrix Psi with
|g; 2 photons> = (1/2) sum_{kp} Psi_kp A_k^+ A_p^+ |0>, so that
Psi_kp = <0|A_k A_p|psi> and the block norm is sum |Psi|^2 / 2. The flat
vector uses unit-norm basis kets, which puts an extra 1/sqrt(2) on the
diagonal entries Psi_kk.

Energies are measured with the constant polaron shift E0 removed, so the
vacuum |g;0> sits at -Delta~/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg import eigh, expm
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import jv

from .errors import AccuracyError, ParameterError, ResourceError
from .model import ModeGrid, Wavepacket
from .polaron import PolaronParams

DEFAULT_MEMORY_BUDGET = 2 * 1024**3
DENSE_LIMIT = 4096


# ----------------------------------------------------------------- basis

@dataclass(frozen=True)
class TwoExcBasis:
    n_modes: int

    @property
    def n_pairs(self) -> int:
        return self.n_modes * (self.n_modes + 1) // 2

    @property
    def dimension(self) -> int:
        n = self.n_modes
        return 1 + (1 + n) + (n + self.n_pairs)

    @property
    def sectors(self) -> dict[str, slice]:
        n = self.n_modes
        return {
            "vacuum": slice(0, 1),
            "e0": slice(1, 2),
            "g1": slice(2, 2 + n),
            "e1": slice(2 + n, 2 + 2 * n),
            "g2": slice(2 + 2 * n, self.dimension),
        }

    def pair_indices(self) -> tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(self.n_modes)

    def encode(self, label: tuple) -> int:
        """Index of a basis ket given as ("g"|"e", modes) with modes a tuple of 0-2 indices."""
        qubit, modes = label
        modes = tuple(sorted(modes))
        n = self.n_modes
        if qubit not in ("g", "e") or any(not 0 <= m < n for m in modes):
            raise ParameterError(f"invalid basis label {label!r}")
        if qubit == "g" and len(modes) == 0:
            return 0
        if qubit == "e" and len(modes) == 0:
            return 1
        if qubit == "g" and len(modes) == 1:
            return 2 + modes[0]
        if qubit == "e" and len(modes) == 1:
            return 2 + n + modes[0]
        if qubit == "g" and len(modes) == 2:
            k, p = modes
            # row-major position of (k, p) in the upper triangle
            return 2 + 2 * n + k * n - k * (k - 1) // 2 + (p - k)
        raise ParameterError(f"label {label!r} lies outside the two-excitation hardcore sector")

    def decode(self, index: int) -> tuple:
        n = self.n_modes
        if not 0 <= index < self.dimension:
            raise ParameterError(f"basis index {index} out of range")
        if index == 0:
            return ("g", ())
        if index == 1:
            return ("e", ())
        if index < 2 + n:
            return ("g", (index - 2,))
        if index < 2 + 2 * n:
            return ("e", (index - 2 - n,))
        rows, cols = self.pair_indices()
        j = index - 2 - 2 * n
        return ("g", (int(rows[j]), int(cols[j])))

    def labels(self) -> list[tuple]:
        return [self.decode(i) for i in range(self.dimension)]


def enumerate_basis(grid: ModeGrid) -> TwoExcBasis:
    return TwoExcBasis(grid.n_modes)


# ----------------------------------------------------------------- state

@dataclass
class TwoExcState:
    """Sector amplitudes: vacuum ``g0``, ``e0``, one-photon ``c1``, qubit+photon
    ``d`` and the symmetric two-photon matrix ``psi2``."""

    g0: complex
    e0: complex
    c1: np.ndarray
    d: np.ndarray
    psi2: np.ndarray
    time: float = 0.0

    @property
    def n_modes(self) -> int:
        return len(self.c1)

    def norm(self) -> float:
        return math.sqrt(
            abs(self.g0) ** 2
            + abs(self.e0) ** 2
            + float(np.sum(np.abs(self.c1) ** 2))
            + float(np.sum(np.abs(self.d) ** 2))
            + 0.5 * float(np.sum(np.abs(self.psi2) ** 2))
        )

    def to_vector(self) -> np.ndarray:
        n = self.n_modes
        rows, cols = np.triu_indices(n)
        pairs = self.psi2[rows, cols].astype(complex)
        pairs[rows == cols] /= math.sqrt(2.0)
        return np.concatenate([[self.g0, self.e0], self.c1, self.d, pairs]).astype(complex)

    @classmethod
    def from_vector(cls, vec: np.ndarray, basis: TwoExcBasis, time: float = 0.0) -> "TwoExcState":
        vec = np.asarray(vec, dtype=complex)
        if vec.shape != (basis.dimension,):
            raise ParameterError(f"vector length {vec.shape} does not match basis dimension {basis.dimension}")
        n = basis.n_modes
        sec = basis.sectors
        rows, cols = basis.pair_indices()
        pairs = vec[sec["g2"]].copy()
        pairs[rows == cols] *= math.sqrt(2.0)
        psi = np.zeros((n, n), dtype=complex)
        psi[rows, cols] = pairs
        psi[cols, rows] = pairs
        return cls(complex(vec[0]), complex(vec[1]), vec[sec["g1"]].copy(), vec[sec["e1"]].copy(), psi, time)

    def copy(self) -> "TwoExcState":
        return TwoExcState(self.g0, self.e0, self.c1.copy(), self.d.copy(), self.psi2.copy(), self.time)


# ----------------------------------------------------------- Hamiltonian

class HamiltonianOperator:
    """Matrix-free number-conserving polaron Hamiltonian on the hardcore
    two-excitation sector.

    Terms (F = sum_k f_k A_k, d0 = 2 Delta~):
    H0 + d0 (F^+ s^- + s^+ F) - d0 s^z F^+F - d0 (s^+ F^+FF + F^+F^+F s^-)
    + d0 s^z F^+F^+FF.
    """

    def __init__(self, params: PolaronParams, grid: ModeGrid,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET):
        n = grid.n_modes
        need = 12 * n * n * 16
        if need > memory_budget:
            raise ResourceError(
                f"two-excitation operator for N={n} needs ~{need / 1024**2:.0f} MiB, "
                f"budget is {memory_budget / 1024**2:.0f} MiB"
            )
        self.basis = TwoExcBasis(n)
        self.omegas = np.asarray(grid.omegas, dtype=float)
        self.f = np.asarray(params.f, dtype=float)
        self.dt = params.delta_tilde
        self.d0 = params.delta0
        self._pair_energy = self.omegas[:, None] + self.omegas[None, :] - 0.5 * self.dt
        self._ff = np.outer(self.f, self.f)
        self._bounds: tuple[float, float] | None = None

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    def apply_state(self, s: TwoExcState) -> TwoExcState:
        f, w, d0, dt = self.f, self.omegas, self.d0, self.dt
        # vacuum
        g0 = -0.5 * dt * s.g0
        # one excitation
        fc = f @ s.c1
        e0 = 0.5 * dt * s.e0 + d0 * fc
        c1 = (w - 0.5 * dt) * s.c1 + d0 * f * s.e0 + d0 * f * fc
        # two excitations
        fpsi = f @ s.psi2
        fpsif = fpsi @ f
        fd = f @ s.d
        psi = (
            self._pair_energy * s.psi2
            + d0 * (np.outer(f, s.d) + np.outer(s.d, f))
            + d0 * (np.outer(f, fpsi) + np.outer(fpsi, f))
            - 2.0 * d0 * (fd + fpsif) * self._ff
        )
        d = (0.5 * dt + w) * s.d + d0 * fpsi - d0 * f * (fd + fpsif)
        return TwoExcState(g0, e0, c1, d, psi, s.time)

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        return self.apply_state(TwoExcState.from_vector(vec, self.basis)).to_vector()

    def linear_operator(self) -> LinearOperator:
        return LinearOperator((self.dimension, self.dimension), matvec=self.matvec, dtype=complex)

    def to_dense(self) -> np.ndarray:
        dim = self.dimension
        if dim > DENSE_LIMIT:
            raise ResourceError(f"dense Hamiltonian of dimension {dim} exceeds the limit {DENSE_LIMIT}")
        eye = np.eye(dim, dtype=complex)
        return np.column_stack([self.matvec(eye[:, j]) for j in range(dim)])

    def bounds(self, pad: float = 0.05) -> tuple[float, float]:
        """Spectral interval from extremal Lanczos (ARPACK) Ritz values, padded
        by ``pad`` times its width on each side."""
        if self._bounds is None:
            if self.dimension <= 300:
                ev = np.linalg.eigvalsh(self.to_dense())
                lo, hi = float(ev[0]), float(ev[-1])
            else:
                op = self.linear_operator()
                v0 = np.random.default_rng(0).standard_normal(self.dimension) + 0j
                try:
                    hi = float(eigsh(op, k=1, which="LA", v0=v0, tol=1e-6, return_eigenvectors=False)[0])
                    lo = float(eigsh(op, k=1, which="SA", v0=v0, tol=1e-6, return_eigenvectors=False)[0])
                except ArpackNoConvergence as exc:
                    raise AccuracyError("spectral bound estimate did not converge") from exc
            width = max(hi - lo, 1e-12)
            self._bounds = (lo - pad * width, hi + pad * width)
        return self._bounds


def assemble_hamiltonian(basis: TwoExcBasis, params: PolaronParams, grid: ModeGrid,
                         memory_budget: int = DEFAULT_MEMORY_BUDGET) -> HamiltonianOperator:
    if basis.n_modes != grid.n_modes or len(params.f) != grid.n_modes:
        raise ParameterError("basis, params and grid disagree on the number of modes")
    return HamiltonianOperator(params, grid, memory_budget)


# ---------------------------------------------------------- initial state

def _check_packet(p: Wavepacket, n: int):
    if len(p.amplitudes) != n:
        raise ParameterError("wavepacket length does not match the grid")
    nrm = float(np.linalg.norm(p.amplitudes))
    if abs(nrm - 1.0) > 1e-10:
        raise ParameterError(f"wavepacket is not normalized (norm {nrm})")


def initial_state(basis: TwoExcBasis, params: PolaronParams, packets) -> TwoExcState:
    """One packet fills |g;1_k>; two fill |g;1_k 1_p> with the symmetrized
    product, renormalized. The qubit starts in the polaron vacuum."""
    if isinstance(packets, Wavepacket):
        packets = [packets]
    packets = list(packets)
    n = basis.n_modes
    for p in packets:
        _check_packet(p, n)
    zeros = np.zeros(n, dtype=complex)
    if len(packets) == 1:
        return TwoExcState(0j, 0j, np.array(packets[0].amplitudes, dtype=complex), zeros.copy(),
                           np.zeros((n, n), dtype=complex))
    if len(packets) == 2:
        a, b = (np.asarray(p.amplitudes, dtype=complex) for p in packets)
        psi = np.outer(a, b) + np.outer(b, a)
        nrm = math.sqrt(0.5 * float(np.sum(np.abs(psi) ** 2)))
        if nrm == 0:
            raise ParameterError("the symmetrized two-photon state vanishes")
        return TwoExcState(0j, 0j, zeros.copy(), zeros.copy(), psi / nrm)
    raise ParameterError("initial_state takes one or two wavepackets")


def free_evolution(state: TwoExcState, params: PolaronParams, grid: ModeGrid, t: float) -> TwoExcState:
    """Evolve photon amplitudes under H0 alone (qubit sectors untouched)."""
    w = grid.omegas
    dt = params.delta_tilde
    ph1 = np.exp(-1j * (w - 0.5 * dt) * t)
    ph2 = np.exp(-1j * (w[:, None] + w[None, :] - 0.5 * dt) * t)
    return TwoExcState(state.g0 * np.exp(0.5j * dt * t), state.e0, state.c1 * ph1, state.d,
                       state.psi2 * ph2, state.time + t)


# ----------------------------------------------------------- observables

@dataclass
class ObservableRecord:
    time: float
    p_e: float
    n_excit: float
    norm: float
    psi1: np.ndarray = field(repr=False)
    f_marginal: np.ndarray = field(repr=False)
    psi2: np.ndarray | None = field(default=None, repr=False)


def photon_numbers(state: TwoExcState) -> np.ndarray:
    """<A_k^+ A_k> for every mode."""
    return (
        np.abs(state.c1) ** 2
        + np.abs(state.d) ** 2
        + np.sum(np.abs(state.psi2) ** 2, axis=1)
    )


def observables(state: TwoExcState, basis: TwoExcBasis | None = None, grid: ModeGrid | None = None,
                keep_psi2: bool = False) -> ObservableRecord:
    p_e = abs(state.e0) ** 2 + float(np.sum(np.abs(state.d) ** 2))
    n_exc = p_e + float(np.sum(photon_numbers(state)))
    marginal = np.sum(np.abs(state.psi2) ** 2, axis=1)
    return ObservableRecord(
        time=state.time,
        p_e=p_e,
        n_excit=n_exc,
        norm=state.norm(),
        psi1=state.c1.copy(),
        f_marginal=marginal,
        psi2=state.psi2.copy() if keep_psi2 else None,
    )


# ----------------------------------------------------------- propagation

def _cheb_terms(radius_t: float, tol: float) -> int:
    k = int(radius_t) + 10
    while abs(jv(k, radius_t)) > tol * 1e-3 or k < radius_t + 10:
        k += 5
    return k


def chebyshev_step(h: HamiltonianOperator, vec: np.ndarray, t: float, tol: float) -> np.ndarray:
    """exp(-i H t) vec by a Chebyshev expansion on the padded spectral interval."""
    if t == 0:
        return vec.copy()
    lo, hi = h.bounds()
    c = 0.5 * (hi + lo)
    r = 0.5 * (hi - lo)
    rt = r * t
    nterms = _cheb_terms(abs(rt), tol)
    ref = float(np.linalg.norm(vec))

    def hs(x):
        return (h.matvec(x) - c * x) / r

    t0 = vec
    t1 = hs(vec)
    out = jv(0, rt) * t0 + 2 * (-1j) * jv(1, rt) * t1
    for k in range(2, nterms):
        t2 = 2 * hs(t1) - t0
        if np.linalg.norm(t2) > 10 * ref:
            raise AccuracyError(
                "Chebyshev recursion diverged; the spectral bounds do not enclose the spectrum",
                {"bounds": [lo, hi], "term": k},
            )
        out = out + 2 * (-1j) ** k * jv(k, rt) * t2
        t0, t1 = t1, t2
    return out * np.exp(-1j * c * t)


def propagate(state: TwoExcState, h: HamiltonianOperator, t_final: float, dt_report: float = 0.25,
              tol: float = 1e-10, method: str = "auto", keep_psi2: bool = False
              ) -> Iterator[tuple[TwoExcState, ObservableRecord]]:
    """Yield (state, observables) at t0, t0 + dt_report, ..., t0 + t_final.

    ``method`` is ``"chebyshev"``, ``"expm"`` (dense, small sectors only) or
    ``"auto"`` (dense when the sector dimension is at most 64).
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if not t_final >= 0:
        raise ParameterError("t_final must be nonnegative")
    if not dt_report > 0:
        raise ParameterError("dt_report must be positive")
    if method not in ("auto", "chebyshev", "expm"):
        raise ParameterError(f"unknown propagation method {method!r}")
    if method == "auto":
        method = "expm" if h.dimension <= 64 else "chebyshev"

    basis = h.basis
    vec = state.to_vector()
    t0 = state.time
    n_steps = int(math.ceil(t_final / dt_report - 1e-9)) if t_final > 0 else 0
    times = [min(i * dt_report, t_final) for i in range(n_steps + 1)]

    if method == "expm":
        ev, evec = eigh(h.to_dense())
        coeff = evec.conj().T @ vec

        def advance(v, dt, t):
            return evec @ (np.exp(-1j * ev * t) * coeff)
    else:
        def advance(v, dt, t):
            return chebyshev_step(h, v, dt, tol)

    prev = 0.0
    for t in times:
        if t > prev:
            vec = advance(vec, t - prev, t)
        prev = t
        s = TwoExcState.from_vector(vec, basis, t0 + t)
        yield s, observables(s, keep_psi2=keep_psi2)


def run_dynamics(state: TwoExcState, h: HamiltonianOperator, t_final: float, dt_report: float = 0.25,
                 tol: float = 1e-10, method: str = "auto", keep_psi2: bool = False
                 ) -> tuple[TwoExcState, list[ObservableRecord]]:
    """Collect the records of :func:`propagate` and return the final state."""
    records = []
    final = state
    for final, rec in propagate(state, h, t_final, dt_report, tol, method, keep_psi2):
        records.append(rec)
    return final, records


def dense_expm_propagate(state: TwoExcState, h: HamiltonianOperator, t: float) -> TwoExcState:
    """Reference propagation by a dense matrix exponential."""
    vec = expm(-1j * t * h.to_dense()) @ state.to_vector()
    return TwoExcState.from_vector(vec, h.basis, state.time + t)
