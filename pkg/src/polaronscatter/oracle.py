"""Brute-force exact treatment of tiny spin-boson grids.

The lab-frame Hamiltonian

    H = (Delta/2) s^z + sum_k w_k a_k^+ a_k + s^x sum_k g_k (a_k + a_k^+)

is built densely on a truncated Fock space (qubit first, then one factor of
dimension n_max + 1 per mode). States prepared in the polaron frame are
mapped to the lab frame with the truncated displacement
U_P = exp[-s^x sum_k f_k (a_k^+ - a_k)], and observables are read back in
the polaron frame.

Qubit ordering is (g, e) with s^z = diag(-1, +1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from itertools import product

import numpy as np
from scipy.linalg import eigh, expm

from .errors import AccuracyWarning, ParameterError, ResourceError
from .model import ModeGrid
from .polaron import PolaronParams

MAX_MODES = 4
MAX_PHOTONS = 4
DEFAULT_BUDGET = 4096
LEAKAGE_LIMIT = 1e-4

SZ = np.diag([-1.0, 1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SP = np.array([[0.0, 0.0], [1.0, 0.0]])  # |e><g|
SM = SP.T


@dataclass(frozen=True)
class FockTruncation:
    n_modes: int
    n_max: int
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not 1 <= self.n_modes <= MAX_MODES:
            raise ParameterError(f"oracle supports 1..{MAX_MODES} modes")
        if not 1 <= self.n_max <= MAX_PHOTONS:
            raise ParameterError(f"oracle supports 1..{MAX_PHOTONS} photons per mode")
        if self.dimension > self.budget:
            raise ResourceError(
                f"truncated dimension {self.dimension} exceeds the budget {self.budget}"
            )

    @property
    def dimension(self) -> int:
        return 2 * (self.n_max + 1) ** self.n_modes


class FockSpace:
    """Dense operators on qubit x modes."""

    def __init__(self, trunc: FockTruncation):
        self.trunc = trunc
        m, n = trunc.n_modes, trunc.n_max
        self.dim_b = (n + 1) ** m
        a1 = np.diag(np.sqrt(np.arange(1, n + 1, dtype=float)), 1)
        eye = np.eye(n + 1)
        self.a = [
            reduce(np.kron, [a1 if j == i else eye for j in range(m)]) for i in range(m)
        ]
        self.id_b = np.eye(self.dim_b)
        self.occupations = np.array(list(product(range(n + 1), repeat=m)), dtype=int)

    def qubit(self, op) -> np.ndarray:
        return np.kron(op, self.id_b)

    def bath(self, op) -> np.ndarray:
        return np.kron(np.eye(2), op)

    def index(self, qubit: str, occ) -> int:
        n = self.trunc.n_max
        if any(not 0 <= o <= n for o in occ):
            raise ParameterError(f"occupation {occ} outside truncation")
        flat = 0
        for o in occ:
            flat = flat * (n + 1) + o
        return (0 if qubit == "g" else 1) * self.dim_b + flat

    def total_number(self) -> np.ndarray:
        qn = np.array([0.0, 1.0])
        bn = self.occupations.sum(axis=1).astype(float)
        return np.add.outer(qn, bn).ravel()


def _check_grid(grid: ModeGrid, trunc: FockTruncation):
    if grid.n_modes != trunc.n_modes:
        raise ParameterError("truncation and grid disagree on the number of modes")


def spin_boson_hamiltonian(grid: ModeGrid, trunc: FockTruncation, delta: float = 1.0,
                           space: FockSpace | None = None) -> np.ndarray:
    _check_grid(grid, trunc)
    sp = space or FockSpace(trunc)
    hb = sum(w * a.T @ a for w, a in zip(grid.omegas, sp.a))
    x = sum(g * (a + a.T) for g, a in zip(grid.g, sp.a))
    return 0.5 * delta * sp.qubit(SZ) + sp.bath(hb) + np.kron(SX, x)


def polaron_rwa_hamiltonian(params: PolaronParams, grid: ModeGrid, trunc: FockTruncation,
                            space: FockSpace | None = None) -> np.ndarray:
    """Number-conserving polaron Hamiltonian (E0 dropped), term by term:
    H0 + d0 (F^+ s^- + s^+ F) - d0 s^z F^+F - d0 (s^+ F^+FF + F^+F^+F s^-) + d0 s^z F^+F^+FF."""
    _check_grid(grid, trunc)
    sp = space or FockSpace(trunc)
    d, d0 = params.delta_tilde, params.delta0
    f = sum(fk * a for fk, a in zip(params.f, sp.a))
    fd = f.T
    hb = sum(w * a.T @ a for w, a in zip(grid.omegas, sp.a))
    h = 0.5 * d * sp.qubit(SZ) + sp.bath(hb)
    h = h + d0 * (np.kron(SM, fd) + np.kron(SP, f))
    h = h - d0 * np.kron(SZ, fd @ f)
    h = h - d0 * (np.kron(SP, fd @ f @ f) + np.kron(SM, fd @ fd @ f))
    h = h + d0 * np.kron(SZ, fd @ fd @ f @ f)
    return h


def polaron_unitary(params: PolaronParams, trunc: FockTruncation,
                    space: FockSpace | None = None) -> np.ndarray:
    """Truncated U_P = exp[-s^x sum_k f_k (a_k^+ - a_k)]."""
    sp = space or FockSpace(trunc)
    gen = sum(fk * (a.T - a) for fk, a in zip(params.f, sp.a))
    return expm(-np.kron(SX, gen))


def exact_ground(grid: ModeGrid, trunc: FockTruncation, delta: float = 1.0) -> tuple[float, np.ndarray]:
    h = spin_boson_hamiltonian(grid, trunc, delta)
    ev, vec = eigh(h, subset_by_index=[0, 0])
    return float(ev[0]), vec[:, 0]


def ground_convergence(grid: ModeGrid, n_max_values, delta: float = 1.0) -> list[tuple[int, float]]:
    """Ground energy for each truncation level (used to document convergence)."""
    return [(n, exact_ground(grid, FockTruncation(grid.n_modes, n), delta)[0]) for n in n_max_values]


def polaron_fock_state(state, trunc: FockTruncation, space: FockSpace | None = None) -> np.ndarray:
    """Embed a hardcore two-excitation state (dynamics.TwoExcState) in Fock space."""
    sp = space or FockSpace(trunc)
    if trunc.n_max < 2 and np.any(np.diag(state.psi2)):
        raise ParameterError("doubly occupied modes need n_max >= 2")
    m = trunc.n_modes
    if state.n_modes != m:
        raise ParameterError("state and truncation disagree on the number of modes")
    v = np.zeros(trunc.dimension, dtype=complex)

    def occ(*modes):
        o = [0] * m
        for k in modes:
            o[k] += 1
        return o

    v[sp.index("g", occ())] += state.g0
    v[sp.index("e", occ())] += state.e0
    for k in range(m):
        v[sp.index("g", occ(k))] += state.c1[k]
        v[sp.index("e", occ(k))] += state.d[k]
        for p in range(k, m):
            amp = state.psi2[k, p] if p != k else state.psi2[k, k] / math.sqrt(2.0)
            if amp != 0:
                v[sp.index("g", occ(k, p))] += amp
    return v


@dataclass
class OracleRecord:
    time: float
    p_e: float
    n_excit: float
    leakage: float


def _leakage(vec: np.ndarray, sp: FockSpace) -> float:
    prob = np.abs(vec.reshape(2, sp.dim_b)) ** 2
    top = np.any(sp.occupations == sp.trunc.n_max, axis=1)
    return float(prob[:, top].sum())


def exact_evolve(grid: ModeGrid, params: PolaronParams, trunc: FockTruncation, initial_polaron: np.ndarray,
                 times, delta: float | None = None) -> list[OracleRecord]:
    """Evolve a polaron-frame Fock vector under the full lab-frame Hamiltonian.

    Observables are evaluated on U_P^+ psi_lab. A population above 1e-4 on
    the top Fock level triggers an AccuracyWarning.
    """
    sp = FockSpace(trunc)
    delta = params.delta if delta is None else delta
    h = spin_boson_hamiltonian(grid, trunc, delta, sp)
    u = polaron_unitary(params, trunc, sp)
    ev, vec = eigh(h)
    psi0 = u @ np.asarray(initial_polaron, dtype=complex)
    coeff = vec.conj().T @ psi0
    number = sp.total_number()
    excited = np.repeat([0.0, 1.0], sp.dim_b)
    out = []
    worst = 0.0
    for t in times:
        lab = vec @ (np.exp(-1j * ev * t) * coeff)
        pol = u.conj().T @ lab
        prob = np.abs(pol) ** 2
        leak = _leakage(lab, sp)
        worst = max(worst, leak)
        out.append(OracleRecord(float(t), float(prob @ excited), float(prob @ number), leak))
    if worst > LEAKAGE_LIMIT:
        warnings.warn(
            f"truncation leakage {worst:.2e} at n_max={trunc.n_max} exceeds {LEAKAGE_LIMIT}",
            AccuracyWarning,
            stacklevel=2,
        )
    return out


def number_drift(records: list[OracleRecord]) -> float:
    n0 = records[0].n_excit
    return max(abs(r.n_excit - n0) for r in records) / n0


@dataclass
class DynamicsComparison:
    times: np.ndarray
    p_e_exact: np.ndarray
    p_e_model: np.ndarray
    n_exact: np.ndarray
    n_model: np.ndarray

    @property
    def sup_error(self) -> float:
        return float(np.max(np.abs(self.p_e_exact - self.p_e_model)))

    @property
    def relative_sup_error(self) -> float:
        return self.sup_error / float(np.max(np.abs(self.p_e_exact)))


def compare_dynamics(grid: ModeGrid, params: PolaronParams, trunc: FockTruncation, state,
                     t_final: float, dt_report: float = 0.25) -> DynamicsComparison:
    """Run the same polaron-frame initial state through the exact model and the
    number-conserving model and return both P_e(t) and N_excit(t)."""
    from .dynamics import assemble_hamiltonian, enumerate_basis, run_dynamics

    basis = enumerate_basis(grid)
    h = assemble_hamiltonian(basis, params, grid)
    _, recs = run_dynamics(state, h, t_final, dt_report, method="expm")
    times = np.array([r.time - state.time for r in recs])
    exact = exact_evolve(grid, params, trunc, polaron_fock_state(state, trunc), times)
    return DynamicsComparison(
        times=times,
        p_e_exact=np.array([r.p_e for r in exact]),
        p_e_model=np.array([r.p_e for r in recs]),
        n_exact=np.array([r.n_excit for r in exact]),
        n_model=np.array([r.n_excit for r in recs]),
    )
