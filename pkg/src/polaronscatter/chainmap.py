"""Star-to-chain mapping of the polaron-frame bath.

The collective mode c0 = F / theta is the first site of a tight-binding
chain; subsequent sites come from a Lanczos recursion of diag(w_k) seeded
with f / theta:

    H_bath = sum_r alpha_r c_r^+ c_r + beta_r (c_{r+1}^+ c_r + h.c.)

and the qubit couples to c0 with strength beta0 = Delta~ theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DegenerateInputError
from .model import ModeGrid
from .polaron import PolaronParams


@dataclass(frozen=True)
class ChainCoefficients:
    theta: float
    beta0: float
    delta_tilde: float
    alphas: np.ndarray
    betas: np.ndarray
    basis: np.ndarray = field(repr=False)

    @property
    def length(self) -> int:
        return len(self.alphas)

    def tridiagonal(self) -> np.ndarray:
        return np.diag(self.alphas) + np.diag(self.betas, 1) + np.diag(self.betas, -1)

    def eigenvalues(self) -> np.ndarray:
        if self.length == 1:
            return self.alphas.copy()
        return eigh_tridiagonal(self.alphas, self.betas, eigvals_only=True)

    def orthogonality_error(self) -> float:
        q = self.basis
        return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1]))))

    def header(self) -> dict:
        return {"theta": self.theta, "beta0": self.beta0, "delta_tilde": self.delta_tilde,
                "length": self.length}


def lanczos(diag: np.ndarray, seed: np.ndarray, max_steps: int | None = None,
            breakdown: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lanczos on diag(``diag``) with full reorthogonalization.

    Returns (alphas, betas, Q) with Q holding the orthonormal Lanczos vectors
    as columns. Stops when the next beta falls below ``breakdown``.
    """
    n = len(diag)
    max_steps = n if max_steps is None else min(max_steps, n)
    if breakdown is None:
        breakdown = 1e-13 * max(1.0, float(np.max(np.abs(diag))))
    q = seed / np.linalg.norm(seed)
    basis = [q]
    alphas, betas = [], []
    for _ in range(max_steps):
        w = diag * q
        a = float(q @ w)
        alphas.append(a)
        w = w - a * q
        if betas:
            w = w - betas[-1] * basis[-2]
        qmat = np.array(basis).T
        for _ in range(2):
            w = w - qmat @ (qmat.T @ w)
        b = float(np.linalg.norm(w))
        if len(alphas) == max_steps or b < breakdown:
            break
        betas.append(b)
        q = w / b
        basis.append(q)
    return np.array(alphas), np.array(betas), np.array(basis).T


def chain_coefficients(params: PolaronParams, grid: ModeGrid) -> ChainCoefficients:
    """Chain parameters for the bath seen through F = sum f_k A_k.

    Raises:
        DegenerateInputError: theta = 0 (no coupling, no bath to map).
    """
    f = np.asarray(params.f, dtype=float)
    theta = float(params.theta)
    if theta == 0.0:
        raise DegenerateInputError("no bath to map: all displacements vanish (theta = 0)")
    alphas, betas, q = lanczos(np.asarray(grid.omegas, dtype=float), f / theta)
    return ChainCoefficients(
        theta=theta,
        beta0=params.delta_tilde * theta,
        delta_tilde=params.delta_tilde,
        alphas=alphas,
        betas=betas,
        basis=q,
    )
