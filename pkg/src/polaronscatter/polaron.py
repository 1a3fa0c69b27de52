"""Self-consistent polaron displacements and renormalized gap."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, ParameterError
from .model import ModeGrid

ALPHA_MAX = 0.49
ALPHA_WARN = 0.3


@dataclass(frozen=True)
class PolaronParams:
    f: np.ndarray = field(repr=False)
    delta_tilde: float
    theta: float
    delta0: float
    e0: float
    converged: bool
    iterations: int
    residual: float
    delta: float = 1.0

    @property
    def vacuum_energy(self) -> float:
        """<0|H_P|0> = -Delta~/2 + E0, the variational ground-energy estimate."""
        return -0.5 * self.delta_tilde + self.e0

    @classmethod
    def at_gap(cls, grid: ModeGrid, delta_tilde: float, delta: float | None = None) -> "PolaronParams":
        """Constants built from a prescribed gap, skipping self-consistency.

        Useful when a formula must be evaluated in units of a fixed Delta~.
        """
        if not delta_tilde > 0:
            raise ParameterError("delta_tilde must be positive")
        f = grid.g / (grid.omegas + delta_tilde)
        theta2 = float(np.sum(f**2))
        if delta is None:
            delta = delta_tilde * math.exp(2.0 * theta2)
        e0 = float(np.sum(grid.omegas * f**2 - 2.0 * grid.g * f))
        return cls(
            f=_ro(f),
            delta_tilde=float(delta_tilde),
            theta=math.sqrt(theta2),
            delta0=2.0 * delta_tilde,
            e0=e0,
            converged=False,
            iterations=0,
            residual=abs(delta_tilde - delta * math.exp(-2.0 * theta2)),
            delta=float(delta),
        )

    def to_dict(self) -> dict:
        return {
            "f": self.f.tolist(),
            "delta_tilde": self.delta_tilde,
            "theta": self.theta,
            "delta0": self.delta0,
            "e0": self.e0,
            "vacuum_energy": self.vacuum_energy,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "delta": self.delta,
        }


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= ALPHA_MAX:
        raise ParameterError(f"alpha must be in [0, {ALPHA_MAX}] (got {alpha})")
    if alpha > ALPHA_WARN:
        warnings.warn(
            f"alpha={alpha} exceeds {ALPHA_WARN}; the number-conserving model is only "
            "validated at weaker coupling",
            stacklevel=3,
        )


def gap_map(grid: ModeGrid, delta: float, delta_tilde: float) -> float:
    """One application of Delta~ -> Delta exp(-2 sum_k g_k^2/(w_k + Delta~)^2)."""
    denom = grid.omegas + delta_tilde
    if np.any(denom <= 0):
        raise DomainError("w_k + Delta~ must stay positive")
    return delta * math.exp(-2.0 * float(np.sum((grid.g / denom) ** 2)))


def solve_polaron(
    grid: ModeGrid,
    delta: float = 1.0,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    init: float | None = None,
    damping: float = 0.5,
) -> PolaronParams:
    """Solve f_k = g_k/(w_k + Delta~), Delta~ = Delta exp(-2 sum f_k^2).

    Damped fixed-point iteration on Delta~, stopped once
    |Delta~ - map(Delta~)| < tol * delta. If the residual stops decreasing the solver
    switches to bracketing root search on Delta~ - map(Delta~).
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if not 0 < damping <= 1:
        raise ParameterError("damping must lie in (0, 1]")
    check_alpha(grid.alpha)

    x = delta if init is None else float(init)
    if not 0 < x <= delta:
        raise ParameterError("initial gap must lie in (0, delta]")

    converged = False
    it = 0
    best = math.inf
    stalled = 0
    for it in range(1, max_iter + 1):
        target = gap_map(grid, delta, x)
        step = abs(target - x)
        if step < tol * delta:
            converged = True
            break
        x = (1.0 - damping) * x + damping * target
        if step < best * (1 - 1e-3):
            best, stalled = step, 0
        else:
            stalled += 1
            if stalled > 50:
                break

    if not converged:
        def resid(y):
            return y - gap_map(grid, delta, y)

        lo, hi = 1e-300, delta
        if resid(lo) * resid(hi) > 0:
            raise ConvergenceError(
                "polaron self-consistency has no bracketed root", residual=abs(resid(x)), iterations=it
            )
        x, info = brentq(resid, lo, hi, xtol=tol * delta * 1e-2, rtol=4 * np.finfo(float).eps,
                         maxiter=max_iter, full_output=True, disp=False)
        it += info.iterations
        converged = info.converged and abs(resid(x)) < 10 * tol * delta

    f = grid.g / (grid.omegas + x)
    theta2 = float(np.sum(f**2))
    residual = abs(x - delta * math.exp(-2.0 * theta2))
    if not converged:
        raise ConvergenceError(
            f"polaron solver did not converge in {max_iter} iterations", residual=residual, iterations=it
        )
    e0 = float(np.sum(grid.omegas * f**2 - 2.0 * grid.g * f))
    return PolaronParams(
        f=_ro(f),
        delta_tilde=float(x),
        theta=math.sqrt(theta2),
        delta0=2.0 * x,
        e0=e0,
        converged=True,
        iterations=it,
        residual=residual,
        delta=float(delta),
    )
