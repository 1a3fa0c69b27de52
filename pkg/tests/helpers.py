import warnings

import numpy as np
from scipy.optimize import brentq

from polaronscatter.linres import ContinuumSigma
from polaronscatter.model import uniform_grid
from polaronscatter.polaron import solve_polaron


def lamb_free_grid(alpha, n_modes=400):
    """Linear hard-cutoff grid whose cutoff is tuned so that the continuum
    Lamb shift Re Sigma(Delta~) vanishes at the self-consistent gap."""

    def shift(w_top):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = uniform_grid(n_modes, w_top, alpha)
            p = solve_polaron(g)
        return float(np.real(ContinuumSigma(p, g)(p.delta_tilde))), g, p

    w_top = brentq(lambda w: shift(w)[0], 1.2, 3.0, xtol=1e-12)
    _, g, p = shift(w_top)
    return g, p
