"""Photon scattering off an ultrastrongly coupled emitter in a chiral waveguide,
via the polaron-frame number-conserving Hamiltonian."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AccuracyError,
    AccuracyWarning,
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    ParameterError,
    PolaronScatterError,
    ResourceError,
    SingularityError,
)
from .model import (  # noqa: E402
    CutoffKind,
    DispersionKind,
    ModeGrid,
    Wavepacket,
    build_mode_grid,
    gaussian_wavepacket,
    uniform_grid,
)
from .polaron import PolaronParams, solve_polaron  # noqa: E402

__all__ = [
    "__version__",
    "AccuracyError",
    "AccuracyWarning",
    "ConvergenceError",
    "CutoffKind",
    "DegenerateInputError",
    "DispersionKind",
    "DomainError",
    "ModeGrid",
    "ParameterError",
    "PolaronParams",
    "PolaronScatterError",
    "ResourceError",
    "SingularityError",
    "Wavepacket",
    "build_mode_grid",
    "gaussian_wavepacket",
    "solve_polaron",
    "uniform_grid",
]
