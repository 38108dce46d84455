"""Nonlinear Helmholtz scattering on a disk with a truncated DtN boundary."""

__version__ = "0.1.0"

from .context import WaveContext  # noqa: E402
from .errors import (  # noqa: E402
    AliasingError,
    AssemblyError,
    CapabilityError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    HelmholtzError,
    MeshError,
    SweepError,
)

__all__ = [
    "WaveContext",
    "HelmholtzError",
    "DomainError",
    "CapabilityError",
    "AliasingError",
    "ConfigurationError",
    "MeshError",
    "AssemblyError",
    "DivergenceError",
    "SweepError",
]
