from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class WaveContext:
    """Global problem parameters: wavenumber, radius of S_R, truncation order."""

    kappa: float
    R: float
    N: int
    dim: int = 2

    def __post_init__(self):
        if not (isinstance(self.kappa, (int, float)) and math.isfinite(self.kappa) and self.kappa > 0):
            raise ConfigurationError(f"kappa must be a positive real, got {self.kappa!r}", key="kappa")
        if not (math.isfinite(self.R) and self.R > 0):
            raise ConfigurationError(f"R must be a positive real, got {self.R!r}", key="R")
        if int(self.N) != self.N or self.N < 0:
            raise ConfigurationError(f"N must be a nonnegative integer, got {self.N!r}", key="N")
        if self.dim not in (2, 3):
            raise ConfigurationError(f"dim must be 2 or 3, got {self.dim!r}", key="dim")
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "N", int(self.N))

    @property
    def xi(self) -> float:
        """Dimensionless argument kappa*R of the DtN symbols."""
        return self.kappa * self.R

    def with_N(self, N: int) -> "WaveContext":
        return WaveContext(self.kappa, self.R, N, self.dim)
