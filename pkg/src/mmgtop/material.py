"""SIMP interpolation of conductivity and heat generation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmgtop.errors import ConfigurationError


@dataclass(frozen=True)
class MaterialModel:
    kappa_lo: float = 1.0
    kappa_hi: float = 1.0e4
    f0: float = 1.0
    p: int = 3

    def __post_init__(self):
        if not 0 < self.kappa_lo < self.kappa_hi:
            raise ConfigurationError("need 0 < kappa_lo < kappa_hi")
        if self.f0 < 0:
            raise ConfigurationError("f0 must be nonnegative")
        if int(self.p) != self.p or self.p < 1:
            raise ConfigurationError("penalization p must be a positive integer")

    @classmethod
    def from_contrast(cls, cr: int, kappa_lo: float = 1.0, f0: float = 1.0, p: int = 3) -> "MaterialModel":
        """Material with kappa_hi / kappa_lo = 10**cr."""
        return cls(kappa_lo, kappa_lo * 10.0**cr, f0, p)

    @property
    def contrast(self) -> float:
        return self.kappa_hi / self.kappa_lo


def _check(x):
    x = np.asarray(x, dtype=float)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("design variables must lie in [0, 1]")
    return x


def conductivity(x, m: MaterialModel) -> np.ndarray:
    x = _check(x)
    return m.kappa_lo + x**m.p * (m.kappa_hi - m.kappa_lo)


def heat_source(x, m: MaterialModel) -> np.ndarray:
    x = _check(x)
    return m.f0 * (1.0 - x**m.p)


def material_derivatives(x, m: MaterialModel) -> tuple[np.ndarray, np.ndarray]:
    """(d kappa / dx, d f / dx) per cell."""
    x = _check(x)
    xp1 = m.p * x ** (m.p - 1)  # integer power: 0**0 == 1, no negative exponents
    return xp1 * (m.kappa_hi - m.kappa_lo), -xp1 * m.f0
