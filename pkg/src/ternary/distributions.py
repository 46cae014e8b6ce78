"""Velocity laws used for initial data: Maxwellians and two-temperature mixtures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MaxwellianParams:
    """R (2 pi T)^{-d/2} exp(-|v - U|^2 / 2T)."""

    R: float
    U: tuple
    T: float

    def __post_init__(self):
        if self.R <= 0 or self.T <= 0:
            raise ValueError(f"Maxwellian needs R > 0 and T > 0, got R={self.R}, T={self.T}")
        object.__setattr__(self, "U", tuple(float(u) for u in np.atleast_1d(self.U)))

    @property
    def dim(self) -> int:
        return len(self.U)

    def density(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        d = self.dim
        du = v - np.asarray(self.U)
        return self.R * (2 * np.pi * self.T) ** (-d / 2) * np.exp(-np.sum(du * du, -1) / (2 * self.T))

    def sample(self, n: int, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        return np.asarray(self.U) + np.sqrt(self.T) * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class TwoTemperatureMixture:
    """Equal-weight (by default) mixture of two centered Maxwellians."""

    dim: int
    T_low: float = 0.5
    T_high: float = 2.0
    frac_low: float = 0.5
    U: tuple = field(default=None)

    def __post_init__(self):
        if self.T_low <= 0 or self.T_high <= 0:
            raise ValueError("mixture temperatures must be positive")
        if not 0.0 <= self.frac_low <= 1.0:
            raise ValueError("frac_low must lie in [0, 1]")
        u = (0.0,) * self.dim if self.U is None else tuple(float(x) for x in self.U)
        object.__setattr__(self, "U", u)

    @property
    def R(self) -> float:
        return 1.0

    @property
    def T(self) -> float:
        """Temperature of the Maxwellian with the same energy."""
        return self.frac_low * self.T_low + (1 - self.frac_low) * self.T_high

    def density(self, v) -> np.ndarray:
        lo = MaxwellianParams(self.frac_low, self.U, self.T_low) if self.frac_low > 0 else None
        hi = MaxwellianParams(1 - self.frac_low, self.U, self.T_high) if self.frac_low < 1 else None
        return sum(m.density(v) for m in (lo, hi) if m is not None)

    def sample(self, n: int, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        temps = np.where(rng.random(n) < self.frac_low, self.T_low, self.T_high)
        return np.asarray(self.U) + np.sqrt(temps)[:, None] * rng.standard_normal((n, self.dim))

    def equilibrium(self) -> MaxwellianParams:
        return MaxwellianParams(1.0, self.U, self.T)
