"""Ternary collisional transformation, cross-section and collision classes.

Every function broadcasts over leading axes: an :class:`ImpactPair` may hold a
single pair (``omega1.shape == (d,)``) or a batch (``(n, d)``), and velocity
triples are arrays of shape ``(..., 3, d)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

SPHERE_TOL = 1e-12
DEGENERATE_NORM2 = 1e-6


class CollisionClass(enum.Enum):
    PRE = "pre"
    POST = "post"
    GRAZING = "grazing"

    def opposite(self) -> "CollisionClass":
        if self is CollisionClass.PRE:
            return CollisionClass.POST
        if self is CollisionClass.POST:
            return CollisionClass.PRE
        return self


@dataclass(frozen=True)
class ImpactPair:
    """A point (omega1, omega2) on the unit sphere of R^{2d}.

    Inputs whose squared norm is off the sphere by more than ``SPHERE_TOL`` are
    rescaled onto it; inputs with squared norm below ``DEGENERATE_NORM2`` have
    no direction and are rejected.
    """

    omega1: np.ndarray
    omega2: np.ndarray

    def __post_init__(self):
        w1 = np.array(self.omega1, dtype=float)
        w2 = np.array(self.omega2, dtype=float)
        if w1.shape != w2.shape or w1.ndim == 0:
            raise ValueError(f"omega1 {w1.shape} and omega2 {w2.shape} must share a shape (..., d)")
        if w1.shape[-1] < 2:
            raise ValueError("dimension d must be at least 2")
        norm2 = np.sum(w1 * w1, axis=-1) + np.sum(w2 * w2, axis=-1)
        if np.any(norm2 < DEGENERATE_NORM2):
            raise ValueError("impact pair too close to zero to define a direction")
        off = np.abs(norm2 - 1.0) > SPHERE_TOL
        if np.any(off):
            scale = np.where(off, 1.0 / np.sqrt(norm2), 1.0)[..., None]
            w1 = w1 * scale
            w2 = w2 * scale
        w1.setflags(write=False)
        w2.setflags(write=False)
        object.__setattr__(self, "omega1", w1)
        object.__setattr__(self, "omega2", w2)

    @property
    def dim(self) -> int:
        return self.omega1.shape[-1]

    @property
    def stacked(self) -> np.ndarray:
        """The pair as one vector of R^{2d}."""
        return np.concatenate([self.omega1, self.omega2], axis=-1)

    def inner(self) -> np.ndarray:
        """<omega1, omega2>, always within [-1/2, 1/2]."""
        return np.sum(self.omega1 * self.omega2, axis=-1)

    def __neg__(self) -> "ImpactPair":
        return ImpactPair(-self.omega1, -self.omega2)

    def __getitem__(self, idx) -> "ImpactPair":
        return ImpactPair(self.omega1[idx], self.omega2[idx])

    def __len__(self) -> int:
        if self.omega1.ndim == 1:
            raise TypeError("single ImpactPair has no length")
        return self.omega1.shape[0]

    @classmethod
    def from_vector(cls, w) -> "ImpactPair":
        w = np.asarray(w, dtype=float)
        if w.shape[-1] % 2:
            raise ValueError("stacked impact vector must have even length 2d")
        d = w.shape[-1] // 2
        return cls(w[..., :d], w[..., d:])

    @classmethod
    def random(cls, d: int, size=None, rng=None) -> "ImpactPair":
        """Uniform draws from the surface measure of the unit sphere in R^{2d}."""
        return cls.from_vector(sample_unit_sphere(2 * d, size, rng))


def sample_unit_sphere(n: int, size=None, rng=None) -> np.ndarray:
    """Uniform points on the unit sphere of R^n (normalized Gaussian vectors)."""
    rng = np.random.default_rng(rng)
    shape = (n,) if size is None else (*np.atleast_1d(size), n)
    x = rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _triple(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim < 2 or v.shape[-2] != 3:
        raise ValueError(f"velocity triple must have shape (..., 3, d), got {v.shape}")
    return v


def _check_dims(pair: ImpactPair, d: int) -> None:
    if pair.dim != d:
        raise ValueError(f"dimension mismatch: impact pair has d={pair.dim}, vectors have d={d}")


def cross_section(pair: ImpactPair, nu1, nu2) -> np.ndarray:
    """b(omega1, omega2, nu1, nu2) = <omega1, nu1> + <omega2, nu2>."""
    nu1 = np.asarray(nu1, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    if nu1.shape[-1] != nu2.shape[-1]:
        raise ValueError("nu1 and nu2 have different dimensions")
    _check_dims(pair, nu1.shape[-1])
    return np.sum(pair.omega1 * nu1, axis=-1) + np.sum(pair.omega2 * nu2, axis=-1)


def relative_cross_section(pair: ImpactPair, v) -> np.ndarray:
    """Cross-section of a triple: b(omega1, omega2, v2 - v1, v3 - v1)."""
    v = _triple(v)
    return cross_section(pair, v[..., 1, :] - v[..., 0, :], v[..., 2, :] - v[..., 0, :])


def c_factor(pair: ImpactPair, v) -> np.ndarray:
    v = _triple(v)
    return relative_cross_section(pair, v) / (1.0 + pair.inner())


def collide(pair: ImpactPair, v) -> np.ndarray:
    """Apply the collisional transformation to a velocity triple.

    Returns ``(v1 + c(w1 + w2), v2 - c w1, v3 - c w2)`` stacked like ``v``.
    The map is a linear involution conserving momentum and energy.
    """
    v = _triple(v)
    _check_dims(pair, v.shape[-1])
    c = c_factor(pair, v)[..., None]
    w1, w2 = pair.omega1, pair.omega2
    out = np.empty(np.broadcast_shapes(v.shape, (*np.shape(c)[:-1], 3, v.shape[-1])))
    out[..., 0, :] = v[..., 0, :] + c * (w1 + w2)
    out[..., 1, :] = v[..., 1, :] - c * w1
    out[..., 2, :] = v[..., 2, :] - c * w2
    return out


def classify_value(b: float) -> CollisionClass:
    if b < 0.0:
        return CollisionClass.PRE
    if b > 0.0:
        return CollisionClass.POST
    return CollisionClass.GRAZING


def classify(pair: ImpactPair, v) -> CollisionClass:
    """Exact-sign classification of a single contact."""
    b = relative_cross_section(pair, v)
    if np.ndim(b):
        raise ValueError("classify takes a single pair and triple; use relative_cross_section for batches")
    return classify_value(float(b))


def relative_speed2(v) -> np.ndarray:
    """|v1 - v2|^2 + |v1 - v3|^2 + |v2 - v3|^2."""
    v = _triple(v)
    d12 = v[..., 0, :] - v[..., 1, :]
    d13 = v[..., 0, :] - v[..., 2, :]
    d23 = v[..., 1, :] - v[..., 2, :]
    return np.sum(d12 * d12 + d13 * d13 + d23 * d23, axis=-1)


def is_conservation_solution(v, vprime, tol: float) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = _triple(v)
    vprime = _triple(vprime)
    dp = np.abs(vprime.sum(axis=-2) - v.sum(axis=-2))
    de = abs(np.sum(vprime * vprime) - np.sum(v * v))
    return bool(np.all(dp <= tol) and de <= tol)


def impact_pair_for_solution(v, vprime) -> ImpactPair | None:
    """Recover an impact pair whose collision maps ``v`` to ``vprime``.

    For a conservation solution with vprime != v, the displacement of the
    second and third velocities is -c*(omega1, omega2), so the pair is that
    displacement normalized (either sign works since T_{-w} = T_w).
    Returns None for the identity solution, which arises from any grazing pair.
    """
    v = _triple(v)
    vprime = _triple(vprime)
    w = -np.concatenate([vprime[1] - v[1], vprime[2] - v[2]])
    norm = np.linalg.norm(w)
    if norm == 0.0:
        return None
    return ImpactPair.from_vector(w / norm)


def check_collision_invariant(
    phi: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    rng_seed: int,
    d: int = 2,
) -> float:
    """Max |sum phi(v*) - sum phi(v)| over random collisions.

    ``phi`` maps an array of velocities of shape (..., d) to values of shape (...).
    Velocities are standard normal, impact pairs uniform on the sphere.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal((n_samples, 3, d))
    pair = ImpactPair.random(d, n_samples, rng)
    vs = collide(pair, v)
    return float(np.max(np.abs(phi(vs).sum(axis=-1) - phi(v).sum(axis=-1))))
