"""Phase-space geometry: ternary distance, admissible and good configurations,
the transition map onto the velocity ellipsoid, and Monte Carlo measure
estimates on the (2d-1)-sphere and the ellipsoid."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .collision import ImpactPair, relative_cross_section, relative_speed2, sample_unit_sphere


class DomainError(ValueError):
    """Input lies outside the domain on which an operation is defined."""


class DegenerateInputError(DomainError):
    pass


class MCEstimate(NamedTuple):
    value: float
    std_error: float


@dataclass
class Configuration:
    """Positions and velocities of m particles in R^d, arrays of shape (m, d)."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.positions.shape != self.velocities.shape:
            raise ValueError(
                f"positions {self.positions.shape} and velocities {self.velocities.shape} differ"
            )
        if self.positions.shape[0] < 1:
            raise ValueError("a configuration needs at least one particle")

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "Configuration":
        return Configuration(self.positions.copy(), self.velocities.copy())

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.sum(self.velocities**2))

    def momentum(self) -> np.ndarray:
        return self.velocities.sum(axis=0)


def minimum_image(dx, box: float | None):
    if box is None:
        return dx
    return dx - box * np.rint(dx / box)


def ternary_distance(x1, x2, x3, box: float | None = None):
    """sqrt(|x1 - x2|^2 + |x1 - x3|^2); symmetric in its last two arguments only."""
    a = minimum_image(np.asarray(x1, float) - np.asarray(x2, float), box)
    b = minimum_image(np.asarray(x1, float) - np.asarray(x3, float), box)
    return np.sqrt(np.sum(a * a, axis=-1) + np.sum(b * b, axis=-1))


def triplet_indices(m: int, symmetric: bool = False) -> np.ndarray:
    """Interaction triplets (center, j, k) as an int array of shape (n, 3).

    The default is the ordered index set i < j < k with the smallest index as
    center.  ``symmetric=True`` lets each of the three particles act as center.
    """
    if m < 3:
        return np.empty((0, 3), dtype=np.int64)
    base = np.array(list(combinations(range(m), 3)), dtype=np.int64)
    if not symmetric:
        return base
    i, j, k = base.T
    return np.concatenate([base, np.stack([j, i, k], 1), np.stack([k, i, j], 1)])


def in_phase_space(
    z: Configuration, eps: float, box: float | None = None, symmetric: bool = False
) -> bool:
    """Whether d^2(x_i; x_j, x_k) >= 2 eps^2 for every interaction triplet."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if z.count <= 2:
        return True
    return bool(np.all(triplet_distance2(z.positions, triplet_indices(z.count, symmetric), box) >= 2 * eps * eps))


def triplet_distance2(x: np.ndarray, trip: np.ndarray, box: float | None = None) -> np.ndarray:
    a = minimum_image(x[trip[:, 1]] - x[trip[:, 0]], box)
    b = minimum_image(x[trip[:, 2]] - x[trip[:, 0]], box)
    return np.sum(a * a, axis=1) + np.sum(b * b, axis=1)


def min_backward_separation(dx, dv, t0: float = 0.0) -> float:
    """min over t >= t0 of |dx - t dv|, from the vertex of the quadratic."""
    dx = np.asarray(dx, dtype=float)
    dv = np.asarray(dv, dtype=float)
    vv = float(dv @ dv)
    if vv == 0.0:
        return float(np.linalg.norm(dx))
    t = max(t0, float(dx @ dv) / vv)
    return float(np.linalg.norm(dx - t * dv))


def is_good_configuration(z: Configuration, sigma: float, t0: float) -> bool:
    """Whether the backward free flow X - tV keeps every pair more than sigma
    apart for all t >= t0."""
    if sigma <= 0 or t0 < 0:
        raise ValueError("need sigma > 0 and t0 >= 0")
    x, v = z.positions, z.velocities
    for i, j in combinations(range(z.count), 2):
        if min_backward_separation(x[i] - x[j], v[i] - v[j], t0) <= sigma:
            return False
    return True


# -- transition map ---------------------------------------------------------


@dataclass
class TransitionImage:
    nu1: np.ndarray
    nu2: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.nu1, self.nu2], axis=-1)


def ellipsoid_form(nu1, nu2) -> np.ndarray:
    """|nu1|^2 + |nu2|^2 + |nu1 - nu2|^2."""
    nu1 = np.asarray(nu1, float)
    nu2 = np.asarray(nu2, float)
    diff = nu1 - nu2
    return np.sum(nu1 * nu1, -1) + np.sum(nu2 * nu2, -1) + np.sum(diff * diff, -1)


def transition_raw(v, w) -> np.ndarray:
    """The transition map on the open domain of R^{2d} (no sphere projection).

    ``w`` is the stacked vector (omega1, omega2).  Used directly by finite
    differences, which need to leave the sphere.
    """
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    d = v.shape[-1]
    w1, w2 = w[..., :d], w[..., d:]
    rel = np.concatenate([v[..., 0, :] - v[..., 1, :], v[..., 0, :] - v[..., 2, :]], axis=-1)
    r = np.sqrt(relative_speed2(v))
    c = -np.sum(w * rel, -1) / (1.0 + np.sum(w1 * w2, -1))
    aw = np.concatenate([2 * w1 + w2, w1 + 2 * w2], axis=-1)
    return (rel + c[..., None] * aw) / r[..., None]


def _check_transition_domain(v, pair: ImpactPair):
    r2 = relative_speed2(v)
    if np.any(r2 == 0.0):
        raise DegenerateInputError("all three velocities coincide (r = 0)")
    b = relative_cross_section(pair, v)
    if np.any(b <= 0.0):
        raise DomainError("transition map needs b(omega, v2 - v1, v3 - v1) > 0")
    return r2, b


def transition_map(v, pair: ImpactPair) -> TransitionImage:
    """Normalized post-collisional relative velocities (v1* - v2*, v1* - v3*) / r."""
    v = np.asarray(v, float)
    _check_transition_domain(v, pair)
    nu = transition_raw(v, pair.stacked)
    d = v.shape[-1]
    return TransitionImage(nu[..., :d], nu[..., d:])


def transition_jacobian(v, pair: ImpactPair) -> np.ndarray:
    """Closed-form Jacobian 3^d * 2 * r^{-2d} * c^{2d} / (1 + <omega1, omega2>)."""
    v = np.asarray(v, float)
    r2, b = _check_transition_domain(v, pair)
    d = v.shape[-1]
    one_pi = 1.0 + pair.inner()
    c = b / one_pi
    return 3.0**d * 2.0 * (c * c / r2) ** d / one_pi


def fd_jacobian_determinant(v, w, step: float = 1e-6) -> float:
    """Determinant of the central-difference derivative of ``transition_raw``."""
    w = np.asarray(w, float)
    n = w.size
    jac = np.empty((n, n))
    for col in range(n):
        e = np.zeros(n)
        e[col] = step
        jac[:, col] = (transition_raw(v, w + e) - transition_raw(v, w - e)) / (2 * step)
    return float(np.linalg.det(jac))


# -- measure estimates ------------------------------------------------------


@dataclass(frozen=True)
class CylinderSpec:
    """Points within ``radius`` of the line center + lambda * direction."""

    center: np.ndarray
    direction: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, float)
        y = np.asarray(self.direction, float)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise ValueError("cylinder direction must be nonzero")
        if self.radius <= 0:
            raise ValueError("cylinder radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "direction", y / norm)

    def contains(self, x) -> np.ndarray:
        rel = np.asarray(x, float) - self.center
        along = rel @ self.direction
        perp2 = np.sum(rel * rel, -1) - along * along
        return perp2 <= self.radius**2

    def with_radius(self, radius: float) -> "CylinderSpec":
        return CylinderSpec(self.center, self.direction, radius)


def axis_cylinder(d: int, radius: float) -> CylinderSpec:
    """Cylinder around the first coordinate axis."""
    y = np.zeros(d)
    y[0] = 1.0
    return CylinderSpec(np.zeros(d), y, radius)


def _fraction(hits: np.ndarray) -> MCEstimate:
    p = float(hits.mean())
    return MCEstimate(p, float(np.sqrt(p * (1 - p) / hits.size)))


def mc_sphere_cylinder_fraction(d: int, cyl: CylinderSpec, n_samples: int, rng_seed) -> MCEstimate:
    """Surface fraction of the unit (2d-1)-sphere with omega1 inside ``cyl``."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    w = sample_unit_sphere(2 * d, n_samples, rng_seed)
    return _fraction(cyl.contains(w[:, :d]))


def mc_sphere_surface_cylinder_fraction(d: int, cyl: CylinderSpec, n_samples: int, rng_seed) -> MCEstimate:
    """Surface fraction of the unit (d-1)-sphere inside ``cyl``.

    The single-sphere counterpart of :func:`mc_sphere_cylinder_fraction`.  A
    cylinder tangent to the sphere cuts a cap of width sqrt(rho) along its axis
    and rho across it, so the fraction decays like rho^{d - 3/2}; in d = 2 that
    is the rho^{(d-1)/2} rate.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    return _fraction(cyl.contains(sample_unit_sphere(d, n_samples, rng_seed)))


# P1 maps the ellipsoid {|n1|^2 + |n2|^2 + |n1 - n2|^2 = 1} onto the unit sphere.
_P1_BLOCKS = np.array([[np.sqrt(6) / 2, 0.0], [-np.sqrt(2) / 2, np.sqrt(2)]])


def ellipsoid_embedding(d: int) -> np.ndarray:
    return np.kron(_P1_BLOCKS, np.eye(d))


def sample_ellipsoid(d: int, n_samples: int, rng_seed):
    """Weighted points (nu, weight) representing the surface measure of the ellipsoid.

    Sphere samples theta are pushed through P1^{-1}; the area element of the
    image is proportional to |P1^T theta|, which becomes the weight.
    """
    p1 = ellipsoid_embedding(d)
    theta = sample_unit_sphere(2 * d, n_samples, rng_seed)
    nu = np.linalg.solve(p1, theta.T).T
    weight = np.linalg.norm(theta @ p1, axis=1)
    return nu, weight


ELLIPSOID_REGIONS = ("ball-first-block", "ball-second-block", "strip", "cylinder-first-block")


def ellipsoid_region_mask(nu: np.ndarray, region: str, rho: float | None = None, cyl: CylinderSpec | None = None):
    d = nu.shape[-1] // 2
    nu1, nu2 = nu[..., :d], nu[..., d:]
    if region == "cylinder-first-block":
        if cyl is None:
            raise ValueError("cylinder-first-block needs a CylinderSpec")
        return cyl.contains(nu1)
    if region not in ELLIPSOID_REGIONS:
        raise ValueError(f"unknown ellipsoid region {region!r}; expected one of {ELLIPSOID_REGIONS}")
    if rho is None or rho <= 0:
        raise ValueError(f"region {region!r} needs rho > 0")
    if region == "ball-first-block":
        block = nu1
    elif region == "ball-second-block":
        block = nu2
    else:
        block = nu1 - nu2
    return np.sum(block * block, -1) <= rho * rho


def mc_ellipsoid_cap_fraction(
    d: int,
    region: str,
    n_samples: int,
    rng_seed,
    rho: float | None = None,
    cyl: CylinderSpec | None = None,
) -> MCEstimate:
    """Surface-measure fraction of the velocity ellipsoid inside a region."""
    if region not in ELLIPSOID_REGIONS:
        raise ValueError(f"unknown ellipsoid region {region!r}; expected one of {ELLIPSOID_REGIONS}")
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    nu, weight = sample_ellipsoid(d, n_samples, rng_seed)
    hit = ellipsoid_region_mask(nu, region, rho, cyl)
    total = weight.sum()
    p = float(weight[hit].sum() / total)
    se = float(np.sqrt(np.sum((weight * (hit - p)) ** 2)) / total)
    return MCEstimate(p, se)


def loglog_slope(rhos, fractions) -> float:
    """Least-squares slope of log(fraction) against log(rho), skipping empty points."""
    rhos = np.asarray(rhos, float)
    fr = np.asarray(fractions, float)
    keep = fr > 0
    if keep.sum() < 2:
        raise ValueError("need at least two nonzero fractions to fit a slope")
    return float(np.polyfit(np.log(rhos[keep]), np.log(fr[keep]), 1)[0])


MEASURE_KINDS = ("sphere-cylinder", "sphere-surface-tangent", *ELLIPSOID_REGIONS)


def measure_fraction(kind: str, d: int, rho: float, n_samples: int, rng_seed) -> MCEstimate:
    """One point of a measure-versus-rho curve for the named set family."""
    if kind == "sphere-cylinder":
        return mc_sphere_cylinder_fraction(d, axis_cylinder(d, rho), n_samples, rng_seed)
    if kind == "sphere-surface-tangent":
        e = np.eye(d)
        return mc_sphere_surface_cylinder_fraction(d, CylinderSpec(e[1], e[0], rho), n_samples, rng_seed)
    if kind == "cylinder-first-block":
        return mc_ellipsoid_cap_fraction(d, kind, n_samples, rng_seed, cyl=axis_cylinder(d, rho))
    return mc_ellipsoid_cap_fraction(d, kind, n_samples, rng_seed, rho=rho)


def measure_curve(kind: str, d: int, rhos, n_samples: int, rng_seed=0):
    """Fractions at each rho and the fitted log-log slope."""
    seeds = np.random.SeedSequence(rng_seed).spawn(len(rhos))
    est = [measure_fraction(kind, d, float(r), n_samples, s) for r, s in zip(rhos, seeds)]
    return est, loglog_slope(rhos, [e.value for e in est])
