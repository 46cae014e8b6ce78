"""Boltzmann and BBGKY hierarchy pseudo-trajectories for a given collision history.

Both constructions start from s particles at time t and run backwards.  On
each interval [t_{i+1}, t_i] the particles fly freely; at t_i two particles are
adjoined next to particle m_i.  For a post-collisional adjunction (sign +1)
the velocities of m_i and the two new particles are replaced by their
collisional transform.  The Boltzmann version puts the new particles exactly
at x_{m_i}; the BBGKY version offsets them by -/+ sqrt(2) eps (w1, w2).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .collision import ImpactPair, collide
from .geometry import Configuration


@dataclass(frozen=True)
class PseudoTrajectorySpec:
    """Collision history of k adjunctions.

    ``times`` is (t, t_1, ..., t_k), strictly decreasing and positive.
    ``indices`` are 0-based: m_i addresses one of the s + 2(i - 1) particles
    present just before the i-th adjunction.  ``adjunctions`` holds one
    (ImpactPair, v_new1, v_new2) per adjunction.
    """

    s: int
    times: tuple
    signs: tuple
    indices: tuple
    adjunctions: tuple
    eps: float = 0.0

    def __post_init__(self):
        k = len(self.signs)
        if self.s < 1:
            raise ValueError("s must be at least 1")
        if len(self.times) != k + 1 or len(self.indices) != k or len(self.adjunctions) != k:
            raise ValueError("need k+1 times and k signs, indices and adjunctions")
        t = np.asarray(self.times, float)
        if np.any(np.diff(t) >= 0) or t[-1] <= 0:
            raise ValueError(f"times must be strictly decreasing and positive, got {self.times}")
        for i, (sign, m) in enumerate(zip(self.signs, self.indices), start=1):
            if sign not in (-1, 1):
                raise ValueError(f"sign {sign} of adjunction {i} is not -1 or +1")
            if not 0 <= m < self.s + 2 * (i - 1):
                raise ValueError(f"index {m} of adjunction {i} outside [0, {self.s + 2 * (i - 1)})")
        for pair, v1, v2 in self.adjunctions:
            if not isinstance(pair, ImpactPair) or np.ndim(pair.omega1) != 1:
                raise ValueError("each adjunction needs a single ImpactPair")
            if np.shape(v1) != (pair.dim,) or np.shape(v2) != (pair.dim,):
                raise ValueError("adjoined velocities must match the impact pair dimension")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")

    @property
    def k(self) -> int:
        return len(self.signs)


@dataclass(frozen=True)
class TrajectorySnapshot:
    """Configuration of s + 2 stage particles just after time t_{stage+1} (t_{k+1} = 0)."""

    stage: int
    time: float
    config: Configuration


def _construct(z0: Configuration, spec: PseudoTrajectorySpec, eps: float) -> list[TrajectorySnapshot]:
    if z0.count != spec.s:
        raise ValueError(f"initial configuration has {z0.count} particles, spec expects s={spec.s}")
    if spec.adjunctions and spec.adjunctions[0][0].dim != z0.dim:
        raise ValueError("spec and configuration dimensions differ")
    x = np.array(z0.positions, float)
    v = np.array(z0.velocities, float)
    bounds = list(spec.times) + [0.0]
    snaps = []
    for stage in range(spec.k + 1):
        if stage > 0:
            pair, w1, w2 = spec.adjunctions[stage - 1]
            sign = spec.signs[stage - 1]
            m = spec.indices[stage - 1]
            tri = np.stack([v[m], np.asarray(w1, float), np.asarray(w2, float)])
            if sign == 1:
                tri = collide(pair, tri)
            v[m] = tri[0]
            offset = sign * math.sqrt(2) * eps
            new_x = np.stack([x[m] + offset * pair.omega1, x[m] + offset * pair.omega2])
            x = np.concatenate([x, new_x])
            v = np.concatenate([v, tri[1:]])
        x = x - (bounds[stage] - bounds[stage + 1]) * v
        snaps.append(TrajectorySnapshot(stage, bounds[stage + 1], Configuration(x.copy(), v.copy())))
    return snaps


def boltzmann_pseudo_trajectory(z0: Configuration, spec: PseudoTrajectorySpec) -> list[TrajectorySnapshot]:
    return _construct(z0, spec, 0.0)


def bbgky_pseudo_trajectory(z0: Configuration, spec: PseudoTrajectorySpec) -> list[TrajectorySnapshot]:
    return _construct(z0, spec, spec.eps)


@dataclass(frozen=True)
class ProximityReport:
    max_position_gap: float
    velocity_equal: bool
    stage_gaps: tuple

    def stage_bound_ok(self, eps: float, tol: float = 1e-12) -> bool:
        """Gap at stage i is at most sqrt(2) eps i."""
        return all(g <= math.sqrt(2) * eps * i + tol for i, g in enumerate(self.stage_gaps))


def aggregate_gap_bound(spec: PseudoTrajectorySpec) -> float:
    n = spec.k + spec.s + 1
    return math.sqrt(6) * n**1.5 * spec.eps


def proximity_check(z0: Configuration, spec: PseudoTrajectorySpec, vel_tol: float = 1e-14) -> ProximityReport:
    """Run both constructions and compare them stage by stage."""
    boltz = boltzmann_pseudo_trajectory(z0, spec)
    bbgky = bbgky_pseudo_trajectory(z0, spec)
    gaps = []
    same_v = True
    for a, b in zip(boltz, bbgky):
        gaps.append(float(np.max(np.linalg.norm(a.config.positions - b.config.positions, axis=1))))
        same_v &= bool(np.all(np.abs(a.config.velocities - b.config.velocities) <= vel_tol))
    return ProximityReport(max(gaps), same_v, tuple(gaps))


def random_spec(s: int, k: int, d: int, eps: float, rng=None, t: float = 1.0) -> PseudoTrajectorySpec:
    """Random history: uniform times, signs and indices, Gaussian velocities, uniform impact pairs."""
    rng = np.random.default_rng(rng)
    inner = np.sort(rng.uniform(0.0, t, k))[::-1]
    while k and (np.any(np.diff(inner) >= 0) or inner[-1] <= 0 or inner[0] >= t):
        inner = np.sort(rng.uniform(0.0, t, k))[::-1]
    signs = tuple(int(x) for x in rng.choice([-1, 1], k))
    indices = tuple(int(rng.integers(0, s + 2 * i)) for i in range(k))
    adj = tuple((ImpactPair.random(d, rng=rng), rng.standard_normal(d), rng.standard_normal(d)) for _ in range(k))
    return PseudoTrajectorySpec(s, (t, *inner.tolist()), signs, indices, adj, eps)


def snapshots_to_json(boltzmann: list[TrajectorySnapshot], bbgky: list[TrajectorySnapshot] | None = None) -> str:
    """JSON records (construction, stage, time, particle, position, velocity)."""
    rows = []
    for name, snaps in (("boltzmann", boltzmann), ("bbgky", bbgky or [])):
        for snap in snaps:
            for p, (x, v) in enumerate(zip(snap.config.positions, snap.config.velocities)):
                rows.append(
                    {
                        "construction": name,
                        "stage": snap.stage,
                        "time": snap.time,
                        "particle": p,
                        "position": [float(c) for c in x],
                        "velocity": [float(c) for c in v],
                    }
                )
    return json.dumps(rows, indent=1)
