"""Event-driven dynamics of N particles with ternary epsilon-interaction zones.

Particles fly freely until some triplet (i; j, k) reaches the contact surface
d^2(x_i; x_j, x_k) = 2 eps^2 in a pre-collisional state; the three velocities
are then replaced by the collisional transformation with impact pair
(x_j - x_i, x_k - x_i) / (sqrt(2) eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionClass, ImpactPair, collide, relative_cross_section
from .geometry import Configuration, minimum_image, triplet_distance2, triplet_indices

TIME_FLOOR = 1e-14
SIMULTANEOUS_TOL = 1e-12
DEFAULT_MAX_EVENTS = 10**7


class SimultaneousCollisionError(RuntimeError):
    """Two contacts sharing a particle occur at the same instant."""


class RunawayError(RuntimeError):
    """The event-count circuit breaker tripped."""


class ConfigurationDensityError(ValueError):
    """Admissible initial configurations are too rare to sample by rejection."""


@dataclass(frozen=True)
class FreeSpace:
    """Unbounded space; ``side`` only sets the cube [0, side)^d used for sampling."""

    side: float = 1.0


@dataclass(frozen=True)
class PeriodicBox:
    side: float

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("box side must be positive")


def box_side(boundary) -> float | None:
    return boundary.side if isinstance(boundary, PeriodicBox) else None


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    triplet: tuple
    pair: ImpactPair
    klass: CollisionClass
    b: float


def triplet_roots(x, v, trip, eps, box=None, grazing_tol=1e-12):
    """First pre-collisional contact time of each triplet, relative to now.

    Returns ``(tau, valid_for)``.  ``tau`` is inf for triplets with no
    admissible contact.  Under a periodic box the image choice made now is
    only trusted for ``valid_for`` time units, and roots beyond it are dropped.
    """
    i, j, k = trip[:, 0], trip[:, 1], trip[:, 2]
    dxj = minimum_image(x[j] - x[i], box)
    dxk = minimum_image(x[k] - x[i], box)
    dvj = v[j] - v[i]
    dvk = v[k] - v[i]
    a = np.einsum("nd,nd->n", dvj, dvj) + np.einsum("nd,nd->n", dvk, dvk)
    b = np.einsum("nd,nd->n", dxj, dvj) + np.einsum("nd,nd->n", dxk, dvk)
    c = np.einsum("nd,nd->n", dxj, dxj) + np.einsum("nd,nd->n", dxk, dxk) - 2 * eps * eps
    disc = b * b - a * c
    hit = (b < 0) & (disc > 0)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(hit, c / (sq - b), np.inf)
    # cross-section at contact is -sqrt(disc) / (sqrt(2) eps)
    hit &= (sq / (math.sqrt(2) * eps) > grazing_tol) & (tau > TIME_FLOOR)
    tau = np.where(hit, tau, np.inf)
    if box is None:
        return tau, np.full(tau.shape, np.inf)
    reach = box / 2 - math.sqrt(2) * eps
    if reach <= 0:
        raise ConfigurationDensityError(f"box side {box} too small for eps={eps}")
    speed = np.sqrt(np.maximum(np.einsum("nd,nd->n", dvj, dvj), np.einsum("nd,nd->n", dvk, dvk)))
    with np.errstate(divide="ignore"):
        valid = np.where(speed > 0, reach / speed, np.inf)
    tau = np.where(tau <= valid, tau, np.inf)
    return tau, valid


class _Schedule:
    """Cached per-triplet contact times, refreshed only where particles changed."""

    def __init__(self, state: "SimulationState"):
        m = state.config.count
        self.trip = triplet_indices(m, state.symmetric)
        owner = np.repeat(np.arange(len(self.trip)), 3)
        members = self.trip.ravel()
        order = np.argsort(members, kind="stable")
        bounds = np.searchsorted(members[order], np.arange(m + 1))
        self.by_particle = [owner[order[bounds[p] : bounds[p + 1]]] for p in range(m)]
        self.tau = np.full(len(self.trip), np.inf)
        self.expire = np.full(len(self.trip), np.inf)
        self.refresh(state, slice(None))
        self.stamp(state)

    def stamp(self, state: "SimulationState"):
        self.time = state.time
        self.x = state.config.positions.copy()
        self.v = state.config.velocities.copy()

    def refresh(self, state: "SimulationState", sel):
        tau, valid = triplet_roots(
            state.config.positions,
            state.config.velocities,
            self.trip[sel],
            state.eps,
            state.box,
            state.grazing_tol,
        )
        self.tau[sel] = state.time + tau
        self.expire[sel] = state.time + valid

    def touching(self, particles) -> np.ndarray:
        return np.unique(np.concatenate([self.by_particle[p] for p in particles]))


@dataclass
class SimulationState:
    config: Configuration
    eps: float
    time: float = 0.0
    event_log: list = field(default_factory=list)
    boundary: object = field(default_factory=FreeSpace)
    symmetric: bool = False
    grazing_tol: float = 1e-12
    max_events: int = DEFAULT_MAX_EVENTS
    _schedule: _Schedule | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    @property
    def box(self) -> float | None:
        return box_side(self.boundary)

    def copy(self) -> "SimulationState":
        return SimulationState(
            self.config.copy(),
            self.eps,
            self.time,
            list(self.event_log),
            self.boundary,
            self.symmetric,
            self.grazing_tol,
            self.max_events,
        )

    def in_phase_space(self, slack: float = 0.0) -> bool:
        """Admissibility check with minimum-image distances; ``slack`` is relative to 2 eps^2."""
        if self.config.count < 3:
            return True
        d2 = triplet_distance2(self.config.positions, triplet_indices(self.config.count, self.symmetric), self.box)
        return bool(np.all(d2 >= 2 * self.eps**2 * (1 - slack)))

    def _drift(self, dt: float):
        x = self.config.positions
        x += dt * self.config.velocities
        if self.box is not None:
            np.mod(x, self.box, out=x)
        self.time += dt


def _schedule_current(state: SimulationState) -> bool:
    """The cache is reused only if nobody touched the state since the last advance."""
    sched = state._schedule
    return (
        sched is not None
        and sched.time == state.time
        and np.array_equal(sched.x, state.config.positions)
        and np.array_equal(sched.v, state.config.velocities)
    )


def _contact_event(state: SimulationState, trip, t_event: float, positions) -> CollisionEvent:
    i, j, k = (int(p) for p in trip)
    box = state.box
    w = np.concatenate(
        [minimum_image(positions[j] - positions[i], box), minimum_image(positions[k] - positions[i], box)]
    )
    w /= np.linalg.norm(w)
    pair = ImpactPair.from_vector(w)
    vel = state.config.velocities[[i, j, k]]
    b = float(relative_cross_section(pair, vel))
    return CollisionEvent(t_event, (i, j, k), pair, CollisionClass.PRE if b < 0 else CollisionClass.POST, b)


def _check_simultaneous(trip, tau, first: int):
    close = np.flatnonzero(np.abs(tau - tau[first]) < SIMULTANEOUS_TOL)
    mine = set(trip[first].tolist())
    for other in close:
        if other != first and mine & set(trip[other].tolist()):
            raise SimultaneousCollisionError(
                f"triplets {tuple(trip[first])} and {tuple(trip[other])} collide within "
                f"{SIMULTANEOUS_TOL} of t={tau[first]!r}"
            )


def next_collision(state: SimulationState, horizon: float) -> CollisionEvent | None:
    """Earliest pre-collisional contact within ``horizon`` of the current time.

    Under a periodic box the search also stops where minimum-image choices
    stop being reliable; ``advance`` handles stepping past that limit.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    trip = triplet_indices(state.config.count, state.symmetric)
    if len(trip) == 0:
        return None
    tau, _ = triplet_roots(
        state.config.positions, state.config.velocities, trip, state.eps, state.box, state.grazing_tol
    )
    first = int(np.argmin(tau))
    if not tau[first] <= horizon:
        return None
    _check_simultaneous(trip, tau, first)
    x = state.config.positions + tau[first] * state.config.velocities
    if state.box is not None:
        x = np.mod(x, state.box)
    return _contact_event(state, trip[first], state.time + float(tau[first]), x)


def advance(state: SimulationState, t: float) -> SimulationState:
    """Evolve ``state`` in place by ``t`` time units and return it."""
    if t < 0:
        raise ValueError("t must be non-negative")
    t_end = state.time + t
    if state.config.count < 3:
        state._drift(t)
        return state
    if not _schedule_current(state):
        state._schedule = _Schedule(state)
    sched = state._schedule
    n_events = 0
    while True:
        first = int(np.argmin(sched.tau))
        t_event = float(sched.tau[first])
        t_expire = float(sched.expire.min())
        if t_expire < t_event and t_expire < t_end:
            state._drift(t_expire - state.time)
            # refresh everything expiring within half the shortest possible window
            vmax = float(np.sqrt(np.max(np.sum(state.config.velocities**2, axis=1))))
            horizon = 0.25 * (state.box / 2 - math.sqrt(2) * state.eps) / max(vmax, 1e-300)
            stale = np.flatnonzero(sched.expire <= t_expire + horizon)
            sched.refresh(state, stale)
            continue
        if t_event > t_end:
            break
        _check_simultaneous(sched.trip, sched.tau, first)
        state._drift(t_event - state.time)
        trip = sched.trip[first]
        event = _contact_event(state, trip, state.time, state.config.positions)
        vel = state.config.velocities
        vel[trip] = collide(event.pair, vel[trip])
        state.event_log.append(event)
        sched.refresh(state, sched.touching(trip))
        n_events += 1
        if n_events >= state.max_events:
            raise RunawayError(f"more than {state.max_events} events in one advance call")
    state._drift(t_end - state.time)
    sched.stamp(state)
    return state


def reverse_velocities(state: SimulationState) -> SimulationState:
    out = state.copy()
    out.config.velocities = -out.config.velocities
    return out


def epsilon_for_scaling(N: int, c0: float, d: int) -> float:
    """Interaction zone with N * eps^{d - 1/2} = c0^{d - 1/2}."""
    if N < 1 or c0 <= 0:
        raise ValueError("need N >= 1 and c0 > 0")
    return c0 * N ** (-2.0 / (2 * d - 1))


def expected_violations(N: int, eps: float, volume: float, d: int, symmetric: bool = False) -> float:
    """Mean number of inadmissible triplets for uniform positions (dilute estimate)."""
    if N < 3:
        return 0.0
    radius = math.sqrt(2) * eps
    ball = math.pi**d / math.factorial(d) * radius ** (2 * d)
    n_trip = math.comb(N, 3) * (3 if symmetric else 1)
    return n_trip * ball / volume**2


def sample_initial(
    N: int,
    eps: float,
    f0,
    boundary=None,
    rng_seed=None,
    symmetric: bool = False,
    max_attempts: int = 10_000,
) -> Configuration:
    """Product data f0^{(x)N} with uniform positions, conditioned on admissibility.

    Whole configurations are rejected until every triplet satisfies the
    interaction-zone constraint.
    """
    boundary = PeriodicBox(1.0) if boundary is None else boundary
    d = f0.dim
    side = boundary.side
    box = box_side(boundary)
    if N >= 3 and box is not None and box / 2 <= math.sqrt(2) * eps:
        raise ConfigurationDensityError(f"eps={eps} does not fit in a periodic box of side {box}")
    expected = expected_violations(N, eps, side**d, d, symmetric)
    if expected > -math.log(0.01):
        raise ConfigurationDensityError(
            f"acceptance rate for N={N}, eps={eps}, side={side} is about {math.exp(-expected):.2e} < 1%"
        )
    rng = np.random.default_rng(rng_seed)
    trip = triplet_indices(N, symmetric)
    for _ in range(max_attempts):
        x = rng.uniform(0.0, side, (N, d))
        if len(trip) == 0 or np.all(triplet_distance2(x, trip, box) >= 2 * eps * eps):
            return Configuration(x, f0.sample(N, rng))
    raise ConfigurationDensityError(f"no admissible configuration in {max_attempts} attempts")


def admissible_fraction(N: int, eps: float, d: int, boundary, n_trials: int, rng_seed=None) -> float:
    """Empirical acceptance rate of the position rejection step."""
    rng = np.random.default_rng(rng_seed)
    trip = triplet_indices(N)
    box = box_side(boundary)
    ok = 0
    for _ in range(n_trials):
        x = rng.uniform(0.0, boundary.side, (N, d))
        ok += bool(np.all(triplet_distance2(x, trip, box) >= 2 * eps * eps))
    return ok / n_trials


def conserved_drift(state: SimulationState, energy0: float, momentum0) -> tuple[float, float]:
    """Relative drift of kinetic energy and total momentum from reference values."""
    de = abs(state.config.kinetic_energy() - energy0) / max(abs(energy0), 1e-300)
    scale = max(float(np.linalg.norm(momentum0)), math.sqrt(2 * energy0), 1e-300)
    dp = float(np.linalg.norm(state.config.momentum() - momentum0)) / scale
    return de, dp
