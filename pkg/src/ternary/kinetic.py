"""Space-homogeneous ternary kinetic solver and Monte Carlo diagnostics.

The collision kernel is K = b_+ / sqrt(1 + <w1, w2>) with (w1, w2) uniform
on the unit sphere of R^{2d}.  ``kernel="flux"`` drops the square root and
gives the collision rate of the particle system instead.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .collision import ImpactPair, collide, relative_cross_section
from .distributions import MaxwellianParams

KERNELS = ("operator", "flux")


class StabilityError(ValueError):
    """The time step asks for more candidates than there are triplets."""


class MajorantError(RuntimeError):
    """An acceptance probability exceeded one."""


class SupportError(ValueError):
    """Too many samples fall outside the entropy histogram."""


@dataclass
class VelocityEnsemble:
    samples: np.ndarray
    weight: float
    clock: float = 0.0

    def __post_init__(self):
        self.samples = np.array(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[0] < 3:
            raise ValueError("an ensemble needs at least 3 samples of shape (n, d)")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def mass(self) -> float:
        return self.weight * self.count

    def copy(self) -> "VelocityEnsemble":
        return VelocityEnsemble(self.samples.copy(), self.weight, self.clock)


class Moments(NamedTuple):
    mass: float
    momentum: np.ndarray
    energy: float


class Estimate(NamedTuple):
    value: float
    std_error: float


class EntropyEstimate(NamedTuple):
    value: float
    std_error: float
    outside: int


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def kernel_value(pair: ImpactPair, v, kernel: str = "operator") -> np.ndarray:
    b = np.maximum(relative_cross_section(pair, v), 0.0)
    if kernel == "operator":
        return b / np.sqrt(1.0 + pair.inner())
    if kernel == "flux":
        return b
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def moments(ens: VelocityEnsemble) -> Moments:
    v = ens.samples
    return Moments(ens.mass, ens.weight * v.sum(axis=0), 0.5 * ens.weight * float(np.sum(v * v)))


def _first_repeat(idx: np.ndarray) -> int:
    """Number of leading rows of ``idx`` that share no particle."""
    flat = idx.ravel()
    order = np.argsort(flat, kind="stable")
    s = flat[order]
    dup = np.flatnonzero(s[1:] == s[:-1]) + 1
    if len(dup) == 0:
        return len(idx)
    # the later occurrence of each repeated value is what breaks the block
    later = np.maximum(order[dup], order[dup - 1])
    return int(later.min() // 3)


def _draw_triplets(rng, n: int, count: int) -> np.ndarray:
    """Three distinct indices per row, uniformly."""
    i = rng.integers(0, n, count)
    j = rng.integers(0, n - 1, count)
    j += j >= i
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    k = rng.integers(0, n - 2, count)
    k += k >= lo
    k += k >= hi
    return np.stack([i, j, k], axis=1)


def majorant(samples: np.ndarray, kernel: str = "operator") -> float:
    """Upper bound of the kernel over all triplets of the ensemble.

    With r^2 = |v1 - v2|^2 + |v1 - v3|^2 + |v2 - v3|^2, maximizing over the
    sphere gives K <= sqrt(2/3) r for the operator kernel and b_+ <= r for the
    flux kernel; r <= 3 vmax about the mean velocity.
    """
    vmax = float(np.sqrt(np.max(np.sum((samples - samples.mean(axis=0)) ** 2, axis=1))))
    return 3 * vmax * (math.sqrt(2.0 / 3.0) if kernel == "operator" else 1.0)


def dsmc_step(
    ens: VelocityEnsemble,
    dt: float,
    rate_const: float,
    rng_seed=None,
    kernel: str = "operator",
    max_retries: int = 3,
):
    """One majorant-rejection step of ternary DSMC; returns a new ensemble.

    N_cand = ceil(rate_const C(n, 3) dt B_max / n^2) candidate triplets are
    drawn, each with a uniform impact pair, and accepted with probability
    K / B_max.  Candidates are processed in order; runs of candidates with no
    shared particle are handled together, which gives the same result as a
    strictly sequential loop.  If collisions inside the step push a velocity
    past the majorant, the step is redrawn with a doubled majorant.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if rate_const < 0:
        raise ValueError("rate_const must be non-negative")
    b_max = majorant(ens.samples, kernel)
    if rate_const == 0 or b_max == 0:
        out = ens.copy()
        out.clock += dt
        return out
    seeds = np.random.SeedSequence(rng_seed) if not isinstance(rng_seed, np.random.SeedSequence) else rng_seed
    for attempt, seed in enumerate(seeds.spawn(max_retries)):
        try:
            return _dsmc_attempt(ens, dt, rate_const, seed, kernel, b_max * 2**attempt)
        except MajorantError:
            if attempt == max_retries - 1:
                raise


def _dsmc_attempt(ens, dt, rate_const, seed, kernel, b_max):
    out = ens.copy()
    out.clock += dt
    n = ens.count
    v = out.samples
    n_trip = math.comb(n, 3)
    n_cand = math.ceil(rate_const * n_trip * dt * b_max / n**2)
    if n_cand > n_trip:
        raise StabilityError(f"dt={dt} needs {n_cand} candidates but only {n_trip} triplets exist; reduce dt")
    rng = np.random.default_rng(seed)
    trip = _draw_triplets(rng, n, n_cand)
    pairs = ImpactPair.random(ens.dim, n_cand, rng)
    u = rng.random(n_cand)
    start = 0
    while start < n_cand:
        stop = start + _first_repeat(trip[start : start + 256])
        blk = slice(start, stop)
        idx = trip[blk]
        pair = pairs[blk]
        tri = v[idx]
        ratio = kernel_value(pair, tri, kernel) / b_max
        if np.any(ratio > 1.0):
            raise MajorantError(f"acceptance ratio {ratio.max()} > 1 at majorant {b_max}")
        acc = u[blk] < ratio
        if np.any(acc):
            v[idx[acc]] = collide(pair[acc], tri[acc])
        start = stop
    return out


def mean_kernel(ens: VelocityEnsemble, n_mc: int = 20000, rng_seed=0, kernel: str = "operator") -> float:
    """E[K] over random triplets and impact pairs."""
    rng = np.random.default_rng(rng_seed)
    trip = _draw_triplets(rng, ens.count, n_mc)
    return float(kernel_value(ImpactPair.random(ens.dim, n_mc, rng), ens.samples[trip], kernel).mean())


def suggest_dt(ens: VelocityEnsemble, rate_const: float, kernel: str = "operator", fraction: float = 0.1) -> float:
    """Step for which the expected number of accepted collisions is ``fraction * n``."""
    n = ens.count
    per_unit_time = rate_const * math.comb(n, 3) / n**2 * mean_kernel(ens, kernel=kernel)
    return fraction * n / per_unit_time


def flux_rate_const(c0: float, d: int, side: float = 1.0) -> float:
    """DSMC rate matching the collision frequency of the particle system.

    For N particles in a box of side L with eps = c0 N^{-2/(2d-1)}, the number
    of contacts per unit time is C(N, 3) (sqrt(2) eps)^{2d-1} |S^{2d-1}| E[b_+] / L^{2d}.
    With the flux kernel that is rate_const * C(n, 3) / n^2 * E[b_+] per sample
    count n, so in the large-N limit rate_const = (sqrt(2) c0)^{2d-1} |S^{2d-1}| / L^{2d}.
    """
    return (math.sqrt(2) * c0) ** (2 * d - 1) * sphere_area(2 * d) / side ** (2 * d)


@dataclass
class DsmcRecord:
    t: float
    moments: Moments
    entropy: EntropyEstimate


def dsmc_run(
    ens: VelocityEnsemble,
    t_end: float,
    rate_const: float,
    rng_seed=None,
    dt: float | None = None,
    checkpoints: int = 10,
    kernel: str = "operator",
    entropy_bins: int = 48,
):
    """Evolve to ``t_end`` and record moments and entropy at equally spaced checkpoints."""
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    seeds = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    dt = suggest_dt(ens, rate_const, kernel) if dt is None and rate_const > 0 else (dt or t_end or 1.0)
    marks = np.linspace(0.0, t_end, checkpoints + 1)
    t0 = ens.clock
    records = [DsmcRecord(ens.clock, moments(ens), entropy(ens, entropy_bins))]
    for mark in marks[1:]:
        while ens.clock - t0 < mark - 1e-12:
            step = min(dt, mark - (ens.clock - t0))
            ens = dsmc_step(ens, step, rate_const, seeds.spawn(1)[0], kernel)
        records.append(DsmcRecord(ens.clock, moments(ens), entropy(ens, entropy_bins)))
    return ens, records


def maxwellian_sampler(p: MaxwellianParams, n: int, rng_seed=None) -> VelocityEnsemble:
    return VelocityEnsemble(p.sample(n, np.random.default_rng(rng_seed)), p.R / n)


def fit_maxwellian(ens: VelocityEnsemble) -> MaxwellianParams:
    if ens.count < 2:
        raise ValueError("need at least 2 samples to fit a Maxwellian")
    m = moments(ens)
    if m.mass <= 0:
        raise ValueError("cannot fit a Maxwellian to zero mass")
    u = m.momentum / m.mass
    temp = (2 * m.energy / m.mass - float(u @ u)) / ens.dim
    if not temp > 1e-14 * max(1.0, float(u @ u)):
        raise ValueError("samples have zero temperature")
    return MaxwellianParams(m.mass, tuple(u), temp)


def lwp_time(d: int, beta0: float, mu0: float) -> float:
    """Local well-posedness horizon beta0^{d+1} e^{2 mu0 - beta0} / (2^{d+4} (1 + sqrt(2 / beta0)))."""
    if beta0 <= 0:
        raise ValueError("beta0 must be positive")
    return beta0 ** (d + 1) * math.exp(2 * mu0 - beta0) / (2 ** (d + 4) * (1 + math.sqrt(2 / beta0)))


def entropy(ens: VelocityEnsemble, bins_per_axis: int = 48, support_radius: float | None = None) -> EntropyEstimate:
    """Histogram estimate of the integral of f ln f over a cube centered at the mean velocity.

    The standard error is the multinomial delta-method error of the histogram.
    """
    if bins_per_axis < 8:
        raise ValueError("bins_per_axis must be at least 8")
    v = ens.samples
    n, d = v.shape
    if ens.weight == 0:
        return EntropyEstimate(0.0, 0.0, 0)
    center = v.mean(axis=0)
    if support_radius is None:
        support_radius = 6 * math.sqrt(max(fit_maxwellian(ens).T, 1e-300))
    edges = [np.linspace(c - support_radius, c + support_radius, bins_per_axis + 1) for c in center]
    counts, _ = np.histogramdd(v, bins=edges)
    inside = int(counts.sum())
    outside = n - inside
    if outside > 0.01 * n:
        raise SupportError(f"{outside} of {n} samples lie outside the support radius {support_radius}")
    vol = (2 * support_radius / bins_per_axis) ** d
    p = counts[counts > 0] / n
    mass = ens.mass
    g = np.log(mass * p / vol)
    value = mass * float(np.sum(p * g))
    # d/dp_b of sum p ln(mass p / vol) is ln(mass p / vol) + 1
    h = g + 1.0
    var = float(np.sum(p * h * h) - np.sum(p * h) ** 2) / n
    return EntropyEstimate(value, mass * math.sqrt(max(var, 0.0)), outside)


def silverman_bandwidth(samples: np.ndarray) -> float:
    n, d = samples.shape
    sigma = float(np.mean(samples.std(axis=0)))
    return max(n ** (-1.0 / (d + 4)) * sigma, 1e-3 * sigma)


class DensityEstimate:
    """Gaussian kernel density of an ensemble, binned on a grid for fast evaluation.

    ``sample`` draws from the exact kernel density; ``__call__`` evaluates its
    binned approximation by cubic interpolation of the log density.
    """

    def __init__(self, ens: VelocityEnsemble, bandwidth: float | None = None, bins_per_axis: int | None = None):
        v = ens.samples
        n, d = v.shape
        h = silverman_bandwidth(v) if bandwidth is None else bandwidth
        if h <= 0:
            raise ValueError("bandwidth must be positive")
        self.h = h
        self.mass = ens.mass
        self.samples = v
        g = bins_per_axis or (160 if d == 2 else 48)
        lo = v.min(axis=0) - 5 * h
        hi = v.max(axis=0) + 5 * h
        self.lo = lo
        self.step = (hi - lo) / (g - 1)
        # bin centers sit on the grid nodes
        edges = [np.linspace(a - s / 2, b + s / 2, g + 1) for a, b, s in zip(lo, hi, self.step)]
        counts, _ = np.histogramdd(v, bins=edges)
        smooth = ndimage.gaussian_filter(counts, sigma=h / self.step, mode="constant", truncate=5.0)
        dens = smooth * (self.mass / n) / float(np.prod(self.step))
        floor = dens.max() * 1e-30 if dens.max() > 0 else 1e-300
        self.log_grid = np.log(np.maximum(dens, floor))
        self.log_floor = math.log(floor)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        pts = ((x.reshape(-1, x.shape[-1]) - self.lo) / self.step).T
        g = np.array(self.log_grid.shape)[:, None]
        ok = np.all((pts >= 0) & (pts <= g - 1), axis=0)
        out = np.zeros(pts.shape[1])
        if np.any(ok):
            val = ndimage.map_coordinates(self.log_grid, pts[:, ok], order=3, mode="nearest")
            out[ok] = np.where(val > self.log_floor + 1.0, np.exp(val), 0.0)
        return out.reshape(shape)

    def sample(self, size: int, rng) -> np.ndarray:
        idx = rng.integers(0, len(self.samples), size)
        return self.samples[idx] + self.h * rng.standard_normal((size, self.samples.shape[1]))


def _probe_triples(rng, dens, v, n_mc: int, role):
    """Place ``v`` in slot ``role`` of each triple and draw the other two from the density."""
    d = len(v)
    tri = np.empty((n_mc, 3, d))
    others = dens.sample(2 * n_mc, rng).reshape(n_mc, 2, d)
    slots = np.array([[1, 2], [0, 2], [0, 1]])[role]
    rows = np.arange(n_mc)
    tri[rows, role] = v
    tri[rows, slots[:, 0]] = others[:, 0]
    tri[rows, slots[:, 1]] = others[:, 1]
    return tri, slots


def _folds(f: VelocityEnsemble, folds: int, rng) -> list[VelocityEnsemble]:
    """Disjoint random sub-ensembles, each carrying the full mass."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    parts = np.array_split(rng.permutation(f.count), folds)
    if min(len(p) for p in parts) < 3:
        raise ValueError(f"{folds} folds leave fewer than 3 samples per fold")
    return [VelocityEnsemble(f.samples[p], f.mass / len(p)) for p in parts]


def _batch_mean(values) -> Estimate:
    values = np.asarray(values, float)
    return Estimate(float(values.mean()), float(values.std(ddof=1)) / math.sqrt(len(values)))


def _q3_single(dens, v, n_mc: int, rng, symmetrized: bool, kernel: str) -> float:
    d = len(v)
    role = rng.integers(0, 3, n_mc) if symmetrized else np.zeros(n_mc, dtype=int)
    tri, slots = _probe_triples(rng, dens, v, n_mc, role)
    pair = ImpactPair.random(d, n_mc, rng)
    k = kernel_value(pair, tri, kernel)
    f_pre = dens(tri)
    f_post = dens(collide(pair, tri))
    rows = np.arange(n_mc)
    partners = f_pre[rows, slots[:, 0]] * f_pre[rows, slots[:, 1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(partners > 0, np.prod(f_post, axis=1) / partners, 0.0)
    # partners are drawn from f / mass, so the integral carries mass^2
    return sphere_area(2 * d) * dens.mass**2 * float(np.mean(k * (gain - f_pre[rows, role])))


def q3_apply_mc(
    f: VelocityEnsemble,
    v,
    n_mc: int,
    rng_seed=None,
    bandwidth: float | None = None,
    symmetrized: bool = False,
    kernel: str = "operator",
    folds: int = 10,
    density=None,
) -> Estimate:
    """Monte Carlo value of Q3(f, f, f) at velocity ``v``.

    Partner velocities are drawn from a kernel density of ``f`` and the impact
    pair uniformly on the sphere:
    Q3(v) = |S^{2d-1}| mass^2 E[K (f* f1* f2* / (f1 f2) - f)].
    The ensemble is split into ``folds`` disjoint parts, each with its own
    density estimate, and the standard error is taken between folds so that
    it covers density-estimation noise as well as Monte Carlo noise.
    A ``density`` object (callable, with ``mass`` and ``sample``) replaces the
    kernel estimate.

    With ``symmetrized`` the probe velocity takes each of the three roles with
    probability 1/3.  That is the operator the particle dynamics produce, and
    unlike the centre-only form it conserves energy.
    """
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    if bandwidth is not None and bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if f.mass == 0:
        return Estimate(0.0, 0.0)
    v = np.asarray(v, float)
    rng = np.random.default_rng(rng_seed)
    per = max(n_mc // folds, 2)
    if density is not None:
        vals = [_q3_single(density, v, per, rng, symmetrized, kernel) for _ in range(folds)]
    else:
        parts = _folds(f, folds, rng)
        vals = [_q3_single(DensityEstimate(p, bandwidth), v, per, rng, symmetrized, kernel) for p in parts]
    return _batch_mean(vals)


def q3_grid_moments(
    f: VelocityEnsemble,
    phis,
    n_mc: int,
    rng_seed=None,
    bins_per_axis: int = 16,
    radius: float | None = None,
    symmetrized: bool = True,
    kernel: str = "operator",
    folds: int = 10,
) -> list[Estimate]:
    """Grid quadrature of the integral of Q3(f) phi dv for each test function.

    ``n_mc`` draws are spent at every grid node.  Each fold evaluates the whole
    quadrature with one density estimate, so the spread between folds
    propagates the error including its correlation across nodes.
    """
    d = f.dim
    center = f.samples.mean(axis=0)
    if radius is None:
        radius = 5 * math.sqrt(fit_maxwellian(f).T)
    axes = [c + radius * ((np.arange(bins_per_axis) + 0.5) / bins_per_axis * 2 - 1) for c in center]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    cell = (2 * radius / bins_per_axis) ** d
    weights = np.stack([np.asarray(phi(nodes), float) * cell for phi in phis])
    rng = np.random.default_rng(rng_seed)
    per_fold = []
    for part in _folds(f, folds, rng):
        dens = DensityEstimate(part)
        q = np.array([_q3_single(dens, x, max(n_mc // folds, 2), rng, symmetrized, kernel) for x in nodes])
        per_fold.append(weights @ q)
    per_fold = np.array(per_fold)
    return [_batch_mean(per_fold[:, i]) for i in range(len(phis))]


def dissipation_integrand(k, pre, post) -> np.ndarray:
    """K (F* - F) ln(F* / F), non-negative wherever both products are positive."""
    pre = np.asarray(pre, float)
    post = np.asarray(post, float)
    return k * (post - pre) * np.log(post / pre)


def entropy_dissipation_mc(
    f: VelocityEnsemble,
    n_mc: int,
    rng_seed=None,
    bandwidth: float | None = None,
    kernel: str = "operator",
    folds: int = 10,
) -> Estimate:
    """Monte Carlo entropy dissipation of the symmetrized operator.

    Uses D(f) = |S^{2d-1}| mass^3 / 3 E[K (ln F - ln F*)] with F = f f1 f2,
    triples drawn from the ensemble itself and the impact pair uniform.  This
    equals the symmetric form |S| mass^3 / 6 E[K (F* - F) ln(F* / F) / F]
    (whose integrand is pointwise non-negative, see ``dissipation_integrand``),
    but it is linear in ln f, so density-estimation noise averages out instead
    of biasing the result upward.  Triples come from one fold and the density
    from the other folds; the standard error is taken between folds.
    Draws where a density vanishes are skipped and counted.
    """
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    if f.mass == 0:
        return Estimate(0.0, 0.0)
    rng = np.random.default_rng(rng_seed)
    parts = np.array_split(rng.permutation(f.count), folds)
    if folds < 2 or min(len(p) for p in parts) < 3:
        raise ValueError(f"cannot split {f.count} samples into {folds} folds of at least 3")
    per = max(n_mc // folds, 2)
    scale = sphere_area(2 * f.dim) * f.mass**3 / 3
    vals, skipped = [], 0
    for g, own in enumerate(parts):
        rest = np.concatenate([p for h, p in enumerate(parts) if h != g])
        dens = DensityEstimate(VelocityEnsemble(f.samples[rest], f.mass / len(rest)), bandwidth)
        local = f.samples[own]
        tri = local[_draw_triplets(rng, len(local), per)]
        pair = ImpactPair.random(f.dim, per, rng)
        k = kernel_value(pair, tri, kernel)
        pre = dens(tri)
        post = dens(collide(pair, tri))
        ok = np.all(pre > 0, axis=1) & np.all(post > 0, axis=1)
        skipped += per - int(ok.sum())
        log_ratio = np.zeros(per)
        log_ratio[ok] = np.log(pre[ok]).sum(axis=1) - np.log(post[ok]).sum(axis=1)
        vals.append(scale * float(np.mean(k * log_ratio)))
    if skipped > 0.05 * per * folds:
        warnings.warn(f"entropy dissipation skipped {skipped} of {per * folds} draws", RuntimeWarning, stacklevel=2)
    return _batch_mean(vals)


def excess_kurtosis(samples: np.ndarray) -> np.ndarray:
    """Per-component excess kurtosis."""
    c = samples - samples.mean(axis=0)
    m2 = np.mean(c * c, axis=0)
    return np.mean(c**4, axis=0) / (m2 * m2) - 3.0
