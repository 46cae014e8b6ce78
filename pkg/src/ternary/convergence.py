"""Particle-to-kinetic convergence study.

Ensembles of N-particle runs are pooled into one-particle velocity histograms
and compared in L1 with a DSMC solution of the space-homogeneous ternary
equation, for N growing along eps = c0 N^{-2/(2d-1)}.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import MaxwellianParams, TwoTemperatureMixture
from .dynamics import (
    ConfigurationDensityError,
    PeriodicBox,
    RunawayError,
    SimulationState,
    SimultaneousCollisionError,
    advance,
    conserved_drift,
    epsilon_for_scaling,
    sample_initial,
)
from .kinetic import VelocityEnsemble, dsmc_step, flux_rate_const, suggest_dt

MAX_FAILURE_FRACTION = 0.1
RUN_ERRORS = (SimultaneousCollisionError, RunawayError, ConfigurationDensityError)


class StudyAborted(RuntimeError):
    """Too many runs failed for the pooled histogram to be trusted."""


@dataclass(frozen=True)
class StudyConfig:
    d: int = 2
    c0: float = 0.5
    n_list: tuple = (27, 64, 125, 216)
    runs: int = 32
    box: float = 1.0
    initial: str = "mixture"
    T: float = 1.0
    T_low: float = 0.5
    T_high: float = 2.0
    t_list: tuple = (0.0, 0.5, 1.0)
    dsmc_samples: int = 0
    dsmc_factor: int = 10
    bins_per_axis: int = 8
    hist_radius: float = 4.0
    bootstrap: int = 400
    seed: int = 0
    deterministic: bool = True
    threads: int = 0

    def __post_init__(self):
        n_list = tuple(int(n) for n in self.n_list)
        t_list = tuple(float(t) for t in self.t_list)
        object.__setattr__(self, "n_list", n_list)
        object.__setattr__(self, "t_list", t_list)
        if not t_list or any(t < 0 for t in t_list) or list(t_list) != sorted(set(t_list)):
            raise ValueError("t_list must be non-negative and strictly increasing")
        if t_list[-1] <= 0:
            raise ValueError("the final time must be positive")
        if any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
            raise ValueError("n_list must be positive and strictly increasing")
        if self.runs < 10:
            raise ValueError("runs per N must be at least 10")
        if self.initial not in ("mixture", "maxwellian"):
            raise ValueError(f"initial must be 'mixture' or 'maxwellian', got {self.initial!r}")
        if self.d < 2 or self.c0 <= 0 or self.box <= 0 or self.hist_radius <= 0 or self.bins_per_axis < 1:
            raise ValueError("d >= 2 and positive c0, box, hist_radius, bins_per_axis required")

    @property
    def t_end(self) -> float:
        return self.t_list[-1]

    def initial_law(self):
        if self.initial == "mixture":
            return TwoTemperatureMixture(self.d, self.T_low, self.T_high)
        return MaxwellianParams(1.0, (0.0,) * self.d, self.T)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["n_list"] = list(self.n_list)
        out["t_list"] = list(self.t_list)
        return out


@dataclass
class MarginalHistogram:
    """Velocity histogram of pooled particles; ``per_run`` keeps each run's counts for the bootstrap."""

    edges: list
    counts: np.ndarray
    total_weight: float
    per_run: np.ndarray | None = field(default=None, repr=False)

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.total_weight

    def centers(self) -> np.ndarray:
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)


def histogram_edges(cfg: StudyConfig) -> list:
    return [np.linspace(-cfg.hist_radius, cfg.hist_radius, cfg.bins_per_axis + 1) for _ in range(cfg.d)]


def bin_counts(v: np.ndarray, edges) -> np.ndarray:
    """Counts with samples beyond the range folded into the edge bins, so every sample is kept."""
    lo = np.array([e[0] for e in edges])
    hi = np.array([e[-1] for e in edges])
    span = hi - lo
    clipped = np.clip(v, lo, hi - 1e-12 * span)
    counts, _ = np.histogramdd(clipped, bins=edges)
    return counts


def histogram_from_samples(v: np.ndarray, edges) -> MarginalHistogram:
    counts = bin_counts(v, edges)
    return MarginalHistogram(list(edges), counts, float(len(v)))


def observable(h: MarginalHistogram, phi) -> float:
    """Sum of phi at bin centers weighted by normalized bin masses."""
    return float(np.sum(h.masses * np.asarray(phi(h.centers()), float)))


def l1_distance(a: MarginalHistogram, b: MarginalHistogram) -> float:
    if len(a.edges) != len(b.edges) or any(not np.array_equal(x, y) for x, y in zip(a.edges, b.edges)):
        raise ValueError("histograms have different bin geometry")
    return float(np.sum(np.abs(a.masses - b.masses)))


def run_seed(master: int, N: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, N, r])


@dataclass
class RunResult:
    snapshots: list | None
    drift: float
    events: int
    error: str = ""


def _single_run(cfg: StudyConfig, N: int, r: int) -> RunResult:
    eps = epsilon_for_scaling(N, cfg.c0, cfg.d)
    boundary = PeriodicBox(cfg.box)
    try:
        config = sample_initial(N, eps, cfg.initial_law(), boundary, run_seed(cfg.seed, N, r))
        state = SimulationState(config, eps, boundary=boundary)
        e0, p0 = config.kinetic_energy(), config.momentum()
        snaps = []
        for t in cfg.t_list:
            advance(state, t - state.time)
            snaps.append(state.config.velocities.copy())
        drift = max(conserved_drift(state, e0, p0))
        return RunResult(snaps, drift, len(state.event_log))
    except RUN_ERRORS as exc:
        return RunResult(None, 0.0, 0, f"{type(exc).__name__}: {exc}")


def _pool_size(cfg: StudyConfig) -> int:
    if cfg.deterministic:
        return 1
    if cfg.threads > 0:
        return cfg.threads
    env = os.environ.get("TK_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def _map_runs(cfg: StudyConfig, N: int) -> list[RunResult]:
    workers = _pool_size(cfg)
    if workers == 1:
        return [_single_run(cfg, N, r) for r in range(cfg.runs)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_single_run, [cfg] * cfg.runs, [N] * cfg.runs, range(cfg.runs)))


@dataclass
class EnsembleResult:
    N: int
    eps: float
    histograms: list
    failures: int
    max_drift: float
    events: int
    errors: list


def run_ensemble_all(cfg: StudyConfig, N: int) -> EnsembleResult:
    """All runs of size N, one pooled histogram per time in ``cfg.t_list``."""
    results = _map_runs(cfg, N)
    ok = [res for res in results if res.snapshots is not None]
    failures = len(results) - len(ok)
    if failures > MAX_FAILURE_FRACTION * len(results):
        reasons = "; ".join(res.error for res in results if res.error)[:500]
        raise StudyAborted(f"N={N}: {failures} of {len(results)} runs failed ({reasons})")
    edges = histogram_edges(cfg)
    hists = []
    for ti in range(len(cfg.t_list)):
        per_run = np.stack([bin_counts(res.snapshots[ti], edges) for res in ok])
        hists.append(MarginalHistogram(edges, per_run.sum(axis=0), float(len(ok) * N), per_run))
    return EnsembleResult(
        N,
        epsilon_for_scaling(N, cfg.c0, cfg.d),
        hists,
        failures,
        max((res.drift for res in ok), default=0.0),
        sum(res.events for res in ok),
        [res.error for res in results if res.error],
    )


def run_ensemble(cfg: StudyConfig, N: int) -> MarginalHistogram:
    """Pooled final-time histogram of the M runs of size N."""
    return run_ensemble_all(cfg, N).histograms[-1]


def dsmc_reference(cfg: StudyConfig) -> list[MarginalHistogram]:
    """DSMC histograms at each time of ``cfg.t_list``.

    Uses the flux kernel and the rate that matches the particle system's
    collision frequency in the limit N -> infinity.
    """
    n = max(cfg.dsmc_samples, cfg.dsmc_factor * cfg.runs * cfg.n_list[-1])
    seeds = np.random.SeedSequence([cfg.seed, 0, 2**31 - 1])
    rng = np.random.default_rng(seeds.spawn(1)[0])
    ens = VelocityEnsemble(cfg.initial_law().sample(n, rng), 1.0 / n)
    rate = flux_rate_const(cfg.c0, cfg.d, cfg.box)
    dt = suggest_dt(ens, rate, kernel="flux")
    edges = histogram_edges(cfg)
    out = []
    for t in cfg.t_list:
        while ens.clock < t - 1e-12:
            ens = dsmc_step(ens, min(dt, t - ens.clock), rate, seeds.spawn(1)[0], kernel="flux")
        out.append(histogram_from_samples(ens.samples, edges))
    return out


@dataclass(frozen=True)
class StudyRow:
    t_end: float
    N: int
    eps: float
    distance: float
    ci_lo: float
    ci_hi: float
    raw: float
    floor: float
    failures: int
    events: int
    max_drift: float


def bootstrap_distance(h: MarginalHistogram, ref: MarginalHistogram, n_boot: int, rng) -> tuple:
    """Floor-corrected L1 distance with a percentile bootstrap CI over runs.

    Runs are resampled with replacement, which keeps any correlation between
    the particles of one run.  The floor is the expected L1 distance when both
    histograms sample the same law: per bin sqrt(2 / pi) times the combined
    standard deviation of the run bootstrap and the multinomial reference.
    """
    raw = l1_distance(h, ref)
    per_run = h.per_run
    m = len(per_run)
    ref_p = ref.masses
    boot_p = np.empty((n_boot,) + ref_p.shape)
    for b in range(n_boot):
        c = per_run[rng.integers(0, m, m)].sum(axis=0)
        boot_p[b] = c / c.sum()
    boot = np.abs(boot_p - ref_p).sum(axis=tuple(range(1, boot_p.ndim)))
    var = boot_p.var(axis=0, ddof=1) + ref_p * (1 - ref_p) / ref.total_weight
    floor = float(math.sqrt(2 / math.pi) * np.sqrt(var).sum())
    lo, hi = np.percentile(boot - boot.mean(), [2.5, 97.5])
    dist = raw - floor
    return dist, dist + lo, dist + hi, raw, floor


def convergence_study(cfg: StudyConfig, progress=None) -> dict:
    """Run every N, compare with the DSMC reference at every time and judge monotonicity."""
    refs = dsmc_reference(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, 2**31 - 1]))
    rows = []
    for N in cfg.n_list:
        ens = run_ensemble_all(cfg, N)
        if progress:
            progress(f"N={N}: {ens.events} events, {ens.failures} failed runs")
        for t, h, ref in zip(cfg.t_list, ens.histograms, refs):
            dist, lo, hi, raw, floor = bootstrap_distance(h, ref, cfg.bootstrap, rng)
            rows.append(StudyRow(t, N, ens.eps, dist, lo, hi, raw, floor, ens.failures, ens.events, ens.max_drift))
    verdicts = {t: monotone_verdict([r for r in rows if r.t_end == t]) for t in cfg.t_list}
    return {"rows": rows, "verdicts": verdicts, "initial_floor": floor_verdict([r for r in rows if r.t_end == 0.0])}


def monotone_verdict(rows) -> bool:
    """Each later N is no farther than each earlier N, unless their CIs overlap."""
    rows = sorted(rows, key=lambda r: r.N)
    for i, a in enumerate(rows):
        for b in rows[i + 1 :]:
            if b.distance > a.distance and b.ci_lo > a.ci_hi:
                return False
    return True


def floor_verdict(rows) -> bool | None:
    """At t = 0 every floor-corrected distance is statistically indistinguishable from the others."""
    if not rows:
        return None
    lo = max(r.ci_lo for r in rows)
    hi = min(r.ci_hi for r in rows)
    return bool(lo <= hi)


def expected_l1_floor(masses: np.ndarray, n: int) -> float:
    """Large-n mean of the L1 distance between an n-sample histogram and its law."""
    return float(np.sum(np.sqrt(2 * masses * (1 - masses) / (math.pi * n))))
