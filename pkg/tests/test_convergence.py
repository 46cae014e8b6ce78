import math

import numpy as np
import pytest

from ternary.convergence import (
    MarginalHistogram,
    StudyAborted,
    StudyConfig,
    bootstrap_distance,
    convergence_study,
    histogram_edges,
    histogram_from_samples,
    l1_distance,
    observable,
    run_ensemble,
    run_ensemble_all,
)
from ternary.distributions import MaxwellianParams


def small(**kw):
    base = dict(n_list=(9, 16), runs=10, t_list=(0.0, 0.5), bootstrap=100, dsmc_factor=10)
    base.update(kw)
    return StudyConfig(**base)


def gaussian_hist(n, T, seed, cfg=None):
    cfg = cfg or StudyConfig(bins_per_axis=16, hist_radius=6.0)
    v = MaxwellianParams(1.0, (0.0, 0.0), T).sample(n, np.random.default_rng(seed))
    return histogram_from_samples(v, histogram_edges(cfg))


def test_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(n_list=(64, 27))
    with pytest.raises(ValueError):
        StudyConfig(runs=5)
    with pytest.raises(ValueError):
        StudyConfig(t_list=(0.0,))
    with pytest.raises(ValueError):
        StudyConfig(initial="uniform")


def test_l1_distance_basics():
    h = gaussian_hist(1000, 1.0, 0)
    assert l1_distance(h, h) == 0.0
    edges = histogram_edges(StudyConfig(bins_per_axis=16, hist_radius=6.0))
    a = histogram_from_samples(np.full((10, 2), -5.0), edges)
    b = histogram_from_samples(np.full((10, 2), 5.0), edges)
    assert l1_distance(a, b) == pytest.approx(2.0)
    other = histogram_from_samples(np.zeros((10, 2)), histogram_edges(StudyConfig()))
    with pytest.raises(ValueError):
        l1_distance(a, other)


def test_l1_distance_temperature_shift_is_stable():
    vals = [l1_distance(gaussian_hist(10**5, 1.0, s), gaussian_hist(10**5, 1.21, 100 + s)) for s in range(3)]
    assert min(vals) > 0.03
    assert max(vals) / min(vals) < 1.1


def test_observable():
    h = gaussian_hist(10**5, 1.0, 1)
    assert observable(h, lambda v: np.ones(v.shape[:-1])) == pytest.approx(1.0)
    e = observable(h, lambda v: np.sum(v * v, -1))
    # bin-center quadrature of |v|^2 at width 0.75 adds 2 * w^2 / 12
    assert e == pytest.approx(2.0 + 2 * 0.75**2 / 12, abs=3 * math.sqrt(8 / 10**5) + 0.01)
    f, g = (lambda v: v[..., 0]), (lambda v: v[..., 1] ** 2)
    assert observable(h, lambda v: 2 * f(v) + 3 * g(v)) == pytest.approx(2 * observable(h, f) + 3 * observable(h, g))


def test_clipping_keeps_every_sample():
    edges = histogram_edges(StudyConfig())
    h = histogram_from_samples(np.array([[100.0, -100.0], [0.0, 0.0], [4.0, 4.0]]), edges)
    assert h.counts.sum() == 3 and h.counts[-1, 0] == 1 and h.counts[-1, -1] == 1


def test_ensemble_initial_histogram_matches_law():
    cfg = small(initial="maxwellian", t_list=(0.0, 1e-9))
    ens = run_ensemble_all(cfg, 16)
    h = ens.histograms[0]
    assert h.total_weight == cfg.runs * 16
    assert ens.failures == 0 and ens.max_drift < 1e-12
    big = gaussian_hist(10**6, 1.0, 3, cfg)
    sd = np.sqrt(big.masses * (1 - big.masses) / h.total_weight)
    outside = np.abs(h.masses - big.masses) > 3 * sd + 1e-12
    assert outside.sum() <= 0.05 * h.counts.size + 1


def test_collisionless_runs_preserve_initial_law():
    cfg = small(initial="maxwellian", c0=1e-4, n_list=(3,), t_list=(0.0, 1.0))
    ens = run_ensemble_all(cfg, 3)
    assert ens.events == 0
    assert np.array_equal(ens.histograms[0].counts, ens.histograms[1].counts)


def test_relaxation_moves_histogram_toward_maxwellian():
    cfg = small(n_list=(27,), t_list=(0.0, 4.0), runs=10)
    ens = run_ensemble_all(cfg, 27)
    h0, h1 = ens.histograms
    law = cfg.initial_law()
    v = MaxwellianParams(1.0, (0.0, 0.0), law.T).sample(10**6, np.random.default_rng(0))
    target = histogram_from_samples(v, histogram_edges(cfg))
    assert l1_distance(h1, target) < l1_distance(h0, target)


def test_run_ensemble_reproducible_and_parallel_equal():
    cfg = small()
    a = run_ensemble(cfg, 9)
    b = run_ensemble(StudyConfig(**{**cfg.to_dict(), "deterministic": False, "threads": 2}), 9)
    assert np.array_equal(a.counts, b.counts)


def test_failure_threshold():
    # eps too large for the box: every run fails
    cfg = small(c0=5.0, n_list=(4,))
    with pytest.raises(StudyAborted):
        run_ensemble(cfg, 4)


def test_bootstrap_ci_shrinks_with_runs():
    rng = np.random.default_rng(0)
    edges = histogram_edges(StudyConfig())

    def pooled(m):
        per_run = np.stack([histogram_from_samples(rng.standard_normal((50, 2)), edges).counts for _ in range(m)])
        return MarginalHistogram(edges, per_run.sum(0), float(50 * m), per_run)

    ref = histogram_from_samples(rng.standard_normal((10**6, 2)), edges)
    widths = {}
    for m in (100, 200):
        w = []
        for _ in range(5):
            _, lo, hi, _, _ = bootstrap_distance(pooled(m), ref, 300, rng)
            w.append(hi - lo)
        widths[m] = np.mean(w)
    assert widths[200] / widths[100] == pytest.approx(1 / math.sqrt(2), abs=0.12)


def test_small_study_end_to_end():
    res = convergence_study(small())
    rows = res["rows"]
    assert len(rows) == 4
    assert all(r.failures == 0 and r.ci_lo <= r.distance <= r.ci_hi for r in rows)
    assert res["initial_floor"] is True
    assert set(res["verdicts"]) == {0.0, 0.5}
