"""Property checks behind ``ternary verify`` and the acceptance tests.

Each check returns a CheckResult with a one-line detail string.  ``quick``
shrinks sample sizes for a fast smoke run; the default sizes are the
acceptance sizes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .collision import ImpactPair, check_collision_invariant, collide, relative_cross_section, relative_speed2
from .convergence import StudyConfig, convergence_study
from .distributions import MaxwellianParams, TwoTemperatureMixture
from .dynamics import (
    PeriodicBox,
    SimulationState,
    advance,
    conserved_drift,
    epsilon_for_scaling,
    reverse_velocities,
    sample_initial,
)
from .geometry import Configuration, ellipsoid_form, fd_jacobian_determinant, measure_curve, transition_jacobian, transition_map
from .kinetic import (
    VelocityEnsemble,
    dsmc_run,
    dsmc_step,
    excess_kurtosis,
    lwp_time,
    maxwellian_sampler,
    moments,
    q3_apply_mc,
    q3_grid_moments,
)
from .pseudo import aggregate_gap_bound, proximity_check, random_spec


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _timed(name, fn, *args, **kw) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn(*args, **kw)
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def _rel(a, b, scale) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(scale, 1.0)))


def collision_algebra(n: int = 10**5, seed: int = 0):
    worst = 0.0
    t0 = time.perf_counter()
    for d in (2, 3):
        rng = np.random.default_rng([seed, d])
        v = rng.standard_normal((n, 3, d))
        pair = ImpactPair.random(d, n, rng)
        vs = collide(pair, v)
        e0 = np.sum(v**2, axis=(1, 2))
        worst = max(
            worst,
            _rel(v.sum(1), vs.sum(1), np.abs(v).sum(1)),
            _rel(e0, np.sum(vs**2, axis=(1, 2)), e0),
            _rel(relative_speed2(v), relative_speed2(vs), relative_speed2(v)),
            _rel(relative_cross_section(pair, vs), -relative_cross_section(pair, v), np.sqrt(e0)),
            _rel(collide(pair, vs), v, np.abs(v)),
        )
    secs = time.perf_counter() - t0
    return worst <= 1e-12 and secs < 5.0, f"max relative error {worst:.2e} over 2x{n} collisions in {secs:.2f} s"


def worked_example():
    s = 1 / math.sqrt(2)
    pair = ImpactPair([s, 0.0], [0.0, s])
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    post = collide(pair, v)
    ok_collide = np.allclose(post, [[1, 1], [0, 0], [0, 0]], atol=1e-12)
    im = transition_map(v, pair)
    ok_map = np.allclose(np.stack([im.nu1, im.nu2]), 0.5, atol=1e-12)
    resid = abs(float(ellipsoid_form(im.nu1, im.nu2)) - 1.0)
    jac = float(transition_jacobian(v, pair))
    fd = fd_jacobian_determinant(v, pair.stacked)
    fd_rel = abs(fd - jac) / abs(jac)
    ok = ok_collide and ok_map and resid <= 1e-12 and abs(jac - 4.5) <= 1e-12 and fd_rel <= 1e-5
    return ok, f"collide ok={ok_collide}, map ok={ok_map}, residual {resid:.1e}, jacobian {jac:.12g}, fd rel err {fd_rel:.1e}"


def collision_invariants(n: int = 10**4, seed: int = 0):
    phis = {
        "1": lambda v: np.ones(v.shape[:-1]),
        "v_x": lambda v: v[..., 0],
        "v_y": lambda v: v[..., 1],
        "|v|^2": lambda v: np.sum(v * v, -1),
    }
    worst = max(check_collision_invariant(phi, n, seed) for phi in phis.values())
    cubic = check_collision_invariant(lambda v: v[..., 0] ** 3, n, seed)
    return worst <= 1e-10 and cubic >= 1e-3, f"invariant violation {worst:.1e}, v_x^3 violation {cubic:.3g}"


def _head_on():
    x = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    v = [[0.0, 0.0], [-1.0, 0.0], [0.0, -1.0]]
    state = SimulationState(Configuration(x, v), 0.1)
    advance(state, 1.0)
    ev = state.event_log[0]
    s = 1 / math.sqrt(2)
    ok = (
        len(state.event_log) == 1
        and abs(ev.time - 0.9) <= 1e-12
        and ev.triplet == (0, 1, 2)
        and np.allclose(ev.pair.stacked, [s, 0, 0, s], atol=1e-12)
        and np.allclose(state.config.velocities, [[-1, -1], [0, 0], [0, 0]], atol=1e-12)
    )
    return ok, f"event at {ev.time:.15g} on {ev.triplet}"


def _drift_run(N: int, t_end: float, seed: int):
    eps = epsilon_for_scaling(N, 0.5, 2)
    box = PeriodicBox(1.0)
    cfg = sample_initial(N, eps, MaxwellianParams(1.0, (0.0, 0.0), 1.0), box, seed)
    state = SimulationState(cfg.copy(), eps, boundary=box)
    advance(state, t_end)
    drift = max(conserved_drift(state, cfg.kinetic_energy(), cfg.momentum()))
    log = state.event_log
    same = any(a.triplet == b.triplet for a, b in zip(log, log[1:]))
    return len(log), drift, same, state.in_phase_space(1e-9)


def _reversal(N: int, eps: float, t_end: float, seed: int):
    box = PeriodicBox(1.0)
    cfg = sample_initial(N, eps, MaxwellianParams(1.0, (0.0, 0.0), 1.0), box, seed)
    state = SimulationState(cfg.copy(), eps, boundary=box)
    advance(state, t_end)
    back = reverse_velocities(state)
    back.event_log = []
    advance(back, t_end)
    err = float(np.max(np.abs((back.config.positions - cfg.positions + 0.5) % 1.0 - 0.5)))
    b_min = min((abs(e.b) for e in state.event_log), default=math.inf)
    return err, b_min, len(state.event_log)


def dynamics(quick: bool = False):
    ok_example, ex = _head_on()
    N, t_end = (24, 10.0) if quick else (64, 40.0)
    events, drift, repeat, inside = _drift_run(N, t_end, 3)
    ok_drift = drift <= 1e-9 and (quick or events >= 1000) and inside
    rev_err, rev_ok, rev_events = 0.0, True, 0
    for seed in range(2 if quick else 6):
        err, b_min, n_ev = _reversal(12, 0.05, 3.0, seed)
        if b_min > 1e-3:
            rev_err = max(rev_err, err)
            rev_events += n_ev
            rev_ok &= err <= 1e-7
    ok = ok_example and ok_drift and rev_ok and not repeat
    return ok, (
        f"{ex}; {events} events drift {drift:.1e}; reversal error {rev_err:.1e} "
        f"over {rev_events} events; repeated triplet={repeat}"
    )


def measure_estimates(n_samples: int = 10**6, seed: int = 0, tol: float = 0.15):
    rhos = 2.0 ** -np.arange(3, 10)
    worst, parts = 0.0, []
    for d in (2, 3):
        target = (d - 1) / 2
        for kind in ("sphere-cylinder", "ball-first-block", "strip", "cylinder-first-block"):
            _, slope = measure_curve(kind, d, rhos, n_samples, [seed, d])
            worst = max(worst, abs(slope - target))
            parts.append(f"d={d} {kind} {slope:.2f} (target {target:.1f})")
    return worst <= tol, "; ".join(parts)


def kinetic(quick: bool = False, seed: int = 0):
    n = 10**4
    mix = TwoTemperatureMixture(2)
    ens = VelocityEnsemble(mix.sample(n, np.random.default_rng(seed)), 1.0 / n)
    m0 = moments(ens)
    step = dsmc_step(ens, 0.05, 10.0, seed, kernel="flux")
    m1 = moments(step)
    scale = max(abs(m0.energy), 1.0)
    moment_err = max(
        abs(m1.mass - m0.mass),
        float(np.max(np.abs(np.asarray(m1.momentum) - m0.momentum))) / scale,
        abs(m1.energy - m0.energy) / scale,
    )

    seeds = np.random.SeedSequence([seed, 1])
    n_chk = 24 if quick else 40
    kurt, worst_rise = [], -math.inf
    prev = None
    for _ in range(n_chk):
        ens, rec = dsmc_run(ens, 0.5, 10.0, seeds.spawn(1)[0], checkpoints=1)
        h = rec[-1].entropy
        if prev is not None:
            worst_rise = max(worst_rise, (h.value - prev.value) / math.hypot(h.std_error, prev.std_error))
        prev = h
        kurt.append(excess_kurtosis(ens.samples))
    # components are exchangeable at equilibrium, so average them as well as the late checkpoints
    late_kurt = abs(float(np.mean(kurt[n_chk // 2 :])))

    n_mw = 2 * 10**4 if quick else 10**5
    maxw = maxwellian_sampler(MaxwellianParams(1.0, (0.0, 0.0), 1.0), n_mw, seed)
    probes = np.random.default_rng([seed, 2]).normal(size=(5 if quick else 20, 2))
    zs = []
    for i, v in enumerate(probes):
        est = q3_apply_mc(maxw, v, n_mw, [seed, 3, i])
        zs.append(est.value / est.std_error)
    max_z = float(np.max(np.abs(zs)))

    phis = [lambda v: np.ones(v.shape[:-1]), lambda v: v[..., 0], lambda v: np.sum(v * v, -1)]
    weak = q3_grid_moments(VelocityEnsemble(mix.sample(n_mw, np.random.default_rng([seed, 4])), 1.0 / n_mw), phis,
                           2000 if quick else 10**4, [seed, 5])
    weak_z = max(abs(e.value) / e.std_error for e in weak)

    ok = moment_err <= 1e-12 and worst_rise <= 3 and max_z <= 3 and weak_z <= 3 and late_kurt <= 3 / math.sqrt(n)
    return ok, (
        f"moment error {moment_err:.1e}; max entropy rise {worst_rise:.2f} SE; q3 max |z| {max_z:.2f}; "
        f"weak-form max |z| {weak_z:.2f}; late excess kurtosis {late_kurt:.4f} vs {3 / math.sqrt(n):.4f}"
    )


def pseudo_trajectories(count: int = 1000, seed: int = 0):
    rng = np.random.default_rng(seed)
    bad = 0
    t0 = time.perf_counter()
    for _ in range(count):
        d = int(rng.choice([2, 3]))
        s = int(rng.integers(1, 4))
        k = int(rng.integers(0, 6))
        eps = float(rng.choice([1e-2, 1e-3]))
        spec = random_spec(s, k, d, eps, rng)
        z = Configuration(rng.uniform(size=(s, d)), rng.normal(size=(s, d)))
        rep = proximity_check(z, spec)
        bad += not (rep.velocity_equal and rep.stage_bound_ok(eps) and rep.max_position_gap <= aggregate_gap_bound(spec) + 1e-12)
    secs = time.perf_counter() - t0
    return bad == 0 and secs < 10, f"{bad} of {count} specs violate a bound, {secs:.2f} s"


def convergence(cfg: StudyConfig | None = None):
    cfg = cfg or StudyConfig(deterministic=False)
    t0 = time.perf_counter()
    res = convergence_study(cfg)
    secs = time.perf_counter() - t0
    final = res["verdicts"][cfg.t_end]
    floor = res["initial_floor"]
    rows = [r for r in res["rows"] if r.t_end == cfg.t_end]
    dist = ", ".join(f"N={r.N}: {r.distance:.4f} [{r.ci_lo:.4f}, {r.ci_hi:.4f}]" for r in rows)
    ok = final and floor is not False and secs < 1800
    return ok, f"t_end={cfg.t_end}: {dist}; monotone={final}; t=0 within floor={floor}; {secs:.0f} s"


def lwp():
    value = lwp_time(2, 1.0, 0.0)
    direct = math.exp(-1.0) / (64 * (1 + math.sqrt(2)))
    rel = abs(value - direct) / direct
    return rel <= 1e-6 and round(value, 6) == 2.381e-3, f"lwp_time(2, 1, 0) = {value:.10g}, direct {direct:.10g}"


def run_checks(quick: bool = False) -> list[CheckResult]:
    """All checks; the quick variant skips the measure and convergence studies and shrinks the rest."""
    out = [
        _timed("collision algebra", collision_algebra, 10**4 if quick else 10**5),
        _timed("worked example", worked_example),
        _timed("collision invariants", collision_invariants),
        _timed("dynamics", dynamics, quick),
        _timed("pseudo-trajectories", pseudo_trajectories, 200 if quick else 1000),
        _timed("lwp horizon", lwp),
        _timed("kinetic solver", kinetic, quick),
    ]
    if not quick:
        out.append(_timed("measure estimates", measure_estimates))
        out.append(_timed("convergence study", convergence))
    return out
