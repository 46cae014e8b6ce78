"""Command line entry point.

Every subcommand takes ``--config FILE`` (flat ``key = value``), ``--out DIR``,
``--seed`` and ``--deterministic``; results land in DIR together with a
manifest.json holding sha256 digests of every file written.

Exit codes: 0 success, 1 domain error or failed check, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import checks
from .config import ConfigError, dataclass_defaults, parse_config, parse_config_text
from .convergence import StudyConfig, convergence_study
from .distributions import MaxwellianParams, TwoTemperatureMixture
from .dynamics import FreeSpace, PeriodicBox, SimulationState, advance, conserved_drift, sample_initial
from .geometry import MEASURE_KINDS, Configuration, measure_curve
from .io import emit_outputs, now_iso, verify_manifest
from .kinetic import VelocityEnsemble, dsmc_run, flux_rate_const
from .pseudo import bbgky_pseudo_trajectory, boltzmann_pseudo_trajectory, proximity_check, random_spec

PARTICLE_DEFAULTS = {
    "N": 27,
    "eps": 0.05,
    "d": 2,
    "box": 1.0,
    "periodic": True,
    "initial": "maxwellian",
    "T": 1.0,
    "t_end": 1.0,
}

KINETIC_DEFAULTS = {
    "n": 10000,
    "d": 2,
    "initial": "mixture",
    "T": 1.0,
    "kernel": "flux",
    "rate_const": 0.0,
    "c0": 0.5,
    "t_end": 2.0,
    "checkpoints": 10,
    "entropy_bins": 48,
}

PSEUDO_DEFAULTS = {"s": 2, "k": 3, "d": 2, "eps": 1e-3, "t": 1.0}

MEASURE_DEFAULTS = {
    "dims": (2, 3),
    "kinds": MEASURE_KINDS,
    "rho_exponents": (3, 4, 5, 6, 7, 8, 9),
    "n_samples": 1000000,
}

STUDY_DEFAULTS = {k: v for k, v in dataclass_defaults(StudyConfig).items() if k not in ("seed", "deterministic")}


class UsageError(Exception):
    pass


def _law(initial: str, d: int, T: float):
    if initial == "mixture":
        return TwoTemperatureMixture(d)
    if initial == "maxwellian":
        return MaxwellianParams(1.0, (0.0,) * d, T)
    raise ValueError(f"initial must be 'mixture' or 'maxwellian', got {initial!r}")


def cmd_simulate_particles(cfg, seed, deterministic):
    law = _law(cfg["initial"], cfg["d"], cfg["T"])
    boundary = PeriodicBox(cfg["box"]) if cfg["periodic"] else FreeSpace(cfg["box"])
    z = sample_initial(cfg["N"], cfg["eps"], law, boundary, np.random.SeedSequence([seed, cfg["N"], 0]))
    state = SimulationState(z.copy(), cfg["eps"], boundary=boundary)
    advance(state, cfg["t_end"])
    dE, dP = conserved_drift(state, z.kinetic_energy(), z.momentum())
    d = cfg["d"]
    events = [(e.time, *e.triplet, e.b, *e.pair.stacked) for e in state.event_log]
    head = ["time", "i", "j", "k", "b", *[f"w1_{a}" for a in range(d)], *[f"w2_{a}" for a in range(d)]]
    cols = [*[f"x{a}" for a in range(d)], *[f"v{a}" for a in range(d)]]
    final = [(p, *x, *v) for p, (x, v) in enumerate(zip(state.config.positions, state.config.velocities))]
    summary = {"events": len(state.event_log), "energy_drift": dE, "momentum_drift": dP, "time": state.time}
    return {"events.csv": (head, events), "final.csv": (["particle", *cols], final), "summary.json": summary}, True


def cmd_solve_kinetic(cfg, seed, deterministic):
    n, d = cfg["n"], cfg["d"]
    law = _law(cfg["initial"], d, cfg["T"])
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, 0]))
    ens = VelocityEnsemble(law.sample(n, rng), 1.0 / n)
    rate = cfg["rate_const"] or flux_rate_const(cfg["c0"], d)
    _, records = dsmc_run(
        ens, cfg["t_end"], rate, np.random.SeedSequence([seed, n, 1]), checkpoints=cfg["checkpoints"],
        kernel=cfg["kernel"], entropy_bins=cfg["entropy_bins"],
    )
    head = ["t", "mass", *[f"p{a}" for a in range(d)], "energy", "entropy", "entropy_se"]
    rows = [(r.t, r.moments.mass, *r.moments.momentum, r.moments.energy, r.entropy.value, r.entropy.std_error) for r in records]
    return {"moments.csv": (head, rows)}, True


def cmd_convergence_study(cfg, seed, deterministic):
    study = StudyConfig(**cfg, seed=seed, deterministic=deterministic)
    res = convergence_study(study, progress=lambda msg: print(msg, file=sys.stderr))
    head = ["t_end", "N", "eps", "distance", "ci_lo", "ci_hi", "failures", "raw", "floor", "events", "max_drift"]
    rows = [(r.t_end, r.N, r.eps, r.distance, r.ci_lo, r.ci_hi, r.failures, r.raw, r.floor, r.events, r.max_drift) for r in res["rows"]]
    verdicts = {
        "monotone": {repr(t): v for t, v in res["verdicts"].items()},
        "initial_within_floor": res["initial_floor"],
        "run_seeds": "SeedSequence([seed, N, r])",
    }
    for t, v in res["verdicts"].items():
        print(f"t_end={t}: non-increasing within CI: {v}")
    return {"study.csv": (head, rows), "verdicts.json": verdicts}, True


def cmd_pseudo_trajectory(cfg, seed, deterministic):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    spec = random_spec(cfg["s"], cfg["k"], cfg["d"], cfg["eps"], rng, cfg["t"])
    z0 = Configuration(rng.uniform(size=(cfg["s"], cfg["d"])), rng.normal(size=(cfg["s"], cfg["d"])))
    rows = []
    for name, snaps in (("boltzmann", boltzmann_pseudo_trajectory(z0, spec)), ("bbgky", bbgky_pseudo_trajectory(z0, spec))):
        for snap in snaps:
            for p, (x, v) in enumerate(zip(snap.config.positions, snap.config.velocities)):
                rows.append({"construction": name, "stage": snap.stage, "time": snap.time, "particle": p,
                             "position": x.tolist(), "velocity": v.tolist()})
    rep = proximity_check(z0, spec)
    report = {
        "max_position_gap": rep.max_position_gap,
        "stage_gaps": list(rep.stage_gaps),
        "velocity_equal": rep.velocity_equal,
        "stage_bound_ok": rep.stage_bound_ok(cfg["eps"]),
        "times": list(spec.times),
        "signs": list(spec.signs),
        "indices": list(spec.indices),
    }
    ok = rep.velocity_equal and report["stage_bound_ok"]
    return {"trajectory.json": rows, "proximity.json": report}, ok


def cmd_measure_estimates(cfg, seed, deterministic):
    rhos = 2.0 ** -np.asarray(cfg["rho_exponents"], float)
    rows, slopes = [], []
    for d in cfg["dims"]:
        for kind in cfg["kinds"]:
            if kind not in MEASURE_KINDS:
                raise ValueError(f"unknown measure kind {kind!r}; expected one of {MEASURE_KINDS}")
            est, slope = measure_curve(kind, d, rhos, cfg["n_samples"], [seed, d])
            rows += [(kind, d, r, e.value, e.std_error) for r, e in zip(rhos, est)]
            slopes.append((kind, d, slope, (d - 1) / 2))
            print(f"d={d} {kind}: slope {slope:.3f}")
    return {"fractions.csv": (["kind", "d", "rho", "fraction", "std_error"], rows),
            "slopes.csv": (["kind", "d", "slope", "reference"], slopes)}, True


COMMANDS = {
    "simulate-particles": (cmd_simulate_particles, PARTICLE_DEFAULTS),
    "solve-kinetic": (cmd_solve_kinetic, KINETIC_DEFAULTS),
    "convergence-study": (cmd_convergence_study, STUDY_DEFAULTS),
    "pseudo-trajectory": (cmd_pseudo_trajectory, PSEUDO_DEFAULTS),
    "measure-estimates": (cmd_measure_estimates, MEASURE_DEFAULTS),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ternary", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file merged over the defaults")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", default=f"out-{name}", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--deterministic", action="store_true", help="single-process execution")
    v = sub.add_parser("verify")
    v.add_argument("--quick", action="store_true", help="reduced sizes, skips the measure and convergence studies")
    v.add_argument("--manifest", help="re-hash the files listed in a manifest instead")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--deterministic", action="store_true")
    return parser


def _resolve(args, defaults) -> dict:
    cfg = parse_config(args.config, defaults) if args.config else dict(defaults)
    if args.set:
        cfg = parse_config_text("\n".join(args.set), cfg)
    return cfg


def _verify(args) -> int:
    if args.manifest:
        problems = verify_manifest(args.manifest)
        for p in problems:
            print(p)
        print("manifest intact" if not problems else f"{len(problems)} problem(s)")
        return 0 if not problems else 1
    results = checks.run_checks(quick=args.quick)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "verify":
            return _verify(args)
        fn, defaults = COMMANDS[args.command]
        cfg = _resolve(args, defaults)
        started = now_iso()
        results, ok = fn(cfg, args.seed, args.deterministic)
        manifest = emit_outputs(results, args.out, args.command, cfg, args.seed, started)
        print(json.dumps({"out": str(args.out), "files": sorted(manifest["files"])}))
        return 0 if ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
