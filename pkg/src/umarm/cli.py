"""Command-line entry point: ``umarm <experiment> [options]``.

Each subcommand runs one experiment, prints its summary and, with
``--out``, writes the trajectory CSV and summary text there.  Failures
exit nonzero with the error class named on stderr.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arm import N_JOINTS, tip_position
from .config import load_config
from .errors import ConfigError, ExperimentError, InputError, SimulationFault, UMArmError
from .experiments import ExperimentSpec, run_experiment
from .ik import solve_position_ik

EXIT_CODES = {
    ConfigError: 2,
    ExperimentError: 3,
    InputError: 4,
    SimulationFault: 5,
}

SUBCOMMANDS = {
    "step": "step_response",
    "waypoints": "waypoints",
    "payload": "payload_sweep",
    "endurance": "endurance",
    "compliance": "compliance_demo",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config (default: packaged defaults)")
    common.add_argument("--profile", default="high-aggressive", help="controller profile name")
    common.add_argument("--out", type=Path, help="directory for the CSV and summary files")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized inputs")
    common.add_argument("--duration", type=float, help="override the experiment duration (s)")

    parser = argparse.ArgumentParser(prog="umarm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"umarm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("step", parents=[common], help="joint step response (switches at 6/12/18 s)")
    sub.add_parser("waypoints", parents=[common], help="IK waypoint traversal, 5 s dwell")
    sub.add_parser("payload", parents=[common], help="tip droop under one-sided max pressure")
    sub.add_parser("endurance", parents=[common], help="waypoint loop on tank air until supply fails")
    sub.add_parser("compliance", parents=[common], help="directional compliance demo")
    ik = sub.add_parser("ik-check", parents=[common], help="IK round trips on random reachable targets")
    ik.add_argument("--count", type=int, default=100, help="number of random targets")
    ik.add_argument("--min-rate", type=float, default=0.95, help="required converged fraction")
    return parser


def ik_check(cfg, count, seed, min_rate, out=None):
    """Solve IK for ``count`` targets ``FK(theta*)``; returns the summary text.

    Raises:
        ExperimentError: if fewer than ``min_rate`` of the targets converge
            or any solution leaves the joint limits.
    """
    if count < 1:
        raise InputError("--count must be at least 1")
    rng = np.random.default_rng(seed)
    lim = cfg.arm.limits
    t0 = time.perf_counter()
    rows = []
    converged = inside = 0
    for _ in range(count):
        theta_star = rng.uniform(lim.lower, lim.upper)
        target = tip_position(cfg.arm, theta_star)
        res = solve_position_ik(cfg.arm, np.zeros(N_JOINTS), target, cfg.ik)
        converged += res.converged
        inside += bool(lim.contains(res.theta))
        rows.append([*target, res.residual, res.iterations, int(res.converged)])
    elapsed = time.perf_counter() - t0
    residuals = np.array([r[3] for r in rows])
    text = (
        f"experiment: ik-check\nseed: {seed}\ntargets: {count}\n"
        f"converged: {converged} ({converged / count:.1%})\n"
        f"within limits: {inside}\n"
        f"median residual: {np.median(residuals) * 1e3:.4f} mm\n"
        f"max residual: {residuals.max() * 1e3:.4f} mm\n"
        f"runtime: {elapsed:.2f} s\n"
    )
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["# umarm-ik-check/1", "x,y,z,residual,iterations,converged"]
        lines += [",".join(repr(float(v)) for v in r[:4]) + f",{r[4]},{r[5]}" for r in rows]
        (out / "ik_check.csv").write_text("\n".join(lines) + "\n")
        (out / "ik_check_summary.txt").write_text(text)
    if converged < min_rate * count or inside < count:
        raise ExperimentError(
            f"IK check failed: {converged}/{count} converged, {inside}/{count} within limits\n" + text
        )
    return text


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "ik-check":
            text = ik_check(cfg, args.count, args.seed, args.min_rate, args.out)
        else:
            spec = ExperimentSpec(
                SUBCOMMANDS[args.command],
                profile=args.profile,
                duration=args.duration,
                output=args.out,
                seed=args.seed,
            )
            cfg.profile(spec.profile)  # fail early on an unknown profile
            text = run_experiment(cfg, spec).summary()
    except UMArmError as exc:
        code = next((c for cls, c in EXIT_CODES.items() if isinstance(exc, cls)), 1)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
