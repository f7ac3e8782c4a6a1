"""Command line entry point.

``momentum-mpc run <config>``
    simulate one scenario and write ``run.csv``, ``summary.json`` and figures
``momentum-mpc sweep <config> --push-magnitudes 40,70,100``
    rerun the scenario once per push magnitude, each into its own directory
``momentum-mpc check <config>``
    numerical self-checks on the scenario's first control cycle, no simulation

``<config>`` is a YAML file or the name of a bundled scenario. Exit codes:
0 success, 1 fall detected, 2 configuration error, 3 solver failure (for
``check``: any failed self-check).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ScenarioConfig
from .output import emit_plots, write_csv, write_summary
from .sim_harness import run_scenario

EXIT_OK = 0
EXIT_FALL = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

log = logging.getLogger("momentum_mpc")


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if args.seed is not None:
        changes["simulation.seed"] = args.seed
    if args.dt is not None:
        changes["controller.dt"] = args.dt
    if args.horizon is not None:
        changes["controller.horizon"] = args.horizon
    if args.out_dir is not None:
        changes["output.directory"] = str(args.out_dir)
    return cfg.replace(**changes) if changes else cfg


def _load(args) -> ScenarioConfig:
    return _apply_overrides(cfgmod.load_config(args.config), args)


def exit_code_for(summary: dict) -> int:
    if summary.get("solver_failed"):
        return EXIT_SOLVER
    if summary.get("fell"):
        return EXIT_FALL
    return EXIT_OK


def execute(cfg: ScenarioConfig, out_dir) -> dict:
    """Run one scenario and write its artifacts; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_log = run_scenario(cfg)
    write_csv(run_log, out_dir / "run.csv", log_timing=cfg.output.log_timing)
    extra = {"seed": cfg.simulation.seed, "dt": cfg.controller.dt, "horizon": cfg.controller.horizon}
    write_summary(run_log, out_dir / "summary.json", scenario=cfg.name, extra=extra)
    cfgmod.save_config(cfg, out_dir / "config.yaml")
    if len(run_log):
        emit_plots(run_log, out_dir, cfg.output.plots)
    return {**run_log.summary(), "out_dir": str(out_dir)}


def _report(name: str, summary: dict) -> None:
    parts = [f"{name}:"]
    if summary["step_taken"]:
        parts.append(f"step at t={summary['trigger_time']:.2f}s")
        if summary["landing_time"] is not None:
            parts.append(f"landed t={summary['landing_time']:.2f}s")
    else:
        parts.append("no step")
    if summary["settle_time"] is not None:
        parts.append(f"settled t={summary['settle_time']:.2f}s")
    parts.append(f"max excursion {summary['max_transverse_excursion'] * 1000:.1f} mm")
    if summary["diagnostic"]:
        parts.append(summary["diagnostic"])
    print(" ".join(parts))


def cmd_run(args) -> int:
    cfg = _load(args)
    out_dir = Path(args.out_dir) if args.out_dir is not None else Path(cfg.output.directory) / cfg.name
    summary = execute(cfg, out_dir)
    _report(cfg.name, summary)
    return exit_code_for(summary)


def _parse_magnitudes(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--push-magnitudes", f"not a comma separated list of numbers: {text!r}") from None
    if not values or any(v < 0 or not np.isfinite(v) for v in values):
        raise ConfigError("--push-magnitudes", "needs one or more non-negative numbers")
    return values


def _sweep_one(job):
    cfg, out_dir = job
    return cfg.name, execute(cfg, out_dir)


def sweep_configs(cfg: ScenarioConfig, magnitudes, base_dir) -> list[tuple[ScenarioConfig, Path]]:
    """One config per magnitude; every push of the base scenario is rescaled.

    A scenario without pushes gets a single default push.
    """
    jobs = []
    data = cfg.to_dict()
    pushes = data["simulation"]["pushes"] or [dataclasses.asdict(cfgmod.PushConfig())]
    for mag in magnitudes:
        tag = f"{mag:g}N"
        new = dict(data)
        new["name"] = f"{cfg.name}_{tag}"
        new["simulation"] = {**data["simulation"], "pushes": [{**p, "magnitude": mag} for p in pushes]}
        jobs.append((cfgmod.from_dict(new), Path(base_dir) / new["name"]))
    return jobs


def cmd_sweep(args) -> int:
    cfg = _load(args)
    mags = _parse_magnitudes(args.push_magnitudes)
    base = Path(args.out_dir) if args.out_dir is not None else Path(cfg.output.directory)
    jobs = sweep_configs(cfg, mags, base)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    code = EXIT_OK
    for name, summary in results:
        _report(name, summary)
        # worst outcome wins: solver failure, then fall
        code = max(code, exit_code_for(summary), key=lambda c: (c == EXIT_SOLVER, c == EXIT_FALL))
    return code


def cmd_check(args) -> int:
    from .checks import run_checks

    cfg = _load(args)
    results = run_checks(cfg)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momentum-mpc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario YAML file or bundled scenario name")
    common.add_argument("--out-dir", type=Path, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override simulation.seed")
    common.add_argument("--dt", type=float, default=None, help="override controller.dt [s]")
    common.add_argument("--horizon", type=int, default=None, help="override controller.horizon")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="simulate one scenario")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="rerun a scenario over push magnitudes")
    p.add_argument("--push-magnitudes", required=True, help="comma separated magnitudes in N")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("check", parents=[common], help="numerical self-checks, no simulation")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
