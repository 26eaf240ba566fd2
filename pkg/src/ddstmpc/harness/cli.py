"""Command line entry point.

    ddstmpc collect  [--config PATH] [--seed N] [--out DIR]
    ddstmpc identify [--config PATH] [--seed N] [--out DIR] [--data CSV]
    ddstmpc offline  [--config PATH] [--seed N] [--out DIR] [--data CSV]
    ddstmpc simulate [--config PATH] [--seed N] [--out DIR] [--family JSON]
    ddstmpc compare  [--config PATH] [--seed N] [--out DIR]
    ddstmpc audit    [--config PATH] [--seed N] [--out DIR] [--runs N]

Without ``--config`` the built-in reference setup is used. Exit codes: 0 on
success, 2 on a usage or configuration error, 3 on a pipeline failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .. import controller as ctl
from ..rosc import RoscFamily, compute_family, check_terminal_feasibility
from ..sysid import (
    assemble_data,
    compute_model_set,
    extract_vertex_models,
    read_trajectories_csv,
    reduced_model_set,
    write_trajectories_csv,
)
from .config import ConfigError, load_config, reference_config
from .experiment import (
    build_controller,
    closed_loop_audit,
    data_rng,
    disturbance_rng,
    invariant_suite,
    loop_checks,
    run_experiment,
    run_loop,
    terminal_seed,
)
from .io import write_json, write_trace_csv
from .plant import collect_trajectories, sample_disturbance

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3
SUBCOMMANDS = ("collect", "identify", "offline", "simulate", "compare", "audit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ddstmpc", description="Data-driven set-theoretic MPC pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="experiment config (JSON); default: reference setup")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("identify", "offline"):
            p.add_argument("--data", type=Path, help="trajectories CSV; collected from the plant if omitted")
        if name == "simulate":
            p.add_argument("--family", type=Path, help="family JSON; computed if omitted")
        if name == "audit":
            p.add_argument("--runs", type=int, help="number of disturbance realizations")
    return parser


def _trajectories(cfg, args):
    if getattr(args, "data", None) is not None:
        if not args.data.exists():
            raise ConfigError(f"data file not found: {args.data}")
        return read_trajectories_csv(args.data)
    d = cfg.data
    return collect_trajectories(cfg.plant, d.num_trajectories, d.samples, data_rng(cfg.seed),
                                d.init_lower, d.init_upper, d.max_retries)


def _offline(cfg, args):
    trajs = _trajectories(cfg, args)
    ms = compute_model_set(assemble_data(trajs), cfg.plant.W)
    V = extract_vertex_models(ms, cfg.max_generators)
    T0 = terminal_seed(V, cfg.offline.terminal)
    weights = None if cfg.offline.weights is None else np.asarray(cfg.offline.weights, dtype=float)
    p = cfg.plant
    return compute_family(V, T0, p.X, p.U, p.W, cfg.offline.levels, cfg.offline.template_policy, weights)


def _cmd_collect(cfg, args) -> int:
    write_trajectories_csv(args.out / "trajectories.csv", _trajectories(cfg, args))
    return EXIT_OK


def _cmd_identify(cfg, args) -> int:
    ms = compute_model_set(assemble_data(_trajectories(cfg, args)), cfg.plant.W)
    red = reduced_model_set(ms, cfg.max_generators)
    write_json(args.out / "model_set.json", {
        "center": ms.mz.center.tolist(),
        "generators": ms.mz.generators.tolist(),
        "reduced_generators": red.mz.generators.tolist(),
        "vertex_models": 2 ** red.mz.num_generators,
    })
    return EXIT_OK


def _cmd_offline(cfg, args) -> int:
    family = _offline(cfg, args)
    write_json(args.out / "family.json", family.to_dict())
    if not check_terminal_feasibility(family.terminal, family.level(1)):
        print("terminal seed is not inside the first level", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def _cmd_simulate(cfg, args) -> int:
    if args.family is not None:
        import json
        if not args.family.exists():
            raise ConfigError(f"family file not found: {args.family}")
        family = RoscFamily.from_dict(json.loads(args.family.read_text()))
    else:
        family = _offline(cfg, args)
    state = build_controller(cfg, family)
    noise = sample_disturbance(cfg.plant.W, disturbance_rng(cfg.seed, 0), cfg.online.horizon, cfg.online.disturbance)
    loop = run_loop(np.asarray(cfg.online.x0, dtype=float), lambda x: ctl.step(x, state), cfg.plant, noise)
    write_trace_csv(args.out / "trace.csv", loop.states, loop.inputs, loop.indices)
    checks = loop_checks(loop, cfg.plant)
    write_json(args.out / "simulate.json", {**loop.to_dict(), **checks})
    ok = loop.error is None and checks["reached_at"] is not None and checks["state_ok"] and checks["input_ok"]
    return EXIT_OK if ok else EXIT_PIPELINE


def _cmd_compare(cfg, args) -> int:
    result = run_experiment(cfg, out_dir=args.out, compare=True)
    return EXIT_OK if result.ok else EXIT_PIPELINE


def _cmd_audit(cfg, args) -> int:
    result = run_experiment(cfg, out_dir=args.out, compare=True)
    checks = invariant_suite(result)
    audit = {"checks": checks}
    if result.family is not None:
        audit["closed_loop"] = closed_loop_audit(cfg, result, runs=args.runs)
        checks["closed_loop"] = audit["closed_loop"]["summary"]["all_pass"]
    write_json(args.out / "audit.json", audit)
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if all(checks.values()) else EXIT_PIPELINE


COMMANDS = {
    "collect": _cmd_collect,
    "identify": _cmd_identify,
    "offline": _cmd_offline,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "audit": _cmd_audit,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"ddstmpc: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config is not None else reference_config()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"ddstmpc: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # any stage failure maps to one exit code
        print(f"ddstmpc: {args.command} failed: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
