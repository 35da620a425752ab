"""Command-line front end.

Subcommands: classify, solve, table, simulate, repeated.  Reports are
canonical JSON (sorted keys, 12 significant digits); --format table prints
a human-readable rendering instead.  Exit codes are part of the contract:

    2  invalid game parameters
    3  no root: the requested equilibrium does not exist
    4  an iterative solve failed to converge
    5  invalid scenario file
    6  discount factor below l/(l+1)

The environment variable RECIPLAB_THREADS caps internal parallelism; the
current implementation computes everything on one thread, so any positive
value is honored trivially (invalid values are rejected).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import scenario as scen
from .errors import (
    DiscountTooLow,
    InvalidGame,
    InvalidScenario,
    NoConvergence,
    NoRoot,
    RecipLabError,
)
from .equilibrium import (
    feasibility_table,
    solve_q_actions,
    solve_q_actions_against_coop,
    solve_q_conflicts,
    solve_q_profiles,
    verify_nash,
)
from .games import classify, validate_pd
from .observation import ObservationStructure
from .repeated import RepeatedConfig, q_sequence, verify_one_deviation
from .reporting import canonical_dumps
from .simulation import SimConfig, simulate
from .steady_state import SolverOptions, solve_consistent
from .strategies import check_regularity

EXIT_CODES = {
    InvalidGame: 2,
    NoRoot: 3,
    NoConvergence: 4,
    InvalidScenario: 5,
    DiscountTooLow: 6,
}


def thread_cap() -> int:
    raw = os.environ.get("RECIPLAB_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise InvalidScenario(f"RECIPLAB_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise InvalidScenario("RECIPLAB_THREADS must be >= 1")
    return value


def _emit(report: dict, args) -> None:
    text = canonical_dumps(report)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    if getattr(args, "format", "json") == "table":
        _print_table(report)
    else:
        sys.stdout.write(text)


def _print_table(report: dict, indent: int = 0) -> None:
    pad = "  " * indent
    for key in sorted(report):
        value = report[key]
        if isinstance(value, dict):
            print(f"{pad}{key}:")
            _print_table(value, indent + 1)
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            print(f"{pad}{key}:")
            for item in value:
                _print_table(item, indent + 1)
                print()
        else:
            print(f"{pad}{key}: {value}")


def cmd_classify(args) -> int:
    game = validate_pd(args.g, args.l)
    cls = classify(game)
    _emit(
        {
            "g": game.g,
            "l": game.l,
            "offense": cls.offense.value,
            "temptation": cls.temptation.value,
        },
        args,
    )
    return 0


def _parse_ladder(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def cmd_solve(args) -> int:
    data = scen.load(args.scenario)
    game = scen.build_game(data)
    model = scen.build_model(data)
    ladder = _parse_ladder(args.eps_ladder) if args.eps_ladder else data.get("eps_ladder")
    mode = "min" if args.min_mode else "max"

    if data.get("normal"):
        # fixed-population mode: solve the steady states of the given
        # strategy distribution and report them
        population = scen.build_population(data, model)
        result = solve_consistent(population, model, game, SolverOptions())
        states = [s.to_json_dict() for s in result.states]
        chosen = result.most_cooperative()
        report = {
            "mode": "steady_state",
            "schema_version": scen.SCHEMA_VERSION,
            "states": states,
            "q_star": chosen.average_defection(),
            "residual": chosen.residual,
        }
        if model.structure is ObservationStructure.ACTIONS and population.committed:
            reg = check_regularity([s for s, _ in population.committed], model)
            report["regularity"] = {
                "regular": reg.regular,
                "witness_alpha": reg.witness_alpha,
            }
            if not reg.regular:
                report["warning"] = (
                    "commitment set is not regular: a common self-consistent "
                    f"mixed action exists near {reg.witness_alpha:.6g}"
                )
        nash = verify_nash(chosen, mode=mode)
        report["nash_gap"] = nash.nash_gap
        report["is_nash"] = nash.is_nash
        _emit(report, args)
        return 0

    committed_specs = data.get("committed", [])
    kwargs = {} if ladder is None else {"ladder": tuple(ladder)}
    if model.structure is ObservationStructure.ACTIONS:
        committed = scen.build_group(committed_specs, model, "committed_")
        eq = solve_q_actions(game, model.k, committed, **kwargs)
    elif model.structure is ObservationStructure.CONFLICTS:
        committed = scen.build_group(committed_specs, model, "committed_")
        eq = solve_q_conflicts(game, model.k, committed, **kwargs)
    else:
        alpha = data.get("alpha_commit")
        if alpha is None:
            raise InvalidScenario(
                "profile-structure scenarios need an alpha_commit field"
            )
        if model.structure is ObservationStructure.ACTION_PROFILES:
            eq = solve_q_profiles(game, model.k, float(alpha), **kwargs)
        else:
            eq = solve_q_actions_against_coop(game, model.k, float(alpha), **kwargs)
    report = {"mode": "equilibrium", "schema_version": scen.SCHEMA_VERSION}
    report.update(eq.to_json_dict())
    _emit(report, args)
    return 0


def cmd_table(args) -> int:
    game = validate_pd(args.g, args.l)
    cells = feasibility_table(game, args.k)
    cls = classify(game)
    report = {
        "game": {"g": game.g, "l": game.l},
        "offense": cls.offense.value,
        "temptation": cls.temptation.value,
        "k": args.k,
        "cells": [c.to_json_dict() for c in cells],
        "pattern": "".join("Y" if c.feasible else "N" for c in cells),
    }
    _emit(report, args)
    return 0


def cmd_simulate(args) -> int:
    data = scen.load(args.scenario)
    game = scen.build_game(data)
    model = scen.build_model(data)
    population = scen.build_population(data, model)
    settings = scen.build_sim_settings(data, args.seed)
    config = SimConfig(
        game=game,
        model=model,
        population=population,
        population_size=settings.population_size,
        rounds=settings.rounds,
        history_window=settings.history_window,
        seed=settings.seed,
        burn_in=settings.burn_in,
        n_batches=settings.n_batches,
    )
    result = simulate(config)
    if args.out:
        csv_path = args.out + ".csv"
        with open(csv_path, "w") as fh:
            header = ["round", "defection_rate"] + [
                f"payoff_{name}" for name in result.strategy_names
            ]
            fh.write(",".join(header) + "\n")
            for r in range(result.rounds_recorded):
                row = [str(r), f"{result.defection_rate[r]:.12g}"] + [
                    f"{x:.12g}" for x in result.payoff_series[r]
                ]
                fh.write(",".join(row) + "\n")
    report = {"mode": "simulate", "schema_version": scen.SCHEMA_VERSION}
    report.update(result.to_json_dict())
    out_json = args.out + ".json" if args.out else None
    text = canonical_dumps(report)
    if out_json:
        with open(out_json, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_repeated(args) -> int:
    data = scen.load(args.scenario)
    game = scen.build_game(data)
    rep = data.get("repeated")
    if not isinstance(rep, dict):
        raise InvalidScenario("repeated scenarios need a repeated block")
    config = RepeatedConfig(
        game=game,
        k=int(data.get("k", 2)),
        delta=float(rep["delta"]),
        epsilon=float(rep.get("epsilon", data.get("epsilon", 1e-4))),
        alpha_hi=float(rep.get("alpha_hi", 0.5)),
        alpha_lo=float(rep.get("alpha_lo", 0.005)),
        horizon=int(rep.get("horizon", 200)),
    )
    deviation, state = verify_one_deviation(config)
    report = {
        "mode": "repeated",
        "schema_version": scen.SCHEMA_VERSION,
        "recursion": state.to_json_dict(),
        "one_deviation": deviation.to_json_dict(),
    }
    _emit(report, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reciplab",
        description="steady states and cooperative equilibria of randomly "
        "matched Prisoner's Dilemma populations with sampled observation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify a game's payoff parameters")
    p.add_argument("g", type=float)
    p.add_argument("l", type=float)
    _common_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("solve", help="solve a scenario's equilibrium or steady states")
    p.add_argument("--scenario", required=True)
    p.add_argument("--eps-ladder", help="comma-separated committed-mass ladder")
    p.add_argument("--min-mode", action="store_true",
                   help="score deviators by their worst consistent record")
    _common_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("table", help="feasibility of cooperation per structure")
    p.add_argument("g", type=float)
    p.add_argument("l", type=float)
    p.add_argument("k", type=int)
    _common_flags(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("simulate", help="run the finite-population simulator")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", help="output prefix for <out>.csv and <out>.json")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("repeated", help="discounted repeated-game recursion")
    p.add_argument("--scenario", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_repeated)
    return parser


def _common_flags(p) -> None:
    p.add_argument("--out", help="also write the JSON report to this path")
    p.add_argument("--format", choices=("json", "table"), default="json")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        thread_cap()
        return args.func(args)
    except RecipLabError as exc:
        for etype, code in EXIT_CODES.items():
            if isinstance(exc, etype):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
