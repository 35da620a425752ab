"""Scenario files: a versioned JSON schema tying together a game, an
observation structure, strategy specs, and solver/simulation options.

Strategy specs are named constructors:

    {"kind": "constant",     "alpha": 0.5}
    {"kind": "threshold",    "j": 1}
    {"kind": "mixed_single", "q": 0.1667}
    {"kind": "table",        "values": [0.1, 0.817]}
    {"kind": "profile_s1"} / {"kind": "profile_s2"}

each optionally carrying "name" and, inside population lists, "weight".
A scenario with an explicit "normal" list describes a fixed population
whose steady states are to be solved; without one it describes a
cooperative-equilibrium problem for the given structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import InvalidScenario
from .games import PDGame, validate_pd
from .observation import ObservationStructure, SignalModel
from .strategies import (
    PerturbedPopulation,
    StationaryStrategy,
    make_constant,
    make_mixed_single,
    make_profile_strategy_s1s2,
    make_table,
    make_threshold,
)

SCHEMA_VERSION = 1


def locate(path_or_name: str) -> Path:
    """Resolve a scenario path; bare names fall back to the bundled set."""
    p = Path(path_or_name)
    if p.exists():
        return p
    name = path_or_name if path_or_name.endswith(".json") else path_or_name + ".json"
    bundled = resources.files("reciplab").joinpath("scenarios", name)
    if bundled.is_file():
        return Path(str(bundled))
    raise InvalidScenario(f"scenario not found: {path_or_name}")


def load(path_or_name: str) -> dict:
    path = locate(path_or_name)
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise InvalidScenario("scenario must be a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise InvalidScenario(
            f"unsupported schema_version {data.get('schema_version')!r}; "
            f"expected {SCHEMA_VERSION}"
        )
    return data


def build_game(data: dict) -> PDGame:
    game = data.get("game")
    if not isinstance(game, dict) or "g" not in game or "l" not in game:
        raise InvalidScenario("scenario needs game: {g, l}")
    return validate_pd(game["g"], game["l"])


def build_model(data: dict) -> SignalModel:
    try:
        structure = ObservationStructure(data.get("structure", "actions"))
    except ValueError as exc:
        raise InvalidScenario(f"unknown structure {data.get('structure')!r}") from exc
    k = data.get("k")
    if not isinstance(k, int) or k < 1:
        raise InvalidScenario("scenario needs a positive integer k")
    return SignalModel(structure, k)


def build_strategy(spec: dict, model: SignalModel, default_name: str) -> StationaryStrategy:
    kind = spec.get("kind")
    name = spec.get("name", default_name)
    if kind == "constant":
        return make_constant(model, float(spec["alpha"]), name)
    if kind == "threshold":
        return make_threshold(model, int(spec["j"]), name)
    if kind == "mixed_single":
        return make_mixed_single(model, float(spec["q"]), name)
    if kind == "table":
        return make_table(model, spec["values"], name)
    if kind in ("profile_s1", "profile_s2"):
        s1, s2 = make_profile_strategy_s1s2(model)
        chosen = s1 if kind == "profile_s1" else s2
        return StationaryStrategy(name, chosen.defect_prob)
    raise InvalidScenario(f"unknown strategy kind {kind!r}")


def build_group(specs, model: SignalModel, prefix: str):
    if not specs:
        return []
    out = []
    for i, spec in enumerate(specs):
        strategy = build_strategy(spec, model, f"{prefix}{i}")
        out.append((strategy, float(spec.get("weight", 1.0 / len(specs)))))
    return out


def build_population(data: dict, model: SignalModel) -> PerturbedPopulation:
    epsilon = float(data.get("epsilon", 0.0))
    committed = build_group(data.get("committed", []), model, "committed_")
    normal = build_group(data.get("normal", []), model, "normal_")
    if not normal:
        raise InvalidScenario("population scenarios need a normal strategy list")
    try:
        return PerturbedPopulation(normal, committed, epsilon)
    except ValueError as exc:
        raise InvalidScenario(str(exc)) from exc


@dataclass
class SimSettings:
    population_size: int
    rounds: int
    history_window: int
    seed: int
    burn_in: Optional[int]
    n_batches: int


def build_sim_settings(data: dict, seed_override: Optional[int] = None) -> SimSettings:
    sim = data.get("sim")
    if not isinstance(sim, dict):
        raise InvalidScenario("simulation scenarios need a sim block")
    try:
        return SimSettings(
            population_size=int(sim["population_size"]),
            rounds=int(sim["rounds"]),
            history_window=int(sim.get("history_window", 100)),
            seed=int(seed_override if seed_override is not None else sim.get("seed", data.get("seed", 0))),
            burn_in=sim.get("burn_in"),
            n_batches=int(sim.get("n_batches", 20)),
        )
    except KeyError as exc:
        raise InvalidScenario(f"sim block missing {exc}") from exc
