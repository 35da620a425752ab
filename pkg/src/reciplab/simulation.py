"""Finite-population Monte Carlo oracle.

Agents carry a rolling window of their last n per-interaction records (what
an observer of them would see).  Each round the population is uniformly
matched into pairs; every agent samples k window entries of her partner
with replacement, forms the count signal, draws her action from her
strategy table, and both agents append the interaction's record to their
own windows.  With n large this approximates the stationary sampled-
observation model, and the empirical per-strategy signal distributions are
the cross-check for the analytic fixed points.

Randomness comes from one counter-based Philox stream keyed by the config
seed; every round draws its variates in a fixed order, so results are
bit-identical for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidScenario
from .games import PDGame, payoff_matrix
from .observation import ObservationStructure, SignalModel
from .steady_state import SolverOptions, iterate_to_fixed_point, CompiledPopulation, SignalProfile, SteadyState
from .strategies import PerturbedPopulation, make_mixed_single, make_threshold, make_constant


@dataclass(frozen=True)
class SimConfig:
    game: PDGame
    model: SignalModel
    population: PerturbedPopulation
    population_size: int
    rounds: int
    history_window: int = 100
    seed: int = 0
    burn_in: Optional[int] = None
    n_batches: int = 20
    # "uniform_response": warm-up plays each strategy's response to the
    # uniform signal (agnostic start for steady-state measurement);
    # "clean_response": responses to the all-clean signal (a cooperative
    # population freshly seeded with committed agents, for onset studies)
    warm_start: str = "uniform_response"

    def __post_init__(self) -> None:
        if self.population_size % 2 != 0:
            raise InvalidScenario("population size must be even for pair matching")
        if self.history_window < self.model.k:
            raise InvalidScenario("history window must hold at least k records")
        if self.rounds < 1:
            raise InvalidScenario("need at least one round")
        if self.warm_start not in ("uniform_response", "clean_response"):
            raise InvalidScenario(f"unknown warm_start {self.warm_start!r}")

    def effective_burn_in(self) -> int:
        if self.burn_in is not None:
            return self.burn_in
        return max(10 * self.history_window, 2000)


@dataclass
class SimResult:
    defection_rate: np.ndarray            # per recorded round
    payoff_series: np.ndarray             # (rounds, n_strategies) stage payoffs
    strategy_names: list
    theta_empirical: dict                 # strategy name -> signal distribution
    theta_halfwidth: dict                 # strategy name -> per-signal half-widths
    payoffs: dict                         # strategy name -> mean stage payoff
    payoff_halfwidth: dict
    mean_defection: float
    defection_halfwidth: float
    rounds_recorded: int
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "mean_defection": self.mean_defection,
            "defection_halfwidth": self.defection_halfwidth,
            "rounds_recorded": self.rounds_recorded,
            "seed": self.seed,
            "theta_empirical": {k: [float(x) for x in v] for k, v in self.theta_empirical.items()},
            "theta_halfwidth": {k: [float(x) for x in v] for k, v in self.theta_halfwidth.items()},
            "payoffs": {k: float(v) for k, v in self.payoffs.items()},
            "payoff_halfwidth": {k: float(v) for k, v in self.payoff_halfwidth.items()},
        }


def draw_matching(rng: np.random.Generator, n_agents: int) -> np.ndarray:
    """Uniform random perfect matching: partner index for every agent."""
    order = rng.permutation(n_agents)
    partner = np.empty(n_agents, dtype=np.int64)
    partner[order[0::2]] = order[1::2]
    partner[order[1::2]] = order[0::2]
    return partner


def _record_index_matrix(model: SignalModel) -> np.ndarray:
    """record_of[a_own, a_other] -> letter index in the model alphabet."""
    from .games import Action
    from .observation import observe_map

    acts = (Action.C, Action.D)
    out = np.zeros((2, 2), dtype=np.uint8)
    letters = model.alphabet
    for i, a in enumerate(acts):
        for j, b in enumerate(acts):
            out[i, j] = letters.index(observe_map(model.structure, (a, b)))
    return out


def _signal_index_lookup(model: SignalModel) -> np.ndarray:
    """Maps a base-(k+1) encoding of letter counts to the signal index."""
    k, nb = model.k, len(model.alphabet)
    lookup = np.full((k + 1) ** nb, -1, dtype=np.int64)
    for idx, counts in enumerate(model.signals()):
        code = 0
        for c in counts:
            code = code * (k + 1) + int(c)
        lookup[code] = idx
    return lookup


def simulate(config: SimConfig) -> SimResult:
    """Run the agent-based model and collect batched statistics."""
    model = config.model
    k = model.k
    n_agents = config.population_size
    window = config.history_window
    rng = np.random.Generator(np.random.Philox(config.seed))

    incumbents = config.population.incumbents()
    names = [s.name for s, _ in incumbents]
    tables = np.vstack([s.defect_prob for s, _ in incumbents])
    weights = np.array([w for _, w in incumbents])

    # deterministic largest-remainder allocation of agents to strategies
    counts = np.floor(weights * n_agents).astype(int)
    remainder = n_agents - counts.sum()
    frac_order = np.argsort(-(weights * n_agents - counts))
    for i in range(remainder):
        counts[frac_order[i % len(counts)]] += 1
    sid = np.repeat(np.arange(len(names)), counts)
    rng.shuffle(sid)

    record_of = _record_index_matrix(model)
    lookup = _signal_index_lookup(model)
    nb = len(model.alphabet)
    pay = payoff_matrix(config.game)

    history = np.zeros((n_agents, window), dtype=np.uint8)
    hist_len = 0
    hist_ptr = 0

    # warm-up: forced play at each strategy's response to a reference signal
    if config.warm_start == "uniform_response":
        reference = np.full(model.size(), 1.0 / model.size())
    else:
        reference = np.zeros(model.size())
        reference[0] = 1.0
    alpha0 = tables @ reference
    for _ in range(10 * k):
        partner = draw_matching(rng, n_agents)
        act = (rng.random(n_agents) < alpha0[sid]).astype(np.uint8)
        history[:, hist_ptr] = record_of[act, act[partner]]
        hist_ptr = (hist_ptr + 1) % window
        hist_len = min(hist_len + 1, window)

    burn_in = config.effective_burn_in()
    total_rounds = burn_in + config.rounds
    n_strat = len(names)
    size = model.size()

    rate_series = np.empty(config.rounds)
    payoff_series = np.zeros((config.rounds, n_strat))
    strat_sizes = np.maximum(np.bincount(sid, minlength=n_strat), 1)
    batch_edges = np.linspace(0, config.rounds, config.n_batches + 1).astype(int)
    batch_theta = np.zeros((config.n_batches, n_strat, size))
    batch_pay = np.zeros((config.n_batches, n_strat))
    batch_paycnt = np.zeros((config.n_batches, n_strat), dtype=np.int64)
    batch_rate = np.zeros(config.n_batches)
    batch_len = np.maximum(np.diff(batch_edges), 1)

    base = (k + 1) ** np.arange(nb - 1, -1, -1)

    for t in range(total_rounds):
        partner = draw_matching(rng, n_agents)

        draws = rng.integers(0, hist_len, size=(n_agents, k))
        # sample with replacement from the partner's window
        start = (hist_ptr - hist_len) % window
        cols = (start + draws) % window
        letters = history[partner[:, None], cols]          # (n_agents, k)
        counts_sig = np.zeros((n_agents, nb), dtype=np.int64)
        for b in range(nb):
            counts_sig[:, b] = (letters == b).sum(axis=1)
        sig_idx = lookup[counts_sig @ base]

        p_defect = tables[sid, sig_idx]
        act = (rng.random(n_agents) < p_defect).astype(np.uint8)

        history[:, hist_ptr] = record_of[act, act[partner]]
        hist_ptr = (hist_ptr + 1) % window
        hist_len = min(hist_len + 1, window)

        if t >= burn_in:
            r = t - burn_in
            b = min(np.searchsorted(batch_edges, r, side="right") - 1,
                    config.n_batches - 1)
            rate_series[r] = act.mean()
            batch_rate[b] += act.mean()
            # observed signal about the partner, attributed to the partner's
            # strategy: this is the empirical per-strategy signal distribution
            flat = sid[partner] * size + sig_idx
            batch_theta[b] += np.bincount(flat, minlength=n_strat * size).reshape(n_strat, size)
            stage = pay[act, act[partner]]
            stage_by_strat = np.bincount(sid, weights=stage, minlength=n_strat)
            payoff_series[r] = stage_by_strat / strat_sizes
            batch_pay[b] += stage_by_strat
            batch_paycnt[b] += np.bincount(sid, minlength=n_strat)

    batch_rate = batch_rate / batch_len
    theta_total = batch_theta.sum(axis=0)
    theta_emp = {}
    theta_hw = {}
    pay_mean = {}
    pay_hw = {}
    nB = config.n_batches
    for i, name in enumerate(names):
        row_total = theta_total[i].sum()
        theta_emp[name] = theta_total[i] / max(row_total, 1)
        per_batch = batch_theta[:, i, :] / np.maximum(
            batch_theta[:, i, :].sum(axis=1, keepdims=True), 1)
        theta_hw[name] = per_batch.std(axis=0, ddof=1) / np.sqrt(nB)
        per_batch_pay = batch_pay[:, i] / np.maximum(batch_paycnt[:, i], 1)
        pay_mean[name] = float(per_batch_pay.mean())
        pay_hw[name] = float(per_batch_pay.std(ddof=1) / np.sqrt(nB))

    return SimResult(
        defection_rate=rate_series,
        payoff_series=payoff_series,
        strategy_names=names,
        theta_empirical=theta_emp,
        theta_halfwidth=theta_hw,
        payoffs=pay_mean,
        payoff_halfwidth=pay_hw,
        mean_defection=float(batch_rate.mean()),
        defection_halfwidth=float(batch_rate.std(ddof=1) / np.sqrt(nB)),
        rounds_recorded=config.rounds,
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# Contagion experiment
# ---------------------------------------------------------------------------

@dataclass
class ContagionReport:
    crossed: bool
    crossing_round: Optional[int]
    max_rate: float
    final_rate: float
    rates: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "crossed": self.crossed,
            "crossing_round": self.crossing_round,
            "max_rate": float(self.max_rate),
            "final_rate": float(self.final_rate),
        }


def contagion_experiment(
    game: PDGame,
    k: int,
    q_profile: float,
    seed: int,
    population_size: int = 10_000,
    rounds: int = 5000,
    epsilon: float = 0.01,
    committed_defect_prob: float = 0.995,
    history_window: int = 100,
    threshold: float = 0.5,
) -> ContagionReport:
    """Seed a conflicts population with committed defectors and watch whether
    lone conflicts snowball past the given population defection threshold."""
    model = SignalModel(ObservationStructure.CONFLICTS, k)
    normal = make_mixed_single(model, q_profile, "normal_q")
    committed = make_constant(model, committed_defect_prob, "committed_defector")
    pop = PerturbedPopulation([(normal, 1.0)], [(committed, 1.0)], epsilon)
    config = SimConfig(
        game=game, model=model, population=pop,
        population_size=population_size, rounds=rounds,
        history_window=history_window, seed=seed, burn_in=0,
        warm_start="clean_response",
    )
    result = simulate(config)
    rates = result.defection_rate
    above = np.nonzero(rates >= threshold)[0]
    crossed = len(above) > 0
    return ContagionReport(
        crossed=crossed,
        crossing_round=int(above[0]) if crossed else None,
        max_rate=float(rates.max()),
        final_rate=float(rates[-1]),
        rates=rates,
    )


# ---------------------------------------------------------------------------
# Payoff-monotone share dynamics
# ---------------------------------------------------------------------------

@dataclass
class ShareTrajectory:
    shares: np.ndarray
    q_target: float
    terminal: float
    distance: float

    def to_json_dict(self) -> dict:
        return {
            "q_target": float(self.q_target),
            "terminal": float(self.terminal),
            "distance": float(self.distance),
            "steps": len(self.shares) - 1,
        }


def monotone_dynamics(
    game: PDGame,
    k: int,
    committed: Sequence,
    q0: float,
    steps: int,
    eta: float = 0.1,
    epsilon: float = 0.01,
) -> ShareTrajectory:
    """Discrete payoff-monotone drift of the strict-threshold share.

    Each step solves the exact steady state at the current share q and moves
    the share along the payoff difference between the two thresholds:
    share <- share + eta * share * (1-share) * (pi_thr1 - pi_thr2).  The rest
    point is the indifference share of the same committed mass.
    """
    from .equilibrium import indifference_share, payoff_gap_parts

    if not (0.0 < q0 < 1.0 / k):
        raise ValueError("q0 must lie in (0, 1/k)")
    model = SignalModel(ObservationStructure.ACTIONS, k)
    s1 = make_threshold(model, 1, "thr1")
    s2 = make_threshold(model, 2, "thr2")
    options = SolverOptions(damping=0.5, tol=1e-13, max_iters=200_000)
    shares = np.empty(steps + 1)
    shares[0] = q0
    warm = None
    q = q0
    for t in range(steps):
        pop = PerturbedPopulation([(s1, q), (s2, 1.0 - q)], list(committed), epsilon)
        comp = CompiledPopulation(pop, model)
        theta0 = warm if warm is not None else _clean_profile(comp, model)
        theta, residual, _, ok = iterate_to_fixed_point(comp, theta0, options)
        warm = theta
        state = SteadyState(pop, model, game, SignalProfile(comp.names, theta), residual)
        direct, indirect = payoff_gap_parts(state, 0, 1)
        q = q + eta * q * (1.0 - q) * (direct - indirect)
        q = min(max(q, 1e-9), 1.0 / k - 1e-9)
        shares[t + 1] = q
    q_target = indifference_share(game, k, list(committed), epsilon)
    return ShareTrajectory(
        shares=shares,
        q_target=q_target,
        terminal=float(shares[-1]),
        distance=float(abs(shares[-1] - q_target)),
    )


def _clean_profile(comp, model):
    theta = np.zeros((comp.n, model.size()))
    theta[:, 0] = 1.0
    return theta
