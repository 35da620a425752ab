"""Long-run payoffs, Nash verification, and the cooperative-equilibrium
solvers for each observation structure.

The cooperative candidates pair two threshold behaviors: cooperate on a
clean record, defect once the partner's record shows two or more bad
observations, and split on exactly one.  For each committed-agent mass on a
geometric ladder the mixing weight q is pinned by exact payoff indifference
between the two behaviors in the solved finite-mass steady state (bisection
on the analytically decomposed payoff gap, no O(eps) truncation).  The
ladder is then extrapolated linearly to the vanishing-mass limit.

Two conditional defection probabilities decide whether the limit population
mixes across agents or within each agent:

* mu: partner defects | I saw one bad mark on him, he saw none on me;
* chi: partner defects | we each saw one bad mark on the other.

If chi < mu strictly the within-agent (homogeneous) form is the stable one;
ties are resolved to homogeneous and flagged, since at any positive
committed mass the tie breaks strictly that way.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NoConvergence, NoRoot, UnsupportedGame, UnsupportedStructure
from .games import GameClass, Offense, PDGame, Temptation, classify
from .observation import ObservationStructure, SignalModel, binomial_pmf_vector
from .steady_state import (
    CompiledPopulation,
    SignalProfile,
    SolverOptions,
    SteadyState,
    deviator_consistent_dists,
    iterate_to_fixed_point,
)
from .strategies import (
    PerturbedPopulation,
    StationaryStrategy,
    make_constant,
    make_profile_strategy_s1s2,
    make_table,
    make_threshold,
)

DEFAULT_LADDER = tuple(1e-2 * 0.5 ** i for i in range(14))  # down to ~1.2e-6
NASH_TOL_BASE = 1e-7
ESCAPE_GUARD = 0.2  # normal defection above this means the cooperative branch is gone


# ---------------------------------------------------------------------------
# Payoffs
# ---------------------------------------------------------------------------

def pair_payoff(game: PDGame, own_defect: float, other_defect: float) -> float:
    """Expected stage payoff with independently mixed actions."""
    oc, od = 1.0 - own_defect, own_defect
    pc, pd = 1.0 - other_defect, other_defect
    return oc * pc - game.l * oc * pd + (1.0 + game.g) * od * pc


def long_run_payoff(
    state: SteadyState,
    strategy: StationaryStrategy,
    mode: str = "max",
    thorough: bool = True,
) -> float:
    """Average per-round payoff of an agent following `strategy`.

    Incumbents use their steady-state signal distribution.  A deviator's
    record solves its own consistency condition; when several consistent
    records exist the payoff is the max over them (or the min under
    mode="min" -- the classification results are insensitive to the choice).
    """
    comp = state.compiled()
    idx = comp.index_of(strategy)
    if idx is not None:
        theta_own = state.theta.table[idx]
        return _payoff_given_record(state, strategy, theta_own)
    dists = deviator_consistent_dists(state, strategy, thorough=thorough)
    if not dists:
        raise NoConvergence("no consistent deviator record found")
    payoffs = [_payoff_given_record(state, strategy, th) for th in dists]
    return max(payoffs) if mode == "max" else min(payoffs)


def _payoff_given_record(state, strategy, theta_own) -> float:
    comp = state.compiled()
    own_vs = state.theta.table @ strategy.defect_prob     # our defect prob vs each type
    partner_vs = comp.tables @ theta_own                  # each type's defect prob vs us
    total = 0.0
    for w, own_d, other_d in zip(comp.weights, own_vs, partner_vs):
        total += w * pair_payoff(state.game, own_d, other_d)
    return total


def incumbent_payoffs(state: SteadyState) -> np.ndarray:
    comp = state.compiled()
    return np.array([
        _payoff_given_record(state, s, state.theta.table[i])
        for i, s in enumerate(comp.strategies)
    ])


def normal_average_payoff(state: SteadyState) -> float:
    comp = state.compiled()
    return float(comp.sigma @ incumbent_payoffs(state)[: comp.n_normal])


def payoff_gap(state: SteadyState, i: int, j: int) -> float:
    """pi_i - pi_j between incumbents, computed as direct-gain minus
    indirect-loss so the O(eps)-sized pieces never cancel through a
    subtraction of O(1) payoffs."""
    direct, indirect = payoff_gap_parts(state, i, j)
    return direct - indirect


def payoff_gap_parts(state: SteadyState, i: int, j: int):
    comp = state.compiled()
    g, l = state.game.g, state.game.l
    theta = state.theta.table
    d_own = theta @ (comp.tables[i] - comp.tables[j])   # extra defection vs each type
    rho = comp.tables @ theta[i]                        # each type's defection vs i
    resp_shift = comp.tables @ (theta[i] - theta[j])    # extra punishment drawn by i
    d_j = theta @ comp.tables[j]                        # j's defection vs each type
    direct = float(comp.weights @ (d_own * (g * (1.0 - rho) + l * rho)))
    indirect = float(
        comp.weights @ (resp_shift * ((1.0 + l) * (1.0 - d_j) + (1.0 + g) * d_j))
    )
    return direct, indirect


# ---------------------------------------------------------------------------
# Nash verification and best response
# ---------------------------------------------------------------------------

@dataclass
class PayoffReport:
    payoffs: dict
    pi: float
    best_payoff: float
    best_strategy: StationaryStrategy
    nash_gap: float
    tol: float

    @property
    def is_nash(self) -> bool:
        return self.nash_gap <= self.tol


def nash_tolerance(game: PDGame, base: float = NASH_TOL_BASE) -> float:
    return base * (1.0 + game.g + game.l)


def best_response(
    state: SteadyState, mode: str = "max", pure_limit: int = 12
) -> tuple:
    """Search for the payoff-maximizing reply to a steady state.

    Exhaustive over all pure tables when the signal space has at most
    `pure_limit` entries; otherwise coordinate ascent over per-signal
    defection probabilities (grid then golden-section polish).  The ascent
    is a documented heuristic: with tiny sample sizes best replies are pure
    except at indifference signals, so the pure sweep is the workhorse.
    """
    size = state.model.size()
    best_pi, best_s = -np.inf, None
    if size <= pure_limit:
        for bits in itertools.product((0.0, 1.0), repeat=size):
            cand = make_table(state.model, np.array(bits), f"pure_{''.join(str(int(b)) for b in bits)}")
            pi = long_run_payoff(state, cand, mode=mode, thorough=False)
            if pi > best_pi:
                best_pi, best_s = pi, cand
        return best_pi, best_s
    return _coordinate_ascent(state, mode)


def _coordinate_ascent(state: SteadyState, mode: str, passes: int = 6):
    size = state.model.size()
    comp = state.compiled()
    seeds = [np.zeros(size), np.ones(size)] + [np.array(t) for t in comp.tables]
    best_pi, best_table = -np.inf, None
    for seed in seeds:
        pi = long_run_payoff(state, make_table(state.model, seed, "seed"),
                             mode=mode, thorough=False)
        if pi > best_pi:
            best_pi, best_table = pi, np.array(seed)
    table = best_table
    for _ in range(passes):
        improved = False
        for m in range(size):
            def value(x):
                t = np.array(table)
                t[m] = x
                return long_run_payoff(state, make_table(state.model, t, "asc"),
                                       mode=mode, thorough=False)
            xs = np.linspace(0.0, 1.0, 101)
            vals = [value(x) for x in xs]
            x0 = xs[int(np.argmax(vals))]
            x_star = _golden_max(value, max(0.0, x0 - 0.02), min(1.0, x0 + 0.02))
            if value(x_star) > best_pi + 1e-12:
                table[m] = x_star
                best_pi = value(x_star)
                improved = True
        if not improved:
            break
    return best_pi, make_table(state.model, table, "ascent_best")


def _golden_max(f, a, b, iters=60):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def verify_nash(
    state: SteadyState, tol: Optional[float] = None, mode: str = "max"
) -> PayoffReport:
    """Compare the normal agents' average payoff against the best reply."""
    tol = nash_tolerance(state.game) if tol is None else tol
    comp = state.compiled()
    pays = incumbent_payoffs(state)
    per_strategy = {name: float(p) for name, p in zip(comp.names, pays)}
    pi = float(comp.sigma @ pays[: comp.n_normal])
    best_pi, best_s = best_response(state, mode=mode)
    return PayoffReport(
        payoffs=per_strategy,
        pi=pi,
        best_payoff=float(best_pi),
        best_strategy=best_s,
        nash_gap=float(best_pi - pi),
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Cooperative equilibrium solvers
# ---------------------------------------------------------------------------

class EquilibriumForm(str, enum.Enum):
    HETEROGENEOUS = "heterogeneous"
    HOMOGENEOUS = "homogeneous"


@dataclass
class LadderPoint:
    epsilon: float
    q: float
    residual: float
    mu: float
    chi: float
    pivot_prob: float


@dataclass
class CooperativeEquilibrium:
    q_star: float
    mu: float
    chi: float
    form: EquilibriumForm
    epsilon_path: list
    structure: ObservationStructure
    k: int
    game: PDGame
    tie_flagged: bool = False
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "q_star": self.q_star,
            "mu": self.mu,
            "chi": self.chi,
            "form": self.form.value,
            "tie_flagged": self.tie_flagged,
            "structure": self.structure.value,
            "k": self.k,
            "game": {"g": self.game.g, "l": self.game.l},
            "epsilon_path": [
                {"epsilon": p.epsilon, "q": p.q, "residual": p.residual,
                 "mu": p.mu, "chi": p.chi}
                for p in self.epsilon_path
            ],
            "extras": self.extras,
        }


def cooperative_pair(model: SignalModel):
    """The two threshold behaviors whose mixture supports cooperation."""
    if model.scalar:
        return make_threshold(model, 1, "thr1"), make_threshold(model, 2, "thr2")
    return make_profile_strategy_s1s2(model)


def pivot_signal_index(model: SignalModel) -> int:
    """Signal showing exactly one bad mark (and a clean rest)."""
    if model.scalar:
        return 1
    letters = model.alphabet
    counts = np.zeros(len(letters), dtype=int)
    counts[0] = model.k - 1
    bad = letters.index("dc") if "dc" in letters else letters.index("DC")
    counts[bad] = 1
    return model.index_of(counts)


class _CandidateSolver:
    """Exact finite-mass steady states of the two-threshold candidate and
    the payoff gap between the thresholds, warm-started across q."""

    def __init__(self, game, model, committed, epsilon):
        self.game = game
        self.model = model
        self.committed = committed
        self.epsilon = epsilon
        self.s1, self.s2 = cooperative_pair(model)
        self.eta = 0.85
        self.tol = 1e-14 if model.structure is ObservationStructure.ACTIONS else 1e-13
        self.max_iters = 60_000
        self.warm = None
        self.pivot = pivot_signal_index(model)

    def state_at(self, q: float, probe: bool = False) -> Optional[SteadyState]:
        from .steady_state import apply_map_arrays, defection_rates

        pop = PerturbedPopulation(
            normal=[(self.s1, q), (self.s2, 1.0 - q)],
            committed=self.committed,
            epsilon=self.epsilon,
        )
        comp = CompiledPopulation(pop, self.model)
        if self.warm is not None and self.warm.shape == (comp.n, self.model.size()):
            theta = np.array(self.warm)
        else:
            theta = np.zeros((comp.n, self.model.size()))
            theta[:, 0] = 1.0
        sigma = comp.sigma
        n_norm = comp.n_normal
        tol = 1e-9 if probe else self.tol
        max_iters = 4_000 if probe else self.max_iters
        residual = np.inf
        converged = False
        for it in range(1, max_iters + 1):
            f_theta = apply_map_arrays(comp, theta)
            residual = float(np.max(np.abs(f_theta - theta)))
            if residual <= tol:
                converged = True
                break
            theta = (1.0 - self.eta) * theta + self.eta * f_theta
            if it % 100 == 0:
                drift = float(sigma @ defection_rates(comp, theta)[:n_norm])
                if drift > ESCAPE_GUARD:
                    return None  # headed for the collapsed branch
        if not converged:
            # critical slowing right at the collapse boundary: treat as gone
            return None
        state = SteadyState(
            population=pop, model=self.model, game=self.game,
            theta=SignalProfile(comp.names, theta), residual=residual,
        )
        if state.normal_average_defection() > ESCAPE_GUARD:
            return None  # cooperative branch has collapsed at this q
        if not probe:
            self.warm = theta
        return state

    def gap_stats(self, q: float, probe: bool = False):
        """(valid, gap_per_pivot, state) at mixing weight q.

        Under observation of actions the root target is the exact payoff
        gap between the two thresholds (their records are their own actions,
        so retaliation leaves no further trace and the gap is the clean
        direct-minus-indirect balance).  Under the richer structures the
        target is the deterrence balance at the pivotal signal,

            l*mu + (1-mu)*g  =  k*q*(1-mu)*(l+1),

        with mu read off the exact finite-mass steady state: the classifying
        threshold (k*q above or below 1/2, or 1) lives in this equation.
        """
        state = self.state_at(q, probe=probe)
        if state is None:
            return False, None, None
        if self.model.structure is ObservationStructure.ACTIONS:
            gap_per, _ = actions_threshold_gap(state)
        else:
            g, l = self.game.g, self.game.l
            mu, _, _ = _mu_chi(state, q, self.pivot)
            k = self.model.k
            gap_per = (l * mu + (1.0 - mu) * g) - k * q * (1.0 - mu) * (l + 1.0)
        return True, gap_per, state


def actions_threshold_gap(state: SteadyState):
    """Payoff gap between the two thresholds per unit of pivot-signal
    probability, evaluated without cancellation: the gap's natural scale is
    the probability of seeing exactly one defection, which is O(eps)."""
    comp = state.compiled()
    g, l = state.game.g, state.game.l
    k = state.model.k
    theta = state.theta.table
    mixture = comp.weights @ theta
    pivot_prob = float(mixture[1])
    a2 = float(comp.tables[1] @ mixture)  # threshold-2 defection rate
    D = _binomial_divided_difference(a2, pivot_prob, k)
    posts = comp.weights * theta[:, 1] / pivot_prob
    rho = comp.tables @ theta[0]
    d_j = theta @ comp.tables[1]
    direct_per = float(posts @ (g * (1.0 - rho) + l * rho))
    resp_shift_per = comp.tables @ D
    indirect_per = float(
        comp.weights @ (resp_shift_per * ((1.0 + l) * (1.0 - d_j) + (1.0 + g) * d_j))
    )
    return direct_per - indirect_per, pivot_prob


def _binomial_divided_difference(a: float, delta: float, k: int) -> np.ndarray:
    """[binom(k, a+delta) - binom(k, a)] / delta, entrywise, stable as
    delta -> 0 (power differences expanded as geometric sums)."""
    a1 = a + delta
    b0, b1 = 1.0 - a, 1.0 - a1

    def pow_dd(x, y, p):  # (x^p - y^p)/(x - y)
        return sum(x ** i * y ** (p - 1 - i) for i in range(p)) if p > 0 else 0.0

    out = np.empty(k + 1)
    for m in range(k + 1):
        coef = math.comb(k, m)
        term = pow_dd(a1, a, m) * b1 ** (k - m) - a ** m * pow_dd(b1, b0, k - m)
        out[m] = coef * term
    return out


def _mu_chi(state: SteadyState, q: float, pivot: int):
    comp = state.compiled()
    theta = state.theta.table
    weights_at_pivot = comp.weights * theta[:, pivot]
    total = float(weights_at_pivot.sum())
    posts = weights_at_pivot / total
    mu = float(posts @ comp.tables[:, 0])
    committed_part = float(posts[comp.n_normal:] @ comp.tables[comp.n_normal:, pivot])
    chi = committed_part + float(posts[: comp.n_normal].sum()) * q
    return mu, chi, total


def _solve_ladder(game, model, committed, ladder, q_hi, gap_tol=1e-10):
    """Root of the indifference gap in q for each committed mass."""
    points = []
    if model.structure is ObservationStructure.ACTIONS:
        q_lo = 1e-9
    else:
        # any deterrence-balance root has k*q >= g/(l+1); starting lower
        # only slows the fixed-point solves down
        q_lo = 0.5 * game.g / (model.k * (game.l + 1.0))
    prev_q = None

    def solve_point(eps):
        nonlocal prev_q
        solver = _CandidateSolver(game, model, committed, eps)
        root = None
        if prev_q is not None:
            # roots drift O(eps) along the ladder: try a narrow bracket first
            lo = max(q_lo, prev_q * 0.9)
            hi = min(q_hi, prev_q * 1.1)
            if lo < hi:
                root = _find_gap_root(solver, lo, hi, gap_tol)
        if root is None:
            root = _find_gap_root(solver, q_lo, q_hi, gap_tol)
        if root is None:
            return None
        q, state, gap_per = root
        prev_q = q
        mu, chi, pivot_prob = _mu_chi(state, q, solver.pivot)
        return LadderPoint(
            epsilon=eps, q=q, residual=abs(gap_per) * pivot_prob,
            mu=mu, chi=chi, pivot_prob=pivot_prob,
        )

    for eps in ladder:
        points.append(solve_point(eps))

    # near the feasibility threshold the cooperative branch only survives at
    # small committed masses; extend the ladder downward until three points
    # witness the limit (or the mass floor says there is nothing to find)
    eps = ladder[-1]
    extensions = 0
    while (
        sum(p is not None for p in points) < 3
        and extensions < 12
        and eps > 1e-8
    ):
        eps *= 0.5
        points.append(solve_point(eps))
        extensions += 1
    return points


def _find_gap_root(solver: _CandidateSolver, q_lo: float, q_hi: float, gap_tol: float):
    """Bracket and bisect the indifference gap over q in (q_lo, q_hi).

    The cooperative branch can collapse (contagion) before q_hi; in that
    case the collapse boundary itself is bisected so a sign change squeezed
    against it is still found.
    """
    valid_lo, gap_lo, state_lo = solver.gap_stats(q_lo)
    if not valid_lo:
        return None
    hi = q_hi
    valid_hi, gap_hi, _ = solver.gap_stats(hi)
    if not valid_hi:
        # bisect the branch-collapse boundary with cheap probes, tracking
        # the largest live q
        lo_b, hi_b = q_lo, hi
        gap_at_lo_b = gap_lo
        for _ in range(14):
            mid = 0.5 * (lo_b + hi_b)
            valid, gap_mid, _ = solver.gap_stats(mid, probe=True)
            if valid:
                lo_b, gap_at_lo_b = mid, gap_mid
                if gap_mid * gap_lo <= 0:
                    break  # crossing already inside the live region
            else:
                hi_b = mid
        hi, gap_hi = lo_b, gap_at_lo_b
    if gap_lo * gap_hi > 0:
        # no sign change on the surviving cooperative branch
        return None
    lo, hi_q = q_lo, hi
    g_lo = gap_lo
    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi_q)
        valid, gap_mid, state_mid = solver.gap_stats(mid)
        if not valid:
            hi_q = mid
            continue
        best = (mid, state_mid, gap_mid)
        if abs(gap_mid) <= gap_tol or hi_q - lo < 1e-15:
            break
        if g_lo * gap_mid <= 0:
            hi_q = mid
        else:
            lo, g_lo = mid, gap_mid
    return best


def _extrapolate(points: Sequence[LadderPoint], attr: str) -> float:
    """Linear-in-eps extrapolation from the last three ladder points."""
    tail = points[-3:]
    xs = np.array([p.epsilon for p in tail])
    ys = np.array([getattr(p, attr) for p in tail])
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(intercept)


def _decide_form(mu: float, chi: float, points, tie_tol: float = 1e-9):
    if chi < mu - tie_tol:
        return EquilibriumForm.HOMOGENEOUS, False
    if chi > mu + tie_tol:
        return EquilibriumForm.HETEROGENEOUS, False
    # exact tie in the limit: at any positive committed mass the comparison
    # breaks strictly toward within-agent mixing
    return EquilibriumForm.HOMOGENEOUS, True


def _build_equilibrium(game, model, points, extras=None) -> CooperativeEquilibrium:
    found = [p for p in points if p is not None]
    if len(found) < 3 or points[-1] is None:
        raise NoRoot(
            "no indifference point on the cooperative branch at the smallest "
            "committed masses: cooperation is not sustainable here"
        )
    q_star = _extrapolate(found, "q")
    mu = _extrapolate(found, "mu")
    chi = _extrapolate(found, "chi")
    form, tie = _decide_form(mu, chi, found)
    return CooperativeEquilibrium(
        q_star=q_star, mu=mu, chi=chi, form=form,
        epsilon_path=found, structure=model.structure, k=model.k,
        game=game, tie_flagged=tie, extras=extras or {},
    )


def solve_q_actions(
    game: PDGame,
    k: int,
    committed: Sequence,
    ladder: Sequence[float] = DEFAULT_LADDER,
) -> CooperativeEquilibrium:
    """Cooperative equilibrium under observation of actions (defensive or
    borderline games, k >= 2)."""
    cls = classify(game)
    if cls.offense is Offense.OFFENSIVE:
        raise UnsupportedGame(
            "under observation of actions only defensive (or borderline) "
            "games admit cooperative equilibria"
        )
    if k < 2:
        raise ValueError("k >= 2 required; use feasibility_k1 for k = 1")
    model = SignalModel(ObservationStructure.ACTIONS, k)
    q_hi = min(1.25 * game.l / (k * (game.l + 1.0)), (1.0 - 1e-6) / k, 0.999)
    points = _solve_ladder(game, model, list(committed), ladder, q_hi)
    eq = _build_equilibrium(game, model, points)
    eq.extras["q_lower_bound"] = game.g / (k * (game.l + 1.0))
    eq.extras["q_upper_bound"] = game.l / (k * (game.l + 1.0))
    return eq


def solve_q_conflicts(
    game: PDGame,
    k: int,
    committed: Sequence,
    ladder: Sequence[float] = DEFAULT_LADDER,
) -> CooperativeEquilibrium:
    """Cooperative equilibrium under observation of conflicts; raises NoRoot
    for acute games, where the required retaliation rate k*q would have to
    exceed one half and defections become contagious."""
    if k < 2:
        raise ValueError("k >= 2 required")
    _require_mild(game, cap=0.5)
    model = SignalModel(ObservationStructure.CONFLICTS, k)
    q_hi = (1.0 - 1e-9) * 0.5 / k
    points = _solve_ladder(game, model, list(committed), ladder, q_hi)
    eq = _build_equilibrium(game, model, points)
    eq.extras["k_q"] = k * eq.q_star
    if k * eq.q_star >= 0.5:
        raise NoRoot(f"k*q = {k * eq.q_star:.4f} >= 1/2: contagion")
    return eq


def _require_mild(game: PDGame, cap: float) -> None:
    """The deterrence balance needs k*q >= g/(l+1) whatever the committed
    mix does (mu only raises it); when that floor already reaches the
    contagion cap no root can exist and the search is pointless."""
    floor = game.g / (game.l + 1.0)
    if floor >= cap:
        raise NoRoot(
            f"required retaliation k*q >= g/(l+1) = {floor:.4f} reaches the "
            f"contagion threshold {cap}: defections snowball instead of "
            "deterring"
        )


def _posterior_committed(state: SteadyState, signal_index: int) -> float:
    comp = state.compiled()
    weights = comp.weights * state.theta.table[:, signal_index]
    total = weights.sum()
    return float(weights[comp.n_normal:].sum() / total)


def _once_signal_index(model: SignalModel, letter: str) -> int:
    counts = np.zeros(len(model.alphabet), dtype=int)
    counts[0] = model.k - 1
    counts[model.alphabet.index(letter)] = 1
    return model.index_of(counts)


def solve_q_profiles(
    game: PDGame,
    k: int,
    alpha_commit: float,
    ladder: Sequence[float] = DEFAULT_LADDER,
) -> CooperativeEquilibrium:
    """Cooperative equilibrium under observation of full action profiles,
    with a constant-alpha committed strategy; NoRoot for acute games."""
    if k < 2:
        raise ValueError("k >= 2 required")
    if not (0.0 < alpha_commit < 1.0 / k):
        raise ValueError("alpha_commit must lie in (0, 1/k)")
    _require_mild(game, cap=0.5)
    model = SignalModel(ObservationStructure.ACTION_PROFILES, k)
    committed = [(make_constant(model, alpha_commit, "const_commit"), 1.0)]
    q_hi = (1.0 - 1e-9) * 0.5 / k
    points = _solve_ladder(game, model, committed, ladder, q_hi)
    eq = _build_equilibrium(game, model, points)
    eq.extras["k_q"] = k * eq.q_star
    if k * eq.q_star >= 0.5:
        raise NoRoot(f"k*q = {k * eq.q_star:.4f} >= 1/2: deterrence impossible")
    # incentive ordering: a lone defection must point to the committed type
    # more strongly than a mutual one, else defection spreads to that signal
    solver = _CandidateSolver(game, model, committed, ladder[-1])
    state = solver.state_at(eq.epsilon_path[-1].q)
    post_dc = _posterior_committed(state, _once_signal_index(model, "dc"))
    post_dd = _posterior_committed(state, _once_signal_index(model, "dd"))
    eq.extras["posterior_committed_sole_defection"] = post_dc
    eq.extras["posterior_committed_mutual_defection"] = post_dd
    eq.extras["incentive_ordering_ok"] = bool(post_dc > post_dd)
    return eq


def solve_q_actions_against_coop(
    game: PDGame,
    k: int,
    alpha_commit: float,
    ladder: Sequence[float] = DEFAULT_LADDER,
) -> CooperativeEquilibrium:
    """Cooperative equilibrium when only actions taken against cooperators
    are observable; feasible for every admissible game."""
    if k < 2:
        raise ValueError("k >= 2 required")
    if not (0.0 < alpha_commit < 1.0 / k):
        raise ValueError("alpha_commit must lie in (0, 1/k)")
    model = SignalModel(ObservationStructure.ACTIONS_AGAINST_COOPERATION, k)
    committed = [(make_constant(model, alpha_commit, "const_commit"), 1.0)]
    q_hi = (1.0 - 1e-6) / k
    points = _solve_ladder(game, model, committed, ladder, q_hi)
    eq = _build_equilibrium(game, model, points)
    eq.extras["k_q"] = k * eq.q_star
    solver = _CandidateSolver(game, model, committed, ladder[-1])
    state = solver.state_at(eq.epsilon_path[-1].q)
    post_hidden = _posterior_committed(state, _once_signal_index(model, "*D"))
    post_dc = _posterior_committed(state, _once_signal_index(model, "DC"))
    eq.extras["posterior_committed_hidden_mark"] = post_hidden
    eq.extras["posterior_committed_sole_defection"] = post_dc
    eq.extras["hidden_mark_ordering_ok"] = bool(post_hidden < post_dc)
    return eq


def indifference_share(
    game: PDGame, k: int, committed: Sequence, epsilon: float
) -> float:
    """Rest point of the threshold-share dynamics at a fixed committed mass:
    the q at which the two threshold strategies earn equal payoffs."""
    model = SignalModel(ObservationStructure.ACTIONS, k)
    solver = _CandidateSolver(game, model, list(committed), epsilon)
    q_hi = min(1.25 * game.l / (k * (game.l + 1.0)), (1.0 - 1e-6) / k, 0.999)
    root = _find_gap_root(solver, 1e-9, q_hi, 1e-12)
    if root is None:
        raise NoRoot(f"no indifference share at eps={epsilon}")
    return root[0]


def posterior_normal_sole_defector(k_q: float) -> float:
    """Posterior that a once-observed sole defector is a normal agent, in
    the vanishing-mass limit: the contagion series gives kq/(1-kq) normal
    lone defections per committed one, and the ratio collapses to kq."""
    x = k_q / (1.0 - k_q)
    return x / (1.0 + x)


# ---------------------------------------------------------------------------
# Single-observation threshold and the feasibility table
# ---------------------------------------------------------------------------

def beta_commitments(committed: Sequence) -> float:
    """Ratio E[s_0(d)^2] / E[s_0(d)] over the commitment distribution: the
    largest defection bonus g for which one observed action can still
    sustain cooperation."""
    num = sum(w * s.defect_prob[0] ** 2 for s, w in committed)
    den = sum(w * s.defect_prob[0] for s, w in committed)
    if den == 0.0:
        raise ZeroDivisionError(
            "all committed strategies cooperate on a clean record; the "
            "single-observation analysis does not apply"
        )
    return float(num / den)


@dataclass
class FeasibilityCell:
    game_class: GameClass
    structure: ObservationStructure
    k: int
    feasible: bool
    mechanism_note: str
    q_star: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {
            "structure": self.structure.value,
            "k": self.k,
            "offense": self.game_class.offense.value,
            "temptation": self.game_class.temptation.value,
            "feasible": self.feasible,
            "mechanism_note": self.mechanism_note,
            "q_star": self.q_star,
        }


def feasibility_k1(game: PDGame, committed: Sequence) -> FeasibilityCell:
    """Single observed action: cooperation survives iff the defection bonus
    does not exceed the commitment ratio beta; cross-checked against the
    payoff of an always-defect deviator."""
    cls = classify(game)
    if cls.offense is not Offense.DEFENSIVE:
        raise UnsupportedGame("the single-observation threshold needs g < l")
    beta = beta_commitments(committed)
    feasible = game.g <= beta
    q = (game.g + (game.l - game.g) * beta) / (game.l + 1.0 + (game.l - game.g) * beta)
    alld_payoff = (1.0 + game.g) * (1.0 - q)
    alld_outperformed = alld_payoff <= 1.0 + 1e-12
    if feasible != alld_outperformed:
        raise AssertionError(
            f"threshold and deviator checks disagree: g={game.g}, beta={beta}"
        )
    if game.g == beta:
        note = f"boundary case g = beta = {beta:.6g}; cooperation only just survives"
    elif feasible:
        note = f"g = {game.g:g} <= beta = {beta:.6g}; retaliation rate q = {q:.6g}"
    else:
        note = (
            f"g = {game.g:g} > beta = {beta:.6g}: an always-defect deviator "
            f"earns (1+g)(1-q) = {alld_payoff:.6g} > 1"
        )
    return FeasibilityCell(
        game_class=cls,
        structure=ObservationStructure.ACTIONS,
        k=1,
        feasible=feasible,
        mechanism_note=note,
        q_star=q if feasible else None,
    )


def feasibility_table(
    game: PDGame,
    k: int,
    committed_scalar: Optional[Sequence] = None,
    alpha_commit: float = 0.01,
    ladder: Sequence[float] = tuple(1e-2 * 0.5 ** i for i in range(6)),
) -> list:
    """One feasibility cell per observation structure, each decided by its
    solver rather than by the classification shortcut (the shortcut is what
    the tests check the solvers against)."""
    if k < 2:
        raise ValueError("the table is defined for k >= 2")
    cls = classify(game)
    cells = []

    def scalar_committed(model):
        if committed_scalar is not None:
            return [(make_table(model, np.array(s.defect_prob), s.name), w)
                    for s, w in committed_scalar]
        return [(make_constant(model, 0.5, "const_half"), 1.0)]

    # observation of actions
    if cls.offense is Offense.OFFENSIVE:
        cells.append(FeasibilityCell(
            cls, ObservationStructure.ACTIONS, k, False,
            "offensive game: always-defect is the unique stable outcome",
        ))
    else:
        model = SignalModel(ObservationStructure.ACTIONS, k)
        try:
            eq = solve_q_actions(game, k, scalar_committed(model), ladder)
            note = "two-threshold mixture with q* = %.6g" % eq.q_star
            if cls.offense is Offense.BORDERLINE:
                note += "; knife-edge g = l, uniqueness fails here"
            cells.append(FeasibilityCell(
                cls, ObservationStructure.ACTIONS, k, True, note, eq.q_star))
        except NoRoot as exc:
            cells.append(FeasibilityCell(
                cls, ObservationStructure.ACTIONS, k, False, str(exc)))

    # observation of conflicts
    model = SignalModel(ObservationStructure.CONFLICTS, k)
    try:
        eq = solve_q_conflicts(game, k, scalar_committed(model), ladder)
        cells.append(FeasibilityCell(
            cls, ObservationStructure.CONFLICTS, k, True,
            "k*q = %.6g < 1/2 deters lone defections" % eq.extras["k_q"],
            eq.q_star))
    except NoRoot as exc:
        cells.append(FeasibilityCell(
            cls, ObservationStructure.CONFLICTS, k, False, str(exc)))

    # observation of action profiles
    try:
        eq = solve_q_profiles(game, k, alpha_commit, ladder)
        cells.append(FeasibilityCell(
            cls, ObservationStructure.ACTION_PROFILES, k, True,
            "k*q = %.6g < 1/2; lone defections point to committed types"
            % eq.extras["k_q"],
            eq.q_star))
    except NoRoot as exc:
        cells.append(FeasibilityCell(
            cls, ObservationStructure.ACTION_PROFILES, k, False, str(exc)))

    # observation of actions against cooperation
    eq = solve_q_actions_against_coop(game, k, alpha_commit, ladder)
    cells.append(FeasibilityCell(
        cls, ObservationStructure.ACTIONS_AGAINST_COOPERATION, k, True,
        "defection against defectors is never observed, so k*q = %.6g < 1 "
        "always balances" % eq.extras["k_q"],
        eq.q_star))
    return cells


# ---------------------------------------------------------------------------
# Mutant payoff curve and evolutionary stability
# ---------------------------------------------------------------------------

def mutant_curve(game: PDGame, k: int, q: float, alpha_grid: Sequence[float]):
    """Payoff of a mutant defecting with probability alpha on clean signals,
    against the cooperative two-threshold population with mixing weight q."""
    if not (0.0 < q < 1.0 / k):
        raise ValueError("q must lie in (0, 1/k)")
    out = []
    for alpha in alpha_grid:
        h = 1.0 - (1.0 - alpha) ** (k - 1) * (1.0 - alpha + k * alpha * (1.0 - q))
        pi = 1.0 + alpha * game.g - h * (1.0 + (1.0 - alpha) * game.l + alpha * game.g)
        out.append((float(alpha), float(h), float(pi)))
    return out


@dataclass
class EssEntry:
    name: str
    nash_gap: float
    best_reply: bool
    self_play: Optional[float]
    incumbents_vs: Optional[float]
    margin: Optional[float]
    passed: Optional[bool]


@dataclass
class EssReport:
    entries: list
    passed: bool

    def __bool__(self) -> bool:
        return self.passed


def ess_check(
    state: SteadyState,
    deviators: Sequence[StationaryStrategy],
    margin_tol: float = 1e-9,
    mode: str = "max",
) -> EssReport:
    """Evolutionary stability against the supplied deviators: every deviator
    that ties the incumbents' payoff must earn strictly less against itself
    than the incumbents earn against it."""
    comp = state.compiled()
    pi = normal_average_payoff(state)
    tol = nash_tolerance(state.game)
    entries = []
    all_pass = True
    for dev in deviators:
        pay = long_run_payoff(state, dev, mode=mode)
        gap = pay - pi
        if gap < -tol:
            entries.append(EssEntry(dev.name, gap, False, None, None, None, None))
            continue
        idx = comp.index_of(dev)
        if idx is not None:
            theta_dev = state.theta.table[idx]
        else:
            dists = deviator_consistent_dists(state, dev)
            pays = [_payoff_given_record(state, dev, th) for th in dists]
            theta_dev = dists[int(np.argmax(pays) if mode == "max" else np.argmin(pays))]
        x = float(dev.defect_prob @ theta_dev)
        self_play = pair_payoff(state.game, x, x)
        # fitness of the strategic (normal) incumbents against the deviator;
        # the committed background earns what it earns either way and would
        # otherwise drown the O(eps) invasion margin
        incumbents_vs = float(sum(
            w * pair_payoff(state.game,
                            float(comp.tables[i] @ theta_dev),
                            float(dev.defect_prob @ state.theta.table[i]))
            for i, w in enumerate(comp.sigma)
        ))
        margin = incumbents_vs - self_play
        ok = margin > margin_tol
        all_pass = all_pass and ok
        entries.append(EssEntry(dev.name, gap, True, self_play, incumbents_vs, margin, ok))
    return EssReport(entries, all_pass)
