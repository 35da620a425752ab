"""Conventional repeated-game variant: discounting, calendar time, and
observation of the partner's most recent actions.

The committed strategy defects at a high rate after defecting recently and
at a low background rate otherwise; the normal strategy cooperates whenever
its own recent record is dirty, punishes partners seen defecting twice,
forgives a single stale defection, and mixes with a round-dependent
probability q_t against partners whose only defection is fresh.

Everything is computed by exact forward dynamic programming over the finite
space of k-action records (early rounds are represented by padding unseen
slots with cooperation, which is behaviorally and Bayes-equivalent), so the
remainder terms the limit argument discards become measurable numbers
instead of assumptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DiscountTooLow, RatioTooSmall, UnsupportedGame
from .games import PDGame, payoff_matrix


def gamma(game: PDGame, delta: float) -> float:
    """Mixing ceiling l / (delta (l+1)); needs delta > l/(l+1) to sit below 1."""
    if delta <= game.l / (game.l + 1.0):
        raise DiscountTooLow(
            f"delta = {delta} <= l/(l+1) = {game.l / (game.l + 1.0):.6g}"
        )
    return game.l / (delta * (game.l + 1.0))


@dataclass(frozen=True)
class RepeatedConfig:
    game: PDGame
    k: int
    delta: float
    epsilon: float
    alpha_hi: float = 0.5
    alpha_lo: float = 0.005
    horizon: int = 200

    def __post_init__(self) -> None:
        if self.k < 2:
            raise UnsupportedGame("the construction needs k >= 2 observed actions")
        if self.game.g > self.game.l:
            raise UnsupportedGame(
                "full cooperation is out of reach for g > l; the construction "
                "requires a (weakly) defensive game"
            )
        gamma(self.game, self.delta)  # raises DiscountTooLow when violated
        if not (0.0 < self.alpha_lo < self.alpha_hi < 1.0):
            raise ValueError("need 0 < alpha_lo < alpha_hi < 1")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")
        if self.horizon < 3:
            raise ValueError("horizon too short")


# record encoding: bit 0 = last round's action (1 = defect), bit j = the
# action j rounds earlier; k bits total, oldest at bit k-1
def _popcount(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    v = values.copy()
    while v.any():
        out += v & 1
        v >>= 1
    return out


@dataclass
class RecursionState:
    config: RepeatedConfig
    q: np.ndarray                 # q_t, index t-1
    mu: np.ndarray                # pivotal-partner defection probability
    beta: np.ndarray              # average normal defection rate per round
    posterior: np.ndarray         # Pr(committed | fresh-single-defection record)
    responsive: np.ndarray        # Pr(normal partner applies the signal rules)
    mu_normal: list = field(default_factory=list)   # record distributions, normals
    mu_committed: list = field(default_factory=list)
    bound_constant: float = 0.0   # smallest C with beta_t <= gamma beta_{t-1} + C eps

    def to_json_dict(self) -> dict:
        return {
            "q": [float(x) for x in self.q],
            "mu": [float(x) for x in self.mu],
            "beta": [float(x) for x in self.beta],
            "posterior": [float(x) for x in self.posterior],
            "bound_constant": self.bound_constant,
            "gamma": gamma(self.config.game, self.config.delta),
        }


def _normal_response(records: np.ndarray, k: int, q_t: float) -> np.ndarray:
    """Defection probability of a responsive normal against each partner
    record: punish two or more, mix on a fresh single, forgive stale ones."""
    nd = _popcount(records)
    fresh = records & 1
    resp = np.zeros(len(records))
    resp[nd >= 2] = 1.0
    resp[(nd == 1) & (fresh == 1)] = q_t
    return resp


def _committed_defect(records: np.ndarray, k: int, alpha_hi: float, alpha_lo: float) -> np.ndarray:
    """Committed defection rate given the committed agent's own record."""
    recent = records & 1
    older = (records >> 1) & ((1 << (k - 1)) - 1)
    trigger = (recent == 1) | (_popcount(older) >= 2)
    return np.where(trigger, alpha_hi, alpha_lo)


def _clean_suffix(records: np.ndarray, k: int) -> np.ndarray:
    """True when the agent did not defect in the last k-1 rounds."""
    suffix = records & ((1 << (k - 1)) - 1)
    return suffix == 0


def _shift(records: np.ndarray, action: int, k: int) -> np.ndarray:
    return ((records << 1) | action) & ((1 << k) - 1)


def q_sequence(config: RepeatedConfig) -> RecursionState:
    """Forward pass: record distributions, posteriors, and the q_t recursion.

    q_1 = gamma by convention (round one has no signals to mix on); each
    later q_t balances the pivotal defection gain against the discounted
    loss from next-round punishers, with the committed share and the
    punishers' own responsiveness priced in exactly.
    """
    game, k, delta, eps = config.game, config.k, config.delta, config.epsilon
    g, l = game.g, game.l
    gam = gamma(game, delta)
    n_rec = 1 << k
    records = np.arange(n_rec)
    pivot = 1  # fresh single defection
    clean = _clean_suffix(records, k)

    mu_n = np.zeros(n_rec)
    mu_n[0] = 1.0
    mu_c = np.zeros(n_rec)
    mu_c[0] = 1.0

    T = config.horizon
    qs = np.empty(T + 1)
    mus = np.zeros(T + 1)
    betas = np.zeros(T + 1)
    posts = np.zeros(T + 1)
    rhos = np.zeros(T + 1)
    state = RecursionState(config, qs, mus, betas, posts, rhos)

    qs[0] = gam  # q_1; round one has no signals, so it never plays
    for t in range(1, T + 1):
        state.mu_normal.append(mu_n.copy())
        state.mu_committed.append(mu_c.copy())
        pbar = (1.0 - eps) * mu_n + eps * mu_c
        rhos[t - 1] = float(mu_n[clean].sum())

        denom = eps * mu_c[pivot] + (1.0 - eps) * mu_n[pivot]
        if denom > 0.0:
            post = eps * mu_c[pivot] / denom
            posts[t - 1] = post
            if config.alpha_hi * post <= config.alpha_lo:
                raise RatioTooSmall(
                    f"alpha_hi * Pr(committed | pivotal record) = "
                    f"{config.alpha_hi * post:.3g} <= alpha_lo at round {t}"
                )
            mus[t - 1] = config.alpha_hi * post
        else:
            posts[t - 1] = 1.0
            mus[t - 1] = config.alpha_hi

        q_t = qs[t - 1]
        resp = _normal_response(records, k, q_t)
        expected_resp = float(pbar @ resp)
        d_n = np.where(clean, expected_resp, 0.0)
        d_c = _committed_defect(records, k, config.alpha_hi, config.alpha_lo)
        betas[t - 1] = float(mu_n @ d_n)

        mu_n = _advance(mu_n, d_n, records, k)
        mu_c = _advance(mu_c, d_c, records, k)

        # indifference pins the next round's mixing probability: the pivotal
        # gain equals the discounted punishment by next-round normal agents
        # whose own records leave them free to punish
        rho_next = float(mu_n[clean].sum())
        gain = l * mus[t - 1] + g * (1.0 - mus[t - 1])
        qs[t] = gain / (delta * (l + 1.0) * (1.0 - eps) * rho_next)

    state.q = qs[:T]
    state.mu = mus[:T]
    state.beta = betas[:T]
    state.posterior = posts[:T]
    state.responsive = rhos[:T]
    gaps = state.beta[1:] - gam * state.beta[:-1]
    state.bound_constant = float(max(0.0, gaps.max()) / eps) if len(gaps) else 0.0
    return state


def _advance(dist: np.ndarray, defect_prob: np.ndarray, records: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(dist)
    np.add.at(out, _shift(records, 0, k), dist * (1.0 - defect_prob))
    np.add.at(out, _shift(records, 1, k), dist * defect_prob)
    return out


# ---------------------------------------------------------------------------
# One-deviation checks
# ---------------------------------------------------------------------------

@dataclass
class DeviationReport:
    rounds: np.ndarray
    pivotal_residual: np.ndarray         # defect-minus-cooperate at the pivotal class
    own_dirty_margin: np.ndarray         # cooperate-margin after own fresh defection
    punish_margin: np.ndarray            # defect-margin against a twice-defector
    forgive_margin: np.ndarray           # cooperate-margin against a stale defection
    tail_bound: float

    def max_pivotal_residual(self, upto: Optional[int] = None) -> float:
        sel = self.pivotal_residual if upto is None else self.pivotal_residual[: upto]
        return float(np.nanmax(np.abs(sel)))

    def to_json_dict(self) -> dict:
        return {
            "max_pivotal_residual": self.max_pivotal_residual(),
            "min_own_dirty_margin": float(np.nanmin(self.own_dirty_margin)),
            "min_punish_margin": float(np.nanmin(self.punish_margin)),
            "min_forgive_margin": float(np.nanmin(self.forgive_margin)),
            "tail_bound": self.tail_bound,
        }


def verify_one_deviation(config: RepeatedConfig, state: Optional[RecursionState] = None):
    """Exact continuation-value comparison of defecting versus cooperating
    at each round and history class, under the recursion's q_t path.

    The horizon is closed with the stationary continuation of the final
    round's environment, so the discount tail contributes only through the
    drift of q_t, which has died out by then.
    """
    if state is None:
        state = q_sequence(config)
    game, k, delta, eps = config.game, config.k, config.delta, config.epsilon
    pay = payoff_matrix(game)
    n_rec = 1 << k
    records = np.arange(n_rec)
    clean = _clean_suffix(records, k)
    T = len(state.q)

    def environment(t):
        """Partner-side quantities entering round t (1-based)."""
        mu_n = state.mu_normal[t - 1]
        mu_c = state.mu_committed[t - 1]
        q_t = state.q[t - 1]
        resp = _normal_response(records, k, q_t)  # signal-rule table
        d_c = _committed_defect(records, k, config.alpha_hi, config.alpha_lo)
        return mu_n, mu_c, q_t, resp, d_c

    def stage_and_marginal(t, r):
        """Exact expected stage payoff and own defection marginal for a
        normal agent with record r at round t; the correlation between the
        partner's record (which drives my action) and the partner's own
        behavior is kept, not factored."""
        mu_n, mu_c, q_t, resp, d_c = environment(t)
        my_d = np.where(clean[r], resp, 0.0)            # my action by partner record
        partner_d_n = np.where(clean, resp[r], 0.0)     # normal partner, by his record
        stage = 0.0
        exp_my_d = 0.0
        for w, partner_d in (((1.0 - eps) * mu_n, partner_d_n), (eps * mu_c, d_c)):
            coop_me = 1.0 - my_d
            stage += float(np.sum(w * (
                coop_me * ((1.0 - partner_d) * pay[0, 0] + partner_d * pay[0, 1])
                + my_d * ((1.0 - partner_d) * pay[1, 0] + partner_d * pay[1, 1])
            )))
            exp_my_d += float(np.sum(w * my_d))
        return stage, exp_my_d

    def backward_step(t, V_next):
        V = np.zeros(n_rec)
        for r in range(n_rec):
            stage, exp_my_d = stage_and_marginal(t, r)
            V[r] = stage + delta * (
                (1.0 - exp_my_d) * V_next[_shift_one(r, 0, k)]
                + exp_my_d * V_next[_shift_one(r, 1, k)]
            )
        return V

    # stationary terminal values from the final round's environment
    trans = np.zeros((n_rec, n_rec))
    stage_v = np.zeros(n_rec)
    for r in range(n_rec):
        stage_v[r], exp_my_d = stage_and_marginal(T, r)
        trans[r, _shift_one(r, 0, k)] += 1.0 - exp_my_d
        trans[r, _shift_one(r, 1, k)] += exp_my_d
    V_next = np.linalg.solve(np.eye(n_rec) - delta * trans, stage_v)

    values = [None] * (T + 2)
    values[T + 1] = V_next
    for t in range(T, 0, -1):
        values[t] = backward_step(t, values[t + 1])

    rounds = np.arange(2, T)
    pivotal = np.zeros(len(rounds))
    own_dirty = np.zeros(len(rounds))
    punish = np.zeros(len(rounds))
    forgive = np.zeros(len(rounds))
    twice = 3  # defected in the last two rounds
    stale = 2  # single defection, one round old
    for i, t in enumerate(rounds):
        mu_n, mu_c, q_t, resp, d_c = environment(t)

        def q_values(own_record, partner_record, partner_d):
            nxt_c = _shift_one(own_record, 0, k)
            nxt_d = _shift_one(own_record, 1, k)
            q_c = (1.0 - partner_d) * pay[0, 0] + partner_d * pay[0, 1] \
                + delta * values[t + 1][nxt_c]
            q_d = (1.0 - partner_d) * pay[1, 0] + partner_d * pay[1, 1] \
                + delta * values[t + 1][nxt_d]
            return q_c, q_d

        def partner_defect(partner_record, my_record):
            """Partner's defection probability given both visible records,
            or None while the partner record is unreachable (the class then
            imposes no constraint)."""
            denom = eps * mu_c[partner_record] + (1.0 - eps) * mu_n[partner_record]
            if denom == 0.0:
                return None
            post = eps * mu_c[partner_record] / denom
            normal_d = resp[my_record] if clean[partner_record] else 0.0
            return post * d_c[partner_record] + (1.0 - post) * normal_d

        def margin(own_record, partner_record, sign):
            d = partner_defect(partner_record, own_record)
            if d is None:
                return np.nan
            q_c, q_d = q_values(own_record, partner_record, d)
            return sign * (q_d - q_c)

        # pivotal class: clean record, partner shows one fresh defection
        pivotal[i] = margin(0, 1, +1.0)
        # own fresh defection, partner clean: must cooperate back to a
        # clean record (normal partners punish the fresh mark at rate q_t)
        own_dirty[i] = margin(1, 0, -1.0)
        # partner defected twice: most likely committed and triggered
        punish[i] = margin(0, twice, +1.0)
        # partner's single defection is stale: forgive
        forgive[i] = margin(0, stale, -1.0)

    tail = delta ** 2 * np.max(np.abs(np.diff(state.q[-10:]))) / (1 - delta) if T >= 12 else 0.0
    return DeviationReport(
        rounds=rounds,
        pivotal_residual=pivotal,
        own_dirty_margin=own_dirty,
        punish_margin=punish,
        forgive_margin=forgive,
        tail_bound=float(tail),
    ), state


def _shift_one(record: int, action: int, k: int) -> int:
    return ((record << 1) | action) & ((1 << k) - 1)


@dataclass
class CooperationLimitReport:
    passed: bool
    intercept: float
    slope: float
    rates: list

    def __bool__(self) -> bool:
        return self.passed


def full_cooperation_limit(
    game: PDGame,
    k: int,
    delta: float,
    eps_ladder: Sequence[float] = (1e-3, 5e-4, 2.5e-4, 1.25e-4),
    horizon: int = 200,
    intercept_tol: float = 1e-6,
) -> CooperationLimitReport:
    """Average normal cooperation along an epsilon ladder, extrapolated to
    zero mass: full cooperation obtains when the intercept reaches one."""
    rates = []
    for eps in eps_ladder:
        config = RepeatedConfig(game, k, delta, eps, horizon=horizon)
        state = q_sequence(config)
        rates.append(1.0 - float(state.beta.mean()))
    slope, intercept = np.polyfit(np.asarray(eps_ladder), np.asarray(rates), 1)
    passed = bool(intercept >= 1.0 - intercept_tol and np.isfinite(slope))
    return CooperationLimitReport(passed, float(intercept), float(slope), rates)
