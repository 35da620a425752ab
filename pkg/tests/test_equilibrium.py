import numpy as np
import pytest

from reciplab import (
    EquilibriumForm,
    NoRoot,
    ObservationStructure,
    PerturbedPopulation,
    SignalModel,
    UnsupportedGame,
    best_response,
    beta_commitments,
    classify,
    ess_check,
    feasibility_k1,
    feasibility_table,
    indifference_share,
    long_run_payoff,
    make_constant,
    make_table,
    make_threshold,
    mutant_curve,
    posterior_normal_sole_defector,
    solve_consistent,
    solve_q_actions,
    solve_q_actions_against_coop,
    solve_q_conflicts,
    solve_q_profiles,
    validate_pd,
    verify_nash,
)
from reciplab.equilibrium import incumbent_payoffs, payoff_gap_parts

GAME = validate_pd(1, 3)
A2 = SignalModel(ObservationStructure.ACTIONS, 2)
SHORT_LADDER = tuple(1e-2 * 0.5 ** i for i in range(8))


def cooperative_state(eps=1e-4, game=GAME):
    su = make_constant(A2, 0.5, "su")
    q = indifference_share(game, 2, [(su, 1.0)], eps)
    s1 = make_threshold(A2, 1, "thr1")
    s2 = make_threshold(A2, 2, "thr2")
    pop = PerturbedPopulation([(s1, q), (s2, 1 - q)], [(su, 1.0)], eps)
    return solve_consistent(pop, A2, game).most_cooperative(), q


# ---------------------------------------------------------------------------
# payoffs and Nash verification
# ---------------------------------------------------------------------------

def test_alld_homogeneous_payoff_zero():
    alld = make_constant(A2, 1.0, "alld")
    pop = PerturbedPopulation([(alld, 1.0)], [], 0.0)
    state = solve_consistent(pop, A2, GAME).most_defective()
    assert long_run_payoff(state, alld) == pytest.approx(0.0, abs=1e-12)


def test_cooperative_incumbents_earn_equally():
    state, _ = cooperative_state()
    pays = incumbent_payoffs(state)
    assert abs(pays[0] - pays[1]) < 1e-9
    assert pays[0] == pytest.approx(1.0, abs=5e-4)


def test_payoff_gap_split_matches_direct_difference():
    state, _ = cooperative_state(eps=0.01)
    direct, indirect = payoff_gap_parts(state, 0, 1)
    pays = incumbent_payoffs(state)
    assert direct - indirect == pytest.approx(pays[0] - pays[1], abs=1e-12)


def test_best_response_to_alld_is_alld():
    su = make_constant(A2, 0.5, "su")
    alld = make_constant(A2, 1.0, "alld")
    pop = PerturbedPopulation([(alld, 1.0)], [(su, 1.0)], 1e-4)
    state = solve_consistent(pop, A2, GAME).most_defective()
    report = verify_nash(state)
    assert report.is_nash
    assert (report.best_strategy.defect_prob == 1.0).all()


def test_best_responses_to_cooperative_state_are_the_thresholds():
    state, _ = cooperative_state()
    report = verify_nash(state)
    assert report.is_nash
    pi = report.pi
    import itertools

    ties = []
    for bits in itertools.product((0.0, 1.0), repeat=3):
        cand = make_table(A2, np.array(bits), "cand")
        if long_run_payoff(state, cand) > pi - 1e-9:
            ties.append(bits)
    assert sorted(ties) == [(0.0, 0.0, 1.0), (0.0, 1.0, 1.0)]


def test_offensive_k1_candidate_has_profitable_reply():
    game = validate_pd(2.3, 1.7)
    model = SignalModel(ObservationStructure.ACTIONS, 1)
    s1 = make_threshold(model, 1, "thr1")
    allc = make_threshold(model, 2, "allc")
    committed = [
        (make_constant(model, 0.3, "c3"), 0.5),
        (make_constant(model, 0.7, "c7"), 0.5),
    ]
    pop = PerturbedPopulation([(s1, 0.3), (allc, 0.7)], committed, 1e-3)
    state = solve_consistent(pop, model, game).most_cooperative()
    report = verify_nash(state)
    assert report.nash_gap > report.tol


def test_min_mode_equals_max_mode_for_unique_record():
    state, _ = cooperative_state()
    alld = make_constant(A2, 1.0, "alld")
    assert long_run_payoff(state, alld, mode="max") == pytest.approx(
        long_run_payoff(state, alld, mode="min"), abs=1e-15
    )


# ---------------------------------------------------------------------------
# cooperative equilibrium, observation of actions
# ---------------------------------------------------------------------------

def test_worked_example_q_and_mu():
    su = make_constant(A2, 0.5, "su")
    eq = solve_q_actions(GAME, 2, [(su, 1.0)], ladder=SHORT_LADDER)
    assert eq.q_star == pytest.approx(1 / 6, abs=1e-4)
    assert eq.mu == pytest.approx(1 / 6, abs=1e-4)
    assert eq.chi == pytest.approx(5 / 18, abs=1e-4)
    assert eq.form is EquilibriumForm.HETEROGENEOUS
    assert eq.extras["q_lower_bound"] < eq.q_star < eq.extras["q_upper_bound"]
    assert 2 * eq.q_star < 1


def test_indifference_residual_scales_with_pivot_probability():
    su = make_constant(A2, 0.5, "su")
    eq = solve_q_actions(GAME, 2, [(su, 1.0)], ladder=SHORT_LADDER)
    for point in eq.epsilon_path:
        assert point.residual <= 1e-9 * point.pivot_prob


def test_low_commitment_defection_pushes_q_to_lower_bound():
    su = make_constant(A2, 0.01, "su")
    eq = solve_q_actions(GAME, 2, [(su, 1.0)], ladder=SHORT_LADDER)
    assert eq.q_star == pytest.approx(GAME.g / (2 * (GAME.l + 1)), abs=4e-3)


def test_mu_cross_checked_against_fresh_bayes():
    su = make_constant(A2, 0.9, "su")
    eq = solve_q_actions(GAME, 2, [(su, 1.0)], ladder=(1e-3, 5e-4, 2.5e-4))
    point = eq.epsilon_path[-1]
    s1 = make_threshold(A2, 1, "thr1")
    s2 = make_threshold(A2, 2, "thr2")
    pop = PerturbedPopulation(
        [(s1, point.q), (s2, 1 - point.q)], [(su, 1.0)], point.epsilon
    )
    from reciplab import SolverOptions

    state = solve_consistent(
        pop, A2, GAME, SolverOptions(tol=1e-14)
    ).most_cooperative()
    weights = state.compiled().weights
    theta = state.theta.table
    posts = weights * theta[:, 1]
    posts = posts / posts.sum()
    mu_bayes = float(posts @ state.compiled().tables[:, 0])
    assert point.mu == pytest.approx(mu_bayes, abs=1e-8)


def test_actions_solver_rejects_offensive_games():
    su = make_constant(A2, 0.5, "su")
    with pytest.raises(UnsupportedGame):
        solve_q_actions(validate_pd(2.3, 1.7), 2, [(su, 1.0)])


def test_homogeneous_form_when_committed_defect_mostly_on_clean():
    """A committed type that defects on clean records but rarely after one
    mark makes the partner less dangerous when both saw a mark: mixing
    happens inside each agent."""
    su = make_table(A2, [0.9, 0.05, 0.5], "lurker")
    eq = solve_q_actions(GAME, 2, [(su, 1.0)], ladder=SHORT_LADDER)
    assert eq.chi < eq.mu
    assert eq.form is EquilibriumForm.HOMOGENEOUS


# ---------------------------------------------------------------------------
# conflicts / profiles / actions-against-cooperation
# ---------------------------------------------------------------------------

def test_conflicts_mild_solution_below_half():
    game = validate_pd(0.2, 0.2)
    mc = SignalModel(ObservationStructure.CONFLICTS, 2)
    eq = solve_q_conflicts(game, 2, [(make_constant(mc, 0.5, "su"), 1.0)], SHORT_LADDER)
    assert game.g / (game.l + 1) - 1e-6 <= eq.extras["k_q"] < 0.5
    # the deterrence balance holds at the extrapolated point
    lhs = game.l * eq.mu + (1 - eq.mu) * game.g
    rhs = eq.extras["k_q"] * (1 - eq.mu) * (game.l + 1)
    assert lhs == pytest.approx(rhs, abs=1e-4)


def test_conflicts_acute_no_root():
    mc = SignalModel(ObservationStructure.CONFLICTS, 2)
    with pytest.raises(NoRoot):
        solve_q_conflicts(validate_pd(3, 3), 2, [(make_constant(mc, 0.5, "su"), 1.0)])


def test_profiles_posterior_identity():
    assert posterior_normal_sole_defector(0.6) == pytest.approx(0.6, abs=1e-12)
    assert posterior_normal_sole_defector(0.3) == pytest.approx(0.3, abs=1e-12)


def test_profiles_mild_and_acute():
    game = validate_pd(0.2, 0.2)
    eq = solve_q_profiles(game, 2, 0.01, SHORT_LADDER)
    assert eq.extras["k_q"] == pytest.approx(game.g / (game.l + 1), abs=0.03)
    assert eq.extras["k_q"] < 0.5
    assert eq.extras["incentive_ordering_ok"]
    assert eq.extras["posterior_committed_sole_defection"] > 0.5
    with pytest.raises(NoRoot):
        solve_q_profiles(validate_pd(3, 3), 2, 0.01, SHORT_LADDER)


def test_actions_against_cooperation_always_feasible():
    ladder = tuple(1e-2 * 0.5 ** i for i in range(5))
    for g, l in [(3.0, 3.0), (1.0, 3.0), (2.3, 1.7), (0.6, 0.5), (1.9, 1.2)]:
        eq = solve_q_actions_against_coop(validate_pd(g, l), 2, 0.01, ladder)
        assert eq.extras["k_q"] < 1.0
        assert eq.extras["hidden_mark_ordering_ok"]
        assert eq.extras["k_q"] == pytest.approx(g / (l + 1), abs=0.05)


# ---------------------------------------------------------------------------
# single observation and the feasibility table
# ---------------------------------------------------------------------------

def test_beta_examples():
    m1 = SignalModel(ObservationStructure.ACTIONS, 1)
    assert beta_commitments([(make_constant(m1, 0.4, "c"), 1.0)]) == pytest.approx(0.4)
    two = [(make_constant(m1, 0.2, "a"), 0.5), (make_constant(m1, 0.8, "b"), 0.5)]
    assert beta_commitments(two) == pytest.approx(0.68)
    assert beta_commitments([(make_constant(m1, 1.0, "d"), 1.0)]) == pytest.approx(1.0)
    with pytest.raises(ZeroDivisionError):
        beta_commitments([(make_constant(m1, 0.0, "z"), 1.0)])


def test_feasibility_k1_examples():
    m1 = SignalModel(ObservationStructure.ACTIONS, 1)
    com6 = [(make_constant(m1, 0.6, "c"), 1.0)]
    assert feasibility_k1(validate_pd(0.5, 2.0), com6).feasible
    assert not feasibility_k1(validate_pd(0.7, 2.0), com6).feasible
    # boundary: g = 1 needs the committed to defect surely on clean records
    cell = feasibility_k1(validate_pd(1.0, 2.0), [(make_constant(m1, 1.0, "d"), 1.0)])
    assert cell.feasible and "boundary" in cell.mechanism_note
    assert not feasibility_k1(
        validate_pd(1.0, 2.0), [(make_constant(m1, 0.99, "c"), 1.0)]
    ).feasible


def test_feasibility_k1_sweep_matches_deviator_check():
    rng = np.random.default_rng(42)
    m1 = SignalModel(ObservationStructure.ACTIONS, 1)
    for _ in range(50):
        l = rng.uniform(0.5, 4.0)
        g = rng.uniform(0.05, min(l - 0.01, 2.0))
        beta = rng.uniform(0.05, 0.99)
        game = validate_pd(g, l)
        cell = feasibility_k1(game, [(make_constant(m1, beta, "c"), 1.0)])
        q = (g + (l - g) * beta) / (l + 1 + (l - g) * beta)
        deviator_loses = (1 + g) * (1 - q) <= 1 + 1e-12
        assert cell.feasible == (g <= beta) == deviator_loses


def test_feasibility_table_rows():
    expectations = {
        (1.0, 3.0): "YYYY",
        (2.0, 2.5): "YNNY",
        (2.3, 1.7): "NNNY",
        (0.6, 0.5): "NYYY",
    }
    for (g, l), pattern in expectations.items():
        cells = feasibility_table(validate_pd(g, l), 2)
        got = "".join("Y" if c.feasible else "N" for c in cells)
        assert got == pattern, f"({g},{l}): expected {pattern}, got {got}"


@pytest.mark.slow
def test_feasibility_table_invariant_in_k():
    patterns = set()
    for k in (2, 3, 4):
        cells = feasibility_table(validate_pd(2.0, 2.5), k)
        patterns.add("".join("Y" if c.feasible else "N" for c in cells))
    assert patterns == {"YNNY"}


# ---------------------------------------------------------------------------
# mutant curve and evolutionary stability
# ---------------------------------------------------------------------------

def test_mutant_curve_endpoints():
    pts = mutant_curve(GAME, 2, 1 / 6, [0.0, 1.0])
    (a0, h0, p0), (a1, h1, p1) = pts
    assert (h0, p0) == (0.0, 1.0)
    assert h1 == pytest.approx(1.0) and p1 == pytest.approx(0.0)


def test_mutant_curve_strictly_decreasing():
    grid = np.arange(0.0, 1.0 + 1e-9, 1e-4)
    pis = np.array([p for _, _, p in mutant_curve(GAME, 2, 1 / 6, grid)])
    assert np.diff(pis).max() <= -1e-8


def test_ess_cooperative_state_is_hawk_dove_stable():
    state, _ = cooperative_state()
    s1 = make_threshold(A2, 1, "thr1")
    s2 = make_threshold(A2, 2, "thr2")
    report = ess_check(state, [s1, s2])
    assert report.passed
    assert all(e.margin > 0 for e in report.entries)


def test_ess_alld_state_passes_against_relabeled_table():
    su = make_constant(A2, 0.5, "su")
    alld = make_constant(A2, 1.0, "alld")
    pop = PerturbedPopulation([(alld, 1.0)], [(su, 1.0)], 1e-4)
    state = solve_consistent(pop, A2, GAME).most_defective()
    clone = make_table(A2, [1.0, 1.0, 1.0], "alld_clone")
    report = ess_check(state, [clone])
    assert report.passed


def test_ess_fails_for_borderline_belief_free_state():
    game = validate_pd(1, 1)
    m1 = SignalModel(ObservationStructure.ACTIONS, 1)
    # responses rise linearly by g/(l+1) per observed defection: every
    # deviator is exactly indifferent, so the state is Nash but invadable
    bf = make_table(m1, [0.1, 0.1 + game.g / (game.l + 1)], "belief_free")
    pop = PerturbedPopulation([(bf, 1.0)], [], 0.0)
    state = solve_consistent(pop, m1, game).most_cooperative()
    assert verify_nash(state).is_nash
    alld = make_constant(m1, 1.0, "alld")
    report = ess_check(state, [alld])
    assert not report.passed
