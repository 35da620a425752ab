import numpy as np
import pytest

from reciplab import (
    ObservationStructure,
    PerturbedPopulation,
    SignalModel,
    SolverOptions,
    actions_rate_fixed_points,
    deviator_consistent_dists,
    make_constant,
    make_table,
    make_threshold,
    robustness_check,
    solve_consistent,
    validate_pd,
)
from reciplab.steady_state import (
    CompiledPopulation,
    SignalProfile,
    SteadyState,
    apply_map_arrays,
)

GAME = validate_pd(1, 3)
A2 = SignalModel(ObservationStructure.ACTIONS, 2)


def example1_population(eps=1e-4):
    s1 = make_threshold(A2, 1, "s1")
    s2 = make_threshold(A2, 2, "s2")
    su = make_constant(A2, 0.5, "su")
    return PerturbedPopulation([(s1, 1 / 6), (s2, 5 / 6)], [(su, 1.0)], eps)


def test_alld_map_gives_point_mass():
    alld = make_constant(A2, 1.0, "alld")
    pop = PerturbedPopulation([(alld, 1.0)], [], 0.0)
    comp = CompiledPopulation(pop, A2)
    theta = np.full((1, 3), 1 / 3)
    new = apply_map_arrays(comp, theta)
    assert np.allclose(new, [[0, 0, 1]], atol=1e-15)


def test_constant_strategy_fixed_in_one_step():
    su = make_constant(A2, 0.5, "su")
    pop = PerturbedPopulation([(su, 1.0)], [], 0.0)
    comp = CompiledPopulation(pop, A2)
    rng = np.random.default_rng(0)
    theta = rng.dirichlet(np.ones(3), size=1)
    once = apply_map_arrays(comp, theta)
    twice = apply_map_arrays(comp, once)
    assert np.allclose(once, twice, atol=1e-15)
    assert np.allclose(once, [[0.25, 0.5, 0.25]], atol=1e-15)


def test_map_preserves_simplex_rows():
    rng = np.random.default_rng(1)
    for structure in ObservationStructure:
        model = SignalModel(structure, 2)
        size = model.size()
        strategies = [
            make_table(model, rng.random(size), f"s{i}") for i in range(2)
        ]
        committed = [(make_constant(model, 0.3, "c"), 1.0)]
        pop = PerturbedPopulation(
            [(strategies[0], 0.4), (strategies[1], 0.6)], committed, 0.05
        )
        comp = CompiledPopulation(pop, model)
        theta = rng.dirichlet(np.ones(size), size=comp.n)
        new = apply_map_arrays(comp, theta)
        assert np.allclose(new.sum(axis=1), 1.0, atol=1e-12)
        assert (new >= -1e-15).all()


def test_actions_fast_path_matches_general_path():
    pop = example1_population(0.01)
    comp = CompiledPopulation(pop, A2)
    rng = np.random.default_rng(2)
    theta = rng.dirichlet(np.ones(3), size=comp.n)
    fast = apply_map_arrays(comp, theta)
    # route the same profile through the joint-profile machinery
    R = comp.tables @ theta.T
    Rt = R.T
    w = comp.weights
    psi = np.stack([
        ((1 - R) * (1 - Rt)) @ w,
        ((1 - R) * Rt) @ w,
        (R * (1 - Rt)) @ w,
        (R * Rt) @ w,
    ])
    from reciplab.observation import multinomial_pmf, profile_pushforward

    push = profile_pushforward(ObservationStructure.ACTIONS)
    general = np.vstack([
        multinomial_pmf(push @ psi[:, i], A2) for i in range(comp.n)
    ])
    assert np.allclose(fast, general, atol=1e-12)


def test_example1_fixed_point_values():
    eps = 1e-4
    result = solve_consistent(example1_population(eps), A2, GAME)
    state = result.most_cooperative()
    assert state.residual <= 1e-10
    assert 3.45 <= state.theta["s1"][1] / eps <= 3.55
    assert 0.45 <= state.theta["s2"][1] / eps <= 0.55
    mix = state.mixture()
    assert 1.45 <= mix[1] / eps <= 1.55
    assert 0.20 <= mix[2] / eps <= 0.30
    # fixed points verified against the map independently of the solve path
    comp = state.compiled()
    residual = np.max(np.abs(apply_map_arrays(comp, state.theta.table) - state.theta.table))
    assert residual <= 1e-10


def test_majority_strategy_has_three_states():
    model = SignalModel(ObservationStructure.ACTIONS, 3)
    majority = make_threshold(model, 2, "majority")
    pop = PerturbedPopulation([(majority, 1.0)], [], 0.0)
    result = solve_consistent(pop, model, GAME)
    rates = sorted(s.average_defection() for s in result.states)
    assert len(result.states) == 3
    assert rates == pytest.approx([0.0, 0.5, 1.0], abs=1e-9)
    by_rate = {round(s.average_defection(), 3): s for s in result.states}
    assert by_rate[0.0].stable and by_rate[1.0].stable
    assert not by_rate[0.5].stable  # the averaged state repels


def test_partial_cooperation_rate():
    model = SignalModel(ObservationStructure.ACTIONS, 1)
    s_star = make_table(model, [0.10, 0.817], "s_star")
    pop = PerturbedPopulation([(s_star, 1.0)], [], 0.0)
    result = solve_consistent(pop, model, validate_pd(2.3, 1.7))
    assert len(result.states) == 1
    assert result.states[0].average_defection() == pytest.approx(0.35336, abs=1e-4)


def test_rate_oracle_agrees_with_full_solver():
    pop = example1_population(1e-4)
    roots = actions_rate_fixed_points(pop, A2)
    result = solve_consistent(pop, A2, GAME)
    for state in result.states:
        rates = state.rates()
        assert any(np.max(np.abs(rates - r)) < 1e-10 for r in roots)


def test_deviator_closed_form_under_actions():
    state = solve_consistent(example1_population(1e-4), A2, GAME).most_cooperative()
    alld = make_constant(A2, 1.0, "alld")
    dists = deviator_consistent_dists(state, alld)
    assert len(dists) == 1
    assert dists[0][-1] == pytest.approx(1.0, abs=1e-12)
    allc = make_constant(A2, 0.0, "allc")
    dists = deviator_consistent_dists(state, allc)
    assert len(dists) == 1
    assert dists[0][0] == pytest.approx(1.0, abs=1e-12)


def test_deviator_multiplicity_under_profiles():
    """An always-defector facing mutual-defection punishers has three
    consistent records: shunned, tolerated, and half-and-half."""
    model = SignalModel(ObservationStructure.ACTION_PROFILES, 3)
    sig = model.signals()
    dd_col = model.alphabet.index("dd")
    incumbent = make_table(model, (sig[:, dd_col] >= 2).astype(float), "dd_punisher")
    pop = PerturbedPopulation([(incumbent, 1.0)], [], 0.0)
    state = solve_consistent(pop, model, GAME).most_cooperative()
    assert state.average_defection() == pytest.approx(0.0, abs=1e-12)
    alld = make_table(model, np.ones(model.size()), "alld")
    dists = deviator_consistent_dists(state, alld)
    responses = sorted(float(incumbent.defect_prob @ th) for th in dists)
    assert len(dists) == 3
    assert responses == pytest.approx([0.0, 0.5, 1.0], abs=1e-9)


def _cooperative_state(eps=1e-4):
    from reciplab import indifference_share

    su = make_constant(A2, 0.5, "su")
    q = indifference_share(GAME, 2, [(su, 1.0)], eps)
    s1 = make_threshold(A2, 1, "s1")
    s2 = make_threshold(A2, 2, "s2")
    pop = PerturbedPopulation([(s1, q), (s2, 1 - q)], [(su, 1.0)], eps)
    return solve_consistent(pop, A2, GAME).most_cooperative(), q


def test_robustness_of_cooperative_state():
    state, q = _cooperative_state()
    eps = 1e-4
    kappa = 1.0 / (1.0 - (1.0 - eps) * q * 2)
    report = robustness_check(state, kappa, n_samples=1000, seed=0)
    assert report.passed
    assert report.worst_margin > 0


def test_robustness_of_alld_any_kappa():
    su = make_constant(A2, 0.5, "su")
    alld = make_constant(A2, 1.0, "alld")
    pop = PerturbedPopulation([(alld, 1.0)], [(su, 1.0)], 1e-4)
    state = solve_consistent(pop, A2, GAME).most_defective()
    for kappa in (0.5, 5.0, 50.0):
        assert robustness_check(state, kappa, n_samples=200, seed=1).passed


def test_robustness_fails_for_contagious_profile():
    """With every agent punishing any observed defection, each defection
    spawns k > 1 replies and the cooperative ball is not invariant."""
    su = make_constant(A2, 0.5, "su")
    s1 = make_threshold(A2, 1, "s1")
    pop = PerturbedPopulation([(s1, 1.0)], [(su, 1.0)], 1e-4)
    comp = CompiledPopulation(pop, A2)
    theta = np.zeros((comp.n, 3))
    theta[:, 0] = 1.0
    probe = SteadyState(pop, A2, GAME, SignalProfile(comp.names, theta), residual=1.0)
    report = robustness_check(probe, kappa=1.5, n_samples=200, seed=1)
    assert not report.passed
    assert report.counterexample is not None


def test_solver_reports_per_start():
    result = solve_consistent(example1_population(1e-4), A2, GAME)
    assert all(r.converged for r in result.start_reports)
    assert {r.label for r in result.start_reports} >= {"all_cooperate", "all_defect", "uniform"}
