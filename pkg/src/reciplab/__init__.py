"""reciplab: steady states, cooperative equilibria, and population
simulation for randomly matched Prisoner's Dilemma play with sampled
observation of past behavior and a small mass of committed agents."""

from .errors import (
    DiscountTooLow,
    InvalidGame,
    InvalidScenario,
    NoConvergence,
    NoRoot,
    RatioTooSmall,
    RecipLabError,
    UnsupportedGame,
    UnsupportedStructure,
)
from .games import Action, GameClass, Offense, PDGame, Temptation, classify, payoff, validate_pd
from .observation import (
    ActionProfileDist,
    ObservationStructure,
    SignalModel,
    nu_actions,
    nu_multinomial,
    observe_map,
    signal_space_size,
)
from .strategies import (
    PerturbedPopulation,
    RegularityReport,
    StationaryStrategy,
    check_regularity,
    make_constant,
    make_mixed_single,
    make_profile_strategy_s1s2,
    make_table,
    make_threshold,
    respond,
)
from .steady_state import (
    ConsistencyResult,
    SignalProfile,
    SolverOptions,
    SteadyState,
    actions_rate_fixed_points,
    apply_map_arrays,
    deviator_consistent_dists,
    robustness_check,
    solve_consistent,
)
from .equilibrium import (
    CooperativeEquilibrium,
    EquilibriumForm,
    FeasibilityCell,
    PayoffReport,
    best_response,
    beta_commitments,
    ess_check,
    feasibility_k1,
    feasibility_table,
    indifference_share,
    long_run_payoff,
    mutant_curve,
    posterior_normal_sole_defector,
    solve_q_actions,
    solve_q_actions_against_coop,
    solve_q_conflicts,
    solve_q_profiles,
    verify_nash,
)
from .simulation import (
    ContagionReport,
    SimConfig,
    SimResult,
    contagion_experiment,
    monotone_dynamics,
    simulate,
)
from .repeated import (
    RepeatedConfig,
    RecursionState,
    full_cooperation_limit,
    gamma,
    q_sequence,
    verify_one_deviation,
)

__version__ = "0.1.0"
