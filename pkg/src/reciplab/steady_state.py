"""Consistent signal profiles as fixed points of the behavior-to-signal map.

A signal profile assigns each incumbent strategy a distribution over signals.
The population's behavior map sends a profile theta to the profile induced by
agents who observe signals drawn from theta: under observation of actions
each strategy's new distribution is the binomial of its average defection
rate against the population mixture; under the richer structures the joint
action-profile distribution of each strategy is pushed through the
observation map and a multinomial.

Fixed points of that map are the steady states.  There may be several; the
solver runs damped iteration from a battery of starts and returns all
distinct fixed points it finds, each with a numerically differentiated
stability tag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NoConvergence
from .games import PDGame
from .observation import (
    ObservationStructure,
    SignalModel,
    _multinomial_coeffs,
    binomial_pmf_vector,
    multinomial_pmf,
    profile_pushforward,
)


def _multinomial_coeffs_for(model: SignalModel) -> np.ndarray:
    return _multinomial_coeffs(model.k, len(model.alphabet))
from .strategies import PerturbedPopulation, StationaryStrategy

DEDUP_TOL = 1e-8


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.5
    tol: float = 1e-10
    max_iters: int = 100_000
    n_random_starts: int = 8
    seed: int = 0
    starts: Optional[Sequence[np.ndarray]] = None

    def __post_init__(self) -> None:
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must be in (0, 1]")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("need tol > 0 and max_iters >= 1")


class CompiledPopulation:
    """Array form of a perturbed population: tables, weights, and masks."""

    def __init__(self, population: PerturbedPopulation, model: SignalModel):
        incumbents = population.incumbents()
        self.population = population
        self.model = model
        self.names = [s.name for s, _ in incumbents]
        self.strategies = [s for s, _ in incumbents]
        self.tables = np.vstack([s.defect_prob for s, _ in incumbents])
        self.weights = np.array([w for _, w in incumbents])
        self.n_normal = population.n_normal
        self.sigma = np.array([w for _, w in population.normal])
        if self.tables.shape[1] != model.size():
            raise ValueError(
                "strategy tables do not match the model's signal space"
            )
        self.push = profile_pushforward(model.structure)

    @property
    def n(self) -> int:
        return len(self.names)

    def index_of(self, strategy: StationaryStrategy) -> Optional[int]:
        for i, s in enumerate(self.strategies):
            if s.name == strategy.name or np.array_equal(
                s.defect_prob, strategy.defect_prob
            ):
                return i
        return None


def apply_map_arrays(comp: CompiledPopulation, theta: np.ndarray) -> np.ndarray:
    """One application of the behavior-to-signal map on a (n, |M|) profile."""
    model = comp.model
    if model.structure is ObservationStructure.ACTIONS:
        mixture = comp.weights @ theta
        rates = comp.tables @ mixture
        return binomial_pmf_vector(rates, model.k)
    # R[i, j]: probability that an i-agent defects against a j-partner.
    R = comp.tables @ theta.T
    Rt = R.T
    w = comp.weights
    # joint action-profile distribution of each strategy against a random
    # partner; rows are (c,c), (c,d), (d,c), (d,d)
    psi = np.stack([
        ((1.0 - R) * (1.0 - Rt)) @ w,
        ((1.0 - R) * Rt) @ w,
        (R * (1.0 - Rt)) @ w,
        (R * Rt) @ w,
    ])
    per_draw = (comp.push @ psi).T          # (n, |B|)
    counts = model.signals()                # (|M|, |B|)
    coefs = _multinomial_coeffs_for(model)
    return coefs[None, :] * np.prod(
        per_draw[:, None, :] ** counts[None, :, :], axis=2
    )


def defection_rates(comp: CompiledPopulation, theta: np.ndarray) -> np.ndarray:
    """Average defection probability of each incumbent under profile theta."""
    if comp.model.structure is ObservationStructure.ACTIONS:
        return comp.tables @ (comp.weights @ theta)
    R = comp.tables @ theta.T
    return R @ comp.weights


class SignalProfile:
    """Per-strategy signal distributions, rows aligned with the incumbents."""

    def __init__(self, names: Sequence[str], table: np.ndarray):
        self.names = list(names)
        array = np.array(table, dtype=float)
        array.setflags(write=False)
        self.table = array

    def __getitem__(self, name: str) -> np.ndarray:
        return self.table[self.names.index(name)]

    def mixture(self, weights: np.ndarray) -> np.ndarray:
        return weights @ self.table

    def sup_distance(self, other: "SignalProfile") -> float:
        return float(np.max(np.abs(self.table - other.table)))

    def to_json_dict(self) -> dict:
        return {
            name: [float(x) for x in row]
            for name, row in zip(self.names, self.table)
        }


@dataclass
class SteadyState:
    population: PerturbedPopulation
    model: SignalModel
    game: PDGame
    theta: SignalProfile
    residual: float
    stable: Optional[bool] = None
    spectral_radius: Optional[float] = None
    start_label: str = ""

    def compiled(self) -> CompiledPopulation:
        if not hasattr(self, "_compiled"):
            self._compiled = CompiledPopulation(self.population, self.model)
        return self._compiled

    def mixture(self) -> np.ndarray:
        return self.compiled().weights @ self.theta.table

    def rates(self) -> np.ndarray:
        return defection_rates(self.compiled(), self.theta.table)

    def average_defection(self) -> float:
        return float(self.compiled().weights @ self.rates())

    def normal_average_defection(self) -> float:
        comp = self.compiled()
        return float(comp.sigma @ self.rates()[: comp.n_normal])

    def to_json_dict(self) -> dict:
        return {
            "population": self.population.to_json_dict(),
            "structure": self.model.structure.value,
            "k": self.model.k,
            "game": {"g": self.game.g, "l": self.game.l},
            "theta": self.theta.to_json_dict(),
            "residual": self.residual,
            "stable": self.stable,
            "spectral_radius": self.spectral_radius,
            "average_defection": self.average_defection(),
        }


@dataclass
class StartReport:
    label: str
    converged: bool
    iterations: int
    residual: float


@dataclass
class ConsistencyResult:
    states: list
    start_reports: list

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def most_cooperative(self) -> SteadyState:
        return min(self.states, key=lambda s: s.average_defection())

    def most_defective(self) -> SteadyState:
        return max(self.states, key=lambda s: s.average_defection())


def _default_starts(comp: CompiledPopulation, options: SolverOptions):
    n, size = comp.n, comp.model.size()
    clean = np.zeros((n, size))
    clean[:, 0] = 1.0
    dirty = np.zeros((n, size))
    dirty[:, -1] = 1.0
    uniform = np.full((n, size), 1.0 / size)
    starts = [("all_cooperate", clean), ("all_defect", dirty), ("uniform", uniform)]
    rng = np.random.default_rng(options.seed)
    for i in range(options.n_random_starts):
        starts.append((f"random_{i}", rng.dirichlet(np.ones(size), size=n)))
    return starts


def iterate_to_fixed_point(
    comp: CompiledPopulation,
    theta0: np.ndarray,
    options: SolverOptions,
):
    """Damped iteration theta <- (1-eta) theta + eta f(theta).

    Returns (theta, residual, iterations, converged); residual is the
    sup-norm of f(theta) - theta at the returned profile.
    """
    eta = options.damping
    theta = np.array(theta0, dtype=float)
    residual = np.inf
    for it in range(1, options.max_iters + 1):
        f_theta = apply_map_arrays(comp, theta)
        residual = float(np.max(np.abs(f_theta - theta)))
        if residual <= options.tol:
            return theta, residual, it, True
        theta = (1.0 - eta) * theta + eta * f_theta
    return theta, residual, options.max_iters, False


def solve_consistent(
    population: PerturbedPopulation,
    model: SignalModel,
    game: PDGame,
    options: Optional[SolverOptions] = None,
    tag_stability: bool = True,
) -> ConsistencyResult:
    """Find consistent signal profiles from a battery of starting profiles.

    All converged fixed points are returned, deduplicated at sup-distance
    1e-8, in the order their starts are listed (reproducible).  Starts that
    exhaust the iteration budget are reported but do not abort the solve
    unless nothing converged at all.
    """
    options = options or SolverOptions()
    comp = CompiledPopulation(population, model)
    if options.starts is not None:
        starts = [(f"user_{i}", np.asarray(t, dtype=float))
                  for i, t in enumerate(options.starts)]
    else:
        starts = _default_starts(comp, options)

    states: list[SteadyState] = []
    reports: list[StartReport] = []
    for label, theta0 in starts:
        theta, residual, iters, ok = iterate_to_fixed_point(comp, theta0, options)
        reports.append(StartReport(label, ok, iters, residual))
        if not ok:
            continue
        profile = SignalProfile(comp.names, theta)
        if any(profile.sup_distance(s.theta) < DEDUP_TOL for s in states):
            continue
        state = SteadyState(
            population=population,
            model=model,
            game=game,
            theta=profile,
            residual=residual,
            start_label=label,
        )
        if tag_stability:
            rho = map_spectral_radius(comp, theta)
            state.spectral_radius = rho
            state.stable = bool(rho < 1.0)
        states.append(state)
    if not states:
        raise NoConvergence(
            f"no start converged within {options.max_iters} iterations "
            f"(best residual {min(r.residual for r in reports):.3e})"
        )
    return ConsistencyResult(states, reports)


def map_spectral_radius(comp: CompiledPopulation, theta: np.ndarray, h: float = 1e-7) -> float:
    """Spectral radius of the numerically differentiated map at theta."""
    n, size = theta.shape
    dim = n * size
    jac = np.empty((dim, dim))
    flat = theta.reshape(-1)
    for col in range(dim):
        bump = np.zeros(dim)
        bump[col] = h
        up = apply_map_arrays(comp, (flat + bump).reshape(n, size))
        dn = apply_map_arrays(comp, (flat - bump).reshape(n, size))
        jac[:, col] = (up - dn).reshape(-1) / (2.0 * h)
    eigvals = np.linalg.eigvals(jac)
    return float(np.max(np.abs(eigvals)))


def actions_rate_fixed_points(
    population: PerturbedPopulation, model: SignalModel
) -> list:
    """Independent oracle for the actions structure.

    Under observation of actions the full map factors through the vector of
    per-strategy average defection rates (one coordinate per incumbent; the
    population signal mixture is the weighted mixture of their binomials).
    Fixed points of that reduced map, including repelling ones that damped
    iteration cannot reach, are found by dense scan in one dimension and by
    seeded iteration plus grid-started Newton polish in up to three.
    """
    if model.structure is not ObservationStructure.ACTIONS:
        raise ValueError("the rate factorization only holds for actions")
    comp = CompiledPopulation(population, model)

    def g(r: np.ndarray) -> np.ndarray:
        mixture = comp.weights @ binomial_pmf_vector(r, model.k)
        return comp.tables @ mixture

    return _reduced_fixed_points(g, comp.n, thorough=True)


# ---------------------------------------------------------------------------
# Deviator consistency
# ---------------------------------------------------------------------------

def deviator_consistent_dists(
    state: SteadyState,
    dev: StationaryStrategy,
    thorough: bool = True,
) -> list:
    """All consistent signal distributions of a non-incumbent deviator.

    Under observation of actions the answer is the closed-form singleton:
    the incumbents' behavior is fixed, so the deviator's record is the
    binomial of her average defection against the population mixture.

    Under the richer structures the deviator's record includes her partners'
    responses to that record, a genuine fixed point which may have several
    solutions.  The map factors through the vector of incumbent response
    rates, one per incumbent, so roots are found in those reduced
    coordinates: a dense scan plus bisection in one dimension, seeded damped
    iteration plus grid-started Newton polish in two or three.
    """
    comp = state.compiled()
    model = state.model
    if model.structure is ObservationStructure.ACTIONS:
        rate = float(dev.defect_prob @ state.mixture())
        return [binomial_pmf_vector(np.asarray([rate]), model.k)[0]]

    # deviator's defection probability against each incumbent type is fixed
    p_dev = np.array([float(dev.defect_prob @ row) for row in state.theta.table])
    w = comp.weights

    def theta_of(r: np.ndarray) -> np.ndarray:
        psi = np.array([
            w @ ((1.0 - p_dev) * (1.0 - r)),
            w @ ((1.0 - p_dev) * r),
            w @ (p_dev * (1.0 - r)),
            w @ (p_dev * r),
        ])
        return multinomial_pmf(comp.push @ psi, model)

    def g(r: np.ndarray) -> np.ndarray:
        return comp.tables @ theta_of(r)

    n = comp.n
    roots = _reduced_fixed_points(g, n, thorough)
    thetas = [theta_of(r) for r in roots]
    thetas.sort(key=lambda t: tuple(np.round(t, 12)))
    return thetas


def _reduced_fixed_points(g: Callable, n: int, thorough: bool) -> list:
    roots: list[np.ndarray] = []

    def push(r: np.ndarray) -> None:
        r = np.clip(r, 0.0, 1.0)
        if np.max(np.abs(g(r) - r)) < 1e-11:
            if not any(np.max(np.abs(r - r2)) < DEDUP_TOL for r2 in roots):
                roots.append(r)

    if n == 1 and thorough:
        xs = np.linspace(0.0, 1.0, 2001)
        vals = np.array([float(g(np.array([x]))[0] - x) for x in xs])
        for i in range(len(xs) - 1):
            if vals[i] == 0.0:
                push(np.array([xs[i]]))
            elif vals[i] * vals[i + 1] < 0:
                lo, hi = xs[i], xs[i + 1]
                flo = vals[i]
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    fmid = float(g(np.array([mid]))[0] - mid)
                    if flo * fmid <= 0:
                        hi = mid
                    else:
                        lo, flo = mid, fmid
                    if hi - lo < 1e-15:
                        break
                push(np.array([0.5 * (lo + hi)]))
        if vals[-1] == 0.0:
            push(np.array([1.0]))
        return roots

    # damped iteration from corners, center, and a few random seeds
    seeds = [np.full(n, 0.5)]
    for corner in range(2 ** n):
        seeds.append(np.array([(corner >> i) & 1 for i in range(n)], dtype=float))
    rng = np.random.default_rng(7)
    seeds.extend(rng.random((4, n)))
    for seed in seeds:
        r = np.array(seed, dtype=float)
        for _ in range(5000):
            r_new = 0.5 * r + 0.5 * g(r)
            if np.max(np.abs(r_new - r)) < 1e-14:
                break
            r = r_new
        push(r)

    if thorough and n <= 3:
        # Newton polish from a coarse grid catches repelling interior roots
        axes = [np.linspace(0.0, 1.0, 11)] * n
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.reshape(-1) for m in mesh], axis=1)
        for r0 in points:
            r = np.array(r0, dtype=float)
            ok = True
            for _ in range(60):
                fr = g(r) - r
                if np.max(np.abs(fr)) < 1e-13:
                    break
                jac = np.empty((n, n))
                h = 1e-7
                for col in range(n):
                    bump = np.zeros(n)
                    bump[col] = h
                    jac[:, col] = (g(r + bump) - g(r - bump)) / (2 * h)
                try:
                    step = np.linalg.solve(jac - np.eye(n), -fr)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                r = r + step
                if np.max(np.abs(step)) > 2.0 or not np.isfinite(r).all():
                    ok = False
                    break
            if ok and np.isfinite(r).all() and (r > -1e-9).all() and (r < 1 + 1e-9).all():
                push(r)
    return roots


# ---------------------------------------------------------------------------
# Robustness (one-step contraction around a near-pure state)
# ---------------------------------------------------------------------------

@dataclass
class RobustnessReport:
    passed: bool
    kappa: float
    epsilon: float
    n_samples: int
    worst_margin: float
    counterexample: Optional[dict] = None

    def __bool__(self) -> bool:  # allows `assert robustness_check(...)`
        return self.passed


def robustness_check(
    state: SteadyState,
    kappa: float,
    n_samples: int = 1000,
    seed: int = 0,
) -> RobustnessReport:
    """Sampled falsifier for one-step stability of a near-pure state.

    Perturbs the normal strategies' signal components to arbitrary binomial
    profiles whose sigma-weighted deviation rate stays within kappa*epsilon
    of the dominant action, applies the behavior map once, and requires the
    new deviation rate to fall strictly inside the ball.  Committed
    components are held at their steady-state values: committed behavior is
    signal-independent by assumption, so their records snap back in one
    round and only the normal components carry the dangerous dynamics.

    A sampled check can falsify but never prove the contraction; the report
    carries the worst margin and a counterexample when one is found.
    """
    comp = state.compiled()
    model = state.model
    eps = state.population.epsilon
    radius = kappa * eps
    n_norm = comp.n_normal
    sigma = comp.sigma

    # dominant pure action of the normal agents at the steady state
    base_rates = state.rates()[:n_norm]
    dominant_defect = bool(sigma @ base_rates > 0.5)

    rng = np.random.default_rng(seed)
    samples = []
    levels = [1.0, 0.75, 0.5, 0.25, 0.01]
    # corner splits: all deviation mass on one strategy (capped at rate 1)
    for level in levels:
        samples.append(np.full(n_norm, level * radius))
        for j in range(n_norm):
            split = np.zeros(n_norm)
            split[j] = min(1.0, level * radius / sigma[j])
            samples.append(split)
    while len(samples) < n_samples:
        split = rng.dirichlet(np.ones(n_norm))
        level = rng.uniform(0.0, radius)
        samples.append(np.minimum(split * level / sigma, 1.0))

    worst = np.inf
    counterexample = None
    for dev_rates in samples:
        dev_rates = np.asarray(dev_rates, dtype=float)
        if sigma @ dev_rates > radius * (1 + 1e-12):
            dev_rates = dev_rates * (radius / (sigma @ dev_rates))
        rates = 1.0 - dev_rates if dominant_defect else dev_rates
        theta = np.array(state.theta.table, dtype=float)
        if model.structure is ObservationStructure.ACTIONS:
            theta[:n_norm] = binomial_pmf_vector(rates, model.k)
        else:
            theta[:n_norm] = _pure_profile_rows(comp, rates, dominant_defect)
        # the action rates responding to the perturbed profile are exactly
        # the rates that generate the mapped profile f(theta)
        new_rates = defection_rates(comp, theta)[:n_norm]
        new_dev = sigma @ (1.0 - new_rates if dominant_defect else new_rates)
        margin = radius - new_dev
        if margin < worst:
            worst = margin
            counterexample = {
                "normal_deviation_rates": [float(x) for x in dev_rates],
                "new_sigma_deviation": float(new_dev),
                "radius": float(radius),
            }
        if margin <= 0:
            return RobustnessReport(False, kappa, eps, len(samples), float(worst), counterexample)
    return RobustnessReport(True, kappa, eps, len(samples), float(worst), None)


def _pure_profile_rows(comp: CompiledPopulation, dev_rates: np.ndarray, dominant_defect: bool) -> np.ndarray:
    """Binomial-style rows for perturbed normal records under the richer
    structures: deviation shows up as non-clean observations."""
    model = comp.model
    rows = np.empty((len(dev_rates), model.size()))
    n_letters = len(model.alphabet)
    for i, x in enumerate(dev_rates):
        per_draw = np.zeros(n_letters)
        if dominant_defect:
            per_draw[-1] = 1.0 - x
            per_draw[0] = x
        else:
            per_draw[0] = 1.0 - x
            per_draw[-1] = x
        rows[i] = multinomial_pmf(per_draw, model)
    return rows
