"""Stationary strategies as signal -> defection-probability tables,
named constructors for the strategies the analysis needs, and populations.

A stationary strategy is a dense table over the frozen signal enumeration;
entry m is the probability of defecting after observing signal m.  Tables
(rather than programs) keep the fixed-point algebra exact and serializable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UnsupportedStructure
from .observation import (
    ObservationStructure,
    SignalModel,
    binomial_pmf_vector,
)


@dataclass(frozen=True)
class StationaryStrategy:
    """Mapping from signals to a mixed action (probability of defection)."""

    name: str
    defect_prob: np.ndarray

    def __post_init__(self) -> None:
        table = np.array(self.defect_prob, dtype=float)
        if table.ndim != 1:
            raise ValueError("strategy table must be one-dimensional")
        if (table < 0).any() or (table > 1).any():
            raise ValueError(f"defection probabilities outside [0,1] in {self.name}")
        table.setflags(write=False)
        object.__setattr__(self, "defect_prob", table)

    def __len__(self) -> int:
        return len(self.defect_prob)

    @property
    def totally_mixed(self) -> bool:
        return bool((self.defect_prob > 0).all() and (self.defect_prob < 1).all())

    def to_json_dict(self) -> dict:
        return {"name": self.name, "defect_prob": [float(x) for x in self.defect_prob]}


def make_table(model: SignalModel, values: Sequence[float], name: str) -> StationaryStrategy:
    values = np.asarray(values, dtype=float)
    if len(values) != model.size():
        raise ValueError(
            f"table length {len(values)} != signal space size {model.size()}"
        )
    return StationaryStrategy(name, values)


def make_constant(model: SignalModel, alpha: float, name: Optional[str] = None) -> StationaryStrategy:
    """Defect with probability alpha regardless of the observed signal."""
    if name is None:
        name = f"const_{alpha:g}"
    return make_table(model, np.full(model.size(), float(alpha)), name)


def make_threshold(model: SignalModel, j: int, name: Optional[str] = None) -> StationaryStrategy:
    """Defect iff the scalar signal (defection/conflict count) is >= j.

    j = k+1 never fires, i.e. always cooperate.
    """
    if not model.scalar:
        raise UnsupportedStructure(
            "threshold strategies are defined on scalar signal spaces "
            "(actions or conflicts)"
        )
    if not (0 <= j <= model.k + 1):
        raise ValueError(f"threshold j must be in [0, k+1], got {j}")
    table = (np.arange(model.k + 1) >= j).astype(float)
    if name is None:
        name = f"thr_{j}"
    return make_table(model, table, name)


def make_mixed_single(model: SignalModel, q: float, name: Optional[str] = None) -> StationaryStrategy:
    """Cooperate on a clean signal, defect with probability q on a single
    defection, defect surely on two or more."""
    if not model.scalar:
        raise UnsupportedStructure("mixed-single strategies need a scalar signal space")
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must be in [0,1], got {q}")
    table = np.ones(model.k + 1)
    table[0] = 0.0
    if model.k >= 1:
        table[1] = q
    if name is None:
        name = f"mix1_{q:g}"
    return make_table(model, table, name)


def sole_defector_counts(model: SignalModel) -> np.ndarray:
    """Per-signal count of observations where the partner defected alone."""
    letters = model.alphabet
    if model.structure is ObservationStructure.ACTION_PROFILES:
        col = letters.index("dc")
    elif model.structure is ObservationStructure.ACTIONS_AGAINST_COOPERATION:
        col = letters.index("DC")
    else:
        raise UnsupportedStructure("sole-defector counts need profile information")
    return model.signals()[:, col]


def disturbed_counts(model: SignalModel) -> np.ndarray:
    """Per-signal count of observations that were not mutual cooperation."""
    if model.structure not in (
        ObservationStructure.ACTION_PROFILES,
        ObservationStructure.ACTIONS_AGAINST_COOPERATION,
    ):
        raise UnsupportedStructure("disturbance counts need profile information")
    clean_col = 0  # first letter is the mutual-cooperation record by construction
    return model.k - model.signals()[:, clean_col]


def make_profile_strategy_s1s2(model: SignalModel):
    """The pair of profile-observation strategies supporting cooperation.

    Both defect once the partner is seen in at least two interactions that
    were not mutual cooperation; the stricter one additionally defects when
    the partner was the sole defector exactly once.
    """
    u = sole_defector_counts(model)
    d = disturbed_counts(model)
    strict = ((u == 1) | (d >= 2)).astype(float)
    lenient = (d >= 2).astype(float)
    return (
        make_table(model, strict, "profile_s1"),
        make_table(model, lenient, "profile_s2"),
    )


def respond(strategy: StationaryStrategy, nu: np.ndarray) -> float:
    """Expected defection probability of the strategy against signal
    distribution nu; affine in nu."""
    nu = np.asarray(nu, dtype=float)
    if abs(nu.sum() - 1.0) > 1e-9:
        raise ValueError("signal distribution does not sum to 1")
    return float(np.dot(nu, strategy.defect_prob))


@dataclass(frozen=True)
class PerturbedPopulation:
    """Normal strategies with weights, committed strategies with weights,
    and the committed mass epsilon."""

    normal: tuple
    committed: tuple
    epsilon: float

    def __init__(self, normal, committed, epsilon):
        object.__setattr__(self, "normal", tuple((s, float(w)) for s, w in normal))
        object.__setattr__(self, "committed", tuple((s, float(w)) for s, w in committed))
        object.__setattr__(self, "epsilon", float(epsilon))
        self._validate()

    def _validate(self) -> None:
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError(f"epsilon must be in [0,1), got {self.epsilon}")
        for label, group in (("normal", self.normal), ("committed", self.committed)):
            if group:
                weights = np.array([w for _, w in group])
                if (weights <= 0).any():
                    raise ValueError(f"{label} weights must be strictly positive")
                if abs(weights.sum() - 1.0) > 1e-12:
                    raise ValueError(f"{label} weights must sum to 1")
        if not self.normal:
            raise ValueError("population needs at least one normal strategy")
        if self.epsilon > 0:
            if not self.committed:
                raise ValueError("perturbed population needs committed strategies")
            if not any(s.totally_mixed for s, _ in self.committed):
                raise ValueError(
                    "perturbed population needs a totally mixed committed strategy"
                )
        names = [s.name for s, _ in self.normal] + [s.name for s, _ in self.committed]
        if len(set(names)) != len(names):
            raise ValueError(f"strategy names must be unique, got {names}")

    def incumbents(self):
        """(strategy, population weight) pairs, normals first."""
        out = [(s, (1.0 - self.epsilon) * w) for s, w in self.normal]
        out += [(s, self.epsilon * w) for s, w in self.committed]
        return out

    @property
    def n_normal(self) -> int:
        return len(self.normal)

    def to_json_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "normal": [
                {"weight": w, **s.to_json_dict()} for s, w in self.normal
            ],
            "committed": [
                {"weight": w, **s.to_json_dict()} for s, w in self.committed
            ],
        }


@dataclass(frozen=True)
class RegularityReport:
    regular: bool
    witness_alpha: Optional[float] = None
    residual: Optional[float] = None


def check_regularity(
    committed: Sequence[StationaryStrategy],
    model: SignalModel,
    grid_step: float = 1e-4,
    tol: float = 1e-9,
) -> RegularityReport:
    """Scan for a mixed action that every committed strategy reproduces when
    observing its own induced signal distribution.

    A commitment set is regular when no such self-consistent action exists;
    the report carries the witness when one is found.  Only defined for the
    plain observation-of-actions structure.
    """
    if model.structure is not ObservationStructure.ACTIONS:
        raise UnsupportedStructure(
            "regularity is defined for observation of actions only"
        )
    tables = np.vstack([s.defect_prob for s in committed])

    def worst_residual(alpha: float) -> float:
        nu = binomial_pmf_vector(np.asarray([alpha]), model.k)[0]
        return float(np.max(np.abs(tables @ nu - alpha)))

    grid = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    residuals = np.array([worst_residual(a) for a in grid])
    order = np.argsort(residuals)
    for idx in order[:50]:
        alpha = _polish_common_fixed_point(worst_residual, float(grid[idx]), grid_step)
        res = worst_residual(alpha)
        if res < tol:
            return RegularityReport(regular=False, witness_alpha=alpha, residual=res)
    best = float(grid[order[0]])
    return RegularityReport(regular=True, witness_alpha=None, residual=residuals[order[0]])


def _polish_common_fixed_point(worst_residual, alpha0: float, span: float) -> float:
    """Golden-section refinement of the max-residual objective near alpha0."""
    lo = max(0.0, alpha0 - 2 * span)
    hi = min(1.0, alpha0 + 2 * span)
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = worst_residual(c), worst_residual(d)
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = worst_residual(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = worst_residual(d)
    return (a + b) / 2.0
