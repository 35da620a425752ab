"""Observation structures, signal spaces, and behavior-to-signal maps.

An observation structure fixes a per-interaction alphabet B and a map
``o : A x A -> B`` from the action profile (partner's action first) to what
an observer records about that interaction.  A signal is the vector of
counts of each B-element in k sampled interactions.

Signal enumeration (frozen, part of the serialized report contract):
count vectors (m_1, ..., m_|B|) with sum k are listed in descending
lexicographic order, i.e. (k,0,...,0) first and (0,...,0,k) last.  For the
two-letter structures (actions, conflicts) this puts the all-clean signal at
index 0 and makes the index equal to the number of defections/conflicts
observed, so those signal spaces flatten to {0, ..., k}.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UnsupportedStructure
from .games import Action

MAX_K = 64  # binomial tail precision degrades past this; tiny k in practice
_EXACT_COMB_K = 20  # exact integer coefficients up to here, log-gamma beyond

PROFILE_ORDER = ((Action.C, Action.C), (Action.C, Action.D),
                 (Action.D, Action.C), (Action.D, Action.D))


class ObservationStructure(str, enum.Enum):
    ACTIONS = "actions"
    CONFLICTS = "conflicts"
    ACTION_PROFILES = "action_profiles"
    ACTIONS_AGAINST_COOPERATION = "actions_against_cooperation"


# Per-interaction alphabets, in the frozen order used by signal enumeration.
ALPHABETS = {
    ObservationStructure.ACTIONS: ("c", "d"),
    ObservationStructure.CONFLICTS: ("C", "D"),
    ObservationStructure.ACTION_PROFILES: ("cc", "cd", "dc", "dd"),
    ObservationStructure.ACTIONS_AGAINST_COOPERATION: ("CC", "DC", "*D"),
}


def observe_map(structure: ObservationStructure, profile) -> str:
    """Observed B-element for an action profile (partner action, opponent action)."""
    a, b = profile
    if structure is ObservationStructure.ACTIONS:
        return a.value
    if structure is ObservationStructure.CONFLICTS:
        return "C" if (a is Action.C and b is Action.C) else "D"
    if structure is ObservationStructure.ACTION_PROFILES:
        return a.value + b.value
    if structure is ObservationStructure.ACTIONS_AGAINST_COOPERATION:
        if b is Action.D:
            return "*D"
        return "CC" if a is Action.C else "DC"
    raise UnsupportedStructure(str(structure))


def profile_pushforward(structure: ObservationStructure) -> np.ndarray:
    """Matrix P of shape (|B|, 4) with P[i, j] = 1 iff profile j maps to letter i.

    Profile columns follow PROFILE_ORDER: (c,c), (c,d), (d,c), (d,d).
    """
    letters = ALPHABETS[structure]
    mat = np.zeros((len(letters), 4))
    for j, prof in enumerate(PROFILE_ORDER):
        mat[letters.index(observe_map(structure, prof)), j] = 1.0
    return mat


@dataclass(frozen=True)
class SignalModel:
    """An observation structure together with the sample size k."""

    structure: ObservationStructure
    k: int

    def __post_init__(self) -> None:
        if not (1 <= self.k <= MAX_K):
            raise ValueError(f"k must be in [1, {MAX_K}], got {self.k}")

    @property
    def alphabet(self):
        return ALPHABETS[self.structure]

    @property
    def scalar(self) -> bool:
        """True when the signal space flattens to a defect/conflict count."""
        return len(self.alphabet) == 2

    def signals(self) -> np.ndarray:
        """Count vectors over the alphabet, frozen enumeration order."""
        return _compositions(self.k, len(self.alphabet))

    def size(self) -> int:
        return signal_space_size(self)

    def index_of(self, counts) -> int:
        """Index of a count vector in the frozen enumeration."""
        sig = self.signals()
        hits = np.where((sig == np.asarray(counts)).all(axis=1))[0]
        if len(hits) != 1:
            raise KeyError(f"not a signal of this model: {counts}")
        return int(hits[0])

    def clean_index(self) -> int:
        """Index of the all-clean signal (k observations of the first letter)."""
        return 0


@lru_cache(maxsize=None)
def _compositions(k: int, parts: int) -> np.ndarray:
    """All count vectors of length `parts` summing to k, descending lex order."""
    if parts == 1:
        out = np.array([[k]])
    else:
        rows = []
        for first in range(k, -1, -1):
            rest = _compositions(k - first, parts - 1)
            block = np.empty((len(rest), parts), dtype=np.int64)
            block[:, 0] = first
            block[:, 1:] = rest
            rows.append(block)
        out = np.vstack(rows)
    out.setflags(write=False)
    return out


def signal_space_size(model: SignalModel) -> int:
    b = len(model.alphabet)
    return math.comb(model.k + b - 1, b - 1)


def _log_factorial(n: int) -> float:
    return math.lgamma(n + 1)


@lru_cache(maxsize=None)
def _multinomial_coeffs(k: int, parts: int) -> np.ndarray:
    """k!/(m_1! ... m_parts!) for every signal, enumeration order."""
    sig = _compositions(k, parts)
    if k <= _EXACT_COMB_K:
        coefs = np.array(
            [float(math.factorial(k) // math.prod(math.factorial(int(c)) for c in row))
             for row in sig]
        )
    else:
        logs = np.array(
            [_log_factorial(k) - sum(_log_factorial(int(c)) for c in row)
             for row in sig]
        )
        coefs = np.exp(logs)
    coefs.setflags(write=False)
    return coefs


def nu_actions(alpha_d: float, k: int) -> np.ndarray:
    """Signal distribution over {0..k} defections for i.i.d. sampled actions
    of a partner who defects with average probability alpha_d."""
    if not (0.0 <= alpha_d <= 1.0 + 1e-12):
        raise ValueError(f"defection probability outside [0,1]: {alpha_d}")
    return binomial_pmf_vector(np.asarray([alpha_d]), k)[0]


def binomial_pmf_vector(alpha_d: np.ndarray, k: int) -> np.ndarray:
    """Rows of binomial(k, a) pmfs for a vector of rates; shape (n, k+1)."""
    a = np.asarray(alpha_d, dtype=float)[:, None]
    m = np.arange(k + 1)[None, :]
    coefs = _multinomial_coeffs(k, 2)  # symmetric: entry m equals C(k, m)
    return coefs[None, :] * a ** m * (1.0 - a) ** (k - m)


@dataclass(frozen=True)
class ActionProfileDist:
    """Distribution over the four action profiles (c,c), (c,d), (d,c), (d,d).

    The first coordinate of each profile is the action of the agent being
    observed, the second that of her opponent in the sampled interaction.
    """

    probs: tuple

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (4,):
            raise ValueError("need exactly four profile probabilities")
        if (p < -1e-12).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"not a probability vector over profiles: {p}")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


def nu_multinomial(psi: ActionProfileDist, model: SignalModel) -> np.ndarray:
    """Signal distribution induced by k i.i.d. sampled interactions whose
    action profiles are distributed according to psi."""
    per_draw = profile_pushforward(model.structure) @ psi.as_array()
    return multinomial_pmf(per_draw, model)


def multinomial_pmf(per_draw: np.ndarray, model: SignalModel) -> np.ndarray:
    """Multinomial pmf over the model's signal space given per-draw letter
    probabilities; exact at zero probabilities (0**0 == 1)."""
    counts = model.signals()
    coefs = _multinomial_coeffs(model.k, len(model.alphabet))
    p = np.asarray(per_draw, dtype=float)[None, :]
    return coefs * np.prod(p ** counts, axis=1)
