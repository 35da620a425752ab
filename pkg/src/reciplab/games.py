"""Prisoner's Dilemma payoff family and its two orthogonal classifications.

The games are normalized so mutual cooperation pays 1 and mutual defection
pays 0; a unilateral defector gets 1+g and the exploited cooperator gets -l.
Admissibility requires g, l > 0 and g < l + 1 (mutual cooperation efficient).

Two independent splits of the parameter square matter downstream:

* offensive (g > l) vs. defensive (g < l): whether defecting against a
  cooperator or against a defector carries the bigger bonus;
* acute (g > (l+1)/2) vs. mild: whether deterring a unilateral defection
  needs a retaliation probability above or below one half.

Boundary cases are reported explicitly, never bucketed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import InvalidGame


class Action(str, enum.Enum):
    C = "c"
    D = "d"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


class Offense(str, enum.Enum):
    OFFENSIVE = "offensive"
    DEFENSIVE = "defensive"
    BORDERLINE = "borderline"


class Temptation(str, enum.Enum):
    ACUTE = "acute"
    MILD = "mild"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class PDGame:
    """Payoff parameters (g, l) of a Prisoner's Dilemma."""

    g: float
    l: float

    def __post_init__(self) -> None:
        if not (self.g > 0 and self.l > 0):
            raise InvalidGame(f"need g > 0 and l > 0, got g={self.g}, l={self.l}")
        if not (self.g < self.l + 1):
            raise InvalidGame(
                f"need g < l + 1 so mutual cooperation is efficient, "
                f"got g={self.g}, l={self.l}"
            )


@dataclass(frozen=True)
class GameClass:
    offense: Offense
    temptation: Temptation


def validate_pd(g: float, l: float) -> PDGame:
    """Validate (g, l) and return the game; raises InvalidGame otherwise."""
    return PDGame(float(g), float(l))


def payoff(game: PDGame, own: Action, other: Action) -> float:
    """Stage payoff to a player choosing `own` against a partner choosing `other`."""
    if own is Action.C:
        return 1.0 if other is Action.C else -game.l
    return 1.0 + game.g if other is Action.C else 0.0


def payoff_matrix(game: PDGame):
    """2x2 payoff array indexed [own, other] with 0 = cooperate, 1 = defect."""
    import numpy as np

    return np.array(
        [[1.0, -game.l], [1.0 + game.g, 0.0]], dtype=float
    )


def classify(game: PDGame) -> GameClass:
    """Classify the game on both axes; comparisons are exact, boundaries are
    reported as borderline/threshold rather than folded into a side."""
    if game.g > game.l:
        offense = Offense.OFFENSIVE
    elif game.g < game.l:
        offense = Offense.DEFENSIVE
    else:
        offense = Offense.BORDERLINE
    half_harm = (game.l + 1.0) / 2.0
    if game.g > half_harm:
        temptation = Temptation.ACUTE
    elif game.g < half_harm:
        temptation = Temptation.MILD
    else:
        temptation = Temptation.THRESHOLD
    return GameClass(offense, temptation)
