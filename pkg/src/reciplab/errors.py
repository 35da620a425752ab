"""Exception types shared across the package.

The CLI maps these onto its documented exit codes; library callers can
catch ``RecipLabError`` to get everything at once.
"""


class RecipLabError(Exception):
    """Base class for all reciplab errors."""


class InvalidGame(RecipLabError):
    """Payoff parameters outside the admissible family (g>0, l>0, g<l+1)."""


class UnsupportedStructure(RecipLabError):
    """Operation not defined for this observation structure."""


class UnsupportedGame(RecipLabError):
    """Game parameters outside the hypotheses of the requested construction."""


class NoConvergence(RecipLabError):
    """An iterative solve exhausted its iteration budget."""


class NoRoot(RecipLabError):
    """A bracketing root search found no sign change: the requested
    equilibrium does not exist at these parameters."""


class DiscountTooLow(RecipLabError):
    """Discount factor below l/(l+1); the repeated-game construction fails."""


class RatioTooSmall(RecipLabError):
    """The high/low commitment defection rates are too close: the posterior
    check alpha_hi * Pr(committed | pivotal signal) > alpha_lo failed."""


class InvalidScenario(RecipLabError):
    """Scenario file violates a config invariant."""
