import pytest
from hypothesis import given, strategies as st

from reciplab import (
    Action,
    InvalidGame,
    Offense,
    Temptation,
    classify,
    payoff,
    validate_pd,
)


def test_validate_accepts_defensive_example():
    game = validate_pd(1, 3)
    assert (game.g, game.l) == (1.0, 3.0)


def test_validate_accepts_offensive_example():
    validate_pd(2.3, 1.7)


def test_validate_rejects_inefficient_game():
    with pytest.raises(InvalidGame):
        validate_pd(3, 1)  # 3 >= 1 + 1


@pytest.mark.parametrize("g,l", [(0, 1), (-1, 1), (1, 0), (1, -0.5)])
def test_validate_rejects_nonpositive(g, l):
    with pytest.raises(InvalidGame):
        validate_pd(g, l)


def test_payoff_table():
    game = validate_pd(1, 3)
    assert payoff(game, Action.D, Action.C) == 2.0
    assert payoff(game, Action.D, Action.D) == 0.0
    assert payoff(game, Action.C, Action.C) == 1.0
    game2 = validate_pd(2.3, 1.7)
    assert payoff(game2, Action.C, Action.D) == -1.7


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_defection_gain_decomposition(g, l):
    """Defecting gains g against a cooperator and l against a defector."""
    if not (g < l + 1):
        return
    game = validate_pd(g, l)
    gain_vs_c = payoff(game, Action.D, Action.C) - payoff(game, Action.C, Action.C)
    gain_vs_d = payoff(game, Action.D, Action.D) - payoff(game, Action.C, Action.D)
    assert gain_vs_c == pytest.approx(g, abs=1e-12)
    assert gain_vs_d == pytest.approx(l, abs=1e-12)


def test_classify_examples():
    cls = classify(validate_pd(1, 3))
    assert (cls.offense, cls.temptation) == (Offense.DEFENSIVE, Temptation.MILD)
    cls = classify(validate_pd(3, 3))
    assert (cls.offense, cls.temptation) == (Offense.BORDERLINE, Temptation.ACUTE)
    cls = classify(validate_pd(0.2, 0.2))
    assert (cls.offense, cls.temptation) == (Offense.BORDERLINE, Temptation.MILD)


def test_classify_exact_threshold():
    # g exactly (l+1)/2 is reported as the knife edge, not bucketed
    cls = classify(validate_pd(2.0, 3.0))
    assert cls.temptation is Temptation.THRESHOLD


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_classify_matches_inequalities(g, l):
    if not (g < l + 1):
        return
    cls = classify(validate_pd(g, l))
    assert (cls.offense is Offense.OFFENSIVE) == (g > l)
    assert (cls.offense is Offense.DEFENSIVE) == (g < l)
    assert (cls.temptation is Temptation.ACUTE) == (g > (l + 1) / 2)
    assert (cls.temptation is Temptation.MILD) == (g < (l + 1) / 2)
