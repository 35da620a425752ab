import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reciplab import (
    ObservationStructure,
    PerturbedPopulation,
    SignalModel,
    UnsupportedStructure,
    check_regularity,
    make_constant,
    make_mixed_single,
    make_profile_strategy_s1s2,
    make_table,
    make_threshold,
    respond,
)

A2 = SignalModel(ObservationStructure.ACTIONS, 2)
AP2 = SignalModel(ObservationStructure.ACTION_PROFILES, 2)


def test_threshold_tables():
    assert list(make_threshold(A2, 1).defect_prob) == [0, 1, 1]
    assert list(make_threshold(A2, 2).defect_prob) == [0, 0, 1]
    assert list(make_threshold(A2, 3).defect_prob) == [0, 0, 0]  # j=k+1: never


def test_threshold_rejects_profiles():
    with pytest.raises(UnsupportedStructure):
        make_threshold(AP2, 1)


def test_mixed_single():
    assert list(make_mixed_single(A2, 0.0).defect_prob) == [0, 0, 1]
    assert list(make_mixed_single(A2, 1.0).defect_prob) == [0, 1, 1]
    table = make_mixed_single(A2, 1 / 6).defect_prob
    assert table[1] == pytest.approx(1 / 6)


def test_constant():
    assert (make_constant(A2, 0.5).defect_prob == 0.5).all()
    assert make_constant(A2, 0.5).totally_mixed
    assert not make_constant(A2, 0.0).totally_mixed


def test_profile_pair_cases():
    s1, s2 = make_profile_strategy_s1s2(AP2)
    # one sole defection plus one mutual cooperation
    idx = AP2.index_of([1, 0, 1, 0])
    assert s1.defect_prob[idx] == 1.0 and s2.defect_prob[idx] == 0.0
    # all clean
    clean = AP2.index_of([2, 0, 0, 0])
    assert s1.defect_prob[clean] == 0.0 and s2.defect_prob[clean] == 0.0
    # two sole-cooperator observations: two disturbed interactions
    idx2 = AP2.index_of([0, 2, 0, 0])
    assert s1.defect_prob[idx2] == 1.0 and s2.defect_prob[idx2] == 1.0


def test_respond_examples():
    nu = np.array([0.25, 0.5, 0.25])
    assert respond(make_threshold(A2, 1), nu) == pytest.approx(0.75)
    assert respond(make_constant(A2, 1.0), nu) == 1.0
    assert respond(make_constant(A2, 0.5), nu) == 0.5


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
    st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
    st.floats(0.0, 1.0),
    st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3),
)
def test_respond_is_affine(raw1, raw2, t, table):
    nu1 = np.asarray(raw1) / sum(raw1)
    nu2 = np.asarray(raw2) / sum(raw2)
    s = make_table(A2, table, "s")
    lhs = respond(s, t * nu1 + (1 - t) * nu2)
    rhs = t * respond(s, nu1) + (1 - t) * respond(s, nu2)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3))
def test_mixed_single_equals_threshold_mixture(q, raw):
    """Aggregate behavior of the within-agent mix equals the across-agent mix."""
    nu = np.asarray(raw) / sum(raw)
    mixed = respond(make_mixed_single(A2, q), nu)
    split = q * respond(make_threshold(A2, 1), nu) + (1 - q) * respond(
        make_threshold(A2, 2), nu
    )
    assert mixed == pytest.approx(split, abs=1e-12)


def test_population_validation():
    s1 = make_threshold(A2, 1, "s1")
    su = make_constant(A2, 0.5, "su")
    with pytest.raises(ValueError):
        PerturbedPopulation([(s1, 0.6)], [(su, 1.0)], 0.01)  # weights != 1
    with pytest.raises(ValueError):
        PerturbedPopulation([(s1, 1.0)], [], 0.01)  # no committed at eps>0
    with pytest.raises(ValueError):
        # committed present but none totally mixed
        alld = make_constant(A2, 1.0, "alld")
        PerturbedPopulation([(s1, 1.0)], [(alld, 1.0)], 0.01)
    with pytest.raises(ValueError):
        PerturbedPopulation([(s1, 1.0)], [(su, 1.0)], 1.0)  # eps < 1 required
    pop = PerturbedPopulation([(s1, 1.0)], [(su, 1.0)], 0.01)
    weights = dict((s.name, w) for s, w in pop.incumbents())
    assert weights["s1"] == pytest.approx(0.99)
    assert weights["su"] == pytest.approx(0.01)


def test_regularity_two_constants_regular():
    report = check_regularity(
        [make_constant(A2, 0.3, "a"), make_constant(A2, 0.7, "b")], A2
    )
    assert report.regular


def test_regularity_partial_cooperation_witness():
    model = SignalModel(ObservationStructure.ACTIONS, 1)
    s_star = make_table(model, [0.10, 0.817], "s_star")
    report = check_regularity([s_star], model)
    assert not report.regular
    assert report.witness_alpha == pytest.approx(0.353357, abs=1e-4)


def test_regularity_alld_witness_at_one():
    model = SignalModel(ObservationStructure.ACTIONS, 1)
    report = check_regularity([make_constant(model, 1.0, "alld")], model)
    assert not report.regular
    assert report.witness_alpha == pytest.approx(1.0, abs=1e-6)


def test_regularity_refuses_profile_structures():
    with pytest.raises(UnsupportedStructure):
        check_regularity([make_constant(AP2, 0.5, "c")], AP2)


def test_strategy_serialization():
    s = make_threshold(A2, 1, "s1")
    assert s.to_json_dict() == {"name": "s1", "defect_prob": [0.0, 1.0, 1.0]}
