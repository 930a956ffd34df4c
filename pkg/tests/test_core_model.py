"""Polynomials, model construction, validation, and target normalization."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nwrkit.core_model import (
    ModelError,
    Polynomial,
    StateV,
    NatureV,
    Valuation,
    WpMdp,
    build_graph,
    format_rational,
    normalize_targets,
    parse_rational,
    poly_eval,
    poly_parse,
    validate_model,
)

rationals = st.fractions(
    min_value=-4, max_value=4, max_denominator=32
)


# --- rationals and polynomials -----------------------------------------


@given(rationals)
def test_rational_text_round_trip(q):
    assert parse_rational(format_rational(q)) == q


def test_parse_rational_rejects_garbage():
    for text in ("", "1/", "/2", "one", "1.2.3"):
        with pytest.raises(ModelError):
            parse_rational(text)


def test_poly_parse_evaluates_like_the_source_expression():
    params = ["x", "y"]
    p = poly_parse("2*x^2 - y + 1/2", params)
    val = {0: Fraction(1, 2), 1: Fraction(1, 4)}
    assert p.evaluate(val) == 2 * Fraction(1, 4) - Fraction(1, 4) + Fraction(1, 2)


def test_poly_parse_rejects_unknown_names():
    with pytest.raises(ModelError):
        poly_parse("x + z", ["x", "y"])


def test_poly_text_round_trip_on_fixture_polynomials():
    params = ["x", "y"]
    for text in ("2*y", "2*x^2 - y", "1 - y", "x^2", "1/2", "0"):
        p = poly_parse(text, params)
        assert poly_parse(p.to_text(params), params) == p


poly_terms = st.dictionaries(
    st.tuples(st.integers(0, 2), st.integers(1, 3)).map(lambda t: (t,)),
    rationals,
    max_size=3,
)


@st.composite
def polynomials(draw):
    terms = {}
    for _ in range(draw(st.integers(0, 3))):
        mono = tuple(
            sorted(
                draw(
                    st.lists(
                        st.tuples(st.integers(0, 2), st.integers(1, 2)),
                        max_size=2,
                        unique_by=lambda t: t[0],
                    )
                )
            )
        )
        terms[mono] = draw(rationals)
    return Polynomial(terms)


@settings(max_examples=50)
@given(polynomials(), polynomials(), st.lists(rationals, min_size=3, max_size=3))
def test_polynomial_arithmetic_is_evaluation_homomorphic(p, q, point):
    val = dict(enumerate(point))
    assert (p + q).evaluate(val) == p.evaluate(val) + q.evaluate(val)
    assert (p - q).evaluate(val) == p.evaluate(val) - q.evaluate(val)
    assert (p * q).evaluate(val) == p.evaluate(val) * q.evaluate(val)
    assert p + q == q + p
    assert p * q == q * p


def test_polynomial_is_immutable():
    p = Polynomial.const(1)
    with pytest.raises(AttributeError):
        p.terms = {}


# --- model construction and queries -------------------------------------


def test_model_is_immutable(unfair_chain):
    with pytest.raises(AttributeError):
        unfair_chain.name = "other"


def test_model_basic_queries(two_coins_mdp):
    m = two_coins_mdp
    assert m.num_states == 5
    assert m.num_choices == 3
    assert m.actions_of(1) == (0, 1)
    assert m.actions_of(2) == ()
    assert m.is_target(2) and not m.is_target(0)
    assert m.targets_by_weight() == [2, 3, 4]
    assert m.fresh_state_name("p") != "p"


def test_unknown_subclass_rejected():
    with pytest.raises(ModelError):
        WpMdp(
            name="bad",
            subclass="mdp",
            states=["s"],
            actions=[],
            params=[],
            target_weight={0: Fraction(1)},
            fail=0,
            choices={},
        )


def test_build_graph_successors(dead_branch_tp):
    g = build_graph(dead_branch_tp)
    assert g.successors(StateV(1)) == (NatureV(1, 0), NatureV(1, 1))
    assert g.successors(NatureV(1, 0)) == (StateV(0), StateV(2))
    assert g.successors(StateV(2)) == ()
    assert StateV(1) in g.predecessors(NatureV(1, 0))


# --- validation ----------------------------------------------------------


def test_fixture_models_validate_cleanly(
    unfair_chain, two_coins_mdp, dead_branch_pmdp, dead_branch_tp
):
    for m in (unfair_chain, two_coins_mdp, dead_branch_pmdp, dead_branch_tp):
        assert validate_model(m) == []


def test_validation_rejects_bad_successor_index(unfair_chain):
    m = unfair_chain
    bad = WpMdp(
        name="bad",
        subclass=m.subclass,
        states=m.states,
        actions=m.actions,
        params=m.params,
        target_weight=m.target_weight,
        fail=m.fail,
        choices={(0, 0): ((99, Polynomial.const(1)),)},
    )
    assert any("successor" in p or "state" in p for p in validate_model(bad))


def test_validation_rejects_non_stochastic_constant_row():
    m = WpMdp(
        name="bad-row",
        subclass="wpmdp",
        states=["p", "t"],
        actions=["a"],
        params=[],
        target_weight={1: Fraction(1)},
        fail=1,
        choices={(0, 0): ((1, Polynomial.const(Fraction(1, 3))),)},
    )
    assert validate_model(m)


def test_validation_rejects_choices_on_targets(unfair_chain):
    m = unfair_chain
    bad = WpMdp(
        name="bad",
        subclass=m.subclass,
        states=m.states,
        actions=m.actions,
        params=m.params,
        target_weight=m.target_weight,
        fail=m.fail,
        choices={**m.choices, (2, 0): ((0, Polynomial.const(1)),)},
    )
    assert validate_model(bad)


def test_tp_validation_requires_distinct_fresh_parameters(dead_branch_tp):
    m = dead_branch_tp
    v = Polynomial.variable
    bad = WpMdp(
        name="bad-tp",
        subclass="tpmdp",
        states=m.states,
        actions=m.actions,
        params=m.params,
        target_weight=m.target_weight,
        fail=m.fail,
        choices={
            (0, 0): ((3, v(0)),),
            (1, 0): ((0, v(0)), (2, v(2))),  # parameter reused across choices
            (1, 1): ((3, v(3)), (2, v(4))),
        },
    )
    assert validate_model(bad)


# --- target normalization ------------------------------------------------


def test_normalize_merges_equal_weight_targets():
    m = WpMdp(
        name="dup-targets",
        subclass="wpmdp",
        states=["p", "t", "u", "zero"],
        actions=["a"],
        params=[],
        target_weight={1: Fraction(2), 2: Fraction(2), 3: Fraction(0)},
        fail=3,
        choices={
            (0, 0): ((1, Polynomial.const(Fraction(1, 2))),
                     (2, Polynomial.const(Fraction(1, 2)))),
        },
    )
    n = normalize_targets(m)
    assert validate_model(n) == []
    assert sorted(n.target_weight.values()) == [Fraction(0), Fraction(2)]
    # The dropped duplicate now redirects to the surviving representative.
    assert (2, 0) in n.choices
    assert n.choices[(2, 0)][0][0] == 1


def test_normalize_adds_missing_zero_target(unfair_chain):
    m = WpMdp(
        name="no-zero",
        subclass="wpmdp",
        states=["p", "t"],
        actions=["a"],
        params=[],
        target_weight={1: Fraction(3)},
        fail=1,
        choices={(0, 0): ((1, Polynomial.const(1)),)},
    )
    n = normalize_targets(m)
    assert Fraction(0) in n.target_weight.values()
    assert n.target_weight[n.fail] == 0
    assert n.num_states == m.num_states + 1


def test_normalize_rejects_negative_weights():
    m = WpMdp(
        name="neg",
        subclass="wpmdp",
        states=["p", "t"],
        actions=["a"],
        params=[],
        target_weight={1: Fraction(-1)},
        fail=1,
        choices={(0, 0): ((1, Polynomial.const(1)),)},
    )
    with pytest.raises(ModelError):
        normalize_targets(m)


def test_valuation_is_immutable():
    val = Valuation({0: Fraction(1, 2)})
    assert val[0] == Fraction(1, 2)
    with pytest.raises(AttributeError):
        val.assignment = {}
