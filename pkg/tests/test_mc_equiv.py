"""Polynomial-time chain equivalence against a brute-force oracle."""

from __future__ import annotations

import random

import pytest

from nwrkit.core_model import ModelError, validate_model
from nwrkit.graph_analysis import contract_extremal
from nwrkit.mc_equiv import almost_sure_states, mc_collapse, mc_equiv_classes
from nwrkit.oracle import check_value_preservation
from tests.conftest import brute_force_chain_equiv, random_tp_chain


def contracted_chain(rng, n_states=6):
    mc = random_tp_chain(rng, n_states)
    mc2, _ = contract_extremal(mc)
    return mc2


def test_partition_covers_all_states_once():
    rng = random.Random(3)
    for _ in range(20):
        mc = contracted_chain(rng)
        part = mc_equiv_classes(mc)
        seen = [s for members in part.classes for s in members]
        assert sorted(seen) == list(range(mc.num_states))
        for i, members in enumerate(part.classes):
            assert part.exit_of[i] in members


def test_partition_matches_brute_force_oracle():
    rng = random.Random(11)
    for _ in range(30):
        mc = contracted_chain(rng)
        part = mc_equiv_classes(mc)
        class_of = part.class_of()
        related = brute_force_chain_equiv(mc)
        for u in range(mc.num_states):
            for w in range(u + 1, mc.num_states):
                assert (class_of[u] == class_of[w]) == related(u, w), (
                    mc.name,
                    mc.states[u],
                    mc.states[w],
                )


def test_collapse_preserves_values_exactly():
    rng = random.Random(19)
    for _ in range(15):
        mc = contracted_chain(rng)
        part = mc_equiv_classes(mc)
        collapsed, stage = mc_collapse(mc, part)
        assert validate_model(collapsed) == []
        report = check_value_preservation(mc, [(collapsed, stage)], n_samples=5)
        assert report.ok, (mc.name, report.violations)


def test_identity_partition_on_a_chain_without_mergeable_states():
    from fractions import Fraction

    from nwrkit.core_model import Polynomial, WpMdp

    v = Polynomial.variable
    mc = WpMdp(
        name="no-merge",
        subclass="tpmdp",
        states=["p", "fin", "fail"],
        actions=["a"],
        params=["x0", "x1"],
        target_weight={1: Fraction(1), 2: Fraction(0)},
        fail=2,
        choices={(0, 0): ((1, v(0)), (2, v(1)))},
    )
    part = mc_equiv_classes(mc)
    assert all(len(members) == 1 for members in part.classes)
    collapsed, _ = mc_collapse(mc, part)
    assert collapsed.num_states == mc.num_states


def test_multi_action_input_is_rejected(dead_branch_tp):
    with pytest.raises(ModelError):
        mc_equiv_classes(dead_branch_tp)


def test_almost_sure_states_on_a_line():
    # s0 -> s1 -> fin: every state reaches every later state almost surely.
    succ = {0: {1}, 1: {2}, 2: set()}
    assert almost_sure_states(succ, {2}, z=2) == {0, 1, 2}
    assert almost_sure_states(succ, {2}, z=1) == {0, 1}
    assert almost_sure_states(succ, {2}, z=0) == {0}
