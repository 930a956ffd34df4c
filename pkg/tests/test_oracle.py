"""Exact/iterative solvers, valuation sampling, and preservation checks."""

from __future__ import annotations

from fractions import Fraction

import pytest

from nwrkit.core_model import ModelError, NatureV, StateV, Valuation
from nwrkit.graph_analysis import contract_extremal
from nwrkit.oracle import (
    check_value_preservation,
    falsify_nwr,
    is_graph_preserving,
    sample_valuation,
    solve_exact,
    solve_iterative,
)


def test_unfair_chain_exact_values(unfair_chain):
    values = solve_exact(unfair_chain, Valuation({}))
    assert values.values[StateV(0)] == Fraction(3, 4)
    assert values.values[StateV(1)] == Fraction(19, 8)


def test_two_coins_example_values(two_coins_mdp):
    val = Valuation({0: Fraction(3, 5), 1: Fraction(7, 25)})
    exact = solve_exact(two_coins_mdp, val)
    assert exact.values[NatureV(1, 0)] == Fraction(18, 25)  # 0.72
    assert exact.values[NatureV(1, 1)] == Fraction(12, 5)  # 2.4
    assert exact.values[StateV(0)] == Fraction(1616, 1000)

    approx = solve_iterative(two_coins_mdp, val)
    assert approx.converged
    assert abs(approx.values[StateV(0)] - 1.616) <= 1e-9


def test_exact_methods_agree(two_coins_mdp, dead_branch_tp):
    val = Valuation({0: Fraction(3, 5), 1: Fraction(7, 25)})
    enum = solve_exact(two_coins_mdp, val, method="enumerate")
    policy = solve_exact(two_coins_mdp, val, method="policy")
    assert enum.values == policy.values

    for seed in range(5):
        val = sample_valuation(dead_branch_tp, seed)
        enum = solve_exact(dead_branch_tp, val, method="enumerate")
        policy = solve_exact(dead_branch_tp, val, method="policy")
        assert enum.values == policy.values


def test_best_action_is_argmax(two_coins_mdp):
    val = Valuation({0: Fraction(3, 5), 1: Fraction(7, 25)})
    values = solve_exact(two_coins_mdp, val)
    assert values.best_action[1] == 1  # q prefers b (2.4 > 0.72)


def test_iterative_matches_exact_on_samples(dead_branch_tp):
    for seed in range(5):
        val = sample_valuation(dead_branch_tp, seed)
        exact = solve_exact(dead_branch_tp, val)
        approx = solve_iterative(dead_branch_tp, val)
        for s in range(dead_branch_tp.num_states):
            assert abs(float(exact.values[StateV(s)]) - approx.values[StateV(s)]) <= 1e-9


@pytest.mark.parametrize("profile", ["dirichlet", "adversarial"])
def test_sampled_valuations_are_graph_preserving(dead_branch_tp, profile):
    for seed in range(10):
        val = sample_valuation(dead_branch_tp, seed, profile)
        assert is_graph_preserving(dead_branch_tp, val)


def test_sampling_is_deterministic_per_seed(dead_branch_tp):
    a = sample_valuation(dead_branch_tp, 7)
    b = sample_valuation(dead_branch_tp, 7)
    assert a.assignment == b.assignment
    c = sample_valuation(dead_branch_tp, 8)
    assert a.assignment != c.assignment


def test_sampling_rejects_general_parametric_models(dead_branch_pmdp):
    with pytest.raises(ModelError):
        sample_valuation(dead_branch_pmdp, 0)


def test_graph_preservation_rejects_vanishing_probability(dead_branch_tp):
    val = sample_valuation(dead_branch_tp, 0)
    broken = dict(val.assignment)
    broken[1] = Fraction(0)
    assert not is_graph_preserving(dead_branch_tp, Valuation(broken))


def test_falsify_nwr_finds_a_witness(dead_branch_tp):
    # q has positive value under every graph-preserving valuation while p is
    # stuck at 0, so "q never-worse-dominated by p" must be falsified.
    witness = falsify_nwr(dead_branch_tp, StateV(1), [StateV(0)], n_samples=10)
    assert witness is not None
    values = solve_exact(dead_branch_tp, witness)
    assert values.values[StateV(1)] > values.values[StateV(0)]


def test_falsify_nwr_accepts_a_true_relation(dead_branch_tp):
    # p's value is 0 everywhere, never above fin's constant 1.
    assert falsify_nwr(dead_branch_tp, StateV(0), [StateV(2)], n_samples=10) is None


def test_check_value_preservation_accepts_a_real_stage(dead_branch_tp):
    m2, stage = contract_extremal(dead_branch_tp)
    report = check_value_preservation(dead_branch_tp, [(m2, stage)], n_samples=10)
    assert report.ok, report.violations


def test_check_value_preservation_flags_a_corrupted_stage(dead_branch_tp):
    m2, stage = contract_extremal(dead_branch_tp)
    fin_new = stage.state_map[2]
    fail_new = stage.state_map[3]
    corrupted = {
        s: (fail_new if t == fin_new else t) for s, t in stage.state_map.items()
    }
    stage.state_map.clear()
    stage.state_map.update(corrupted)
    report = check_value_preservation(dead_branch_tp, [(m2, stage)], n_samples=5)
    assert not report.ok
