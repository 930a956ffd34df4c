"""Shared example models used across the test suite."""

from __future__ import annotations

from fractions import Fraction

import pytest

from nwrkit.core_model import Polynomial, WpMdp, poly_parse


def _p(text, params):
    return poly_parse(text, params)


def chain_unfair_coins() -> WpMdp:
    """Weighted 5-state Markov chain: q -> {p: 1/2, t4: 1/2}, p -> {t0: 1/4, t1: 3/4}.

    Exact expected weights: Rew(p) = 3/4, Rew(q) = 19/8.
    """
    states = ["p", "q", "t0", "t1", "t4"]
    params: list[str] = []
    c = lambda r: Polynomial.const(Fraction(r))
    return WpMdp(
        name="chain-unfair-coins",
        subclass="wpmdp",
        states=states,
        actions=["a"],
        params=params,
        target_weight={2: Fraction(0), 3: Fraction(1), 4: Fraction(4)},
        fail=2,
        choices={
            (0, 0): ((2, c("1/4")), (3, c("3/4"))),
            (1, 0): ((0, c("1/2")), (4, c("1/2"))),
        },
    )


def mdp_two_coins_weighted() -> WpMdp:
    """Weighted pMDP over parameters x, y with targets of weight 0, 1, 4.

    p --a--> {t1: 2y, q: 2x^2 - y};  q --a--> {t1: 1-y, t0: y};
    q --b--> {t0: 1-x, t4: x}.
    """
    states = ["p", "q", "t0", "t1", "t4"]
    params = ["x", "y"]
    return WpMdp(
        name="mdp-two-coins-weighted",
        subclass="wpmdp",
        states=states,
        actions=["a", "b"],
        params=params,
        target_weight={2: Fraction(0), 3: Fraction(1), 4: Fraction(4)},
        fail=2,
        choices={
            (0, 0): ((3, _p("2*y", params)), (1, _p("2*x^2 - y", params))),
            (1, 0): ((3, _p("1 - y", params)), (2, _p("y", params))),
            (1, 1): ((2, _p("1 - x", params)), (4, _p("x", params))),
        },
    )


def mdp_dead_branch_pmdp() -> WpMdp:
    """Non-weighted pMDP where p's only action leads to fail with probability 1.

    p --a--> {fail: 1};  q --a--> {p: 1-x, fin: x};  q --b--> {fail: x^2, fin: y}.
    """
    states = ["p", "q", "fin", "fail"]
    params = ["x", "y"]
    return WpMdp(
        name="mdp-dead-branch",
        subclass="pmdp",
        states=states,
        actions=["a", "b"],
        params=params,
        target_weight={2: Fraction(1), 3: Fraction(0)},
        fail=3,
        choices={
            (0, 0): ((3, _p("1", params)),),
            (1, 0): ((0, _p("1 - x", params)), (2, _p("x", params))),
            (1, 1): ((3, _p("x^2", params)), (2, _p("y", params))),
        },
    )


def mdp_dead_branch_tp() -> WpMdp:
    """Trivially-parametric variant of the dead-branch MDP (support only)."""
    states = ["p", "q", "fin", "fail"]
    params = ["x0", "x1", "x2", "x3", "x4"]
    v = lambda i: Polynomial.variable(i)
    return WpMdp(
        name="mdp-dead-branch-tp",
        subclass="tpmdp",
        states=states,
        actions=["a", "b"],
        params=params,
        target_weight={2: Fraction(1), 3: Fraction(0)},
        fail=3,
        choices={
            (0, 0): ((3, v(0)),),
            (1, 0): ((0, v(1)), (2, v(2))),
            (1, 1): ((3, v(3)), (2, v(4))),
        },
    )


def weighted_tp_three_targets() -> WpMdp:
    """Weighted trivially-parametric chain shaped like chain_unfair_coins."""
    states = ["p", "q", "t0", "t1", "t4"]
    params = ["x0", "x1", "x2", "x3"]
    v = lambda i: Polynomial.variable(i)
    return WpMdp(
        name="chain-unfair-coins-tp",
        subclass="wtpmdp",
        states=states,
        actions=["a"],
        params=params,
        target_weight={2: Fraction(0), 3: Fraction(1), 4: Fraction(4)},
        fail=2,
        choices={
            (0, 0): ((2, v(0)), (3, v(1))),
            (1, 0): ((0, v(2)), (4, v(3))),
        },
    )


def random_weighted_tp_model(rng, max_states=10, max_weights=4, max_actions=2):
    """Random weighted trivially-parametric MDP with normalized targets.

    Targets carry distinct weights starting at 0; every transition gets its
    own fresh parameter, so valuations can be sampled directly.
    """
    n_targets = rng.randint(2, max_weights)
    n_dec = rng.randint(1, max(1, max_states - n_targets))
    n = n_dec + n_targets
    states = [f"s{i}" for i in range(n_dec)] + [f"t{i}" for i in range(n_targets)]
    weights = [Fraction(0)]
    while len(weights) < n_targets:
        w = Fraction(rng.randint(1, 8), rng.randint(1, 4))
        if w not in weights:
            weights.append(w)
    weights.sort()
    target_weight = {n_dec + i: weights[i] for i in range(n_targets)}

    params: list[str] = []

    def var():
        params.append(f"x{len(params)}")
        return Polynomial.variable(len(params) - 1)

    choices = {}
    n_actions = rng.randint(1, max_actions)
    for s in range(n_dec):
        for a in range(rng.randint(1, n_actions)):
            k = rng.randint(1, min(3, n))
            succs = rng.sample(range(n), k)
            choices[(s, a)] = tuple((t, var()) for t in succs)
    m = WpMdp(
        name=f"random-wtp-{rng.random():.6f}",
        subclass="wtpmdp",
        states=states,
        actions=[f"a{a}" for a in range(n_actions)],
        params=params,
        target_weight=target_weight,
        fail=n_dec,
        choices=choices,
    )
    return m


def random_tp_mdp(rng, max_states=12, max_actions=3):
    """Random non-weighted trivially-parametric MDP with fin/fail targets."""
    n_dec = rng.randint(1, max_states - 2)
    n = n_dec + 2
    fin, fail = n_dec, n_dec + 1
    states = [f"s{i}" for i in range(n_dec)] + ["fin", "fail"]
    params: list[str] = []

    def var():
        params.append(f"x{len(params)}")
        return Polynomial.variable(len(params) - 1)

    choices = {}
    n_actions = rng.randint(1, max_actions)
    for s in range(n_dec):
        for a in range(rng.randint(1, n_actions)):
            k = rng.randint(1, min(3, n))
            succs = rng.sample(range(n), k)
            choices[(s, a)] = tuple((t, var()) for t in succs)
    return WpMdp(
        name=f"random-tp-{rng.random():.6f}",
        subclass="tpmdp",
        states=states,
        actions=[f"a{a}" for a in range(n_actions)],
        params=params,
        target_weight={fin: Fraction(1), fail: Fraction(0)},
        fail=fail,
        choices=choices,
    )


def random_tp_chain(rng, n_states=6):
    """Random non-weighted trivially-parametric Markov chain."""
    n = n_states + 2
    fin, fail = n_states, n_states + 1
    states = [f"s{i}" for i in range(n_states)] + ["fin", "fail"]
    params: list[str] = []

    def var():
        params.append(f"x{len(params)}")
        return Polynomial.variable(len(params) - 1)

    choices = {}
    for s in range(n_states):
        k = rng.randint(1, min(3, n))
        succs = rng.sample(range(n), k)
        choices[(s, 0)] = tuple((t, var()) for t in succs)
    return WpMdp(
        name=f"random-chain-{rng.random():.6f}",
        subclass="tpmdp",
        states=states,
        actions=["a"],
        params=params,
        target_weight={fin: Fraction(1), fail: Fraction(0)},
        fail=fail,
        choices=choices,
    )


def brute_force_chain_equiv(mc):
    """Pairwise chain-equivalence oracle: u ~ w iff some state z is reached
    almost surely from both.  A.s. reachability of z is decided exactly by
    re-targeting the chain at z and solving under one sampled valuation
    (probability-1 reachability is a support-graph property, so one
    graph-preserving sample decides it)."""
    from nwrkit.core_model import StateV, WpMdp
    from nwrkit.oracle import sample_valuation, solve_exact

    n = mc.num_states
    absorbing = [s for s in range(n) if not mc.actions_of(s)]
    as_sets = {u: set() for u in range(n)}
    for z in range(n):
        target_weight = {t: Fraction(0) for t in absorbing}
        target_weight[z] = Fraction(1)
        probe = WpMdp(
            name=f"{mc.name}-probe-{z}",
            subclass="tpmdp",
            states=mc.states,
            actions=mc.actions,
            params=mc.params,
            target_weight=target_weight,
            fail=next(t for t in absorbing if t != z) if z in absorbing else mc.fail,
            choices={k: v for k, v in mc.choices.items() if k[0] != z},
        )
        val = sample_valuation(probe, seed=0)
        values = solve_exact(probe, val)
        for u in range(n):
            if values.values[StateV(u)] == 1:
                as_sets[u].add(z)
    return lambda u, w: bool(as_sets[u] & as_sets[w])


@pytest.fixture
def unfair_chain():
    return chain_unfair_coins()


@pytest.fixture
def two_coins_mdp():
    return mdp_two_coins_weighted()


@pytest.fixture
def dead_branch_pmdp():
    return mdp_dead_branch_pmdp()


@pytest.fixture
def dead_branch_tp():
    return mdp_dead_branch_tp()
