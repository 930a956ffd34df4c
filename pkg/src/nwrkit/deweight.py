"""Weighted → non-weighted model transformations preserving NWR facts.

Two constructions, both adding fresh ``fin``/``fail`` targets and one fresh
action:

- ``deweight_pmdp``: each old target ``t`` gets a constant-probability choice
  sending mass ``ρ(t)·z`` to ``fin`` (``z = 1/ρ(t_n)`` for the top weight
  ``ρ(t_n)``) and the rest to ``fail``.  Optimal values scale exactly:
  ``Rew*_new(v) = z · Rew*_old(v)``.
- ``deweight_tpmdp``: for trivially-parametric models no constants may be
  introduced, so the old targets are chained: ``t_i`` can move to ``fin`` or
  fall down to ``t_{i-1}``, and ``t_0`` only to ``fail``.  Ratios are not
  preserved, but the strict ordering of target values is, under every
  graph-preserving valuation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .core_model import (
    ModelError,
    NatureV,
    Polynomial,
    StateV,
    WpMdp,
    build_graph,
)
from .graph_analysis import _backward_reach

__all__ = ["DeweightMap", "deweight_pmdp", "deweight_tpmdp"]


@dataclass
class DeweightMap:
    """Injection of old vertices into the new model (state indices are
    preserved; fresh states/action appended), plus the scaling constant."""

    fin: int
    fail: int
    added_action: int
    z: Fraction = None
    added_states: tuple = ()


def _check_normalized(m: WpMdp):
    ordered = m.targets_by_weight()
    weights = [m.target_weight[t] for t in ordered]
    if any(w < 0 for w in weights):
        raise ModelError("negative target weights are not supported")
    if len(set(weights)) != len(weights) or (weights and weights[0] != 0):
        raise ModelError("targets must be normalized (distinct weights, minimum 0)")
    if len(ordered) < 2 or weights[-1] == 0:
        raise ModelError(
            "deweighting needs at least one positive-weight target "
            "(single-target models degenerate; contract extremal vertices instead)"
        )
    return ordered


def deweight_pmdp(m: WpMdp):
    """The constant-ratio construction; input may be any weighted model."""
    ordered = _check_normalized(m)
    top = m.target_weight[ordered[-1]]
    z = 1 / top

    states = list(m.states) + [m.fresh_state_name("fin"), m.fresh_state_name("fail")]
    fin = len(m.states)
    fail = fin + 1
    actions = list(m.actions) + [m.fresh_action_name("__deweight")]
    act = len(m.actions)

    choices = {k: list(v) for k, v in m.choices.items()}
    for t in ordered:
        p_fin = m.target_weight[t] * z
        trans = []
        if p_fin != 0:
            trans.append((fin, Polynomial.const(p_fin)))
        if p_fin != 1:
            trans.append((fail, Polynomial.const(1 - p_fin)))
        choices[(t, act)] = trans

    m2 = WpMdp(
        name=m.name,
        subclass="pmdp",
        states=states,
        actions=actions,
        params=m.params,
        target_weight={fin: Fraction(1), fail: Fraction(0)},
        fail=fail,
        choices=choices,
    )
    return m2, DeweightMap(fin, fail, act, z=z, added_states=(fin, fail))


def deweight_tpmdp(m: WpMdp):
    """The order-preserving construction for weighted trivially-parametric
    models: adds n+3 vertices and 3n+2 graph edges for n+1 targets."""
    if not m.is_trivially_parametric:
        raise ModelError("deweight_tpmdp requires a trivially-parametric model")
    ordered = _check_normalized(m)
    t0 = ordered[0]

    states = list(m.states) + [m.fresh_state_name("fin"), m.fresh_state_name("fail")]
    fin = len(m.states)
    fail = fin + 1
    actions = list(m.actions) + [m.fresh_action_name("__deweight")]
    act = len(m.actions)
    params = list(m.params)

    def fresh_var() -> Polynomial:
        params.append(f"p{len(params)}")
        return Polynomial.variable(len(params) - 1)

    choices = {k: list(v) for k, v in m.choices.items()}

    # Precondition: every nature vertex with no path to a positive-weight
    # target (hence, soon, to fin) gets an edge to t_0, so that no choice can
    # trap probability mass forever.
    g = build_graph(m)
    reach_pos = _backward_reach(g, [StateV(t) for t in ordered[1:]])
    for (s, a) in sorted(m.choices):
        nv = NatureV(s, a)
        if nv not in reach_pos and all(t != t0 for t, _ in choices[(s, a)]):
            choices[(s, a)] = list(choices[(s, a)]) + [(t0, fresh_var())]

    # Target chain: t_i may exit to fin (i >= 1) or fall to t_{i-1}; t_0 fails.
    choices[(t0, act)] = [(fail, fresh_var())]
    for i in range(1, len(ordered)):
        choices[(ordered[i], act)] = [(fin, fresh_var()), (ordered[i - 1], fresh_var())]

    m2 = WpMdp(
        name=m.name,
        subclass="tpmdp",
        states=states,
        actions=actions,
        params=params,
        target_weight={fin: Fraction(1), fail: Fraction(0)},
        fail=fail,
        choices=choices,
    )
    return m2, DeweightMap(fin, fail, act, z=None, added_states=(fin, fail))
