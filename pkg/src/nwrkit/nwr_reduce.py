"""Model reduction driven by an under-approximation of the never-worse order.

The under-approximation graph 𝒰 stores vertex *sets* as nodes; a path from
node ``U`` to node ``W`` certifies that, for every graph-preserving valuation,
the best value in ``U`` never beats the best value in ``W``.  Two inference
rules extend the graph:

* essential: if every path from ``U`` to ``fin`` crosses the closure
  ``μD.f_W(D)``, then ``U`` is never worth more than ``W``;
* almost-sure: if some ``w ∈ W`` reaches, with probability one under some
  strategy, the set of states already known to dominate ``U``, then again
  ``U`` is never worth more than ``W``.

Action pruning drops every choice dominated by its sibling choices; state
merging contracts singleton nodes that lie on a common 𝒰 cycle.  The outer
driver alternates extremal-value contraction, end-component quotienting,
pruning with a fresh 𝒰, and equivalence collapsing until nothing changes.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

from .core_model import MdpGraph, ModelError, NatureV, StateV, WpMdp, build_graph
from .graph_analysis import (
    StageMap,
    _scc,
    _value1_fixpoint,
    contract_extremal,
    fin_state,
    is_essential,
    mec_quotient,
    partition_quotient,
)
from .mc_equiv import mc_collapse, mc_equiv_classes
from .model_io import ReductionReport

__all__ = [
    "PruneConfig",
    "UnderApproxGraph",
    "ua_init",
    "ua_add_node",
    "ua_add_edge",
    "ua_query",
    "lfp_f",
    "infer_essential",
    "infer_almost_sure",
    "prune_actions",
    "collapse_equivalences",
    "reduce",
]


@dataclass
class PruneConfig:
    """Iteration limits for the reduction loops.

    ``outer_limit`` bounds the driver loop; ``inner_limit`` bounds the
    prune passes per driver iteration (0 disables pruning); the inner passes
    of the first driver iteration are skipped when ``skip_first_outer_inner``
    is set; the quadratic membership-edge update of 𝒰 is off by default.
    """

    outer_limit: int = 17
    inner_limit: int = 3
    skip_first_outer_inner: bool = True
    enable_superset_membership_edges: bool = False

    def __post_init__(self):
        if self.outer_limit < 0 or self.inner_limit < 0:
            raise ValueError("iteration limits must be non-negative")

    @staticmethod
    def setup(n: int) -> "PruneConfig":
        if n == 1:
            return PruneConfig()
        if n == 2:
            return PruneConfig(
                outer_limit=3, inner_limit=0, skip_first_outer_inner=False
            )
        raise ValueError(f"unknown setup {n!r} (choose 1 or 2)")


class UnderApproxGraph:
    """Nodes are frozensets of vertices; an edge (U, W) means U ⊴ W.

    Structural edges maintained on node insertion: everything dominates
    ``{fin}``, ``{fail}`` dominates everything, and strict subsets dominate
    their supersets.  ``inferred_edges`` records the rule-derived edges for
    external soundness checking; ``version`` counts mutations.
    """

    __slots__ = (
        "fin_node",
        "fail_node",
        "nodes",
        "succ",
        "pred",
        "containing",
        "vertices",
        "membership",
        "inferred_edges",
        "version",
    )

    def __init__(self, fin: int, fail: int, vertices, membership: bool = False):
        self.fin_node = frozenset({StateV(fin)})
        self.fail_node = frozenset({StateV(fail)})
        self.nodes = set()
        self.succ = {}
        self.pred = {}
        self.containing = {}
        self.vertices = set(vertices)
        self.membership = membership
        self.inferred_edges = []
        self.version = 0
        self.add_node(self.fail_node)
        self.add_node(self.fin_node)

    def _link(self, a, b) -> None:
        if b not in self.succ[a]:
            self.succ[a].add(b)
            self.pred[b].add(a)
            self.version += 1

    def add_node(self, U) -> None:
        U = frozenset(U)
        if U in self.nodes:
            return
        if not U:
            raise ModelError("the empty vertex set cannot be a node")
        self.nodes.add(U)
        self.succ[U] = set()
        self.pred[U] = set()
        self.version += 1
        # Strict subsets dominate U; U dominates its strict supersets.
        cand = set()
        for u in U:
            cand |= self.containing.get(u, set())
        for X in cand:
            if X < U:
                self._link(X, U)
            elif U < X:
                self._link(U, X)
        if U == self.fail_node:
            for X in self.nodes - {U}:
                self._link(U, X)
        elif self.fail_node in self.nodes:
            self._link(self.fail_node, U)
        if U == self.fin_node:
            for X in self.nodes - {U}:
                self._link(X, U)
        elif self.fin_node in self.nodes:
            self._link(U, self.fin_node)
        if self.membership:
            for W in sorted(self.nodes - {U}, key=sorted):
                if all(self.query(frozenset({u}), W) for u in U):
                    self._link(U, W)
        for u in U:
            self.containing.setdefault(u, set()).add(U)

    def add_edge(self, U, W, inferred: bool = False) -> None:
        U, W = frozenset(U), frozenset(W)
        self.add_node(U)
        self.add_node(W)
        if inferred and W not in self.succ[U]:
            self.inferred_edges.append((U, W))
        self._link(U, W)

    def query(self, U, W) -> bool:
        U, W = frozenset(U), frozenset(W)
        self.add_node(U)
        self.add_node(W)
        if U == W:
            return True
        seen = {U}
        queue = deque((U,))
        while queue:
            X = queue.popleft()
            for Y in self.succ[X]:
                if Y == W:
                    return True
                if Y not in seen:
                    seen.add(Y)
                    queue.append(Y)
        return False

    def reach_from(self, U) -> set:
        """All nodes reachable from node ``U``."""
        return self._reach(U, self.succ)

    def reach_to(self, W) -> set:
        """All nodes with a path to node ``W``."""
        return self._reach(W, self.pred)

    def _reach(self, start, adjacency) -> set:
        start = frozenset(start)
        self.add_node(start)
        seen = {start}
        queue = deque((start,))
        while queue:
            X = queue.popleft()
            for Y in adjacency[X]:
                if Y not in seen:
                    seen.add(Y)
                    queue.append(Y)
        return seen


def ua_init(g: MdpGraph, fin: int, fail: int, membership: bool = False) -> UnderApproxGraph:
    """Initial 𝒰: nodes {v} and vE for every vertex, the fin/fail edges, the
    edges {v} -> vE for every vertex, and vE -> {v} whenever the value of v
    equals the maximum over vE.  That equality holds for states (they pick
    the best choice) and for nature vertices with a single successor (their
    value is that successor's value); nature vertices with several successors
    only average, hence no reverse edge for them."""
    ua = UnderApproxGraph(fin, fail, g.vertices, membership=membership)
    for v in g.vertices:
        ua.add_node(frozenset({v}))
    for v in g.vertices:
        if not g.succ[v]:
            continue
        vE = frozenset(g.succ[v])
        ua.add_edge(frozenset({v}), vE)
        if isinstance(v, StateV) or len(vE) == 1:
            ua.add_edge(vE, frozenset({v}))
    return ua


def ua_add_node(ua: UnderApproxGraph, U) -> None:
    ua.add_node(U)


def ua_add_edge(ua: UnderApproxGraph, U, W) -> None:
    ua.add_edge(U, W)


def ua_query(ua: UnderApproxGraph, U, W) -> bool:
    return ua.query(U, W)


def lfp_f(ua: UnderApproxGraph, W) -> set:
    """Least fixed point of f_W(D) = D ∪ {z | {z} reaches the node W ∪ D}.

    Kleene iteration from the empty set; every round materializes the node
    W ∪ D (it stays in 𝒰 afterwards) and runs one backward search from it.
    """
    W = frozenset(W)
    D: set = set()
    while True:
        node = frozenset(W | D)
        reachers = ua.reach_to(node)
        new = {
            z
            for z in ua.vertices
            if z not in D and frozenset({z}) in reachers
        }
        if not new:
            return D
        D |= new


def infer_essential(ua: UnderApproxGraph, U, W, g: MdpGraph, fin: int) -> bool:
    """Essential rule: if every path from ``U`` to ``fin`` crosses the closure
    of ``W``, record the edge (U, W) in 𝒰 and succeed."""
    closure = lfp_f(ua, W)
    if is_essential(U, closure, g, fin):
        ua.add_edge(U, W, inferred=True)
        return True
    return False


def infer_almost_sure(ua: UnderApproxGraph, U, W, g: MdpGraph) -> bool:
    """Almost-sure rule: if some w in ``W`` reaches, with probability one
    under some strategy and every graph-preserving valuation, the states
    already known to dominate ``U``, record (U, W) and succeed."""
    Unode = frozenset(U)
    dominated = set()
    for node in ua.reach_from(Unode):
        if len(node) == 1:
            (v,) = node
            if isinstance(v, StateV):
                dominated.add(v)
    if not dominated:
        return False
    winners = _value1_fixpoint(g, dominated)
    if any(w in winners for w in W):
        ua.add_edge(U, frozenset(W), inferred=True)
        return True
    return False


def prune_actions(m: WpMdp, ua: UnderApproxGraph, cfg: PruneConfig, max_passes=None):
    """Drop dominated choices (the action-pruning loop).

    For every state with at least two remaining choices and every choice
    (s, a), with W the sibling choices of s: if 𝒰 already shows (s,a) ⊴ W,
    or the essential or almost-sure rule proves it, all transitions of (s, a)
    are removed.  Passes repeat until 𝒰 stops changing or ``max_passes``
    (default ``cfg.inner_limit``) is hit.  Returns ``(m', log, passes)`` with
    one ``(state, action, rule)`` record per pruned choice.
    """
    if max_passes is None:
        max_passes = cfg.inner_limit
    choices = dict(m.choices)
    actions_of = {}
    for (s, a) in choices:
        actions_of.setdefault(s, set()).add(a)
    log = []
    passes = 0
    fin = fin_state(m)

    def rebuild():
        return WpMdp(
            name=m.name,
            subclass=m.subclass,
            states=m.states,
            actions=m.actions,
            params=m.params,
            target_weight=m.target_weight,
            fail=m.fail,
            choices=dict(choices),
        )

    current = m
    while passes < max_passes:
        passes += 1
        version0 = ua.version
        pruned = False
        g = build_graph(current)
        for s in range(m.num_states):
            acts = actions_of.get(s, set())
            for a in sorted(acts):
                if len(acts) < 2:
                    break  # a sole choice has no sibling set to compare with
                if a not in acts:
                    continue
                U = frozenset({NatureV(s, a)})
                W = frozenset(NatureV(s, b) for b in acts if b != a)
                if ua.query(U, W):
                    rule = "query"
                elif infer_essential(ua, U, W, g, fin):
                    rule = "essential"
                elif infer_almost_sure(ua, U, W, g):
                    rule = "almost_sure"
                else:
                    continue
                del choices[(s, a)]
                acts.discard(a)
                log.append((s, m.actions[a], rule))
                pruned = True
                current = rebuild()
                g = build_graph(current)
        if ua.version == version0 and not pruned:
            break
    return current, log, passes


def collapse_equivalences(m: WpMdp, ua: UnderApproxGraph):
    """Merge states whose singleton nodes lie on a common 𝒰 cycle.

    Mutual 𝒰-reachability certifies equal optimal values under every
    graph-preserving valuation, so the states of each strongly connected
    component of 𝒰 holding two or more singleton state nodes collapse into
    one.  Returns ``(m', StageMap, merged_class_count)``.
    """
    order = sorted(ua.nodes, key=lambda n: sorted(n))
    comps = _scc(order, lambda n: sorted(ua.succ[n], key=sorted))
    class_of = {s: s for s in range(m.num_states)}
    merged = 0
    for comp in comps:
        group = sorted(
            v.state
            for node in comp
            if len(node) == 1
            for v in node
            if isinstance(v, StateV)
            and v.state < m.num_states
            and not m.is_target(v.state)
        )
        if len(group) > 1:
            merged += 1
            for s in group:
                class_of[s] = group[0]
    if not merged:
        return m, None, 0
    m2, stage = partition_quotient(m, class_of, "nwr-collapse")
    return m2, stage, merged


def _is_markov_chain(m: WpMdp) -> bool:
    return all(
        m.is_target(s) or len(m.actions_of(s)) == 1 for s in range(m.num_states)
    )


def reduce(m: WpMdp, cfg: PruneConfig = None):
    """Full reduction pipeline for a non-weighted trivially-parametric model.

    Per driver ("outer") iteration: contract extremal-value vertices, quotient
    end components, prune dominated actions against a fresh 𝒰, and collapse
    equivalent states.  Markov chains skip pruning (nothing to prune) and
    collapse via the polynomial-time chain-equivalence algorithm instead of
    𝒰 cycles; the loop stops when an iteration changes nothing or when two
    consecutive collapse steps have no effect.

    Returns ``(m', ReductionReport, stages)`` where ``stages`` is the list of
    ``(model, StageMap)`` pairs consumed by the value-preservation checker.
    """
    if m.is_weighted or not m.is_trivially_parametric:
        raise ModelError(
            "reduce expects a non-weighted trivially-parametric model; "
            "route weighted models through a deweight construction first"
        )
    if cfg is None:
        cfg = PruneConfig.setup(1)

    t0 = time.perf_counter()
    original = (m.num_states, m.num_choices)
    stages = []
    current = m

    def push(result):
        nonlocal current
        model, stage = result
        if (model.num_states, model.num_choices) == (
            current.num_states,
            current.num_choices,
        ):
            return False
        stages.append((model, stage))
        current = model
        return True

    prune_log = []
    shrink = []
    inner_passes = 0
    pruned_total = 0
    collapsed_total = 0
    no_effect_collapses = 0
    outer = 0
    preprocessed = None
    t_pre = 0.0

    while outer < cfg.outer_limit:
        outer += 1
        changed = False
        changed |= push(contract_extremal(current))
        changed |= push(mec_quotient(current))
        if outer == 1:
            preprocessed = (current.num_states, current.num_choices)
            t_pre = time.perf_counter() - t0
        chain = _is_markov_chain(current)

        run_inner = cfg.inner_limit > 0 and not (
            outer == 1 and cfg.skip_first_outer_inner
        )
        g = build_graph(current)
        ua = ua_init(
            g,
            fin_state(current),
            current.fail,
            membership=cfg.enable_superset_membership_edges,
        )
        if run_inner and not chain:
            before = current.num_choices
            pruned_model, log, passes = prune_actions(current, ua, cfg)
            inner_passes += passes
            if log:
                identity = {s: s for s in range(current.num_states)}
                prov = {key: (key,) for key in pruned_model.choices}
                stages.append((pruned_model, StageMap("prune", identity, prov)))
                current = pruned_model
                prune_log.extend(log)
                pruned_total += before - current.num_choices
                changed = True

        if chain:
            partition = mc_equiv_classes(current)
            merged = sum(1 for c in partition.classes if len(c) > 1)
            if merged:
                collapsed, stage = mc_collapse(current, partition)
                stages.append((collapsed, stage))
                current = collapsed
        else:
            collapsed, stage, merged = collapse_equivalences(current, ua)
            if merged:
                stages.append((collapsed, stage))
                current = collapsed
        collapsed_total += merged
        changed |= merged > 0
        no_effect_collapses = 0 if merged else no_effect_collapses + 1

        shrink.append((current.num_states, current.num_choices))
        if not changed or no_effect_collapses >= 2:
            break

    seconds = time.perf_counter() - t0
    report = ReductionReport(
        name=m.name,
        original=original,
        preprocessed=preprocessed or original,
        reduced=(current.num_states, current.num_choices),
        seconds={"preprocess": t_pre, "reduce": seconds - t_pre},
        outer_iterations=outer,
        inner_passes=inner_passes,
        pruned_actions=pruned_total,
        collapsed_classes=collapsed_total,
        prune_log=prune_log,
        shrink_curve=shrink,
    )
    return current, report, stages
