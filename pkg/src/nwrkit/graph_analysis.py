"""Valuation-independent graph computations on the bipartite analysis graph.

Everything here depends only on the *support* of the transition function, so
the results hold for every graph-preserving valuation: value-0/value-1 vertex
sets, contraction of extremal vertices into ``fin``/``fail``, maximal end
components and their quotient, essential sets, and almost-sure reachability.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .core_model import (
    MdpGraph,
    ModelError,
    NatureV,
    Polynomial,
    StateV,
    Vertex,
    WpMdp,
    build_graph,
)

__all__ = [
    "value0_vertices",
    "value1_vertices",
    "contract_extremal",
    "mec_decomposition",
    "MecDecomposition",
    "mec_quotient",
    "is_essential",
    "almost_sure_reach",
    "StageMap",
    "fin_state",
]


def fin_state(m: WpMdp) -> int:
    """The weight-1 target of a non-weighted model."""
    for s, w in m.target_weight.items():
        if w == 1:
            return s
    raise ModelError("model has no weight-1 target (not a non-weighted model)")


def _backward_reach(g: MdpGraph, sources, blocked=frozenset()) -> set:
    """Vertices with a path to some source, avoiding ``blocked`` vertices."""
    seen = set()
    queue = deque()
    for v in sources:
        if v not in blocked and v in g.succ:
            seen.add(v)
            queue.append(v)
    while queue:
        v = queue.popleft()
        for u in g.pred[v]:
            if u not in seen and u not in blocked:
                seen.add(u)
                queue.append(u)
    return seen


def value0_vertices(g: MdpGraph, fin: int) -> set:
    """Vertices with no path to ``fin`` — value 0 under every valuation."""
    reach_fin = _backward_reach(g, [StateV(fin)])
    return {v for v in g.vertices if v not in reach_fin}


def _value1_fixpoint(g: MdpGraph, good: set) -> set:
    """Vertices from which ``good`` is reached almost surely (some strategy,
    all graph-preserving valuations): the classical two-nested-fixpoint
    attractor on the bipartite graph, with ``good`` treated as absorbing."""
    Y = set(g.vertices)
    while True:
        # Inner least fixpoint over Y.
        bad_count = {}
        for v in g.vertices:
            if isinstance(v, NatureV):
                bad_count[v] = sum(1 for u in g.succ[v] if u not in Y)
        X = {v for v in good if v in Y}
        queue = deque(X)
        in_x = set(X)
        while queue:
            v = queue.popleft()
            for u in g.pred[v]:
                if u in in_x or u not in Y:
                    continue
                if isinstance(u, NatureV):
                    if u in good or bad_count[u] == 0:
                        in_x.add(u)
                        queue.append(u)
                else:
                    # A state wins if some available nature vertex wins.
                    in_x.add(u)
                    queue.append(u)
        if in_x == Y:
            return in_x
        Y = in_x


def value1_vertices(g: MdpGraph, fin: int) -> set:
    """Vertices that reach ``fin`` with probability 1 under some strategy for
    every graph-preserving valuation."""
    return _value1_fixpoint(g, {StateV(fin)})


def is_essential(U, W, g: MdpGraph, fin: int) -> bool:
    """True iff every path from a vertex of ``U`` to ``fin`` contains a vertex
    of ``W`` (equivalently: removing ``W`` disconnects ``U`` from ``fin``)."""
    W = set(W)
    reach_fin = _backward_reach(g, [StateV(fin)], blocked=W)
    return all(u in W or u not in reach_fin for u in U)


def almost_sure_reach(U, W, g: MdpGraph) -> bool:
    """True iff every vertex of ``U`` becomes value-1 after the target set is
    replaced by ``W`` (states) plus ``fail``; i.e. some strategy reaches ``W``
    almost surely from every u ∈ U, under all graph-preserving valuations."""
    good = {StateV(s) for s in W}
    winners = _value1_fixpoint(g, good)
    return all(u in winners for u in U)


@dataclass
class StageMap:
    """Provenance of one reduction stage.

    ``state_map`` sends every old state index to its new state index.
    ``choice_prov`` lists, for each new choice, the old choices it descends
    from (several when duplicate-successor-set choices were merged).
    """

    label: str
    state_map: dict
    choice_prov: dict = field(default_factory=dict)

    def identity(cls, m):  # pragma: no cover - convenience
        raise NotImplementedError


def _coalesce(trans, m: WpMdp, image):
    """Map transition successors through ``image`` and merge duplicates.

    For general parametric models duplicate successors add their polynomials;
    for trivially-parametric ones the first variable is kept (only the support
    matters, and variable uniqueness must be preserved).
    """
    out = []
    pos = {}
    for t, p in trans:
        t2 = image(t)
        if t2 in pos:
            if not m.is_trivially_parametric:
                i = pos[t2]
                out[i] = (t2, out[i][1] + p)
        else:
            pos[t2] = len(out)
            out.append((t2, p))
    return out


def contract_extremal(m: WpMdp, g: MdpGraph = None):
    """Merge value-1 vertices into ``fin`` and value-0 vertices into ``fail``.

    Returns ``(m', StageMap)``.  Choices whose nature vertex is value-0 are
    dropped (they can only lead to ``fail``); values of surviving vertices are
    unchanged under every graph-preserving valuation.
    """
    if m.is_weighted:
        raise ModelError("contract_extremal requires a non-weighted model")
    if g is None:
        g = build_graph(m)
    fin = fin_state(m)
    v1 = value1_vertices(g, fin)
    v0 = value0_vertices(g, fin)

    state_map = {}
    new_names = []
    for s in range(m.num_states):
        if StateV(s) in v1:
            target = "fin"
        elif StateV(s) in v0:
            target = "fail"
        else:
            target = None
        if target is None:
            state_map[s] = len(new_names)
            new_names.append(m.states[s])
    # fin / fail appended last with canonical positions.
    fin_new = len(new_names)
    new_names.append(m.states[fin])
    fail_new = len(new_names)
    new_names.append(m.states[m.fail])
    for s in range(m.num_states):
        if s not in state_map:
            state_map[s] = fin_new if StateV(s) in v1 else fail_new

    choices = {}
    prov = {}
    for (s, a), trans in m.choices.items():
        if state_map[s] in (fin_new, fail_new):
            continue
        if NatureV(s, a) in v0:
            continue  # only leads to fail: merge the whole choice into fail
        new = _coalesce(trans, m, lambda t: state_map[t])
        choices[(state_map[s], a)] = new
        prov[(state_map[s], a)] = ((s, a),)

    m2 = WpMdp(
        name=m.name,
        subclass=m.subclass,
        states=new_names,
        actions=m.actions,
        params=m.params,
        target_weight={fin_new: Fraction(1), fail_new: Fraction(0)},
        fail=fail_new,
        choices=choices,
    )
    return m2, StageMap("extremal", state_map, prov)


@dataclass
class MecDecomposition:
    """Maximal end components: each a pair (state set P, choice set B)."""

    mecs: list
    class_of: dict  # state -> class id; singleton classes for non-MEC states

    def classes(self):
        return self.mecs


def _scc(vertices, succ):
    """Iterative Tarjan strongly connected components."""
    index = {}
    lowlink = {}
    on_stack = set()
    stack = []
    sccs = []
    counter = [0]
    for root in vertices:
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = lowlink[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = lowlink[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                elif w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(comp)
    return sccs


def mec_decomposition(m: WpMdp, g: MdpGraph = None) -> MecDecomposition:
    """Maximal end components via the standard iterative SCC refinement."""
    if g is None:
        g = build_graph(m)
    # successor states of each choice, per the graph (syntactic support).
    choice_succ = {}
    for v in g.vertices:
        if isinstance(v, NatureV):
            choice_succ[(v.state, v.action)] = {u.state for u in g.succ[v]}

    candidates = [set(range(m.num_states))]
    mecs = []
    while candidates:
        P = candidates.pop()
        B = {
            (s, a)
            for s in P
            for a in m.actions_of(s)
            if (s, a) in choice_succ and choice_succ[(s, a)] <= P
        }
        succ_in = {s: set() for s in P}
        for (s, a) in B:
            succ_in[s] |= choice_succ[(s, a)]
        if not all(succ_in[s] for s in P):
            # States with no fully-internal choice cannot be in an end
            # component within P; drop them and retry with the rest.
            P2 = {s for s in P if succ_in[s]}
            if P2:
                candidates.append(P2)
            continue
        comps = _scc(sorted(P), lambda s: sorted(succ_in[s] & P))
        if len(comps) == 1:
            # Strongly connected with every state keeping an internal choice:
            # this is a MEC (a singleton requires a self-loop choice, which is
            # exactly a choice with successors inside P = {s}).
            mecs.append((P, B))
            continue
        for comp in comps:
            candidates.append(set(comp))
    class_of = {}
    ordered = sorted(mecs, key=lambda pb: min(pb[0]))
    mecs = ordered
    next_id = 0
    for P, B in mecs:
        for s in P:
            class_of[s] = next_id
        next_id += 1
    for s in range(m.num_states):
        if s not in class_of:
            class_of[s] = next_id
            next_id += 1
    return MecDecomposition(mecs, class_of)


def partition_quotient(m: WpMdp, class_of: dict, label: str):
    """Quotient of ``m`` by a value-preserving state partition.

    Each class collapses to its least member; transitions whose successor
    stays inside the source's class are dropped (pure self-loops included).
    Choices are kept per originating (member state, action) so that distinct
    member choices are never conflated; choices that end up with identical
    successor sets on the same quotient state are deduplicated.
    Returns ``(m', StageMap)``.
    """
    if not m.is_trivially_parametric:
        raise ModelError("partition_quotient requires a trivially-parametric model")
    # Representative of each class: least member state.
    rep = {}
    for s in range(m.num_states):
        c = class_of[s]
        rep.setdefault(c, s)
        rep[c] = min(rep[c], s)
    # New state numbering: representatives in ascending original order.
    reps_sorted = sorted(set(rep.values()))
    new_index = {r: i for i, r in enumerate(reps_sorted)}
    state_map = {s: new_index[rep[class_of[s]]] for s in range(m.num_states)}
    new_names = [m.states[r] for r in reps_sorted]

    choices = {}
    prov = {}
    seen_sets = {}
    actions = list(m.actions)
    for (s, a), trans in sorted(m.choices.items()):
        ns = state_map[s]
        mapped = _coalesce(
            [(t, p) for t, p in trans if state_map[t] != ns], m, lambda t: state_map[t]
        )
        if not mapped:
            continue
        succ_set = frozenset(t for t, _ in mapped)
        key = (ns, succ_set)
        if key in seen_sets:
            prov[seen_sets[key]] = prov[seen_sets[key]] + ((s, a),)
            continue
        slot = a
        if (ns, slot) in choices:
            # Two merged member states share this action name: give the later
            # one a fresh action so distinct choices are never conflated.
            slot = len(actions)
            actions.append(f"{m.actions[a]}@{m.states[s]}")
        choices[(ns, slot)] = mapped
        prov[(ns, slot)] = ((s, a),)
        seen_sets[key] = (ns, slot)

    target_weight = {state_map[t]: w for t, w in m.target_weight.items()}
    m2 = WpMdp(
        name=m.name,
        subclass=m.subclass,
        states=new_names,
        actions=actions,
        params=m.params,
        target_weight=target_weight,
        fail=state_map[m.fail],
        choices=choices,
    )
    return m2, StageMap(label, state_map, prov)


def mec_quotient(m: WpMdp, g: MdpGraph = None):
    """Quotient of ``m`` by its maximal end components: all states of an end
    component share their optimal value under every graph-preserving
    valuation, so each MEC collapses to one state.  Returns ``(m', StageMap)``.
    """
    dec = mec_decomposition(m, g)
    return partition_quotient(m, dec.class_of, "mec")
