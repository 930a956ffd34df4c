"""NWR equivalence classes for trivially-parametric Markov chains.

For single-action models the full equivalence is decidable in polynomial
time: after removing self-loops (pure edge deletion when only the support
matters) and collapsing single-successor states into their successor, two
states are equivalent iff there is a common state both reach almost surely
under every full-support valuation; each non-trivial class has exactly one
*exit* state, whose successors all lie outside the class.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core_model import ModelError, WpMdp
from .graph_analysis import StageMap

__all__ = ["EquivPartition", "mc_equiv_classes", "mc_collapse", "almost_sure_states"]


@dataclass
class EquivPartition:
    """Disjoint state classes covering S, with one exit per non-trivial class."""

    classes: list  # list of sorted state-index tuples
    exit_of: dict  # class position -> exit state index
    diagnostics: list = field(default_factory=list)

    def class_of(self) -> dict:
        out = {}
        for i, members in enumerate(self.classes):
            for s in members:
                out[s] = i
        return out


def _check_chain(mc: WpMdp):
    if not mc.is_trivially_parametric or mc.is_weighted:
        raise ModelError("mc_equiv requires a non-weighted trivially-parametric chain")
    for s in range(mc.num_states):
        if not mc.is_target(s) and len(mc.actions_of(s)) != 1:
            raise ModelError(
                f"state {mc.states[s]!r} has {len(mc.actions_of(s))} actions; "
                "mc_equiv requires a Markov chain (exactly one per state)"
            )


def _preprocess(mc: WpMdp):
    """Self-loop removal and single-successor collapse on a union-find copy.

    Returns (find, succ) where ``find`` resolves a state to its surviving
    representative and ``succ`` maps each surviving non-target state to its
    successor set (no self-loops, size >= 2).
    """
    parent = list(range(mc.num_states))

    def find(s: int) -> int:
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    raw_succ = {
        s: [t for t, _ in mc.choices[(s, mc.actions_of(s)[0])]]
        for s in range(mc.num_states)
        if not mc.is_target(s)
    }
    diagnostics = []
    changed = True
    while changed:
        changed = False
        for s in sorted(raw_succ):
            if find(s) != s:
                continue
            outs = sorted({find(t) for t in raw_succ[s]} - {s})
            if not outs:
                diagnostics.append(
                    f"state {mc.states[s]!r} loops forever (not extremal-contracted?)"
                )
                continue
            if len(outs) == 1:
                t = outs[0]
                if mc.is_target(t):
                    diagnostics.append(
                        f"state {mc.states[s]!r} collapses into target "
                        f"{mc.states[t]!r} (not extremal-contracted?)"
                    )
                    continue
                parent[s] = t  # s is equivalent to its unique successor
                raw_succ[t] = raw_succ.get(t, []) + raw_succ.pop(s)
                changed = True
    succ = {}
    for s in raw_succ:
        if find(s) == s:
            succ[s] = sorted({find(t) for t in raw_succ[s]} - {s})
    return find, succ, diagnostics


def almost_sure_states(succ: dict, targets, z: int) -> set:
    """States that reach ``z`` almost surely under every full-support
    valuation of the preprocessed chain: states with no path to a target sink
    once ``z`` is removed (looping forever has probability zero)."""
    # Backward search from the sinks for "can reach a sink avoiding z".
    pred = {}
    for s, outs in succ.items():
        for t in outs:
            pred.setdefault(t, set()).add(s)
    queue = deque(t for t in targets if t != z)
    seen = {t for t in targets if t != z}
    while queue:
        v = queue.popleft()
        for u in pred.get(v, ()):
            if u != z and u not in seen:
                seen.add(u)
                queue.append(u)
    return {s for s in succ if s not in seen} | {z}


def mc_equiv_classes(mc: WpMdp) -> EquivPartition:
    """Compute the NWR-equivalence partition of a trivially-parametric chain."""
    _check_chain(mc)
    find, succ, diagnostics = _preprocess(mc)
    targets = set(mc.target_weight)
    live = sorted(succ)

    as_sets = {u: set() for u in live}
    for z in live:
        for u in almost_sure_states(succ, targets, z):
            as_sets[u].add(z)

    # Group states sharing an almost-surely-reached witness.
    parent = {u: u for u in live}

    def gfind(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for i, u in enumerate(live):
        for w in live[i + 1 :]:
            common = as_sets[u] & as_sets[w]
            if common:
                if len(common) > 1:
                    diagnostics.append(
                        f"states {mc.states[u]!r},{mc.states[w]!r} share "
                        f"{len(common)} almost-sure witnesses; using the smallest"
                    )
                ru, rw = gfind(u), gfind(w)
                if ru != rw:
                    parent[max(ru, rw)] = min(ru, rw)

    # Assemble classes over *original* states (preprocessing merges included).
    rep_of = {}
    for s in range(mc.num_states):
        if mc.is_target(s):
            rep_of[s] = ("t", s)
        else:
            rep_of[s] = ("c", gfind(find(s)))
    buckets = {}
    for s in range(mc.num_states):
        buckets.setdefault(rep_of[s], []).append(s)
    classes = [tuple(sorted(members)) for _, members in sorted(buckets.items(), key=lambda kv: kv[1][0])]

    # Exit of each class: the unique member with no successor inside the class
    # (self-loops aside).
    exit_of = {}
    for i, members in enumerate(classes):
        mem = set(members)
        if len(members) == 1:
            exit_of[i] = members[0]
            continue
        exits = []
        for s in members:
            outs = {t for t, _ in mc.choices[(s, mc.actions_of(s)[0])]} - {s}
            if not (outs & mem):
                exits.append(s)
        if len(exits) == 1:
            exit_of[i] = exits[0]
        else:
            # The exit after preprocessing: the common almost-sure witness.
            zs = set.intersection(*(as_sets[find(s)] for s in members if find(s) in as_sets))
            exit_of[i] = min(zs) if zs else members[0]
            if len(exits) != 1:
                diagnostics.append(
                    f"class {[mc.states[s] for s in members]} has {len(exits)} "
                    "direct exits; using its almost-sure witness"
                )
    return EquivPartition(classes, exit_of, diagnostics)


def mc_collapse(mc: WpMdp, partition: EquivPartition):
    """Quotient chain: every class is replaced by its exit state.

    Returns ``(mc', StageMap)``; optimal values of surviving states are
    unchanged under every valuation (oracle-checkable).
    """
    _check_chain(mc)
    class_of = partition.class_of()
    exit_state = {s: partition.exit_of[class_of[s]] for s in range(mc.num_states)}
    survivors = sorted(set(exit_state.values()))
    new_index = {s: i for i, s in enumerate(survivors)}
    state_map = {s: new_index[exit_state[s]] for s in range(mc.num_states)}
    states = [mc.states[s] for s in survivors]

    choices = {}
    prov = {}
    for s in survivors:
        if mc.is_target(s):
            continue
        a = mc.actions_of(s)[0]
        ns = state_map[s]
        mapped = []
        seen = set()
        for t, p in mc.choices[(s, a)]:
            nt = state_map[t]
            if nt == ns or nt in seen:
                continue
            seen.add(nt)
            mapped.append((nt, p))
        choices[(ns, a)] = mapped
        prov[(ns, a)] = ((s, a),)

    target_weight = {state_map[t]: w for t, w in mc.target_weight.items()}
    m2 = WpMdp(
        name=mc.name,
        subclass=mc.subclass,
        states=states,
        actions=mc.actions,
        params=mc.params,
        target_weight=target_weight,
        fail=state_map[mc.fail],
        choices=choices,
    )
    return m2, StageMap("mc-collapse", state_map, prov)
