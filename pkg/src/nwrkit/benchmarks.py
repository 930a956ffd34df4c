"""Generators for the bundled benchmark families.

Both families come from well-known PRISM case studies, re-enumerated here as
explicit trivially-parametric models (only the transition support matters for
the reductions, so concrete probabilities are replaced by fresh parameters):

* ``consensus``: Aspnes–Herlihy shared-coin randomised consensus for two
  processes, parameterised by ``K``.  Each process flips a fair coin and moves
  a shared counter (range ``2*(K+1)*N``) left or right; it decides once the
  counter passes ``N`` or ``range − N``.
* ``brp``: the bounded retransmission protocol, ``N`` chunks with at most
  ``MAX`` retransmissions per chunk, sender/receiver/two lossy channels in
  synchronous product; a deterministic Markov chain.

A reachability label turns a family into a model: label states are redirected
to a fresh ``fin`` target via a single probability-one choice, everything
else keeps its support, and an (unreachable) ``fail`` state completes the
target set.  State numbering is canonical (sorted variable tuples) so that
generated documents are byte-for-byte reproducible.
"""

from __future__ import annotations

from fractions import Fraction

from .core_model import Polynomial, WpMdp

__all__ = [
    "consensus_shared_coin",
    "brp",
    "CONSENSUS_LABELS",
    "BRP_LABELS",
    "bundled_instances",
]

CONSENSUS_LABELS = ("disagree", "fin_and_all_1", "fin_and_not_all_1")
BRP_LABELS = ("not_rec_but_sent", "no_succ_trans", "rep_uncertainty")


def _assemble(name, reachable, choices_of, label_of, state_name):
    """Build a trivially-parametric model from an explicit enumeration.

    ``choices_of(state) -> [(action_name, [successor, ...]), ...]``;
    label states get a single redirect choice to ``fin`` instead.
    """
    order = sorted(reachable)
    index = {st: i for i, st in enumerate(order)}
    fin = len(order)
    fail = fin + 1
    states = [state_name(st) for st in order] + ["fin", "fail"]

    actions: list = []
    action_index: dict = {}
    params: list = []
    choices = {}

    def var() -> Polynomial:
        params.append(f"x{len(params)}")
        return Polynomial.variable(len(params) - 1)

    for st in order:
        s = index[st]
        if label_of(st):
            entries = [("goal", [fin])]
        else:
            entries = choices_of(st)
        for act, succs in entries:
            if act not in action_index:
                action_index[act] = len(actions)
                actions.append(act)
            trans = tuple(
                (t if isinstance(t, int) else index[t], var())
                for t in dict.fromkeys(succs)
            )
            choices[(s, action_index[act])] = trans

    return WpMdp(
        name=name,
        subclass="tpmdp",
        states=states,
        actions=actions,
        params=params,
        target_weight={fin: Fraction(1), fail: Fraction(0)},
        fail=fail,
        choices=choices,
    )


def consensus_shared_coin(N: int = 2, K: int = 2, label: str = "disagree") -> WpMdp:
    """Two-process shared-coin consensus with counter range ``2*(K+1)*N``."""
    if N != 2:
        raise ValueError("only the two-process family is bundled")
    if label not in CONSENSUS_LABELS:
        raise ValueError(f"unknown consensus label {label!r}")
    rng = 2 * (K + 1) * N
    init = (K + 1) * N
    left = N
    right = rng - N

    # state: (counter, pc1, coin1, pc2, coin2); pc 0=flip, 1=write, 2=check,
    # 3=finished.
    def choices_of(st):
        counter, pc1, c1, pc2, c2 = st
        out = []
        for p in (1, 2):
            pc, c = (pc1, c1) if p == 1 else (pc2, c2)

            def mk(pc_, c_, counter_=None):
                nc = counter if counter_ is None else counter_
                if p == 1:
                    return (nc, pc_, c_, pc2, c2)
                return (nc, pc1, c1, pc_, c_)

            if pc == 0:
                out.append((f"flip{p}", [mk(1, 0), mk(1, 1)]))
            elif pc == 1 and c == 0 and counter > 0:
                out.append((f"write{p}", [mk(2, 0, counter - 1)]))
            elif pc == 1 and c == 1 and counter < rng:
                out.append((f"write{p}", [mk(2, 0, counter + 1)]))
            elif pc == 2:
                if counter <= left:
                    out.append((f"check{p}", [mk(3, 0)]))
                elif counter >= right:
                    out.append((f"check{p}", [mk(3, 1)]))
                else:
                    out.append((f"check{p}", [mk(0, c)]))
        if pc1 == 3 and pc2 == 3:
            out.append(("done", [st]))
        return out

    def label_of(st):
        counter, pc1, c1, pc2, c2 = st
        if pc1 != 3 or pc2 != 3:
            return False
        if label == "disagree":
            return c1 != c2
        if label == "fin_and_all_1":
            return c1 == 1 and c2 == 1
        return not (c1 == 1 and c2 == 1)  # fin_and_not_all_1

    init_st = (init, 0, 0, 0, 0)
    reachable = _explore(init_st, choices_of, label_of)
    return _assemble(
        f"consensus-{N}-{K}-{label}",
        reachable,
        choices_of,
        label_of,
        lambda st: "c{}_p{}{}_q{}{}".format(*st),
    )


def brp(N: int = 64, MAX: int = 2, label: str = "not_rec_but_sent") -> WpMdp:
    """Bounded retransmission protocol chain (sender, receiver, channels).

    Variables: sender program counter ``s`` (0 idle, 1 next frame, 2 wait ack,
    3 timeout, 4 ack ok, 5/6 abort+resync), report ``srep`` (1 chunk lost,
    2 last-ack unknown, 3 file done), retransmission count ``nrtr``, chunk
    ``i``, alternating bits ``bs``/``s_ab``, first/last flags ``fs``/``ls``;
    receiver pc ``r``, report ``rrep``, flags ``fr``/``lr``/``br``/``r_ab``,
    ``recv`` (any frame ever received); message/ack channels ``k``/``l``
    (0 empty, 1 delivering, 2 lost-in-transit).
    """
    if label not in BRP_LABELS:
        raise ValueError(f"unknown brp label {label!r}")
    keys = (
        "s", "srep", "nrtr", "i", "bs", "s_ab", "fs", "ls",
        "r", "rrep", "fr", "lr", "br", "r_ab", "recv", "k", "l", "T",
    )
    init_st = (0,) * len(keys)
    ix = {k: i for i, k in enumerate(keys)}

    def choices_of(st):
        d = dict(zip(keys, st))

        def upd(**kw):
            t = list(st)
            for k2, v2 in kw.items():
                t[ix[k2]] = v2
            return tuple(t)

        s, r, k, l = d["s"], d["r"], d["k"], d["l"]
        out = []
        if s == 3 and d["nrtr"] == MAX and d["i"] < N:
            out.append(("abort", [upd(s=5, srep=1)]))
        if s == 3 and d["nrtr"] == MAX and d["i"] == N:
            out.append(("abort", [upd(s=5, srep=2)]))
        if s == 4 and d["i"] < N:
            out.append(("next", [upd(s=1, i=d["i"] + 1)]))
        if s == 4 and d["i"] == N:
            out.append(("ok", [upd(s=0, srep=3)]))
        if r == 1:
            out.append(("read", [upd(r=2, r_ab=d["br"])]))
        if r == 2 and d["r_ab"] == d["br"]:
            rrep = 1 if (d["fr"] and not d["lr"]) else (3 if d["lr"] else 2)
            out.append(("deliver", [upd(r=3, rrep=rrep)]))
        if s == 0 and not d["T"]:  # exactly one file is ever transmitted
            out.append(("new_file", [upd(s=1, i=1, srep=0, T=1)]))
        if (s == 1 or (s == 3 and d["nrtr"] < MAX)) and k == 0:
            if s == 1:
                base = upd(
                    s=2,
                    fs=int(d["i"] == 1),
                    ls=int(d["i"] == N),
                    bs=d["s_ab"],
                    nrtr=0,
                )
            else:
                base = upd(s=2, nrtr=d["nrtr"] + 1)
            sent, lost = list(base), list(base)
            sent[ix["k"]], lost[ix["k"]] = 1, 2
            out.append(("send_frame", [tuple(sent), tuple(lost)]))
        if k == 1 and (r == 0 or r == 4):
            # Only the first frame of the file realigns the expected
            # alternating bit (via r=1); later frames go straight to the
            # received check so duplicates can be detected.
            out.append(
                (
                    "get_frame",
                    [
                        upd(
                            r=1 if r == 0 else 2,
                            fr=d["fs"],
                            lr=d["ls"],
                            br=d["bs"],
                            recv=1,
                            k=0,
                        )
                    ],
                )
            )
        ack = None
        if r == 3:
            ack = {"r": 4, "r_ab": 1 - d["r_ab"]}
        elif r == 2 and d["r_ab"] != d["br"]:
            ack = {"r": 4}
        if ack is not None and l == 0:
            sent, lost = list(upd(**ack)), list(upd(**ack))
            sent[ix["l"]], lost[ix["l"]] = 1, 2
            out.append(("send_ack", [tuple(sent), tuple(lost)]))
        if s == 2 and l == 1:
            out.append(("get_ack", [upd(s=4, s_ab=1 - d["s_ab"], l=0)]))
        if s == 2 and k == 2:
            out.append(("timeout_frame", [upd(s=3, k=0)]))
        if s == 2 and l == 2:
            out.append(("timeout_ack", [upd(s=3, l=0)]))
        if s == 5 and (r == 0 or r == 4):
            u = {"s": 6}
            if r == 4:
                u["r"] = 5
                if not d["lr"]:
                    u["rrep"] = 4
            out.append(("sync", [upd(**u)]))
        if s == 6:
            u = {"s": 0, "s_ab": 0}
            if r == 5:
                u.update(r=0, rrep=0)
            out.append(("sync", [upd(**u)]))
        if not out:  # fully terminated configuration: absorbing
            out.append(("done", [st]))
        return out

    def label_of(st):
        d = dict(zip(keys, st))
        if label == "not_rec_but_sent":
            return d["s"] == 5 and not d["recv"]
        if label == "no_succ_trans":
            # Sender never reports a successful transmission: any abort.
            return d["s"] == 5
        return d["s"] == 5 and d["srep"] == 2  # rep_uncertainty

    reachable = _explore(init_st, choices_of, label_of)
    return _assemble(
        f"brp-{N}-{MAX}-{label}",
        reachable,
        choices_of,
        label_of,
        lambda st: "b" + "_".join(str(x) for x in st),
    )


def _explore(init_st, choices_of, label_of):
    """All states reachable from the initial configuration.

    Exploration ignores the label: the reachable state space is the same for
    every label of a protocol, as in an explicit-state export; the label only
    decides which states become targets during assembly."""
    seen = {init_st}
    stack = [init_st]
    while stack:
        st = stack.pop()
        for _, succs in choices_of(st):
            for t in succs:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
    return seen


def bundled_instances():
    """(name, constructor) pairs for the models shipped with the repository."""
    out = []
    for k in (2, 4, 8, 16):
        out.append(
            (
                f"consensus-2-{k}-disagree",
                lambda k=k: consensus_shared_coin(2, k, "disagree"),
            )
        )
    for label in ("not_rec_but_sent", "no_succ_trans"):
        for mx in (2, 3, 4, 5):
            out.append(
                (
                    f"brp-64-{mx}-{label}",
                    lambda mx=mx, label=label: brp(64, mx, label),
                )
            )
    return out
