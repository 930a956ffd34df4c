"""Read/write explicit-state models and reduction reports.

Single interchange format: a JSON document
``{"version": 1, "name", "subclass", "params", "states", "choices"}`` where
``states`` entries carry an optional ``target_weight`` and ``choices`` entries
are ``{"from", "action", "transitions": [{"to", "poly"?}]}``; trivially
parametric choices omit ``poly`` and get synthesized variables on read.
A thin importer accepts Storm's explicit-JSON export as well.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .core_model import (
    ModelError,
    Polynomial,
    SUBCLASSES,
    TRIVIAL_SUBCLASSES,
    WpMdp,
    format_rational,
    parse_rational,
    poly_parse,
    validate_model,
)

__all__ = [
    "ReductionReport",
    "model_to_document",
    "document_to_model",
    "read_model",
    "write_model",
    "dumps_report",
    "write_report",
    "import_storm_json",
]


@dataclass
class ReductionReport:
    """Per-stage size counts and timings for one reduction run."""

    name: str
    # (#states, #choices) at: original, after preprocessing, after the
    # under-approximation reduction.
    original: tuple
    preprocessed: tuple
    reduced: tuple
    seconds: dict = field(default_factory=dict)  # stage label -> wall seconds
    outer_iterations: int = 0
    inner_passes: int = 0
    pruned_actions: int = 0
    collapsed_classes: int = 0
    prune_log: list = field(default_factory=list)  # (state, action, rule)
    shrink_curve: list = field(default_factory=list)  # (#st, #ch) per outer iter
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        stages = [self.original, self.preprocessed, self.reduced]
        for (s1, c1), (s2, c2) in zip(stages, stages[1:]):
            if s2 > s1 or c2 > c1:
                raise ValueError(
                    f"stage counts must be non-increasing, got {stages}"
                )

    def row(self) -> list:
        return [
            *self.original,
            *self.preprocessed,
            *self.reduced,
            f"{sum(self.seconds.values()):.3f}",
        ]


_CSV_HEADER = [
    "name",
    "states_original",
    "choices_original",
    "states_preprocessed",
    "choices_preprocessed",
    "states_reduced",
    "choices_reduced",
    "seconds",
]


def model_to_document(m: WpMdp) -> dict:
    """Canonical JSON-ready document for a model (deterministic field order)."""
    states = []
    for s, name in enumerate(m.states):
        entry = {"name": name}
        if s in m.target_weight:
            entry["target_weight"] = format_rational(m.target_weight[s])
        if s == m.fail:
            entry["fail"] = True
        states.append(entry)
    choices = []
    for (s, a) in sorted(m.choices):
        trans = []
        for t, poly in m.choices[(s, a)]:
            entry = {"to": t}
            if not m.is_trivially_parametric:
                entry["poly"] = poly.to_text(m.params)
            trans.append(entry)
        choices.append({"from": s, "action": m.actions[a], "transitions": trans})
    doc = {
        "version": 1,
        "name": m.name,
        "subclass": m.subclass,
        "params": [] if m.is_trivially_parametric else list(m.params),
        "states": states,
        "choices": choices,
    }
    return doc


def document_to_model(doc: dict) -> WpMdp:
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    if doc.get("version") != 1:
        raise ModelError(f"unsupported document version {doc.get('version')!r}")
    subclass = doc.get("subclass")
    if subclass not in SUBCLASSES:
        raise ModelError(f"unknown subclass tag {subclass!r}")
    trivially = subclass in TRIVIAL_SUBCLASSES
    states = []
    target_weight = {}
    fail = None
    for s, entry in enumerate(doc.get("states", [])):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ModelError(f"state entry {s} must be an object with a name")
        states.append(str(entry["name"]))
        if "target_weight" in entry:
            target_weight[s] = parse_rational(str(entry["target_weight"]))
        if entry.get("fail"):
            if fail is not None:
                raise ModelError("more than one state labelled fail")
            fail = s
    if fail is None:
        zero = [s for s, w in target_weight.items() if w == 0]
        if len(zero) == 1:
            fail = zero[0]
        else:
            raise ModelError("exactly one state must be labelled fail")

    params = [str(p) for p in doc.get("params", [])]
    action_index: dict = {}
    actions: list = []
    choices = {}
    synth = 0
    for entry in doc.get("choices", []):
        s = entry.get("from")
        if not isinstance(s, int) or not 0 <= s < len(states):
            raise ModelError(f"choice 'from' index {s!r} out of range")
        if s in target_weight:
            raise ModelError(f"target state {states[s]!r} must not have choices")
        act = str(entry.get("action", "a"))
        if act not in action_index:
            action_index[act] = len(actions)
            actions.append(act)
        a = action_index[act]
        if (s, a) in choices:
            raise ModelError(f"duplicate choice ({states[s]!r}, {act!r})")
        trans = []
        for te in entry.get("transitions", []):
            t = te.get("to")
            if not isinstance(t, int) or not 0 <= t < len(states):
                raise ModelError(f"transition 'to' index {t!r} out of range")
            if trivially:
                if "poly" in te:
                    raise ModelError(
                        "trivially-parametric documents must omit 'poly'"
                    )
                params.append(f"x{synth}")
                synth += 1
                poly = Polynomial.variable(len(params) - 1)
            else:
                if "poly" not in te:
                    raise ModelError(
                        f"transition {states[s]!r}->{states[t]!r} lacks 'poly'"
                    )
                poly = poly_parse(str(te["poly"]), params)
            trans.append((t, poly))
        choices[(s, a)] = tuple(trans)

    m = WpMdp(
        name=str(doc.get("name", "")),
        subclass=subclass,
        states=states,
        actions=actions or ["a"],
        params=params,
        target_weight=target_weight,
        fail=fail,
        choices=choices,
    )
    problems = validate_model(m)
    if problems:
        raise ModelError("; ".join(problems))
    return m


def read_model(path) -> WpMdp:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, list):
        return import_storm_json(doc)
    if "version" not in doc:
        states = doc.get("states")
        if (
            "transitions" in doc
            or "nr-states" in doc
            or (
                isinstance(states, list)
                and states
                and isinstance(states[0], dict)
                and "id" in states[0]
            )
        ):
            return import_storm_json(doc)
    return document_to_model(doc)


def dumps_model(m: WpMdp) -> str:
    return json.dumps(model_to_document(m), indent=2, sort_keys=False) + "\n"


def write_model(m: WpMdp, path) -> None:
    text = dumps_model(m)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def dumps_report(reports, format: str = "csv") -> str:
    """Render a table of per-instance reduction results (CSV or JSON)."""
    if isinstance(reports, ReductionReport):
        reports = [reports]
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_HEADER)
        for r in reports:
            w.writerow([r.name, *r.row()])
        text = buf.getvalue()
    elif format == "json":
        payload = []
        for r in reports:
            payload.append(
                {
                    "name": r.name,
                    "original": {"states": r.original[0], "choices": r.original[1]},
                    "preprocessed": {
                        "states": r.preprocessed[0],
                        "choices": r.preprocessed[1],
                    },
                    "reduced": {"states": r.reduced[0], "choices": r.reduced[1]},
                    "seconds": r.seconds,
                    "outer_iterations": r.outer_iterations,
                    "inner_passes": r.inner_passes,
                    "pruned_actions": r.pruned_actions,
                    "collapsed_classes": r.collapsed_classes,
                    "prune_log": [list(e) for e in r.prune_log],
                    "shrink_curve": [list(e) for e in r.shrink_curve],
                    **({"extra": r.extra} if r.extra else {}),
                }
            )
        text = json.dumps(payload, indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {format!r}")
    return text


def write_report(reports, path, format: str = "csv") -> None:
    """Write a table of per-instance reduction results (CSV or JSON)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_report(reports, format))


def import_storm_json(doc) -> WpMdp:
    """Import a Storm explicit-JSON state list into a model document.

    Accepted dialect: a JSON array of state objects (Storm's
    ``--exportexplicit`` / ``exportjson`` layout), each shaped like
    ``{"id": int, "labels": [...], "transitions": [{"action"?, "dest":
    [{"id": int, "prob": num|str}]}]}``.  Unknown fields are ignored.
    States labelled ``fin``/``target``/``goal`` become weight-1 targets,
    states labelled ``fail`` become the weight-0 fail state (one is
    synthesized if absent).  Constant probabilities are kept as polynomials;
    the result is a (w)pMDP document.
    """
    if isinstance(doc, dict):
        doc = doc.get("states", doc.get("transitions"))
    if not isinstance(doc, list):
        raise ModelError("unrecognized Storm JSON layout")
    names = []
    labels = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict) or "id" not in entry:
            raise ModelError(f"Storm state entry {i} lacks an 'id'")
        names.append(str(entry.get("name", f"s{entry['id']}")))
        labels.append({str(l) for l in entry.get("labels", ())})
    index = {entry["id"]: i for i, entry in enumerate(doc)}

    target_weight = {}
    fail = None
    for i, labs in enumerate(labels):
        if labs & {"fin", "target", "goal"}:
            target_weight[i] = Fraction(1)
        elif "fail" in labs:
            if fail is None:
                fail = i
            target_weight[i] = Fraction(0)
    if fail is None:
        names.append("fail")
        fail = len(names) - 1
        target_weight[fail] = Fraction(0)

    params: list = []
    actions: list = []
    action_index: dict = {}
    choices = {}
    one = Polynomial.const(Fraction(1))
    for i, entry in enumerate(doc):
        if i in target_weight:
            continue
        trans_list = entry.get("transitions", entry.get("choices", []))
        if not trans_list:
            trans_list = [{"dest": [{"id": entry["id"], "prob": 1}]}]
        for k, ch in enumerate(trans_list):
            act = str(ch.get("action", k))
            if act not in action_index:
                action_index[act] = len(actions)
                actions.append(act)
            dest = []
            for d in ch.get("dest", ch.get("transitions", [])):
                t = index.get(d["id"])
                if t is None:
                    raise ModelError(f"Storm transition to unknown id {d['id']!r}")
                prob = d.get("prob", d.get("value", 1))
                if isinstance(prob, str):
                    try:
                        p = Polynomial.const(parse_rational(prob))
                    except (ValueError, ModelError):
                        p = poly_parse(prob, params)
                elif isinstance(prob, float):
                    p = Polynomial.const(Fraction(prob).limit_denominator(10**12))
                else:
                    p = Polynomial.const(Fraction(prob))
                dest.append((t, p))
            choices[(i, action_index[act])] = tuple(dest)

    m = WpMdp(
        name="storm-import",
        subclass="pmdp" if set(target_weight.values()) <= {Fraction(0), Fraction(1)} else "wpmdp",
        states=names,
        actions=actions or ["a"],
        params=params,
        target_weight=target_weight,
        fail=fail,
        choices=choices,
    )
    problems = validate_model(m)
    if problems:
        raise ModelError("; ".join(problems))
    return m
