"""Exact-arithmetic core types for weighted/parametric Markov decision processes.

A model (``WpMdp``) is an explicit-state MDP whose transition entries are
multivariate polynomials with rational coefficients.  Four subclasses are
distinguished by a tag:

- ``wpmdp``: weighted parametric — target states carry rational weights.
- ``pmdp``: non-weighted parametric — targets are exactly ``fin`` (weight 1)
  and ``fail`` (weight 0).
- ``wtpmdp``: weighted *trivially* parametric — every transition polynomial is
  a distinct fresh variable, so only the support graph matters.
- ``tpmdp``: non-weighted trivially parametric.

The analysis graph (``MdpGraph``) is a bipartite digraph over *state* vertices
and *nature* vertices (state-action pairs): there is an edge from state ``s``
to nature vertex ``(s, a)`` iff some transition of ``(s, a)`` has a successor
other than ``fail`` with a polynomial not syntactically zero, and an edge from
``(s, a)`` to ``s'`` iff the transition polynomial to ``s'`` is not
syntactically zero.

All types are immutable after construction (treat attributes as read-only).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Union

__all__ = [
    "Polynomial",
    "poly_parse",
    "poly_eval",
    "parse_rational",
    "format_rational",
    "WpMdp",
    "StateV",
    "NatureV",
    "Vertex",
    "MdpGraph",
    "Valuation",
    "normalize_targets",
    "build_graph",
    "validate_model",
    "ModelError",
    "SUBCLASSES",
    "WEIGHTED_SUBCLASSES",
    "TRIVIAL_SUBCLASSES",
]

SUBCLASSES = ("wpmdp", "pmdp", "wtpmdp", "tpmdp")
WEIGHTED_SUBCLASSES = ("wpmdp", "wtpmdp")
TRIVIAL_SUBCLASSES = ("wtpmdp", "tpmdp")


class ModelError(ValueError):
    """Raised for malformed models or expressions."""


def parse_rational(text: str) -> Fraction:
    """Parse ``int`` or ``int/uint`` into an exact rational."""
    text = text.strip()
    if "/" in text:
        num, _, den = text.partition("/")
        try:
            n = int(num.strip())
            d = int(den.strip())
        except ValueError:
            raise ModelError(f"bad rational literal: {text!r}") from None
        if d <= 0:
            raise ModelError(f"rational denominator must be positive: {text!r}")
        return Fraction(n, d)
    try:
        return Fraction(int(text))
    except ValueError:
        raise ModelError(f"bad rational literal: {text!r}") from None


def format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


# A monomial is a sorted tuple of (parameter index, positive power) pairs;
# the empty tuple is the constant monomial.
Monomial = tuple


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    powers = dict(a)
    for idx, p in b:
        powers[idx] = powers.get(idx, 0) + p
    return tuple(sorted(powers.items()))


def _mono_degree(m: Monomial) -> int:
    return sum(p for _, p in m)


class Polynomial:
    """Sparse multivariate polynomial over exact rationals.

    Terms map monomials (tuples of ``(param_index, power)``) to nonzero
    ``Fraction`` coefficients.  An empty term map is the *syntactic* zero,
    which the model semantics distinguish from an entry that merely evaluates
    to zero.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[Mapping[Monomial, Fraction]] = None):
        cleaned = {}
        if terms:
            for mono, coeff in terms.items():
                coeff = Fraction(coeff)
                if coeff != 0:
                    cleaned[tuple(sorted((i, p) for i, p in mono if p))] = coeff
        object.__setattr__(self, "terms", cleaned)

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("Polynomial is immutable")

    @classmethod
    def const(cls, value) -> "Polynomial":
        return cls({(): Fraction(value)})

    @classmethod
    def variable(cls, index: int) -> "Polynomial":
        return cls({((index, 1),): Fraction(1)})

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return not self.terms or set(self.terms) == {()}

    def constant_value(self) -> Fraction:
        if not self.is_constant:
            raise ModelError("polynomial is not constant")
        return self.terms.get((), Fraction(0))

    def single_variable(self) -> Optional[int]:
        """Return the parameter index if this polynomial is exactly one variable."""
        if len(self.terms) == 1:
            (mono, coeff), = self.terms.items()
            if coeff == 1 and len(mono) == 1 and mono[0][1] == 1:
                return mono[0][0]
        return None

    def parameters(self) -> set:
        out = set()
        for mono in self.terms:
            for idx, _ in mono:
                out.add(idx)
        return out

    def __add__(self, other: "Polynomial") -> "Polynomial":
        terms = dict(self.terms)
        for mono, coeff in other.terms.items():
            terms[mono] = terms.get(mono, Fraction(0)) + coeff
        return Polynomial(terms)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        terms = dict(self.terms)
        for mono, coeff in other.terms.items():
            terms[mono] = terms.get(mono, Fraction(0)) - coeff
        return Polynomial(terms)

    def __neg__(self) -> "Polynomial":
        return Polynomial({m: -c for m, c in self.terms.items()})

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        terms = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = _mono_mul(m1, m2)
                terms[mono] = terms.get(mono, Fraction(0)) + c1 * c2
        return Polynomial(terms)

    def __pow__(self, power: int) -> "Polynomial":
        if power < 0:
            raise ModelError("negative exponent")
        result = Polynomial.const(1)
        base = self
        while power:
            if power & 1:
                result = result * base
            base = base * base
            power >>= 1
        return result

    def evaluate(self, assignment: Mapping[int, Fraction]) -> Fraction:
        total = Fraction(0)
        for mono, coeff in self.terms.items():
            value = coeff
            for idx, p in mono:
                if idx not in assignment:
                    raise ModelError(f"unassigned parameter index {idx}")
                value *= assignment[idx] ** p
            total += value
        return total

    def shift_params(self, offset: int) -> "Polynomial":
        return Polynomial(
            {tuple((i + offset, p) for i, p in mono): c for mono, c in self.terms.items()}
        )

    def remap_params(self, mapping: Mapping[int, int]) -> "Polynomial":
        return Polynomial(
            {tuple(sorted((mapping[i], p) for i, p in mono)): c for mono, c in self.terms.items()}
        )

    def to_text(self, param_names: Sequence[str]) -> str:
        """Canonical text, terms in descending graded-lexicographic order."""
        if not self.terms:
            return "0"

        def key(mono: Monomial):
            return (-_mono_degree(mono), mono)

        pieces = []
        for mono in sorted(self.terms, key=key):
            coeff = self.terms[mono]
            factors = []
            for idx, p in mono:
                name = param_names[idx]
                factors.append(name if p == 1 else f"{name}^{p}")
            mag = abs(coeff)
            if not factors:
                body = format_rational(mag)
            elif mag == 1:
                body = "*".join(factors)
            else:
                body = "*".join([format_rational(mag)] + factors)
            pieces.append(("-" if coeff < 0 else "+", body))
        sign, body = pieces[0]
        out = body if sign == "+" else f"-{body}"
        for sign, body in pieces[1:]:
            out += f" {sign} {body}"
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self) -> int:
        return hash(frozenset(self.terms.items()))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Polynomial({self.terms!r})"


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> Optional[str]:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        return self.text[self.pos] if self.pos < len(self.text) else None

    def error(self, message: str):
        raise ModelError(f"{message} at position {self.pos} in {self.text!r}")


def poly_parse(text: str, param_names: Sequence[str]) -> Polynomial:
    """Parse an expression over ``+ - * ^ ( )``, rationals and parameter names.

    Grammar: ``expr := term (('+'|'-') term)*; term := factor ('*' factor)*;
    factor := rational | ident | factor '^' uint | '(' expr ')'``.
    """
    index = {name: i for i, name in enumerate(param_names)}
    tz = _Tokenizer(text)

    def parse_uint() -> int:
        ch = tz.peek()
        if ch is None or not ch.isdigit():
            tz.error("expected integer")
        start = tz.pos
        while tz.pos < len(tz.text) and tz.text[tz.pos].isdigit():
            tz.pos += 1
        return int(tz.text[start : tz.pos])

    def parse_factor() -> Polynomial:
        ch = tz.peek()
        if ch is None:
            tz.error("unexpected end of expression")
        if ch == "(":
            tz.pos += 1
            inner = parse_expr()
            if tz.peek() != ")":
                tz.error("expected ')'")
            tz.pos += 1
            result = inner
        elif ch.isdigit():
            num = parse_uint()
            if tz.peek() == "/":
                tz.pos += 1
                den = parse_uint()
                if den == 0:
                    tz.error("zero denominator")
                result = Polynomial.const(Fraction(num, den))
            else:
                result = Polynomial.const(num)
        elif ch.isalpha() or ch == "_":
            start = tz.pos
            while tz.pos < len(tz.text) and (tz.text[tz.pos].isalnum() or tz.text[tz.pos] in "_'"):
                tz.pos += 1
            name = tz.text[start : tz.pos]
            if name not in index:
                tz.error(f"unknown parameter {name!r}")
            result = Polynomial.variable(index[name])
        else:
            tz.error(f"unexpected character {ch!r}")
        while tz.peek() == "^":
            tz.pos += 1
            result = result ** parse_uint()
        return result

    def parse_term() -> Polynomial:
        result = parse_factor()
        while tz.peek() == "*":
            tz.pos += 1
            result = result * parse_factor()
        return result

    def parse_expr() -> Polynomial:
        negate = False
        if tz.peek() == "-":
            tz.pos += 1
            negate = True
        result = parse_term()
        if negate:
            result = -result
        while tz.peek() in ("+", "-"):
            op = tz.peek()
            tz.pos += 1
            rhs = parse_term()
            result = result + rhs if op == "+" else result - rhs
        return result

    result = parse_expr()
    if tz.peek() is not None:
        tz.error("trailing input")
    return result


class Valuation:
    """Assignment of exact rationals to parameter indices."""

    __slots__ = ("assignment",)

    def __init__(self, assignment: Mapping[int, Fraction]):
        object.__setattr__(
            self, "assignment", {i: Fraction(v) for i, v in assignment.items()}
        )

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("Valuation is immutable")

    def __getitem__(self, index: int) -> Fraction:
        return self.assignment[index]

    def __repr__(self) -> str:  # pragma: no cover
        return f"Valuation({self.assignment!r})"


def poly_eval(p: Polynomial, val: Valuation) -> Fraction:
    """Evaluate ``p`` at ``val`` exactly."""
    return p.evaluate(val.assignment)


class StateV(NamedTuple):
    state: int

    def pretty(self, m: "WpMdp") -> str:
        return m.states[self.state]


class NatureV(NamedTuple):
    state: int
    action: int

    def pretty(self, m: "WpMdp") -> str:
        return f"({m.states[self.state]},{m.actions[self.action]})"


Vertex = Union[StateV, NatureV]


def vertex_sort_key(v: Vertex):
    """Canonical order: states by index, then nature vertices by (state, action)."""
    if isinstance(v, StateV):
        return (0, v.state, 0)
    return (1, v.state, v.action)


class WpMdp:
    """Explicit-state weighted parametric MDP.

    ``choices`` maps ``(state, action)`` to a tuple of ``(successor,
    Polynomial)`` transitions.  Target states have no choices.  ``fail`` is the
    designated weight-0 target.  Immutable after construction.
    """

    __slots__ = (
        "name",
        "subclass",
        "states",
        "actions",
        "params",
        "target_weight",
        "fail",
        "choices",
        "_actions_of",
    )

    def __init__(
        self,
        *,
        name: str,
        subclass: str,
        states: Sequence[str],
        actions: Sequence[str],
        params: Sequence[str],
        target_weight: Mapping[int, Fraction],
        fail: int,
        choices: Mapping[tuple, Sequence[tuple]],
    ):
        if subclass not in SUBCLASSES:
            raise ModelError(f"unknown subclass {subclass!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "subclass", subclass)
        object.__setattr__(self, "states", tuple(states))
        object.__setattr__(self, "actions", tuple(actions))
        object.__setattr__(self, "params", tuple(params))
        object.__setattr__(
            self,
            "target_weight",
            {s: Fraction(w) for s, w in sorted(target_weight.items())},
        )
        object.__setattr__(self, "fail", fail)
        object.__setattr__(
            self,
            "choices",
            {
                (s, a): tuple((t, p) for t, p in trans)
                for (s, a), trans in sorted(choices.items())
            },
        )
        actions_of = {}
        for (s, a) in self.choices:
            actions_of.setdefault(s, []).append(a)
        object.__setattr__(
            self, "_actions_of", {s: tuple(sorted(al)) for s, al in actions_of.items()}
        )

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("WpMdp is immutable")

    # --- basic queries -------------------------------------------------
    @property
    def is_weighted(self) -> bool:
        return self.subclass in WEIGHTED_SUBCLASSES

    @property
    def is_trivially_parametric(self) -> bool:
        return self.subclass in TRIVIAL_SUBCLASSES

    def is_target(self, s: int) -> bool:
        return s in self.target_weight

    @property
    def targets(self) -> tuple:
        return tuple(self.target_weight)

    def targets_by_weight(self) -> list:
        """Targets sorted by ascending weight (ties by index)."""
        return sorted(self.target_weight, key=lambda s: (self.target_weight[s], s))

    def actions_of(self, s: int) -> tuple:
        return self._actions_of.get(s, ())

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_choices(self) -> int:
        return len(self.choices)

    def transition_prob(self, s: int, a: int, val: Valuation) -> list:
        """Concrete distribution of choice ``(s, a)`` under ``val``."""
        return [(t, poly_eval(p, val)) for t, p in self.choices[(s, a)]]

    def fresh_state_name(self, base: str) -> str:
        existing = set(self.states)
        return _fresh(base, existing)

    def fresh_action_name(self, base: str) -> str:
        return _fresh(base, set(self.actions))

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"WpMdp({self.name!r}, {self.subclass}, |S|={self.num_states}, "
            f"|choices|={self.num_choices})"
        )


def _fresh(base: str, existing: set) -> str:
    if base not in existing:
        return base
    k = 2
    while f"{base}{k}" in existing:
        k += 1
    return f"{base}{k}"


class MdpGraph:
    """Bipartite analysis graph over state and nature vertices."""

    __slots__ = ("vertices", "succ", "pred")

    def __init__(self, vertices: Iterable[Vertex], succ: Mapping[Vertex, Iterable[Vertex]]):
        vs = tuple(sorted(vertices, key=vertex_sort_key))
        sc = {v: tuple(sorted(succ.get(v, ()), key=vertex_sort_key)) for v in vs}
        pr = {v: [] for v in vs}
        for v, outs in sc.items():
            for w in outs:
                pr[w].append(v)
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "succ", sc)
        object.__setattr__(
            self, "pred", {v: tuple(sorted(ps, key=vertex_sort_key)) for v, ps in pr.items()}
        )

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("MdpGraph is immutable")

    def successors(self, v: Vertex) -> tuple:
        return self.succ[v]

    def predecessors(self, v: Vertex) -> tuple:
        return self.pred[v]


def build_graph(m: WpMdp) -> MdpGraph:
    """Construct the bipartite analysis graph of ``m``.

    A state has an edge to its nature vertex ``(s, a)`` only if some
    not-syntactically-zero transition of ``(s, a)`` leads to a state other
    than ``fail`` (the fail-exclusion clause); a nature vertex has an edge to
    every successor with a not-syntactically-zero transition polynomial.
    """
    vertices = [StateV(s) for s in range(m.num_states)]
    succ = {v: [] for v in vertices}
    for (s, a), trans in m.choices.items():
        nv = NatureV(s, a)
        outs = [StateV(t) for t, p in trans if not p.is_zero]
        if not outs:
            continue
        vertices.append(nv)
        succ[nv] = outs
        if any(t.state != m.fail for t in outs):
            succ[StateV(s)].append(nv)
    return MdpGraph(vertices, succ)


def validate_model(m: WpMdp) -> list:
    """Return a list of human-readable invariant violations (empty iff valid)."""
    diags = []
    n = m.num_states
    for s in m.target_weight:
        if not (0 <= s < n):
            diags.append(f"target index {s} out of range")
        if m.actions_of(s):
            diags.append(f"target {m.states[s]!r} is not a sink")
    if m.fail not in m.target_weight:
        diags.append("fail state is not a target")
    elif m.target_weight[m.fail] != 0:
        diags.append("fail state has nonzero weight")
    for s, w in m.target_weight.items():
        if w < 0:
            diags.append(f"negative weight on target {m.states[s]!r}")
    if not m.is_weighted:
        weights = sorted(m.target_weight.values())
        if weights != [Fraction(0), Fraction(1)] or len(m.target_weight) != 2:
            diags.append("non-weighted model must have exactly targets fin (1) and fail (0)")
    seen_vars = set()
    for (s, a), trans in m.choices.items():
        if not (0 <= s < n):
            diags.append(f"choice from state index {s} out of range")
            continue
        if not (0 <= a < len(m.actions)):
            diags.append(f"choice ({s},{a}) action index out of range")
        if s in m.target_weight:
            continue  # already reported as non-sink
        if not trans:
            diags.append(f"choice ({m.states[s]},{m.actions[a]}) has no transitions")
            continue
        succs = [t for t, _ in trans]
        if len(set(succs)) != len(succs):
            diags.append(f"choice ({m.states[s]},{m.actions[a]}) has duplicate successors")
        constant_row = True
        row_sum = Fraction(0)
        for t, p in trans:
            if not (0 <= t < n):
                diags.append(f"transition to state index {t} out of range")
            for idx in p.parameters():
                if not (0 <= idx < len(m.params)):
                    diags.append(f"transition polynomial references parameter index {idx} out of range")
            if p.is_zero:
                diags.append(
                    f"choice ({m.states[s]},{m.actions[a]}) stores a syntactic-zero transition"
                )
            if m.is_trivially_parametric:
                var = p.single_variable()
                if var is None:
                    diags.append(
                        f"trivially-parametric choice ({m.states[s]},{m.actions[a]}) "
                        "has a non-variable polynomial"
                    )
                elif var in seen_vars:
                    diags.append(
                        f"variable {m.params[var]!r} used on more than one transition"
                    )
                else:
                    seen_vars.add(var)
            if p.is_constant:
                row_sum += p.constant_value()
            else:
                constant_row = False
        if constant_row and not m.is_trivially_parametric and row_sum != 1:
            diags.append(
                f"constant-only row ({m.states[s]},{m.actions[a]}) sums to "
                f"{row_sum}, expected 1"
            )
    return diags


def normalize_targets(m: WpMdp) -> WpMdp:
    """Merge equal-weight targets and guarantee a weight-0 ``fail`` target.

    Targets sharing a weight are merged by redirecting all but one (the
    lowest-indexed) to the survivor via a probability-1 choice and removing
    them from the target set; the resulting weights are strictly increasing
    from 0.  Negative weights are rejected.
    """
    for s, w in m.target_weight.items():
        if w < 0:
            raise ModelError(f"negative target weight on {m.states[s]!r}")

    states = list(m.states)
    actions = list(m.actions)
    params = list(m.params)
    target_weight = dict(m.target_weight)
    choices = {k: list(v) for k, v in m.choices.items()}
    fail = m.fail

    def redirect_poly() -> Polynomial:
        if m.is_trivially_parametric:
            params.append(_fresh(f"p{len(params)}", set(params)))
            return Polynomial.variable(len(params) - 1)
        return Polynomial.const(1)

    if actions:
        redirect_action = 0
    else:
        actions.append("a")
        redirect_action = 0

    # Group targets by weight; lowest index represents the group.
    by_weight = {}
    for s in sorted(target_weight):
        by_weight.setdefault(target_weight[s], []).append(s)
    for w, members in sorted(by_weight.items()):
        rep = members[0]
        for t in members[1:]:
            del target_weight[t]
            choices[(t, redirect_action)] = [(rep, redirect_poly())]

    # Guarantee fail: the (now unique) weight-0 target, inserted when missing.
    zero = [s for s, w in target_weight.items() if w == 0]
    if zero:
        fail = zero[0]
    else:
        states.append(_fresh("fail", set(states)))
        fail = len(states) - 1
        target_weight[fail] = Fraction(0)

    return WpMdp(
        name=m.name,
        subclass=m.subclass,
        states=states,
        actions=actions,
        params=params,
        target_weight=target_weight,
        fail=fail,
        choices=choices,
    )
