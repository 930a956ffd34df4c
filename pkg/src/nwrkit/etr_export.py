"""Exact never-worse queries as existential real-arithmetic formulas.

``encode_not_nwr`` emits a sentence that is satisfiable exactly when some
graph-preserving valuation makes the left vertex strictly better than every
vertex of the right-hand set.  An ``unsat`` verdict from a solver therefore
certifies the never-worse relation exactly.  The encoding introduces one
value variable per graph vertex, pins targets to their weights and dead
vertices to zero, expresses state values as maxima over their choices,
nature-vertex values as the transition-weighted sums of successor values,
adds the graph-preservation side conditions (positive transitions, unit row
sums), and finally the strict inequalities against the right-hand set.

Two printers are provided: SMT-LIB 2 over nonlinear real arithmetic (the
format mainstream solvers consume) and a plain-text rendering of the same
formula for documentation.  ``run_solver`` shells out to a configured solver,
parses the verdict, and on ``sat`` extracts, rationalizes, and re-verifies
the assignment by direct evaluation.
"""

from __future__ import annotations

import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .core_model import (
    MdpGraph,
    ModelError,
    NatureV,
    Polynomial,
    StateV,
    Valuation,
    WpMdp,
    build_graph,
)

__all__ = [
    "EtrQuery",
    "SolverVerdict",
    "encode_not_nwr",
    "encode_query",
    "to_smtlib",
    "to_plain_text",
    "run_solver",
]


def _vertex_var(v) -> str:
    if isinstance(v, StateV):
        return f"y_s{v.state}"
    return f"y_n{v.state}_{v.action}"


@dataclass
class EtrQuery:
    """One encoded not-never-worse question.

    ``partition`` holds the four blocks: targets ``T``, dead vertices ``Z``
    (no path to any target), remaining states ``P``, and remaining nature
    vertices ``N``.  ``y_var`` names the value variable of every vertex and
    ``x_var`` the real variable of every model parameter.
    """

    model: WpMdp
    left: object
    right: tuple
    y_var: dict = field(default_factory=dict)
    x_var: dict = field(default_factory=dict)
    partition: dict = field(default_factory=dict)


def _dead_vertices(m: WpMdp, g: MdpGraph) -> set:
    """Vertices with no path to any target state."""
    from collections import deque

    alive = set()
    queue = deque()
    for t in m.targets:
        v = StateV(t)
        alive.add(v)
        queue.append(v)
    while queue:
        v = queue.popleft()
        for u in g.pred[v]:
            if u not in alive:
                alive.add(u)
                queue.append(u)
    return {v for v in g.vertices if v not in alive}


def encode_query(m: WpMdp, v, W) -> EtrQuery:
    """Build the query object: variables plus the T/Z/P/N vertex partition."""
    if not W:
        raise ModelError("the right-hand set of a never-worse query is nonempty")
    g = build_graph(m)
    vertices = set(g.vertices)
    left = v if isinstance(v, (StateV, NatureV)) else StateV(v)
    right = tuple(w if isinstance(w, (StateV, NatureV)) else StateV(w) for w in W)
    for u in (left, *right):
        if u not in vertices:
            raise ModelError(f"vertex {u!r} is not in the model graph")
    dead = _dead_vertices(m, g)
    targets = {StateV(t) for t in m.targets}
    part = {
        "T": sorted(targets, key=_vertex_var),
        "Z": sorted(dead - targets, key=_vertex_var),
        "P": sorted(
            (u for u in vertices if isinstance(u, StateV) and u not in targets and u not in dead),
            key=_vertex_var,
        ),
        "N": sorted(
            (u for u in vertices if isinstance(u, NatureV) and u not in dead),
            key=_vertex_var,
        ),
    }
    query = EtrQuery(model=m, left=left, right=right, partition=part)
    for u in sorted(vertices, key=_vertex_var):
        query.y_var[u] = _vertex_var(u)
    for i, name in enumerate(m.params):
        query.x_var[i] = f"x_{i}"
    return query


# --- formula assembly (dialect-agnostic atoms) -----------------------------


def _poly_smt(p: Polynomial, x_var: dict) -> str:
    """Render a polynomial as an SMT-LIB term."""
    if p.is_zero:
        return "0"
    parts = []
    for mono, coeff in sorted(p.terms.items()):
        factors = []
        if coeff != 1 or not mono:
            factors.append(_rat_smt(coeff))
        for idx, power in mono:
            factors.extend([x_var[idx]] * power)
        parts.append(factors[0] if len(factors) == 1 else "(* " + " ".join(factors) + ")")
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


def _rat_smt(q: Fraction) -> str:
    if q < 0:
        return f"(- {_rat_smt(-q)})"
    if q.denominator == 1:
        return f"{q.numerator}.0"
    return f"(/ {q.numerator}.0 {q.denominator}.0)"


def _poly_text(p: Polynomial, m: WpMdp) -> str:
    return p.to_text(m.params)


def _nature_transitions(m: WpMdp):
    for (s, a), trans in sorted(m.choices.items()):
        yield NatureV(s, a), trans


def to_smtlib(query: EtrQuery) -> str:
    """SMT-LIB 2 script (logic QF_NRA) for the encoded query."""
    m = query.model
    lines = [
        "(set-logic QF_NRA)",
        f"; not-never-worse query on model {m.name!r}:",
        f";   left  {query.y_var[query.left]}",
        ";   right " + " ".join(query.y_var[w] for w in query.right),
    ]
    for var in query.x_var.values():
        lines.append(f"(declare-const {var} Real)")
    for var in query.y_var.values():
        lines.append(f"(declare-const {var} Real)")

    def assert_(term: str) -> None:
        lines.append(f"(assert {term})")

    # Target weights and dead vertices.
    for t in query.partition["T"]:
        w = m.target_weight.get(t.state, Fraction(0))
        assert_(f"(= {query.y_var[t]} {_rat_smt(w)})")
    for z in query.partition["Z"]:
        assert_(f"(= {query.y_var[z]} 0.0)")
    # States: maximum over available choices.
    g = build_graph(m)
    for s in query.partition["P"]:
        succs = g.succ[s]
        ys = query.y_var[s]
        for u in succs:
            assert_(f"(>= {ys} {query.y_var[u]})")
        eqs = " ".join(f"(= {ys} {query.y_var[u]})" for u in succs)
        assert_(eqs if len(succs) == 1 else f"(or {eqs})")
    # Nature vertices: transition-weighted sums.
    nature_set = set(query.partition["N"])
    for n, trans in _nature_transitions(m):
        if n not in nature_set:
            continue
        terms = [
            f"(* {_poly_smt(p, query.x_var)} {query.y_var[StateV(t)]})" for t, p in trans
        ]
        total = terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"
        assert_(f"(= {query.y_var[n]} {total})")
    # Graph preservation: positive transitions, unit row sums.
    for n, trans in _nature_transitions(m):
        row = [_poly_smt(p, query.x_var) for _, p in trans]
        for term in row:
            assert_(f"(> {term} 0.0)")
        total = row[0] if len(row) == 1 else "(+ " + " ".join(row) + ")"
        assert_(f"(= {total} 1.0)")
    # Strictly better than every right-hand vertex.
    for w in query.right:
        assert_(f"(> {query.y_var[query.left]} {query.y_var[w]})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def to_plain_text(query: EtrQuery) -> str:
    """Human-readable rendering of the same existential sentence."""
    m = query.model
    g = build_graph(m)
    out = [
        f"exists {{{', '.join(query.x_var.values())}}} "
        f"{{{', '.join(query.y_var.values())}}} :"
    ]
    for t in query.partition["T"]:
        w = m.target_weight.get(t.state, Fraction(0))
        out.append(f"  {query.y_var[t]} = {w}")
    for z in query.partition["Z"]:
        out.append(f"  {query.y_var[z]} = 0")
    for s in query.partition["P"]:
        succs = g.succ[s]
        ys = query.y_var[s]
        for u in succs:
            out.append(f"  {ys} >= {query.y_var[u]}")
        out.append("  " + " or ".join(f"{ys} = {query.y_var[u]}" for u in succs))
    nature_set = set(query.partition["N"])
    for n, trans in _nature_transitions(m):
        if n not in nature_set:
            continue
        summed = " + ".join(
            f"({_poly_text(p, m)})*{query.y_var[StateV(t)]}" for t, p in trans
        )
        out.append(f"  {query.y_var[n]} = {summed}")
    for n, trans in _nature_transitions(m):
        for t, p in trans:
            out.append(f"  {_poly_text(p, m)} > 0")
        out.append("  " + " + ".join(f"({_poly_text(p, m)})" for _, p in trans) + " = 1")
    for w in query.right:
        out.append(f"  {query.y_var[query.left]} > {query.y_var[w]}")
    return "\n".join(out) + "\n"


def encode_not_nwr(m: WpMdp, v, W, dialect: str = "smtlib") -> str:
    """Encode ¬(v never-worse-than W) in the requested dialect."""
    query = encode_query(m, v, W)
    if dialect == "smtlib":
        return to_smtlib(query)
    if dialect == "text":
        return to_plain_text(query)
    raise ModelError(f"unknown formula dialect {dialect!r}")


# --- running an external solver --------------------------------------------


@dataclass
class SolverVerdict:
    """Outcome of one solver call: status plus a checked model, if any."""

    status: str  # "sat" | "unsat" | "unknown"
    assignment: Optional[dict] = None  # param index -> Fraction
    values: Optional[dict] = None  # y-variable name -> Fraction
    elapsed: float = 0.0
    raw_output: str = ""


_NUM_RE = re.compile(
    r"\(define-fun\s+(\S+)\s+\(\)\s+Real\s+(.*?)\)\s*(?=\(define-fun|\)\s*$|$)",
    re.S,
)


def _parse_real(text: str) -> Fraction:
    text = text.strip()
    neg = False
    while text.startswith("(") and text.endswith(")"):
        inner = text[1:-1].strip()
        if inner.startswith("- "):
            neg = not neg
            text = inner[2:].strip()
        elif inner.startswith("/ "):
            num, den = inner[2:].split()
            val = Fraction(_parse_real(num)) / Fraction(_parse_real(den))
            return -val if neg else val
        else:
            text = inner
    val = Fraction(text.rstrip(")"))
    return -val if neg else val


def run_solver(
    formula: str,
    solver_cmd: str,
    query: Optional[EtrQuery] = None,
    timeout: float = 300.0,
) -> SolverVerdict:
    """Run ``solver_cmd`` on the formula and parse its verdict.

    The command is a template; the temporary file path holding the formula is
    appended as the last argument.  On ``sat`` with a query object, the
    parameter assignment is rationalized and re-verified: the model must be
    graph-preserving and the reported y-values must satisfy every asserted
    (in)equality at that assignment.
    """
    if not solver_cmd:
        raise ModelError("no solver command configured")
    start = time.monotonic()
    with tempfile.NamedTemporaryFile(
        "w", suffix=".smt2", prefix="nwr-query-", delete=False
    ) as fh:
        fh.write(formula)
        path = fh.name
    argv = shlex.split(solver_cmd) + [path]
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=timeout
        )
        output = proc.stdout + proc.stderr
    except FileNotFoundError as exc:
        raise ModelError(f"solver executable not found: {argv[0]}") from exc
    except subprocess.TimeoutExpired:
        return SolverVerdict(
            status="unknown", elapsed=time.monotonic() - start, raw_output="timeout"
        )
    finally:
        Path(path).unlink(missing_ok=True)
    elapsed = time.monotonic() - start

    status = None
    for token in output.split():
        if token in ("sat", "unsat", "unknown"):
            status = token
            break
    if status is None:
        if proc.returncode != 0:
            raise ModelError(
                f"solver exited with status {proc.returncode} and no verdict: "
                f"{output.strip()[:200]!r}"
            )
        status = "unknown"
    verdict = SolverVerdict(status=status, elapsed=elapsed, raw_output=output)
    if status != "sat":
        return verdict

    bindings = {}
    for name, value in _NUM_RE.findall(output):
        try:
            bindings[name] = _parse_real(value)
        except (ValueError, ZeroDivisionError):
            continue
    if query is not None:
        assignment = {
            idx: bindings[var] for idx, var in query.x_var.items() if var in bindings
        }
        values = {var: bindings[var] for var in query.y_var.values() if var in bindings}
        verdict.assignment = assignment
        verdict.values = values
        _reverify(query, assignment, values)
    return verdict


def _reverify(query: EtrQuery, assignment: dict, values: dict) -> None:
    """Check a sat model: graph preservation plus every encoded constraint."""
    m = query.model
    val = dict(assignment)
    for n, trans in _nature_transitions(m):
        total = Fraction(0)
        for t, p in trans:
            prob = p.evaluate(val)
            if prob <= 0:
                raise ModelError(
                    f"solver model is not graph-preserving at {n!r} -> state {t}"
                )
            total += prob
        if total != 1:
            raise ModelError(f"solver model row sum at {n!r} is {total}, not 1")
    if not values:
        return
    g = build_graph(m)
    y = lambda u: values.get(query.y_var[u])

    def known(*us):
        return all(y(u) is not None for u in us)

    for t in query.partition["T"]:
        if y(t) is not None and y(t) != m.target_weight.get(t.state, Fraction(0)):
            raise ModelError(f"solver model breaks the target equality at {t!r}")
    for z in query.partition["Z"]:
        if y(z) is not None and y(z) != 0:
            raise ModelError(f"solver model breaks the dead-vertex equality at {z!r}")
    for s in query.partition["P"]:
        succs = g.succ[s]
        if not known(s, *succs):
            continue
        if any(y(s) < y(u) for u in succs) or all(y(s) != y(u) for u in succs):
            raise ModelError(f"solver model breaks the maximum equation at {s!r}")
    nature_set = set(query.partition["N"])
    for n, trans in _nature_transitions(m):
        if n not in nature_set:
            continue
        states = [StateV(t) for t, _ in trans]
        if not known(n, *states):
            continue
        total = sum(p.evaluate(val) * y(StateV(t)) for t, p in trans)
        if y(n) != total:
            raise ModelError(f"solver model breaks the sum equation at {n!r}")
    if known(query.left, *query.right):
        if any(y(query.left) <= y(w) for w in query.right):
            raise ModelError("solver model does not witness the strict inequalities")
