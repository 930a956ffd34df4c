"""Ground-truth value engines and sampling/falsification harnesses.

These are deliberately independent of the reduction machinery: exact values
are obtained either by brute-force enumeration of memoryless deterministic
strategies (each evaluated by an exact rational linear solve) or by exact
policy iteration, and the two engines cross-check each other in the test
suite.  A float Gauss-Seidel value iteration covers larger instances.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core_model import (
    ModelError,
    NatureV,
    StateV,
    Valuation,
    Vertex,
    WpMdp,
    poly_eval,
)

__all__ = [
    "ValueVector",
    "sample_valuation",
    "is_graph_preserving",
    "solve_exact",
    "solve_iterative",
    "check_value_preservation",
    "falsify_nwr",
    "ENUMERATION_CAP",
]

ENUMERATION_CAP = 2 ** 20
_AUTO_ENUMERATION_LIMIT = 4096
_EPS = Fraction(1, 64)  # adversarial-profile mass


def sample_valuation(m: WpMdp, seed: int, profile: str = "dirichlet") -> Valuation:
    """Sample a graph-preserving valuation of a trivially-parametric model.

    ``profile`` is ``"dirichlet"`` (uniform-ish random rational masses) or
    ``"adversarial"`` (one successor gets almost all the mass, the rest get
    1/64 each).  Deterministic per seed.
    """
    if not m.is_trivially_parametric:
        raise ModelError(
            "sample_valuation supports trivially-parametric models only; "
            "general parametric rows need an ETR solver to invert"
        )
    rng = random.Random(seed)
    assignment = {}
    for (s, a), trans in sorted(m.choices.items()):
        k = len(trans)
        if profile == "adversarial":
            if k == 1:
                probs = [Fraction(1)]
            else:
                heavy = rng.randrange(k)
                probs = [
                    Fraction(1) - (k - 1) * _EPS if i == heavy else _EPS
                    for i in range(k)
                ]
        else:
            weights = [rng.randint(1, 64) for _ in range(k)]
            total = sum(weights)
            probs = [Fraction(w, total) for w in weights]
        for (t, p), q in zip(trans, probs):
            var = p.single_variable()
            if var is None:
                raise ModelError("trivially-parametric transition without its own variable")
            assignment[var] = q
    return Valuation(assignment)


def is_graph_preserving(m: WpMdp, val: Valuation) -> bool:
    """Check every transition evaluates positive and every row sums to 1."""
    for (s, a), trans in m.choices.items():
        total = Fraction(0)
        for t, p in trans:
            if p.is_zero:
                continue
            q = poly_eval(p, val)
            if q <= 0:
                return False
            total += q
        if total != 1:
            return False
    return True


@dataclass
class ValueVector:
    """Optimal values per vertex plus the optimal action per state."""

    values: dict
    best_action: dict
    exact: bool
    converged: bool = True
    iterations: int = 0

    def of_state(self, s: int):
        return self.values[StateV(s)]


def _concrete(m: WpMdp, val: Valuation) -> dict:
    """Concrete positive-probability distributions per choice."""
    out = {}
    for (s, a), trans in m.choices.items():
        dist = [(t, poly_eval(p, val)) for t, p in trans if not p.is_zero]
        out[(s, a)] = [(t, q) for t, q in dist if q != 0]
    return out


def _cannot_reach(targets, succ_of, all_states) -> set:
    """States with no path into ``targets`` through ``succ_of``."""
    pred = {s: set() for s in all_states}
    for s in all_states:
        for t in succ_of(s):
            pred[t].add(s)
    seen = set(targets)
    queue = deque(seen)
    while queue:
        v = queue.popleft()
        for u in pred[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return {s for s in all_states if s not in seen}


def _solve_chain(m: WpMdp, dist_of, policy) -> dict:
    """Exact state values of the chain induced by ``policy``.

    States that cannot reach a target in the induced chain are pinned to 0;
    the remaining linear system is solved by rational Gaussian elimination.
    """
    n = m.num_states
    succs = {}
    for s in range(n):
        if m.is_target(s) or s not in policy:
            succs[s] = []
        else:
            succs[s] = [t for t, _ in dist_of[(s, policy[s])]]
    zero = _cannot_reach(set(m.target_weight), lambda s: succs[s], range(n))
    unknown = [
        s for s in range(n) if not m.is_target(s) and s not in zero
    ]
    idx = {s: i for i, s in enumerate(unknown)}
    k = len(unknown)
    # Row i: x_i - sum p * x_j = constant from target/zero successors.
    matrix = [[Fraction(0)] * (k + 1) for _ in range(k)]
    for s in unknown:
        i = idx[s]
        matrix[i][i] = Fraction(1)
        for t, q in dist_of[(s, policy[s])]:
            if m.is_target(t):
                matrix[i][k] += q * m.target_weight[t]
            elif t in zero:
                pass
            else:
                matrix[i][idx[t]] -= q
    # Gaussian elimination with partial (first nonzero) pivoting.
    for col in range(k):
        pivot = next((r for r in range(col, k) if matrix[r][col] != 0), None)
        if pivot is None:
            raise ModelError("singular policy evaluation system")
        matrix[col], matrix[pivot] = matrix[pivot], matrix[col]
        inv = 1 / matrix[col][col]
        matrix[col] = [x * inv for x in matrix[col]]
        for r in range(k):
            if r != col and matrix[r][col] != 0:
                f = matrix[r][col]
                matrix[r] = [x - f * y for x, y in zip(matrix[r], matrix[col])]
    values = {s: Fraction(0) for s in range(n)}
    for t, w in m.target_weight.items():
        values[t] = w
    for s in unknown:
        values[s] = matrix[idx[s]][k]
    return values


def _finish(m: WpMdp, dist_of, state_values, exact: bool, iterations=0, converged=True):
    values = {StateV(s): state_values[s] for s in range(m.num_states)}
    best = {}
    for (s, a), dist in dist_of.items():
        v = sum((q * state_values[t] for t, q in dist), start=Fraction(0) if exact else 0.0)
        values[NatureV(s, a)] = v
        cur = best.get(s)
        if cur is None or v > values[NatureV(s, cur)]:
            best[s] = a
    return ValueVector(values, best, exact, converged, iterations)


def _strategy_count(m: WpMdp) -> int:
    count = 1
    for s in range(m.num_states):
        acts = m.actions_of(s)
        if acts and not m.is_target(s):
            count *= len(acts)
            if count > ENUMERATION_CAP:
                return count
    return count


def solve_exact(m: WpMdp, val: Valuation, method: str = "auto") -> ValueVector:
    """Exact optimal values under ``val``.

    ``method``: ``"enumerate"`` (brute force over memoryless deterministic
    strategies, componentwise max), ``"policy"`` (exact policy iteration), or
    ``"auto"`` (enumerate when few strategies, else policy iteration).
    Enumeration refuses instances beyond 2^20 strategies.
    """
    dist_of = _concrete(m, val)
    decision_states = [
        s for s in range(m.num_states) if m.actions_of(s) and not m.is_target(s)
    ]
    if method == "auto":
        method = (
            "enumerate" if _strategy_count(m) <= _AUTO_ENUMERATION_LIMIT else "policy"
        )
    if method == "enumerate":
        if _strategy_count(m) > ENUMERATION_CAP:
            raise ModelError("instance too large for strategy enumeration")
        best_values = None
        policy = {s: m.actions_of(s)[0] for s in decision_states}
        # Single-action states are fixed by the initial policy; only branch
        # on real decisions so recursion depth stays small.
        stack_order = [s for s in decision_states if len(m.actions_of(s)) > 1]

        def enumerate_from(i: int):
            nonlocal best_values
            if i == len(stack_order):
                vals = _solve_chain(m, dist_of, policy)
                if best_values is None:
                    best_values = dict(vals)
                else:
                    for s, v in vals.items():
                        if v > best_values[s]:
                            best_values[s] = v
                return
            s = stack_order[i]
            for a in m.actions_of(s):
                policy[s] = a
                enumerate_from(i + 1)

        enumerate_from(0)
        if best_values is None:  # no decision states: single (empty) strategy
            best_values = _solve_chain(m, dist_of, {})
        return _finish(m, dist_of, best_values, exact=True)

    if method != "policy":
        raise ModelError(f"unknown method {method!r}")

    policy = {s: m.actions_of(s)[0] for s in decision_states}
    iterations = 0
    while True:
        iterations += 1
        values = _solve_chain(m, dist_of, policy)
        changed = False
        for s in decision_states:
            cur = values[s]
            best_a, best_v = policy[s], cur
            for a in m.actions_of(s):
                v = sum((q * values[t] for t, q in dist_of[(s, a)]), start=Fraction(0))
                if v > best_v:
                    best_a, best_v = a, v
            if best_v > cur:
                policy[s] = best_a
                changed = True
        if not changed:
            return _finish(m, dist_of, values, exact=True, iterations=iterations)


def solve_iterative(
    m: WpMdp, val: Valuation, tol: float = 1e-10, max_iters: int = 10 ** 6
) -> ValueVector:
    """Float Gauss-Seidel value iteration from the zero vector.

    States that cannot reach any target through the support graph are pinned
    to 0 first, which makes the fixpoint unique.
    """
    dist_of = {k: [(t, float(q)) for t, q in v] for k, v in _concrete(m, val).items()}
    n = m.num_states
    succ_union = {s: set() for s in range(n)}
    for (s, a), dist in dist_of.items():
        succ_union[s] |= {t for t, _ in dist}
    zero = _cannot_reach(set(m.target_weight), lambda s: succ_union[s], range(n))
    x = [0.0] * n
    for t, w in m.target_weight.items():
        x[t] = float(w)
    sweep_states = [
        s
        for s in range(n)
        if not m.is_target(s) and s not in zero and m.actions_of(s)
    ]
    iterations = 0
    converged = False
    while iterations < max_iters:
        iterations += 1
        residual = 0.0
        for s in sweep_states:
            new = max(
                sum(q * x[t] for t, q in dist_of[(s, a)]) for a in m.actions_of(s)
            )
            residual = max(residual, abs(new - x[s]))
            x[s] = new
        if residual <= tol:
            converged = True
            break
    state_values = {s: x[s] for s in range(n)}
    return _finish(
        m, dist_of, state_values, exact=False, iterations=iterations, converged=converged
    )


def lift_valuation(old: WpMdp, old_values, new: WpMdp, stage, val: Valuation) -> Valuation:
    """Transport a valuation of ``old`` through one reduction stage.

    Each new choice descends from one or more old choices (same successor set
    after mapping); the distribution of the best-valued provenance choice is
    pushed through the state map, merging masses of successors with the same
    image and renormalizing away mass of dropped (intra-class) successors.
    """
    dist_of = _concrete(old, val)
    assignment = {}
    for (ns, na), trans in sorted(new.choices.items()):
        provs = stage.choice_prov.get((ns, na))
        if not provs:
            raise ModelError(f"stage {stage.label!r} lacks provenance for choice ({ns},{na})")
        new_succs = [t for t, _ in trans]
        best = None
        for (s, a) in provs:
            q = {u: Fraction(0) for u in new_succs}
            for t, p in dist_of[(s, a)]:
                u = stage.state_map[t]
                if u in q:
                    q[u] += p
            total = sum(q.values())
            if total == 0:
                continue
            dist = {u: p / total for u, p in q.items()}
            # Prefer the provenance choice that was best in the old model.
            score = old_values[NatureV(s, a)]
            if best is None or score > best[0]:
                best = (score, dist)
        if best is None:
            raise ModelError("provenance distribution lost all mass")
        for t, p in trans:
            var = p.single_variable()
            if var is None:
                raise ModelError("lift_valuation requires a trivially-parametric stage output")
            assignment[var] = best[1][t]
    return Valuation(assignment)


@dataclass
class PreservationReport:
    samples: int = 0
    violations: list = field(default_factory=list)
    max_delta: Fraction = Fraction(0)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_value_preservation(
    original: WpMdp, stages, n_samples: int = 20, seed: int = 0
) -> PreservationReport:
    """Verify that every reduction stage preserved optimal values exactly.

    ``stages`` is a sequence of ``(model_after, StageMap)`` pairs as produced
    by the reduction pipeline.  For each sampled valuation of the original
    model the valuation is lifted stage by stage and the optimal value of
    every state is compared with its image's value (states merged into
    ``fin``/``fail`` must have value exactly 1/0).
    """
    report = PreservationReport()
    for i in range(n_samples):
        profile = "adversarial" if i % 2 else "dirichlet"
        val = sample_valuation(original, seed + i, profile)
        model = original
        values = solve_exact(model, val)
        report.samples += 1
        for model_after, stage in stages:
            val2 = lift_valuation(model, values.values, model_after, stage, val)
            values2 = solve_exact(model_after, val2)
            for s in range(model.num_states):
                expected = values.of_state(s)
                got = values2.of_state(stage.state_map[s])
                if got != expected:
                    delta = abs(got - expected)
                    report.max_delta = max(report.max_delta, delta)
                    report.violations.append(
                        {
                            "sample": i,
                            "stage": stage.label,
                            "state": model.states[s],
                            "expected": str(expected),
                            "got": str(got),
                        }
                    )
            model, values, val = model_after, values2, val2
    return report


def falsify_nwr(
    m: WpMdp, v: Vertex, W, n_samples: int = 50, seed: int = 0
) -> Optional[Valuation]:
    """Search sampled valuations for a witness that ``v`` is *not* never-worse
    than ``W``: a valuation with Rew*(v) > max over W.  ``None`` proves
    nothing; a returned valuation is a certified counterexample."""
    W = list(W)
    if not W:
        raise ModelError("W must be nonempty")
    for i in range(n_samples):
        profile = "adversarial" if i % 2 == 0 else "dirichlet"
        val = sample_valuation(m, seed + i, profile)
        values = solve_exact(m, val)
        if values.values[v] > max(values.values[w] for w in W):
            return val
    return None
