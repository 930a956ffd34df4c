"""Command-line surface: reduce / validate / mc-equiv / export-etr / bench.

Exit codes: 0 success (or validated), 1 violation found, 2 usage error,
3 input/output error, 4 external-tool failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from pathlib import Path

from .core_model import (
    ModelError,
    NatureV,
    StateV,
    WpMdp,
    normalize_targets,
    validate_model,
)
from .deweight import deweight_pmdp, deweight_tpmdp
from .etr_export import encode_query, run_solver, to_smtlib
from .graph_analysis import contract_extremal, mec_quotient
from .mc_equiv import mc_collapse, mc_equiv_classes
from .model_io import (
    dumps_model,
    dumps_report,
    read_model,
    write_model,
    write_report,
)
from .nwr_reduce import PruneConfig, reduce
from .oracle import check_value_preservation

__all__ = ["main", "build_parser"]

SOLVER_ENV = "NWRKIT_SOLVER"

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_TOOL = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 2 on any usage problem
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nwrkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common_io(sp, out=True):
        sp.add_argument("--in", dest="input", required=True, help="input model (JSON)")
        if out:
            sp.add_argument("--out", dest="output", help="output model path")
        sp.add_argument("--report", help="report output path (default: stdout)")
        sp.add_argument(
            "--format", choices=("csv", "json"), default="csv", help="report format"
        )

    def prune_flags(sp):
        sp.add_argument("--setup", type=int, choices=(1, 2), default=1)
        sp.add_argument("--inner", type=int, help="inner-loop pass limit override")
        sp.add_argument("--outer", type=int, help="outer-loop iteration limit override")
        sp.add_argument(
            "--no-skip-first",
            action="store_true",
            help="run the inner loop during the first outer iteration too",
        )
        sp.add_argument(
            "--enable-membership-edges",
            action="store_true",
            help="also add member-wise edges when new vertex sets are recorded",
        )

    sp = sub.add_parser("reduce", help="reduce a model, write it and a report")
    common_io(sp)
    prune_flags(sp)

    sp = sub.add_parser("validate", help="re-run a reduction and check values")
    common_io(sp)
    prune_flags(sp)
    sp.add_argument("--samples", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("mc-equiv", help="equivalence classes of a Markov chain")
    common_io(sp)

    sp = sub.add_parser("export-etr", help="encode a never-worse query for a solver")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", dest="output", help="formula output path")
    sp.add_argument("left", help="left vertex: STATE or STATE/ACTION")
    sp.add_argument("right", nargs="+", help="right vertices: STATE or STATE/ACTION")
    sp.add_argument("--solve", action="store_true", help="run the configured solver")
    sp.add_argument(
        "--solver-cmd",
        default=None,
        help=f"solver command template (default: ${SOLVER_ENV})",
    )

    sp = sub.add_parser("bench", help="reduce every model in a directory")
    sp.add_argument("--in", dest="input", required=True, help="directory of models")
    sp.add_argument("--report", help="aggregated report path (default: stdout)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--jobs", type=int, default=1)
    prune_flags(sp)
    return p


def _prune_config(args) -> PruneConfig:
    cfg = PruneConfig.setup(args.setup)
    if args.inner is not None:
        cfg.inner_limit = args.inner
    if args.outer is not None:
        cfg.outer_limit = args.outer
    if args.no_skip_first:
        cfg.skip_first_outer_inner = False
    if args.enable_membership_edges:
        cfg.enable_superset_membership_edges = True
    return cfg


def _load(path: str) -> WpMdp:
    try:
        m = read_model(path)
    except (OSError, json.JSONDecodeError, ModelError) as exc:
        raise _CliError(EXIT_IO, f"cannot read model {path!r}: {exc}")
    problems = validate_model(m)
    if problems:
        raise _CliError(EXIT_IO, f"invalid model {path!r}: " + "; ".join(problems))
    return m


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _pipeline(m: WpMdp, cfg: PruneConfig):
    """normalize -> (deweight if weighted) -> reduce; returns (m', report, stages)."""
    current = normalize_targets(m)
    deweight_map = None
    if current.is_weighted:
        if current.is_trivially_parametric:
            current, deweight_map = deweight_tpmdp(current)
        else:
            current, deweight_map = deweight_pmdp(current)
    reduced, report, stages = reduce(current, cfg)
    report.extra["deweighted"] = deweight_map is not None
    return reduced, report, stages, current, deweight_map


def _emit_report(reports, args) -> None:
    if args.report:
        write_report(reports, args.report, format=args.format)
    else:
        sys.stdout.write(dumps_report(reports, format=args.format))


def cmd_reduce(args) -> int:
    m = _load(args.input)
    cfg = _prune_config(args)
    reduced, report, _stages, _norm, _dw = _pipeline(m, cfg)
    if args.output:
        try:
            write_model(reduced, args.output)
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot write {args.output!r}: {exc}")
    _emit_report([report], args)
    if reduced.num_states <= 2:
        print(f"note: {m.name} is completely reduced", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    m = _load(args.input)
    cfg = _prune_config(args)
    reduced, _report, stages, origin, _deweight_map = _pipeline(m, cfg)
    if args.output:
        try:
            expected = Path(args.output).read_text(encoding="utf-8")
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot read reduced model: {exc}")
        if dumps_model(reduced) != expected:
            print(
                "violation: reduced model does not match the recorded output",
                file=sys.stderr,
            )
            return EXIT_VIOLATION
    if args.samples <= 0:
        print("warning: no samples requested, nothing checked", file=sys.stderr)
        return EXIT_OK
    check_stages = stages
    if not origin.is_trivially_parametric:
        print(
            "warning: sampling valuations needs a trivially-parametric model; "
            "nothing checked",
            file=sys.stderr,
        )
        return EXIT_OK
    result = check_value_preservation(
        origin, check_stages, n_samples=args.samples, seed=args.seed
    )
    if result.violations:
        for v in result.violations[:20]:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VIOLATION
    print(
        f"validated: {len(check_stages)} stages x {args.samples} samples, "
        "no violations",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_mc_equiv(args) -> int:
    raw = _load(args.input)
    # The chain-equivalence algorithm expects extremal-value states to be
    # contracted already; run the shared preprocessing first.
    m = normalize_targets(raw)
    m, _ = contract_extremal(m)
    m, _ = mec_quotient(m)
    try:
        partition = mc_equiv_classes(m)
    except ModelError as exc:
        raise _CliError(EXIT_USAGE, str(exc))
    doc = {
        "model": m.name,
        "preprocessed": {"states": m.num_states, "choices": m.num_choices},
        "classes": [
            {"members": [m.states[s] for s in members], "exit": m.states[exit_s]}
            for members, exit_s in (
                (members, partition.exit_of[i])
                for i, members in enumerate(partition.classes)
            )
        ],
        "diagnostics": list(partition.diagnostics),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.output:
        collapsed, _stage = mc_collapse(m, partition)
        write_model(collapsed, args.output)
    return EXIT_OK


def _parse_vertex(m: WpMdp, token: str):
    if "/" in token:
        state_name, action_name = token.split("/", 1)
    else:
        state_name, action_name = token, None
    try:
        s = m.states.index(state_name)
    except ValueError:
        raise _CliError(EXIT_USAGE, f"unknown state name {state_name!r}")
    if action_name is None:
        return StateV(s)
    try:
        a = m.actions.index(action_name)
    except ValueError:
        raise _CliError(EXIT_USAGE, f"unknown action name {action_name!r}")
    if (s, a) not in m.choices:
        raise _CliError(EXIT_USAGE, f"state {state_name!r} has no action {action_name!r}")
    return NatureV(s, a)


def cmd_export_etr(args) -> int:
    m = _load(args.input)
    left = _parse_vertex(m, args.left)
    right = [_parse_vertex(m, tok) for tok in args.right]
    try:
        query = encode_query(m, left, right)
    except ModelError as exc:
        raise _CliError(EXIT_USAGE, str(exc))
    formula = to_smtlib(query)
    if args.output:
        try:
            Path(args.output).write_text(formula, encoding="utf-8")
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot write {args.output!r}: {exc}")
    else:
        sys.stdout.write(formula)
    if not args.solve:
        return EXIT_OK
    solver_cmd = args.solver_cmd or os.environ.get(SOLVER_ENV)
    if not solver_cmd:
        raise _CliError(
            EXIT_USAGE,
            f"--solve needs --solver-cmd or the {SOLVER_ENV} environment variable",
        )
    try:
        verdict = run_solver(formula, solver_cmd, query)
    except ModelError as exc:
        raise _CliError(EXIT_TOOL, str(exc))
    print(f"verdict: {verdict.status} ({verdict.elapsed:.2f}s)")
    if verdict.status == "sat" and verdict.assignment is not None:
        for idx in sorted(verdict.assignment):
            print(f"  {m.params[idx]} = {verdict.assignment[idx]}")
    return EXIT_OK


def _bench_one(path: str, setup: int, inner, outer, no_skip, membership):
    ns = argparse.Namespace(
        setup=setup,
        inner=inner,
        outer=outer,
        no_skip_first=no_skip,
        enable_membership_edges=membership,
    )
    cfg = _prune_config(ns)
    started = time.monotonic()
    m = read_model(path)
    _reduced, report, _stages, _n, _d = _pipeline(m, cfg)
    report.seconds.setdefault("total", time.monotonic() - started)
    return report


def cmd_bench(args) -> int:
    directory = Path(args.input)
    if not directory.is_dir():
        raise _CliError(EXIT_IO, f"{args.input!r} is not a directory")
    paths = sorted(str(p) for p in directory.glob("*.json"))
    reports = []
    failures = []
    work = [
        (p, args.setup, args.inner, args.outer, args.no_skip_first,
         args.enable_membership_edges)
        for p in paths
    ]
    if args.jobs > 1 and len(work) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(_bench_one, *w): w[0] for w in work}
            for fut in concurrent.futures.as_completed(futures):
                path = futures[fut]
                try:
                    reports.append(fut.result())
                except Exception as exc:  # record and continue
                    failures.append((path, str(exc)))
    else:
        for w in work:
            try:
                reports.append(_bench_one(*w))
            except Exception as exc:
                failures.append((w[0], str(exc)))
    reports.sort(key=lambda r: r.name)
    _emit_report(reports, args)
    for path, message in failures:
        print(f"failed: {path}: {message}", file=sys.stderr)
    return EXIT_VIOLATION if failures else EXIT_OK


_COMMANDS = {
    "reduce": cmd_reduce,
    "validate": cmd_validate,
    "mc-equiv": cmd_mc_equiv,
    "export-etr": cmd_export_etr,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
