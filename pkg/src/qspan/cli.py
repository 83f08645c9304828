"""Command-line entry point: ``qspan <command> [options]``.

Exit status is 0 on success, 2 when inputs or configuration fail
validation, and 1 on any other runtime error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from . import convert, decider, harness, invariants, numerics, phasesim, spanprog
from .apps import advice, programs, trees

log = logging.getLogger("qspan")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(rows) -> None:
    s = harness.summarize(rows)
    print("# summary " + " ".join(s.lines()))


def _load_program(args) -> spanprog.SpanProgram:
    if args.span:
        return spanprog.load(args.span)
    if args.or_n:
        return programs.build_or_program(args.or_n)
    if args.graph:
        return programs.build_st_connectivity(programs.load_edge_list(args.graph))
    raise harness.HarnessError("give one of --span, --or or --graph")


def cmd_witness(args) -> int:
    p = _load_program(args)
    if args.complement:
        p = spanprog.complement(p)
    rep = spanprog.witness(p, args.input)
    print(f"kind={rep.kind} size={rep.size:.10g}")
    return EXIT_OK


def cmd_decide(args) -> int:
    p = _load_program(args)
    setup = harness.prepare_decision(p)
    cfg = decider.DecisionRunConfig(args.delta)
    rows = harness.decide_trials(setup, cfg, args.trials, args.seed, args.input, args.timing)
    meta = {"delta": args.delta, "w_plus": f"{setup.w_plus:.6g}",
            "w_minus": f"{setup.w_minus:.6g}", "seed": args.seed}
    _emit(harness.trials_csv("decide", rows, meta), args.out)
    _summary(rows)
    return EXIT_OK


def _vector_set(args):
    if args.cvs:
        return convert.load(args.cvs)
    if args.tree:
        t = trees.load_tree(args.tree)
        return trees.tree_to_cvs(t, list(itertools.product(range(t.q), repeat=t.n)))
    raise harness.HarnessError("give --cvs or --tree")


def cmd_convert(args) -> int:
    c = _vector_set(args)
    inputs = args.input or [c.domain[0]]
    if args.verify:
        rows = harness.verify_trials(c, inputs, args.delta, args.trials, args.seed, args.timing)
        kind = "verify"
    else:
        rows = harness.convert_trials(c, inputs, args.epsilon, args.delta, args.trials, args.seed,
                                      args.timing)
        kind = "convert"
    meta = {"epsilon": args.epsilon, "delta": args.delta, "seed": args.seed}
    _emit(harness.trials_csv(kind, rows, meta), args.out)
    _summary(rows)
    return EXIT_OK


def _grid(args) -> tuple[int, ...]:
    if args.n:
        return tuple(args.n)
    lo, hi = (int(v) for v in args.grid.split(":"))
    return tuple(2 ** e for e in range(lo, hi + 1))


def cmd_experiment(args) -> int:
    if args.kind == "advice-separation":
        cfg = harness.SeparationConfig(
            ns=_grid(args), k=args.k, mode=args.mode, p_plus=args.p_plus, trials=args.trials,
            seed=args.seed, epsilon=args.epsilon, delta=args.delta, strict=args.strict,
            timing=args.timing,
        )
        quantum = None if args.quantum_max_n is None else \
            [n for n in cfg.ns if n <= args.quantum_max_n]
        records = harness.advice_separation_experiment(cfg, quantum)
        for r in records:
            if r.status == "infeasible":
                log.warning("n=%d: support of %d inputs exceeds the domain cap; "
                            "quantum column left empty", r.n, r.support)
        _emit(harness.separation_csv(records, cfg), args.out)
        if args.trials_out:
            rows = [row for r in records for row in r.rows]
            if rows:
                Path(args.trials_out).write_text(
                    harness.trials_csv("advice-separation-trials", rows, {"seed": args.seed}))
        classical = harness.loglog_slope(cfg.ns, [r.classical_mean for r in records])
        quantum_slope = harness.loglog_slope(cfg.ns, [r.quantum_mean for r in records])
        print(f"# summary classical_slope={classical:.4f} quantum_slope={quantum_slope:.4f}")
        return EXIT_OK
    if args.kind == "verify-search":
        n = args.n[0] if args.n else 8
        t = trees.build_search_tree(n, "find-both")
        c = trees.tree_to_cvs(t, advice.support_domain(n, "find-both"))
        ones = [int(v) for v in args.ones.split(",")] if args.ones else [0, 1]
        x = tuple(1 if i in ones else 0 for i in range(n))
        rows = harness.verify_trials(c, [x], args.delta, args.trials, args.seed, args.timing)
        _emit(harness.trials_csv("verify-search", rows, {"n": n, "seed": args.seed}), args.out)
        _summary(rows)
        return EXIT_OK
    raise harness.HarnessError(f"unknown experiment {args.kind!r}")


def cmd_check_invariants(args) -> int:
    results = invariants.run_all(args.seed, args.module)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark} {r.module}: {r.name} {r.detail}".rstrip())
    passed = sum(r.passed for r in results)
    print(f"# summary passed={passed} failed={len(results) - passed}")
    return EXIT_OK if passed == len(results) else EXIT_INVALID


def _add_program_source(sp) -> None:
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--span", help="span program JSON file")
    g.add_argument("--or", dest="or_n", type=int, help="built-in OR program on n bits")
    g.add_argument("--graph", help="edge-list file for st-connectivity")


def _add_run_options(sp, delta=0.1) -> None:
    sp.add_argument("--delta", type=float, default=delta)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="write the CSV here instead of standard output")
    sp.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte equality)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qspan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    w = sub.add_parser("witness", help="witness kind and size of one input")
    _add_program_source(w)
    w.add_argument("--input", required=True)
    w.add_argument("--complement", action="store_true")
    w.set_defaults(func=cmd_witness)

    d = sub.add_parser("decide", help="run the decision algorithm")
    _add_program_source(d)
    d.add_argument("--input", action="append", help="fixed input (repeatable); default uniform")
    _add_run_options(d)
    d.set_defaults(func=cmd_decide)

    c = sub.add_parser("convert", help="run state conversion or verified evaluation")
    src = c.add_mutually_exclusive_group()
    src.add_argument("--cvs", help="converting vector set JSON file")
    src.add_argument("--tree", help="decision tree JSON file")
    c.add_argument("--input", action="append")
    c.add_argument("--epsilon", type=float, default=0.5)
    c.add_argument("--verify", action="store_true", help="verified evaluation instead")
    _add_run_options(c)
    c.set_defaults(func=cmd_convert)

    e = sub.add_parser("experiment", help="batch experiments")
    e.add_argument("kind", choices=["advice-separation", "verify-search"])
    e.add_argument("--config", help="JSON file whose keys mirror the flags")
    e.add_argument("--n", type=int, action="append")
    e.add_argument("--grid", default="6:10", help="exponent range lo:hi for n = 2^e")
    e.add_argument("--k", type=float, default=-1.75)
    e.add_argument("--mode", choices=advice.MODES, default="find-both")
    e.add_argument("--p-plus", type=float, default=1.0)
    e.add_argument("--epsilon", type=float, default=0.5)
    e.add_argument("--ones", help="comma-separated positions of the ones (verify-search)")
    e.add_argument("--quantum-max-n", type=int, help="skip the quantum column above this n")
    e.add_argument("--strict", action="store_true", help="fail instead of skipping infeasible n")
    e.add_argument("--trials-out", help="also write per-trial rows here")
    _add_run_options(e, delta=0.25)
    e.set_defaults(func=cmd_experiment)

    ci = sub.add_parser("check-invariants", help="run the randomized property checks")
    ci.add_argument("--seed", type=int, default=0)
    ci.add_argument("--module", action="append", choices=list(invariants.REGISTRY))
    ci.set_defaults(func=cmd_check_invariants)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when present."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise harness.HarnessError("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(k.replace("-", "_") for k in cfg) - known
    if unknown:
        raise harness.HarnessError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    return parser.parse_args(argv)


_INVALID = (
    _ArgumentError, OSError, json.JSONDecodeError, KeyError,
    spanprog.SpanProgramError, convert.ConversionError, decider.DecisionError,
    harness.HarnessError, trees.TreeError, advice.AdviceError, programs.GraphError,
    phasesim.PhaseSimError, numerics.DimensionError, numerics.NotUnitaryError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else is a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
