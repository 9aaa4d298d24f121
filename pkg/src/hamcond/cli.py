"""Command-line entry point: ``hamcond <subcommand> ...``.

Exit codes: 0 success, 1 a correctly determined negative answer, 2 a usage
or input error, 3 a cap or budget was hit (including the engine giving up).
JSON goes to stdout unless ``--out`` names a file. Wall-clock fields are
left out unless ``--timing`` is passed, so a fixed seed reproduces the
output byte for byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import CapExceeded, EngineFailure, HamcondError
from .graph import format_edge_list, read_edge_list, verify_hamilton_cycle
from .params import Parameters

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    def __init__(self, message: str, hint: str = ""):
        super().__init__(message)
        self.hint = hint


def _dump(obj) -> str:
    from .experiments import _json_default

    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _strip(obj, timing: bool):
    from .experiments import strip_timing

    return obj if timing else strip_timing(obj)


def _seed(value: str) -> int:
    try:
        s = int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}")
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return s


def _positive(value: str) -> int:
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


# subcommands ---------------------------------------------------------------


def cmd_sample(args) -> int:
    from .sampler import sample_outcome

    params = Parameters.for_profile(args.profile, args.n, args.m)
    out = sample_outcome(args.n, args.m, np.random.default_rng(args.seed), params, mode=args.mode)
    diag = out.diagnostics.to_dict() | {"retries": out.retries, "z": out.model.z, "seed": args.seed}
    if args.format == "json":
        d = out.digraph
        _emit(_dump({"n": d.n, "m": d.m, "edges": list(zip(d.tails.tolist(), d.heads.tolist())), "diagnostics": diag}), args.out)
        return EXIT_OK
    _emit(format_edge_list(out.digraph), args.out)
    text = _dump(diag)
    if args.out:
        Path(args.out + ".diag.json").write_text(text)
    elif args.diagnostics:
        Path(args.diagnostics).write_text(text)
    else:
        sys.stderr.write(text)
    return EXIT_OK


def cmd_hamilton(args) -> int:
    from .hamilton import Policy, find_hamilton
    from .sampler import sample_outcome

    rng = np.random.default_rng(args.seed)
    if args.input:
        d = read_edge_list(args.input)
    else:
        if args.n is None or args.m is None:
            raise UsageError("hamilton needs --n and --m, or --in FILE", "add --n N --m M or --in graph.txt")
        d = sample_outcome(args.n, args.m, rng, Parameters.for_profile(args.profile, args.n, args.m)).digraph
    params = Parameters.for_profile(args.profile, d.n, d.m)
    policy = Policy(max_restarts=args.restarts, exact_fallback=args.exact_fallback, exact_limit=args.exact_limit)
    res = find_hamilton(d, params, rng, policy)
    _emit(_dump(_strip(res.to_dict(), args.timing)), args.out)
    if res.found:
        return EXIT_OK
    return EXIT_CAP if res.status == "engine_gave_up" else EXIT_NEGATIVE


def cmd_count(args) -> int:
    from .oracle import count_asymptotic

    report = count_asymptotic(args.n, args.m, exact=True if args.exact else None, rel_tol=args.rel_tol)
    _emit(_dump(report.to_dict()), args.out)
    return EXIT_OK


def _read_cycle(path: str) -> list[int]:
    text = Path(path).read_text().strip()
    if text.startswith(("[", "{")):
        data = json.loads(text)
        if isinstance(data, dict):
            data = data.get("cycle")
        if not isinstance(data, list):
            raise UsageError(f"{path}: no cycle list found", "pass a JSON list or the output of 'hamcond hamilton'")
        return [int(v) for v in data]
    try:
        return [int(tok) for tok in text.split()]
    except ValueError:
        raise UsageError(f"{path}: cycle must be whitespace-separated vertex ids", "write one 0-based id per token")


def cmd_verify(args) -> int:
    d = read_edge_list(args.input)
    cycle = _read_cycle(args.cycle)
    ok = verify_hamilton_cycle(d, cycle)
    _emit(_dump({"valid": ok, "n": d.n, "length": len(cycle)}), args.out)
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_experiment(args) -> int:
    from . import experiments as ex
    from .params import threshold_m

    kind = args.kind
    if kind in ("uniformity", "equivalence"):
        m = args.m
        if m is None:
            if not args.c or len(args.c) != 1:
                raise UsageError(f"{kind} needs --m M or a single --c value", "add --m 4")
            m = threshold_m(args.n, args.c[0])
        if kind == "uniformity":
            report = ex.run_uniformity(args.n, m, args.samples or args.trials, args.seed, mode=args.mode)
        else:
            report = ex.run_equivalence(args.n, m, args.trials, args.seed, workers=args.workers)
        _emit(_dump(report), args.out)
        return EXIT_OK
    cfg = ex.ExperimentConfig(
        n=args.n,
        c_values=args.c or [-2, -1, 0, 1, 2],
        trials=args.trials,
        seed=args.seed,
        profile=args.profile,
        estimators=tuple(args.estimators or ["engine"]),
        exact_limit=args.exact_limit,
        exact_fallback=args.exact_fallback,
        workers=args.workers,
    )
    run = {"threshold": ex.run_threshold, "matching": ex.run_matching_threshold, "obstruction": ex.run_obstruction_law}[kind]
    result = run(cfg)
    if args.format == "json":
        _emit(result.to_json(args.timing) + "\n", args.out)
    else:
        _emit(result.to_csv(), args.out)
        if args.out:
            Path(args.out + ".json").write_text(result.to_json(args.timing) + "\n")
    if args.gnuplot:
        Path(args.gnuplot).write_text(result.gnuplot_script(args.out or "threshold.csv"))
    return EXIT_OK if all(p["valid"] for p in result.points) else EXIT_CAP


# parser --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, seed: bool = True, fmt: tuple[str, ...] = ("json",)) -> None:
    if seed:
        p.add_argument("--seed", type=_seed, required=True, help="64-bit base seed (required)")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk", help="constant profile (default: desk)")
    p.add_argument("--out", help="write the primary output here instead of stdout")
    p.add_argument("--format", choices=fmt, default=fmt[0], help=f"output format (default: {fmt[0]})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamcond",
        description="Random digraphs with minimum in/out-degree one: sampling, Hamilton cycles, counting, experiments.",
        epilog="exit codes: 0 ok, 1 determined negative, 2 usage error, 3 cap/budget hit",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser(
        "sample",
        help="draw a uniform simple digraph with n vertices, m arcs, min degree >= 1",
        description="Writes the edge list (header 'n m', then one 'u v' line per arc, 0-based). "
        "Diagnostics JSON {delta, loops, multis, s1, small, switches, retries, z, seed} goes to "
        "OUT.diag.json with --out, to --diagnostics if given, else to stderr. --format json "
        "prints {n, m, edges, diagnostics} instead.",
    )
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--m", type=_positive, required=True)
    p.add_argument("--mode", choices=("auto", "reject", "switch"), default="auto", help="simple-pairing strategy")
    p.add_argument("--diagnostics", help="path for the diagnostics JSON when writing to stdout")
    _common(p, fmt=("edgelist", "json"))
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser(
        "hamilton",
        help="search for a Hamilton cycle in a sampled or given digraph",
        description="Prints {found, status, cycle, trace}. status is found, obstruction_found, "
        "exact_negative or engine_gave_up. Exit 0 when found, 1 for a certified negative, "
        "3 when the engine gave up.",
    )
    p.add_argument("--n", type=_positive)
    p.add_argument("--m", type=_positive)
    p.add_argument("--in", dest="input", help="edge-list file to search instead of sampling")
    p.add_argument("--restarts", type=int, default=3, help="engine restarts after a failed attempt")
    p.add_argument("--exact-fallback", action="store_true", help="decide exactly when the engine gives up")
    p.add_argument("--exact-limit", type=int, default=200, help="largest n for the exact fallback")
    p.add_argument("--timing", action="store_true", help="keep wall-clock fields in the trace")
    _common(p)
    p.set_defaults(func=cmd_hamilton)

    p = sub.add_parser(
        "count",
        help="asymptotic and exact counts of digraphs with min degree >= 1",
        description="Prints the count report: z, sigma, three log-asymptotic variants, exact count "
        "(as a decimal string) and ratios, plus the surjection count |Omega_1| check. Without "
        "--exact the exact count is computed only when enumeration would be feasible.",
    )
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--m", type=_positive, required=True)
    p.add_argument("--exact", action="store_true", help="always compute the exact count by inclusion-exclusion")
    p.add_argument("--rel-tol", type=float, default=0.0, help="certified relative truncation of the exact sum")
    _common(p, seed=False)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser(
        "verify",
        help="check that a vertex sequence is a Hamilton cycle of a digraph",
        description="Reads an edge list (--in) and a cycle (--cycle): whitespace-separated ids, a JSON "
        "list, or 'hamcond hamilton' output. Prints {valid, n, length}; exit 0 if valid, else 1.",
    )
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--cycle", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser(
        "experiment",
        help="Monte Carlo sweeps: threshold, matching, obstruction, uniformity, equivalence",
        description="threshold/matching/obstruction sweep c with m = ceil(n/2 (log n + 2 log log n + c)) "
        "and write CSV rows (n,c,m,trials,p_hat,lo95,hi95,prediction); with --out the per-trial JSON "
        "goes to OUT.json. uniformity and equivalence print a JSON report. HAMCOND_THREADS bounds the "
        "worker pool.",
    )
    p.add_argument("kind", choices=("threshold", "matching", "obstruction", "uniformity", "equivalence"))
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--c", type=float, nargs="+", help="c values (default: -2 -1 0 1 2)")
    p.add_argument("--m", type=_positive, help="arc count for uniformity/equivalence")
    p.add_argument("--trials", type=_positive, default=100)
    p.add_argument("--samples", type=_positive, help="uniformity sample count (default: --trials)")
    p.add_argument("--estimators", nargs="+", choices=("engine", "exact", "matching", "obstruction"))
    p.add_argument("--exact-limit", type=int, default=200)
    p.add_argument("--exact-fallback", action="store_true")
    p.add_argument("--workers", type=_positive, help="worker processes (default: HAMCOND_THREADS or CPUs)")
    p.add_argument("--mode", choices=("auto", "reject", "switch"), default="auto")
    p.add_argument("--gnuplot", metavar="PATH", help="also write a gnuplot script for the curve")
    p.add_argument("--timing", action="store_true", help="keep wall-clock fields in the JSON")
    _common(p, fmt=("csv", "json"))
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hamcond: error: {exc}" + (f" (hint: {exc.hint})" if exc.hint else ""), file=sys.stderr)
        return EXIT_USAGE
    except (CapExceeded, EngineFailure) as exc:
        print(f"hamcond: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, OSError, HamcondError) as exc:
        print(f"hamcond: error: {exc} (hint: see 'hamcond {args.command} --help')", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
