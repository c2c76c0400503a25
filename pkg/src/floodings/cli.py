"""Command-line entry point: ``floodings <command> [options]``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from .entropy import beta
from .errors import BudgetExhausted, FloodingError
from .experiments import run_suite, suites
from .flooding import read_trace, simulate, to_trace, uniform_policy
from .labeling import peak_mask, sample_conditioned
from .metric_graph import GraphPoint, load_graph, subdivide
from .tree_optimal import centroid, optimal_flooding

EXIT_OK, EXIT_GATE, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    graph: str | None = None
    m: int = 1
    n: int = 1
    trials: int = 1000
    seed: int = 0
    eps: float = 0.1
    out: str | None = None
    format: str = "text"


def positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def point_arg(text: str) -> GraphPoint:
    try:
        edge, offset = text.split(":")
        return GraphPoint(int(edge), float(offset))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected EDGE:OFFSET, got {text}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floodings", description="Optimal floodings of metric graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, graph=True):
        if graph:
            p.add_argument("--graph", required=True, help="edge-list file: 'u v length' per line")
        p.add_argument("--out", help="write the main output here instead of stdout")
        p.add_argument("--format", choices=("text", "csv"), default="text")
        return p

    common(sub.add_parser("centroid", help="centroid of a metric tree"))

    p = common(sub.add_parser("flood", help="simulate a flooding and print its trace"))
    p.add_argument("--m", type=positive_int, default=1, help="number of sources")
    p.add_argument("--policy", choices=("uniform", "optimal"), default="optimal")
    p.add_argument("--source", type=point_arg, action="append", default=[],
                   help="source as EDGE:OFFSET (repeatable); defaults to the optimal sources")

    p = common(sub.add_parser("beta", help="entropy of a flooding trace"), graph=False)
    p.add_argument("trace", help="trace file written by 'flood'")

    p = common(sub.add_parser("sample", help="conditioned random labelings of a subdivision graph"))
    p.add_argument("--n", type=positive_int, default=1, help="subdivision level")
    p.add_argument("--m", type=positive_int, default=1, help="number of peaks")
    p.add_argument("--trials", type=positive_int, default=1000)
    p.add_argument("--seed", type=nonnegative_int, default=0)
    p.add_argument("--budget", type=positive_int, default=10**7, help="maximum rejection draws")
    p.add_argument("--method", choices=("rejection", "tree", "auto"), default="rejection")
    p.add_argument("--hist", help="write the peak histogram CSV here")
    p.add_argument("--jobs", type=positive_int, default=os.cpu_count() or 1)

    p = common(sub.add_parser("validate", help="run experiment suites; exit 0 iff all gates pass"), graph=False)
    p.add_argument("suite", help="suite name or 'all': " + ", ".join(suites()))
    p.add_argument("--fast", action="store_true", help="smaller Monte Carlo sizes")
    p.add_argument("--seed", type=nonnegative_int, default=0)
    p.add_argument("--eps", type=positive_float, default=0.1)
    p.add_argument("--jobs", type=positive_int, default=os.cpu_count() or 1)
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_centroid(args) -> int:
    c = centroid(load_graph(args.graph))
    _emit(f"{c.edge},{c.offset!r}\n" if args.format == "csv" else f"edge {c.edge} offset {c.offset!r}\n", args.out)
    return EXIT_OK


def cmd_flood(args) -> int:
    g = load_graph(args.graph)
    if args.policy == "optimal":
        if args.source:
            raise SystemExit("error: usage: --source is only valid with --policy uniform")
        f = optimal_flooding(g, args.m).flooding
    else:
        sources = args.source or optimal_flooding(g, args.m).plan.sources
        if len(sources) != args.m:
            raise SystemExit(f"error: usage: {len(sources)} sources given but --m {args.m}")
        f = simulate(g, sources, uniform_policy)
    _emit(to_trace(f), args.out)
    return EXIT_OK


def cmd_beta(args) -> int:
    with open(args.trace) as fh:
        f = read_trace(fh.read())
    _emit(f"{beta(f).beta!r}\n", args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    g = load_graph(args.graph)
    sub = subdivide(g, args.n)
    result = sample_conditioned(sub, args.m, args.trials, seed=args.seed, budget=args.budget,
                                method=args.method, jobs=args.jobs)
    peaks = peak_mask(sub.adjacency, result.labels)
    dump = "".join(
        f"{args.seed} {i} {int(p.sum())} " + " ".join(map(str, row)) + "\n"
        for i, (row, p) in enumerate(zip(result.labels.tolist(), peaks))
    )
    counts = peaks.sum(axis=0)
    hist = "vertex,count,frequency\n" + "".join(
        f"{v},{int(c)},{c / args.trials:.10g}\n" for v, c in enumerate(counts)
    )
    print(f"# draws {result.draws} acceptance_rate {result.acceptance_rate:.6g}", file=sys.stderr)
    if args.hist:
        _emit(hist, args.hist)
        _emit(dump, args.out)
    elif args.out:
        _emit(dump, args.out)
        sys.stdout.write(hist)
    else:
        sys.stdout.write(dump + hist)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        reports = run_suite(args.suite, fast=args.fast, seed=args.seed, jobs=args.jobs)
    except KeyError:
        raise SystemExit(f"error: usage: unknown suite {args.suite!r}; choose from all, {', '.join(suites())}")
    if args.format == "csv":
        text = "name,expected,computed,tolerance,pass\n" + "".join(
            ",".join(line.split(" ")) + "\n" for r in reports for line in r.lines()
        )
    else:
        text = "\n".join(r.text() for r in reports) + "\n"
    _emit(text, args.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_GATE


COMMANDS = {"centroid": cmd_centroid, "flood": cmd_flood, "beta": cmd_beta,
            "sample": cmd_sample, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_INPUT
        raise
    except BudgetExhausted as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (FloodingError, OSError) as exc:
        code = exc.code if isinstance(exc, FloodingError) else type(exc).__name__
        print(f"error: {code}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
