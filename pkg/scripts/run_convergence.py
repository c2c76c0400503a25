"""Convergence study of empirical floodings towards the single-source optimum.

Writes one CSV per graph (n, median beta, beta*, fraction within eps, median
distance) into the output directory.

    python3 scripts/run_convergence.py --n 4 8 16 32 --trials 200 --out results
"""
import argparse
from pathlib import Path

from floodings import generators
from floodings.experiments import run_convergence

GRAPHS = {"segment": generators.segment, "star": lambda: generators.star(1, 1, 1)}


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--graph", choices=sorted(GRAPHS), action="append")
    parser.add_argument("--n", type=int, nargs="+", default=[4, 8, 16])
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eps", type=float, default=0.1)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.graph or sorted(GRAPHS):
        report = run_convergence(GRAPHS[name](), 1, args.n, args.trials, args.seed, args.eps,
                                 jobs=args.jobs, name=f"convergence_{name}")
        (out / f"convergence_{name}.csv").write_text(report.csv)
        print(report.text())
        print()


if __name__ == "__main__":
    main()
