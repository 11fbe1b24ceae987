"""Command-line adapter that lets ``highspy`` act as an external MIP solver.

Usage: ``python -m bilevel_sched.highs_runner MODEL TIMELIMIT SOLOUT``.
Reads an LP or MPS file, solves it and writes one ``name value`` line per
column to ``SOLOUT``.  Exit status is 0 when a primal solution was written,
3 when none was found and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import sys


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="highs_runner")
    ap.add_argument("model")
    ap.add_argument("timelimit", type=float)
    ap.add_argument("solout")
    args = ap.parse_args(argv)
    try:
        import highspy
    except ImportError:
        print("highspy is not installed", file=sys.stderr)
        return 2
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", args.timelimit)
    if h.readModel(args.model) != highspy.HighsStatus.kOk:
        print(f"cannot read {args.model}", file=sys.stderr)
        return 2
    h.run()
    sol = h.getSolution()
    if not sol.value_valid:
        return 3
    names = h.getLp().col_names_
    with open(args.solout, "w") as fh:
        fh.write(f"# status {h.modelStatusToString(h.getModelStatus())}\n")
        fh.write(f"# objective {h.getInfo().objective_function_value}\n")
        for name, value in zip(names, sol.col_value):
            fh.write(f"{name} {value:.10g}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
