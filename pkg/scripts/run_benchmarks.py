#!/usr/bin/env python3
"""Validate the optimizer on the analytic suites before trusting machine runs.

Usage: python scripts/run_benchmarks.py [out_dir]
"""

import sys

from dvopt.cli import main

OUT = sys.argv[1] if len(sys.argv) > 1 else "runs/benchmarks"

for suite, pop, gens in (("zdt1", 100, 250),
                         ("zdt2", 100, 250),
                         ("constrained-demo", 32, 40)):
    code = main(["benchmark", "--suite", suite, "--out", OUT,
                 "--population", str(pop), "--generations", str(gens),
                 "--seed", "1"])
    if code != 0:
        sys.exit(code)
