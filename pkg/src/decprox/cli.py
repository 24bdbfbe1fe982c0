"""``decprox`` command line: ``run`` and ``sweep`` subcommands."""

from __future__ import annotations

import logging
import sys

from .harness import ConfigError, parse_config, parse_sweep, run_single, run_speedup_suite
from .solvers import DivergenceError

USAGE = """usage: decprox {run,sweep} [flags]

  decprox run --topology ring:8:0.3333333333333333 --problem phase:100:5:0.1 \\
      --prox l1:0.01 --gamma 0.01 --m auto --K 10000 --out results/
  decprox sweep --agents 1,4,16 --seeds 0..9 <run flags>
"""


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 2
    command, rest = argv[0], argv[1:]
    try:
        if command == "run":
            cfg = parse_config(rest)
            path = run_single(cfg)
            print(path)
            return 0
        if command == "sweep":
            summary = run_speedup_suite(parse_sweep(rest))
            for row in summary.rows:
                print(", ".join(f"{k}={v}" for k, v in row.items()))
            return 0 if all(row["runs_failed"] == 0 for row in summary.rows) else 1
        print(f"unknown command {command!r}\n{USAGE}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
