"""Run the acceptance criteria and print one line each; optionally save JSON.

    python scripts/run_acceptance.py                 # all criteria
    python scripts/run_acceptance.py --only 5,10     # a subset
    python scripts/run_acceptance.py --json out.json
"""

import argparse
import sys
import warnings

from laxhj.experiments import run_all
from laxhj.report import emit_report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", help="comma-separated criterion numbers")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json")
    args = ap.parse_args()
    numbers = [int(k) for k in args.only.split(",")] if args.only else None
    warnings.simplefilter("ignore", RuntimeWarning)
    results = run_all(seed=args.seed, numbers=numbers, echo=print)
    if args.json:
        emit_report(args.json, "acceptance", {"criteria": {str(r.number): r.to_dict() for r in results}})
    print(f"{sum(r.passed for r in results)}/{len(results)} passed")
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
