#!/usr/bin/env python3
"""Run every study at desk scale into runs/ (about 10 minutes in total).

Usage: python scripts/run_all.py [--seed N] [--out DIR] [--fast]

--fast shrinks the two MCMC studies to a couple of minutes for a quick
end-to-end exercise of the pipeline.
"""

import argparse
import sys
from pathlib import Path

from jointprior.cli import main as cli_main

FAST_OVERRIDES = {
    "cokrige": ["--samples", "6000", "--burn-in", "1000"],
    "darcy": ["--samples", "4000", "--burn-in", "1500"],
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("runs"))
    parser.add_argument("--fast", action="store_true")
    args = parser.parse_args()

    for name in ("verify", "sample-prior", "factor-compare", "monod", "cokrige",
                 "darcy"):
        argv = [name, "--seed", str(args.seed), "--out", str(args.out / name)]
        if args.fast and name in FAST_OVERRIDES:
            argv += FAST_OVERRIDES[name]
        print(f"=== {name} ===")
        code = cli_main(argv)
        if code != 0:
            print(f"{name} failed with exit code {code}", file=sys.stderr)
            return code
    print(f"all studies finished; outputs under {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
