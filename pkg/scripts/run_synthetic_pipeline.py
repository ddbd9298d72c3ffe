#!/usr/bin/env python3
"""Drive every diagnostics stage on one synthetic prediction store.

Stages land in sibling subdirectories under --out; the final report
command writes an index of every result.json it finds there.
"""

import argparse
import sys
from pathlib import Path

from ensdiag.cli import main as ensdiag_main


def run(argv) -> None:
    code = ensdiag_main([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/synthetic", help="root output directory")
    ap.add_argument("--n-points", type=int, default=2000)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--models", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--surrogates", type=int, default=200,
                    help="permutation surrogates for the conditional test")
    ap.add_argument("--force", action="store_true",
                    help="overwrite existing stage directories")
    args = ap.parse_args()

    root = Path(args.out)
    extra = ["--force"] if args.force else []
    sim = root / "sim"
    run(["simulate", "--n-points", args.n_points, "--classes", args.classes,
         "--models", args.models, "--seed", args.seed, "--out", sim] + extra)
    manifest = sim / "manifest.json"

    run(["decompose", "--manifest", manifest, "--out", root / "decompose"] + extra)
    run(["conditional", "--manifest", manifest, "--surrogates", args.surrogates,
         "--seed", args.seed, "--out", root / "conditional"] + extra)
    run(["trends", "--manifest", manifest, "--metric", "01,nll,brier",
         "--out", root / "trends"] + extra)
    run(["improve", "--manifest", manifest, "--base", "m000",
         "--alt-a", "m000+m001", "--alt-b", "m000+m002", "--control",
         f"m{args.models - 1:03d}", "--metric", "brier",
         "--out", root / "improve"] + extra)
    run(["gp-demo", "--seed", args.seed, "--out", root / "gp"] + extra)
    run(["report", "--out", root] + extra)
    print(f"pipeline complete; index at {root / 'index.json'}")


if __name__ == "__main__":
    main()
