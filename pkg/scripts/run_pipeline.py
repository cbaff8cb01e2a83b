"""Run every CLI stage in order into one output directory."""
import argparse
import sys

from crackfusion.cli import main as cli

STAGES = ["simulate", "denoise", "windows", "features", "fit-paris", "train", "predict",
          "evaluate", "plot-data"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="run")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=None)
    args = ap.parse_args()
    base = ["--seed", str(args.seed), "--out", args.out]
    if args.config:
        base = ["--config", args.config] + base
    for stage in STAGES:
        code = cli(base + [stage])
        if code:
            sys.exit(code)


if __name__ == "__main__":
    main()
