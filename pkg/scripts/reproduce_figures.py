# scripts/reproduce_figures.py
#
# Regenerate the CSV/JSON artifacts behind each reference figure panel
# (fig3..fig12).  With no arguments, reproduces all of them.
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from starkshaper import analysis


def main():
    ap = argparse.ArgumentParser(description="Reproduce reference-figure data")
    ap.add_argument("figures", nargs="*", default=sorted(analysis.FIGURES),
                    help="figure ids (default: all)")
    ap.add_argument("--out", default="figures", help="output root directory")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    bad = 0
    for fig in args.figures:
        reports = analysis.reproduce_figure(fig, Path(args.out) / fig,
                                            threads=args.threads)
        for rep in reports:
            verdict = "pass" if rep.passed else "FAIL"
            print(f"[{verdict}] {fig}: {rep.name}/{rep.mode} tier {rep.tier:g} "
                  f"-> max infidelity {rep.max_infidelity:.3e}")
            bad += 0 if rep.passed else 1
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
