# scripts/run_all_scenarios.py
#
# Run every registered reference scenario, write artifacts under --out,
# and print a one-line summary per run.  Exits 1 if any tier misses its
# threshold.
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from starkshaper import analysis


def main():
    ap = argparse.ArgumentParser(description="Run all reference scenarios")
    ap.add_argument("--out", default="runs", help="output root directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--tolerance", type=float, default=1e-12)
    args = ap.parse_args()

    out_root = Path(args.out)
    failures = 0
    for name, mode, tier in analysis.SCENARIOS:
        out_dir = out_root / f"{name}_{mode}_{tier:g}"
        report = analysis.run_scenario(
            name, mode, tier,
            tol=args.tolerance, threads=args.threads, out_dir=out_dir,
        )
        verdict = "pass" if report.passed else "FAIL"
        print(
            f"[{verdict}] {name:<10s} {mode:<8s} tier {tier:g}: "
            f"max infidelity {report.max_infidelity:.3e} "
            f"(threshold {report.threshold:g}, "
            f"gate {report.total_duration_s * 1e6:.4g} us, "
            f"{report.segment_count} segment(s)) -> {out_dir}"
        )
        failures += 0 if report.passed else 1
    if failures:
        print(f"{failures} scenario(s) missed their threshold", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
